//! Gap of several tuned bounds across s, as printed by `mesp curve`.

use mesp::bound::{BoundEffort, BoundKind};
use mesp::cli;
use mesp::instance::gen_random_pd;

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(12, 1, 100.0)?;
    let kinds = [BoundKind::Linx, BoundKind::Nlp, BoundKind::Cnlp, BoundKind::Bqp];
    let effort = BoundEffort { gamma_grid: 40, ..BoundEffort::default() };
    let rows = cli::curve_rows(&inst, 2, 10, &kinds, &effort)?;
    print!("{}", cli::curve_csv(&rows));
    Ok(())
}
