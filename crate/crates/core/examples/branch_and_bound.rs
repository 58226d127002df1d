//! Exact solution by branch-and-bound, compared with enumeration.

use std::time::Instant;

use mesp::bnb::{self, BnbOptions};
use mesp::bound::BoundKind;
use mesp::instance::{brute_force_opt, gen_random_pd};

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(14, 5, 100.0)?;
    let s = 7;
    let t = Instant::now();
    let (z, best) = brute_force_opt(&inst, s)?;
    println!("enumeration: z = {z:.8}, S = {:?} ({:?})", best.one_based(), t.elapsed());
    for kind in [BoundKind::Linx, BoundKind::Nlp, BoundKind::Bqp] {
        let sol = bnb::solve_mesp(&inst, s, kind, &BnbOptions::default())?;
        println!(
            "{kind:5}: z = {:.8}, S = {:?}, {} nodes, root bound {:.4} ({:?})",
            sol.z,
            sol.selection.one_based(),
            sol.stats.nodes,
            sol.stats.root_bound,
            sol.stats.wall_time
        );
    }
    Ok(())
}
