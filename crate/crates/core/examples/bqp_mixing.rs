//! Mixed BQP bound: tunes the weight and both scaling parameters together.

use mesp::bqp;
use mesp::instance::{brute_force_opt, gen_random_pd};
use mesp::tuner::{self, TuneBudget};

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(10, 3, 100.0)?;
    let s = 5;
    let (z, _) = brute_force_opt(&inst, s)?;
    let budget = TuneBudget::default();
    let init = tuner::endpoint_init(&inst, s, &budget)?;
    let start = bqp::solve_mbqp(&inst, s, &init, budget.solve_tol)?.report.value;
    let (params, report) = tuner::alternate_tune(&inst, s, &init, &budget)?;
    println!("optimum z = {z:.6}");
    println!("mBQP at endpoint-tuned start {init:?}: {start:.6}");
    println!("mBQP after alternating tuning {params:?}: {:.6} (gap {:.4})", report.value, report.value - z);
    println!("flags: {:?}", report.flags);
    Ok(())
}
