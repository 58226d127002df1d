//! The complement identity z(C, s) = ldet C + z(C^-1, n - s), and the lifted
//! map that carries it over to the BQP relaxation.

use mesp::bqp::{self, LiftedPoint};
use mesp::instance::{brute_force_opt, gen_random_pd};

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(9, 2, 50.0)?;
    let n = inst.n();
    let (comp, shift) = inst.complement();
    for s in 1..n {
        let (z, sel) = brute_force_opt(&inst, s)?;
        let (zc, _) = brute_force_opt(&comp, n - s)?;
        println!("s = {s}: z = {z:.10}, ldet C + z(C^-1, n-s) = {:.10}, S = {:?}", shift + zc, sel.one_based());
    }
    let p = LiftedPoint::from_binary(&[1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let q = bqp::phi_map(&p);
    println!("phi maps x = {:?} to {:?}", p.x, q.x);
    Ok(())
}
