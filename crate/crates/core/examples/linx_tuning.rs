//! Tunes the linx scaling parameter by Newton's method on its derivative.

use mesp::instance::gen_random_pd;
use mesp::linx;

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(16, 7, 200.0)?;
    let s = 8;
    let untuned = linx::solve_linx(&inst, s, 1.0, 1e-8)?;
    let tuned = linx::tune_linx_gamma(&inst, s, 0.0, 1e-6)?;
    println!("linx at gamma = 1: {:.6}", untuned.value);
    println!("tuned: psi = {:.6}, bound = {:.6}, |G| = {:.2e}, {} Newton steps", tuned.psi, tuned.value, tuned.g_abs, tuned.iterations);
    for e in &tuned.trail {
        println!("  k = {:2}  psi1 = {:+.6}  value = {:.6}", e.k, e.psi1, e.value);
    }
    Ok(())
}
