//! NLP bound with trace-optimal diagonal, its complement, and their mix over
//! the alpha grid.

use mesp::instance::{brute_force_opt, gen_random_pd};
use mesp::nlp;

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(12, 9, 80.0)?;
    let s = 6;
    let (z, _) = brute_force_opt(&inst, s)?;
    let (p1, p2) = nlp::tuned_pair(&inst, s, nlp::DEFAULT_TOL)?;
    let direct = nlp::solve_nlp(&inst, s, &p1, nlp::DEFAULT_TOL)?.upper_bound();
    let comp = nlp::solve_cnlp(&inst, s, &p2, nlp::DEFAULT_TOL)?.upper_bound();
    let (alpha, mixed) = nlp::alpha_grid_mnlp(&inst, s, &p1, &p2)?;
    println!("optimum z = {z:.6}");
    println!("NLP  (gamma = {:.4}): {direct:.6}", p1.gamma);
    println!("cNLP (gamma = {:.4}): {comp:.6}", p2.gamma);
    println!("mNLP (alpha = {alpha:.1}): {mixed:.6}");
    Ok(())
}
