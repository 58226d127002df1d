//! Lagrangian mixing of NLP and linx with subgradient optimization of the
//! multipliers.

use mesp::bound::{self, BoundEffort, BoundKind};
use mesp::instance::{brute_force_opt, gen_random_pd};
use mesp::mixer::{self, MixComponent};

fn main() -> mesp::Result<()> {
    let inst = gen_random_pd(12, 21, 100.0)?;
    let s = 6;
    let (z, _) = brute_force_opt(&inst, s)?;
    let effort = BoundEffort::default();
    let a = MixComponent::tuned(BoundKind::Nlp, &inst, s, &effort)?;
    let b = MixComponent::tuned(BoundKind::Linx, &inst, s, &effort)?;
    let va = bound::evaluate(a.kind, &inst, s, &a.params, &effort)?.upper_bound();
    let vb = bound::evaluate(b.kind, &inst, s, &b.params, &effort)?.upper_bound();
    println!("optimum z = {z:.6}, NLP = {va:.6}, linx = {vb:.6}");
    let alpha = 0.2;
    let r = mixer::subgradient_optimize(&inst, s, alpha, &a, &b, 60, 1e-8)?;
    println!("alpha = {alpha}");
    println!("L(0) = {:.6}, best L = {:.6}", r.value_at_zero, r.report.value);
    for e in r.trace.iter().step_by(10) {
        println!("  t = {:3}  L = {:.6}  best = {:.6}  |g| = {:.3}", e.t, e.value, e.best, e.g_norm);
    }
    Ok(())
}
