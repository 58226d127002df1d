//! Randomized invariants, with nalgebra as an independent numerical oracle.

use mesp::bnb::{self, BnbOptions, Node};
use mesp::bound::{self, BoundEffort, BoundKind};
use mesp::bqp::{self, BqpSpace};
use mesp::instance::{brute_force_opt, gen_random_pd, greedy_heuristic, CovarianceInstance};
use mesp::linalg::{self, SymMatrix};
use mesp::MixParams;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.n(), m.n(), |i, j| m[(i, j)])
}

fn na_ldet(m: &SymMatrix) -> f64 {
    to_na(m).determinant().ln()
}

fn instance() -> impl Strategy<Value = CovarianceInstance> {
    (3usize..9, any::<u64>(), 1.0f64..3.0).prop_map(|(n, seed, lc)| gen_random_pd(n, seed, 10f64.powf(lc)).unwrap())
}

fn instance_and_s() -> impl Strategy<Value = (CovarianceInstance, usize)> {
    instance().prop_flat_map(|inst| {
        let n = inst.n();
        (Just(inst), 1..n)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ldet_and_inverse_match_nalgebra(inst in instance()) {
        let c = inst.cov();
        let ours = linalg::ldet(c).unwrap();
        prop_assert!((ours - na_ldet(c)).abs() <= 1e-9 * ours.abs().max(1.0));
        let inv = linalg::inverse(c).unwrap();
        let theirs = to_na(c).try_inverse().unwrap();
        for i in 0..c.n() {
            for j in 0..c.n() {
                prop_assert!((inv[(i, j)] - theirs[(i, j)]).abs() <= 1e-8 * theirs.amax().max(1.0));
            }
        }
    }

    #[test]
    fn eigenvalues_match_nalgebra(inst in instance()) {
        let mut ours = linalg::eigenvalues(inst.cov());
        ours.sort_by(f64::total_cmp);
        let mut theirs: Vec<f64> = to_na(inst.cov()).symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        for (a, b) in ours.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-9 * theirs[theirs.len() - 1]);
        }
    }

    #[test]
    fn entropy_matches_nalgebra_determinant((inst, s) in instance_and_s()) {
        let (z, sel) = brute_force_opt(&inst, s).unwrap();
        let sub = inst.cov().principal(&sel.indices);
        prop_assert!((z - na_ldet(&sub)).abs() <= 1e-9 * z.abs().max(1.0));
        let (g, _) = greedy_heuristic(&inst, s).unwrap();
        prop_assert!(g <= z + 1e-12);
    }

    #[test]
    fn complementation_identity((inst, s) in instance_and_s()) {
        let n = inst.n();
        let (comp, shift) = inst.complement();
        let lhs = brute_force_opt(&inst, s).unwrap().0;
        let rhs = shift + brute_force_opt(&comp, n - s).unwrap().0;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn phi_map_is_an_involution_onto_the_complement((inst, s) in instance_and_s(), scale in 0.0f64..0.02) {
        let n = inst.n();
        let sp = BqpSpace::new(n, s).unwrap();
        let z: Vec<f64> = (0..sp.dim()).map(|k| scale * ((k * 7 % 5) as f64 - 2.0)).collect();
        let p = sp.point(&z);
        prop_assume!(p.is_feasible(s as f64));
        let q = bqp::phi_map(&p);
        prop_assert!(q.is_feasible((n - s) as f64));
        let back = bqp::phi_map(&q);
        for (a, b) in back.lift.as_slice().iter().zip(p.lift.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn fixing_preserves_node_values((inst, s) in instance_and_s(), pick in any::<u64>()) {
        let n = inst.n();
        prop_assume!(s >= 1 && s < n);
        let i = (pick % n as u64) as usize;
        let root = Node::root(&inst, s).unwrap();
        let zin = root.fix_in(i).unwrap();
        let zout = root.fix_out(i).unwrap();
        let best_in = if zin.residual_s == 0 { zin.shift } else { zin.shift + brute_force_opt(&zin.reduced, zin.residual_s).unwrap().0 };
        let best_out = brute_force_opt(&zout.reduced, zout.residual_s).unwrap().0;
        let z = brute_force_opt(&inst, s).unwrap().0;
        prop_assert!((z - best_in.max(best_out)).abs() <= 1e-9 * z.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_bound_dominates_the_optimum((inst, s) in instance_and_s(), psi in -2.0f64..2.0, alpha in 0.0f64..1.0) {
        let z = brute_force_opt(&inst, s).unwrap().0;
        let params = MixParams::new(alpha, psi, -psi).unwrap();
        let effort = BoundEffort::default();
        for kind in BoundKind::ALL {
            let v = bound::evaluate(kind, &inst, s, &params, &effort).unwrap().upper_bound();
            prop_assert!(v >= z - 1e-6, "{} = {} < z = {}", kind, v, z);
        }
    }

    #[test]
    fn branch_and_bound_is_exact((inst, s) in instance_and_s()) {
        let z = brute_force_opt(&inst, s).unwrap().0;
        let sol = bnb::solve_mesp(&inst, s, BoundKind::Linx, &BnbOptions::default()).unwrap();
        prop_assert!((sol.z - z).abs() <= 1e-8);
        prop_assert_eq!(sol.selection.indices.len(), s);
    }
}
