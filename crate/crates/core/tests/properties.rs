use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmdp::experiments::{sample_b_inf, sample_b_r, EmpiricalStats};
use rmdp::factor::{assemble_kernel, build_budget_uncertainty};
use rmdp::mdp::{expected_reward, nominal_value_iteration, Policy};
use rmdp::numerics::{budget_min_oracle, lp_minimize, BudgetSet, Matrix};
use rmdp::robust::{s_rect_evaluate, s_rect_robust_vi, RobustProblem, SRectUncertainty, Variant};
use rmdp::synthetic::{
    random_distribution, random_factor_model, random_instance, random_kernel, random_policy,
    random_stochastic_columns,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn expected_reward_is_bounded(seed in any::<u64>(), s in 1usize..6, a in 1usize..4, lambda in 0.1f64..0.95) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, s, a, lambda);
        let p = random_kernel(&mut g, s, a);
        let pi = random_policy(&mut g, s, a);
        let z = expected_reward(&inst, &pi, &p).unwrap();
        let flat = inst.rewards().as_slice();
        let lo = flat.iter().cloned().fold(f64::INFINITY, f64::min) / (1.0 - lambda);
        let hi = flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / (1.0 - lambda);
        prop_assert!(z >= lo - 1e-9 && z <= hi + 1e-9, "{lo} <= {z} <= {hi}");
    }

    #[test]
    fn value_iteration_is_eps_optimal(seed in any::<u64>(), s in 1usize..4, a in 1usize..4, lambda in 0.1f64..0.95) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, s, a, lambda);
        let p = random_kernel(&mut g, s, a);
        let eps = 1e-6;
        let (pi, _) = nominal_value_iteration(&inst, &p, eps).unwrap();
        let best = Policy::enumerate_deterministic(s, a)
            .map(|q| expected_reward(&inst, &q, &p).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let z = expected_reward(&inst, &pi, &p).unwrap();
        prop_assert!(z >= best - eps, "{z} vs {best}");
    }

    #[test]
    fn assembly_is_affine_in_w(seed in any::<u64>(), theta in 0.0f64..1.0) {
        let mut g = rng(seed);
        let fm = random_factor_model(&mut g, 4, 3, 2);
        let w1 = random_stochastic_columns(&mut g, 4, 2);
        let w2 = random_stochastic_columns(&mut g, 4, 2);
        let mix = Matrix::from_fn(4, 2, |i, j| theta * w1[(i, j)] + (1.0 - theta) * w2[(i, j)]);
        let (p1, p2) = (assemble_kernel(&fm, &w1).unwrap(), assemble_kernel(&fm, &w2).unwrap());
        let pm = assemble_kernel(&fm, &mix).unwrap();
        for (k, &x) in pm.as_slice().iter().enumerate() {
            let y = theta * p1.as_slice()[k] + (1.0 - theta) * p2.as_slice()[k];
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn budget_oracle_matches_lp(seed in any::<u64>(), n in 2usize..7, tau in 0.0f64..0.5, c in 0.2f64..3.0) {
        let mut g = rng(seed);
        let centre = random_distribution(&mut g, n);
        let set = BudgetSet::new(centre.clone(), tau, c * tau).unwrap();
        prop_assert!(set.contains(&centre, 1e-12));
        let cost: Vec<f64> = (0..n).map(|_| g.random_range(-5.0..5.0)).collect();
        let (w, z) = budget_min_oracle(&cost, &set).unwrap();
        let (_, z_lp) = lp_minimize(&cost, &set.to_polytope()).unwrap();
        prop_assert!(set.contains(&w, 1e-9));
        prop_assert!((z - z_lp).abs() <= 1e-8, "{z} vs {z_lp}");
    }

    #[test]
    fn samples_stay_in_their_sets(seed in any::<u64>(), tau in 0.0f64..0.2, r in 1usize..4) {
        let mut g = rng(seed);
        let p = random_kernel(&mut g, 4, 2);
        for sample in [sample_b_inf(&p, tau, 5, seed).unwrap(), sample_b_r(&p, r, tau, 5, seed).unwrap()] {
            for k in &sample.kernels {
                prop_assert!(k.validate(1e-9).is_ok());
                prop_assert!(k.max_abs_diff(&p) <= tau + 1e-9);
            }
        }
    }

    #[test]
    fn empirical_mean_lies_within_range(values in prop::collection::vec(-50.0f64..50.0, 1..40), norm in 0.5f64..4.0) {
        let st = EmpiricalStats::from_values(&values, norm).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(st.mean >= lo - 1e-9 && st.mean <= hi + 1e-9);
        prop_assert!(st.conf95 >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn worst_case_never_exceeds_nominal(seed in any::<u64>(), tau in 0.0f64..0.3) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, 3, 2, 0.8);
        let fm = random_factor_model(&mut g, 3, 2, 2);
        let fu = build_budget_uncertainty(fm.w_nom(), tau, 1.0).unwrap();
        let problem = RobustProblem::new(&inst, &fm, &fu).unwrap();
        let pi = random_policy(&mut g, 3, 2);
        let eps = 1e-7;
        let wc = problem.evaluate_worst_case(&pi, eps).unwrap();
        let nominal = expected_reward(&inst, &pi, &fm.nominal_kernel().unwrap()).unwrap();
        prop_assert!(wc.z <= nominal + eps, "{} vs {nominal}", wc.z);
    }

    #[test]
    fn robust_policy_dominates_in_the_worst_case(seed in any::<u64>(), tau in 0.0f64..0.3) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, 3, 2, 0.8);
        let fm = random_factor_model(&mut g, 3, 2, 2);
        let fu = build_budget_uncertainty(fm.w_nom(), tau, 1.0).unwrap();
        let problem = RobustProblem::new(&inst, &fm, &fu).unwrap();
        let eps = 1e-7;
        let report = problem.improve_policy(eps, Variant::F1).unwrap();
        for _ in 0..4 {
            let pi = random_policy(&mut g, 3, 2);
            let z = problem.evaluate_worst_case(&pi, eps).unwrap().z;
            prop_assert!(report.objective >= z - 2.0 * eps, "{} vs {z}", report.objective);
        }
    }

    #[test]
    fn s_rect_policy_dominates_in_the_worst_case(seed in any::<u64>(), tau in 0.0f64..0.2) {
        let mut g = rng(seed);
        let inst = random_instance(&mut g, 3, 2, 0.8);
        let p = random_kernel(&mut g, 3, 2);
        let sr = SRectUncertainty::new(p, tau, 1.0).unwrap();
        let eps = 1e-7;
        let best = s_rect_robust_vi(&inst, &sr, eps).unwrap();
        for _ in 0..3 {
            let pi = random_policy(&mut g, 3, 2);
            let z = s_rect_evaluate(&inst, &sr, &pi, eps).unwrap().z;
            prop_assert!(best.z >= z - 2.0 * eps, "{} vs {z}", best.z);
        }
    }
}
