use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crpo_core::crpo::{npg_step, npg_step_multiplicative, Direction};
use crpo_core::envs::make_garnet;
use crpo_core::eval::{exact_q, exact_returns, performance_difference};
use crpo_core::policy::SoftmaxPolicy;
use crpo_core::td::Provenance;
use crpo_core::{solve_optimal, PolicyTable, QEstimate};

fn random_policy(ns: usize, na: usize, rng: &mut ChaCha8Rng) -> SoftmaxPolicy {
    let logits = (0..ns * na).map(|_| rng.random_range(-3.0..3.0)).collect();
    SoftmaxPolicy::from_logits(ns, na, logits)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lp_optimum_is_feasible_and_dominates_feasible_policies(
        ns in 2usize..7,
        na in 2usize..4,
        seed in 0u64..1000,
    ) {
        let m = make_garnet(ns, na, 2.min(ns), 1, seed).unwrap();
        let sol = solve_optimal(&m).unwrap();
        let j = exact_returns(&m, &sol.policy_table()).unwrap();
        prop_assert!((j[0] - sol.j_star[0]).abs() <= 1e-6);
        prop_assert!(j[1] <= m.limits[0] + 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let pi = random_policy(ns, na, &mut rng).probabilities();
            let jp = exact_returns(&m, &pi).unwrap();
            if jp[1] <= m.limits[0] {
                prop_assert!(jp[0] <= sol.j_star[0] + 1e-6);
            }
        }
    }

    #[test]
    fn performance_difference_holds_for_any_start_distribution(
        ns in 2usize..8,
        na in 2usize..4,
        seed in 0u64..1000,
    ) {
        let m = make_garnet(ns, na, 2.min(ns), 1, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let pi = random_policy(ns, na, &mut rng).probabilities();
        let pi2 = random_policy(ns, na, &mut rng).probabilities();
        let raw: Vec<f64> = (0..ns).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect();
        let total: f64 = raw.iter().sum();
        let rho: Vec<f64> = raw.iter().map(|x| x / total).collect();
        for channel in 0..2 {
            let (lhs, rhs) = performance_difference(&m, &pi, &pi2, channel, &rho).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn npg_forms_agree_and_ascent_does_not_lower_the_return(
        seed in 0u64..1000,
        alpha in 0.001f64..0.5,
    ) {
        let m = make_garnet(5, 3, 2, 1, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = random_policy(5, 3, &mut rng);
        let table = policy.probabilities();
        let q = QEstimate {
            channel: 0,
            values: exact_q(&m, &table, 0).unwrap().q,
            provenance: Provenance::Exact,
        };
        let next = npg_step(&policy, &q, alpha, Direction::Ascend, m.discount).probabilities();
        let folded = npg_step_multiplicative(&table, &q, alpha, Direction::Ascend, m.discount);
        for (a, b) in next.as_slice().iter().zip(folded.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let before = exact_returns(&m, &table).unwrap()[0];
        let after = exact_returns(&m, &next).unwrap()[0];
        prop_assert!(after >= before - 1e-9, "{before} -> {after}");
    }
}

#[test]
fn uniform_policy_is_a_fixed_point_of_zero_q() {
    let policy = SoftmaxPolicy::from_logits(3, 2, vec![0.0; 6]);
    let q = QEstimate { channel: 0, values: vec![0.0; 6], provenance: Provenance::Exact };
    let next = npg_step(&policy, &q, 0.3, Direction::Descend, 0.9).probabilities();
    assert_eq!(next, PolicyTable::uniform(3, 2));
}
