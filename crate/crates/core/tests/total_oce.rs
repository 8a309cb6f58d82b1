//! OCE of the total discounted reward against exact oracles.

mod support;

use riskmdp::augmented::{
    augmented_t, entropic_total, sandwich, solve_total_oce, AugmentedGrid, AugmentedValueFunction, Bound, GridConfig,
};
use riskmdp::neutral::policy_iteration;
use riskmdp::random::{random_mdp, RandomMdpSpec};
use riskmdp::{fixtures, Mdp, Utility};
use support::brute::TreeOracle;

fn binary_models(count: u64) -> Vec<Mdp> {
    let spec = RandomMdpSpec {
        states: 2,
        actions: 2,
        discount: 0.5,
        max_reward: 1.0,
        integer_rewards: true,
        all_admissible: true,
        ..Default::default()
    };
    (0..count).map(|s| random_mdp(&spec, 500 + s)).filter(|m| m.reward_bound() > 0.0).collect()
}

fn dyadic_grid(step_log2: i32) -> GridConfig<f64> {
    GridConfig { y_step: Some(2f64.powi(-step_log2)), ..Default::default() }
}

#[test]
fn tree_oracle_matches_grid_solver() {
    for m in binary_models(4) {
        let oracle = TreeOracle::new(&m, 25);
        assert!(oracle.tail_bound() <= 3e-8 * m.total_reward_bound());
        for x0 in 0..2 {
            let u = Utility::Entropic { gamma: 1.0 };
            let sol = solve_total_oce(&m, &u, &dyadic_grid(12), x0, 1e-6).unwrap();
            let exact = oracle.entropic(x0, 1.0);
            assert!((sol.value - exact).abs() <= 1e-4, "entropic: {} vs {exact}", sol.value);
            let u = Utility::Cvar { alpha: 0.2 };
            let sol = solve_total_oce(&m, &u, &dyadic_grid(14), x0, 1e-6).unwrap();
            let exact = oracle.cvar(x0, 0.2);
            assert!((sol.value - exact).abs() <= 1e-4, "cvar: {} vs {exact}", sol.value);
        }
    }
}

#[test]
fn entropic_fast_path_matches_tree_oracle() {
    for m in binary_models(10) {
        let oracle = TreeOracle::new(&m, 30);
        let fast = entropic_total(&m, 2.0, 30).unwrap();
        for x0 in 0..2 {
            assert!((fast.value()[x0] - oracle.entropic(x0, 2.0)).abs() <= 2.0 * oracle.tail_bound());
        }
    }
}

#[test]
fn jaquette_total_entropic() {
    let m = fixtures::jaquette();
    let s1 = 0;
    let mgf = -(0.9 * (-1f64).exp() + 0.1 * (-5f64).exp()).ln()
        - (1..=40).map(|n| (0.5 + 0.5 * (-4.0 * 0.25f64.powi(n)).exp()).ln()).sum::<f64>();
    let fast = entropic_total(&m, 1.0, 60).unwrap();
    assert!((fast.value()[s1] - mgf).abs() <= 1e-6);
    let stages = fast.stage_policy(&m, s1);
    assert_eq!(m.action_name(s1, stages.at(0).choice[s1]), "b2");
    for n in 1..80 {
        assert_eq!(m.action_name(s1, stages.at(n).choice[s1]), "b1", "stage {n}");
    }
    let sol = solve_total_oce(&m, &Utility::Entropic { gamma: 1.0 }, &GridConfig::default(), s1, 1e-6).unwrap();
    let budget = 16.0 / 400.0 * (16.0 / 400.0) / (1.0 - 0.5);
    assert!((sol.value - mgf).abs() <= budget, "{} vs {mgf}", sol.value);
    assert_eq!(m.action_name(s1, sol.stage_policy.at(0).choice[s1]), "b2");
    for n in 1..80 {
        assert_eq!(m.action_name(s1, sol.stage_policy.at(n).choice[s1]), "b1", "stage {n}");
    }
    // history (1, b2) -> 2 -> (2, a) -> 1: back in state 1 at stage 2
    let b2 = m.slot_of(s1, m.action_index("b2").unwrap()).unwrap();
    let s2 = m.state_index("2").unwrap();
    let a = sol.reconstruct_policy_action(&m, &[(s1, b2), (s2, 0)], s1).unwrap();
    assert_eq!(m.action_name(s1, a.slot), "b1");
    assert!(!a.truncated);
    assert_eq!(m.action_name(s1, sol.reconstruct_policy_action(&m, &[], s1).unwrap().slot), "b2");
}

#[test]
fn sandwich_iterates_are_monotone() {
    let spec = RandomMdpSpec { states: 3, actions: 2, discount: 0.6, ..Default::default() };
    for seed in 0..4 {
        let m = random_mdp(&spec, 900 + seed);
        let grid = AugmentedGrid::new(&m, &GridConfig { y_step: Some(m.total_reward_bound() / 100.0), tail_eps: 1e-4 })
            .unwrap();
        let v = policy_iteration(&m).unwrap().value;
        for u in [Utility::Entropic { gamma: 1.5 }, Utility::Cvar { alpha: 0.3 }] {
            let mut lo = AugmentedValueFunction::bound(&m, &u, &grid, Bound::Lower, &v);
            let mut hi = AugmentedValueFunction::bound(&m, &u, &grid, Bound::Upper, &v);
            for _ in 0..=grid.n_trunc {
                let (lo1, hi1) = (augmented_t(&m, &lo), augmented_t(&m, &hi));
                assert!(lo.excess_over(&lo1) <= 1e-12);
                assert!(hi1.excess_over(&hi) <= 1e-12);
                assert!(lo1.excess_over(&hi1) <= 1e-12);
                (lo, hi) = (lo1, hi1);
            }
            // the Jacobi iterates reach the Gauss-Seidel tables
            let t = sandwich(&m, &u, &grid).unwrap();
            assert!(lo.excess_over(&t.lower).max(t.lower.excess_over(&lo)) <= 1e-12);
            assert!(hi.excess_over(&t.upper).max(t.upper.excess_over(&hi)) <= 1e-12);
        }
    }
}

#[test]
fn small_risk_parameter_recovers_neutral_value() {
    let spec = RandomMdpSpec { states: 3, actions: 2, discount: 0.7, ..Default::default() };
    for seed in 0..5 {
        let m = random_mdp(&spec, 300 + seed);
        let neutral = policy_iteration(&m).unwrap().value;
        let n = riskmdp::augmented::truncation_level(&m, 1e-9);
        let fast = entropic_total(&m, 1e-6, n).unwrap();
        for x in 0..3 {
            assert!((fast.value()[x] - neutral[x]).abs() <= 1e-4);
        }
    }
}
