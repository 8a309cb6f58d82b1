//! Average-reward, vanishing-discount, ergodic entropic and Q-learning results.

use riskmdp::ergodic::{ergodic_policy_value, ergodic_rvi};
use riskmdp::neutral::{
    average_reward_rvi, policy_evaluation, policy_gain, policy_iteration, q_learning, vanishing_discount,
    QLearningConfig,
};
use riskmdp::random::{random_mdp, RandomMdpSpec};
use riskmdp::{fixtures, QTable, StationaryPolicy};

fn unichain_models(count: u64, states: usize, with_costs: bool) -> Vec<riskmdp::Mdp> {
    let spec = RandomMdpSpec { states, with_costs, full_support: true, ..Default::default() };
    (0..count).map(|s| random_mdp(&spec, 2000 + s)).collect()
}

#[test]
fn ergodic_optimum_is_the_best_perron_value() {
    for m in unichain_models(20, 5, true) {
        let s = ergodic_rvi(&m, 1.0, 1e-12, 0).unwrap();
        assert!(s.w.iter().all(|&w| w > 0.0));
        assert!((s.xi - s.rho.ln()).abs() < 1e-12);
        let best = m
            .enumerate_policies(1_000)
            .unwrap()
            .iter()
            .map(|f| ergodic_policy_value(&m, f, 1.0).unwrap().0)
            .fold(f64::INFINITY, f64::min);
        assert!((s.xi - best).abs() <= 1e-8, "{} vs {best}", s.xi);
        let (xf, _) = ergodic_policy_value(&m, &s.policy, 1.0).unwrap();
        assert!((xf - s.xi).abs() <= 1e-8);
        // multiplicative equation at every state
        for (x, cs) in m.choices.iter().enumerate() {
            let best = cs
                .iter()
                .map(|c| c.cost.unwrap().exp() * c.successors.iter().map(|&(y, p)| p * s.w[y]).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((best - s.rho * s.w[x]).abs() <= 1e-9 * s.rho * s.w[x]);
        }
    }
}

#[test]
fn average_reward_equation_and_enumeration() {
    for m in unichain_models(10, 4, false) {
        let s = average_reward_rvi(&m, 1e-12, 0).unwrap();
        assert!(s.residual <= 1e-9);
        let best = m
            .enumerate_policies(10_000)
            .unwrap()
            .iter()
            .map(|f| policy_gain(&m, f, 0).unwrap().0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((s.gain - best).abs() <= 1e-9);
    }
    let jaq = fixtures::jaquette();
    assert!((average_reward_rvi(&jaq, 1e-12, 0).unwrap().gain - 2.0).abs() < 1e-9);
}

#[test]
fn vanishing_discount_limit() {
    for m in unichain_models(20, 4, false) {
        let avg = average_reward_rvi(&m, 1e-12, 0).unwrap();
        let rows = vanishing_discount(&m, &[0.9, 0.99, 0.999], 0, 0.01, 10_000).unwrap();
        let last = rows.last().unwrap();
        assert!((last.scaled_value - avg.gain).abs() <= 0.01);
        assert!(last.policy_gaps.iter().all(|g| g.holds));
        assert!(!last.policy_gaps.is_empty());
    }
    let jaq = fixtures::jaquette();
    let rows = vanishing_discount(&jaq, &[0.9, 0.99, 0.999], 0, 0.01, 10).unwrap();
    let errs: Vec<f64> = rows.iter().map(|r| (r.scaled_value - 2.0).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]) && errs[2] < 0.01, "{errs:?}");
}

#[test]
fn constant_rewards_have_flat_bias() {
    let mut m = random_mdp(&RandomMdpSpec { full_support: true, ..Default::default() }, 4);
    for c in m.choices.iter_mut().flatten() {
        c.reward = 0.7;
    }
    let s = average_reward_rvi(&m, 1e-12, 0).unwrap();
    assert!((s.gain - 0.7).abs() < 1e-12 && s.bias.iter().all(|b| b.abs() < 1e-12));
    for row in vanishing_discount(&m, &[0.9, 0.99], 0, 0.01, 0).unwrap() {
        assert!(row.bias.iter().all(|b| b.abs() < 1e-9));
    }
}

#[test]
fn q_learning_on_jaquette() {
    let m = fixtures::jaquette();
    let v = policy_iteration(&m).unwrap().value;
    let reference = QTable::from_values(&m, &v);
    assert!((reference.table[0][0] - 8.0 / 3.0).abs() < 1e-12);
    assert!((reference.table[0][1] - 31.0 / 15.0).abs() < 1e-12);
    let cfg = QLearningConfig::default();
    // at 10^6 updates the sampling noise alone is about 0.01 in the sup norm
    for seed in 0..4 {
        let out = q_learning(&m, &cfg, seed, Some(&reference)).unwrap();
        assert_eq!(out.updates, 1_000_000);
        assert!(out.q.distance(&reference) <= 0.025, "seed {seed}");
        assert!(out.distances.last().unwrap() < &out.distances[10]);
        assert_eq!(out.q.greedy(), StationaryPolicy::from_names(&m, &[("1", "b1")]).unwrap());
    }
    let g = StationaryPolicy::from_names(&m, &[("1", "b2")]).unwrap();
    assert!((policy_evaluation(&m, &g).unwrap()[0] - 28.0 / 15.0).abs() < 1e-12);
}
