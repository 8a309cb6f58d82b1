//! Seeded random model generator used by property and acceptance suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{Choice, FiniteMdp};

/// Shape of a random model.
#[derive(Clone, Debug)]
pub struct RandomMdpSpec {
    pub states: usize,
    pub actions: usize,
    pub discount: f64,
    /// Rewards drawn uniformly from `[0, max_reward]`, or from `{0, 1, .., max_reward}`
    /// when `integer_rewards` is set.
    pub max_reward: f64,
    pub integer_rewards: bool,
    pub with_costs: bool,
    /// Every transition row charges every state (irreducible, aperiodic chains).
    pub full_support: bool,
    /// Every action admissible everywhere; otherwise a random nonempty subset.
    pub all_admissible: bool,
}

impl Default for RandomMdpSpec {
    fn default() -> Self {
        Self {
            states: 4,
            actions: 3,
            discount: 0.9,
            max_reward: 1.0,
            integer_rewards: false,
            with_costs: false,
            full_support: false,
            all_admissible: false,
        }
    }
}

/// Draws a valid model; identical `(spec, seed)` give identical models.
pub fn random_mdp(spec: &RandomMdpSpec, seed: u64) -> FiniteMdp<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.states;
    let choices = (0..n)
        .map(|_| {
            let mut acts: Vec<usize> =
                (0..spec.actions).filter(|_| spec.all_admissible || rng.random_bool(0.7)).collect();
            if acts.is_empty() {
                acts.push(rng.random_range(0..spec.actions));
            }
            acts.into_iter()
                .map(|action| {
                    let mut w: Vec<f64> =
                        (0..n)
                            .map(|_| {
                                if spec.full_support || rng.random_bool(0.6) {
                                    rng.random_range(0.05..1.0)
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                    if w.iter().all(|&v| v == 0.0) {
                        w[rng.random_range(0..n)] = 1.0;
                    }
                    let total: f64 = w.iter().sum();
                    let successors =
                        w.iter().enumerate().filter(|(_, v)| **v > 0.0).map(|(y, v)| (y, v / total)).collect();
                    let reward = if spec.integer_rewards {
                        rng.random_range(0..=spec.max_reward as u32) as f64
                    } else {
                        rng.random_range(0.0..=spec.max_reward)
                    };
                    let cost = spec.with_costs.then(|| rng.random_range(0.0..=spec.max_reward));
                    Choice { action, reward, cost, successors }
                })
                .collect()
        })
        .collect();
    let mut m = FiniteMdp {
        states: (0..n).map(|i| format!("s{i}")).collect(),
        actions: (0..spec.actions).map(|i| format!("a{i}")).collect(),
        choices,
        discount: spec.discount,
    };
    crate::io::normalize(&mut m);
    m
}
