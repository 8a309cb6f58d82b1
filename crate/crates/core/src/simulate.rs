//! Seeded Monte-Carlo rollouts and risk-functional estimators.
//!
//! Replication `i` of a batch with seed `s` draws from `ChaCha8Rng::seed_from_u64(s)`
//! switched to stream `i`, so results do not depend on how replications are scheduled
//! across threads.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augmented::TotalOceSolution;
use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, StagePolicy, StationaryPolicy};
use crate::neutral::sample_successor;
use crate::scalar::{log_sum_exp, Real};

/// Number of bootstrap resamples behind every nonlinear standard error.
pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// Smallest batch accepted by [`estimate`].
pub const MIN_REPLICATIONS: usize = 100;

/// Decision rule used during a rollout.
pub trait RolloutPolicy<T: Real>: Sync {
    /// Slot in `D(state)` at `stage`, given the discounted reward collected so far.
    fn action(&self, stage: usize, state: usize, accumulated: T) -> usize;
}

impl<T: Real> RolloutPolicy<T> for StationaryPolicy {
    fn action(&self, _: usize, state: usize, _: T) -> usize {
        self.choice[state]
    }
}

impl<T: Real> RolloutPolicy<T> for StagePolicy {
    fn action(&self, stage: usize, state: usize, _: T) -> usize {
        self.at(stage).choice[state]
    }
}

/// Follows the history-dependent optimal policy through its stored argmax table.
impl<T: Real> RolloutPolicy<T> for TotalOceSolution<T> {
    fn action(&self, stage: usize, state: usize, accumulated: T) -> usize {
        let i = self.grid.nearest(accumulated - self.eta_star).0;
        self.table_action(stage, state, i).unwrap_or(self.stage_policy.tail.choice[state])
    }
}

/// Per-replication discounted rewards and cumulative costs.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch<T> {
    pub seed: u64,
    pub replications: usize,
    pub horizon: usize,
    pub discounted: Vec<T>,
    /// Undiscounted cumulative cost (zero when the model has no costs).
    pub cost: Vec<T>,
}

impl<T: Real> RolloutBatch<T> {
    /// `replication,R,C` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("replication,R,C\n");
        for (i, (r, c)) in self.discounted.iter().zip(&self.cost).enumerate() {
            let _ = writeln!(out, "{i},{r},{c}");
        }
        out
    }
}

/// Smallest horizon `h` with `beta^h d / (1-beta) <= tol`.
pub fn horizon_for<T: Real>(m: &FiniteMdp<T>, tol: T) -> usize {
    crate::augmented::truncation_level(m, tol)
}

/// Simulates `reps` trajectories of length `horizon` from `x0`.
pub fn rollout<T: Real, P: RolloutPolicy<T> + ?Sized>(
    m: &FiniteMdp<T>,
    policy: &P,
    x0: usize,
    horizon: usize,
    seed: u64,
    reps: usize,
) -> Result<RolloutBatch<T>> {
    if x0 >= m.n_states() {
        return Err(Error::InvalidParameter(format!("start state index {x0} out of range")));
    }
    let rows: Vec<(T, T)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64);
            let (mut x, mut disc, mut cost, mut z) = (x0, T::zero(), T::zero(), T::one());
            for t in 0..horizon {
                let k = policy.action(t, x, disc);
                let c = m.choices[x].get(k).ok_or_else(|| {
                    Error::InvalidParameter(format!("policy chose an inadmissible action in state {:?}", m.states[x]))
                })?;
                disc += z * c.reward;
                cost += c.cost.unwrap_or_else(T::zero);
                z *= m.discount;
                x = sample_successor(&c.successors, rng.random::<f64>());
            }
            Ok((disc, cost))
        })
        .collect::<Result<_>>()?;
    let (discounted, cost) = rows.into_iter().unzip();
    Ok(RolloutBatch { seed, replications: reps, horizon, discounted, cost })
}

/// Risk functional of a sample, reported on the reward scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Functional {
    Mean,
    /// `-(1/gamma) ln mean exp(-gamma R)`.
    Entropic {
        gamma: f64,
    },
    /// Mean of the worst `alpha` fraction of rewards (the negated CVaR).
    Cvar {
        alpha: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

fn point_estimate(xs: &[f64], f: Functional) -> f64 {
    let n = xs.len() as f64;
    match f {
        Functional::Mean => xs.iter().sum::<f64>() / n,
        Functional::Entropic { gamma } => -(log_sum_exp(xs.iter().map(|&x| -gamma * x)) - n.ln()) / gamma,
        Functional::Cvar { alpha } => {
            let mut s = xs.to_vec();
            s.sort_by(f64::total_cmp);
            let mass = alpha * n;
            let full = (mass.floor() as usize).min(s.len());
            let mut tail: f64 = s[..full].iter().sum();
            if full < s.len() {
                tail += (mass - full as f64) * s[full];
            }
            tail / mass
        }
    }
}

fn validate_functional(f: Functional) -> Result<()> {
    match f {
        Functional::Entropic { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
            Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")))
        }
        Functional::Cvar { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
            Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")))
        }
        _ => Ok(()),
    }
}

/// Standard deviation of the functional over seeded bootstrap resamples.
fn bootstrap(xs: &[f64], seed: u64, stat: impl Fn(&[f64]) -> f64 + Sync) -> f64 {
    let n = xs.len();
    let stats: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xB007_572A_u64);
            rng.set_stream(b as u64);
            let sample: Vec<f64> = (0..n).map(|_| xs[rng.random_range(0..n)]).collect();
            stat(&sample)
        })
        .collect();
    let mean = stats.iter().sum::<f64>() / stats.len() as f64;
    let var = stats.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    var.sqrt()
}

fn std_error_of_mean(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

/// Point estimate and standard error of a functional of the discounted rewards.
///
/// The mean uses the sample standard error; entropic and CVaR estimates use
/// [`BOOTSTRAP_RESAMPLES`] seeded bootstrap resamples.
pub fn estimate<T: Real>(batch: &RolloutBatch<T>, f: Functional) -> Result<Estimate> {
    validate_functional(f)?;
    if batch.replications < MIN_REPLICATIONS {
        return Err(Error::InvalidParameter(format!(
            "estimates need at least {MIN_REPLICATIONS} replications, got {}",
            batch.replications
        )));
    }
    let xs: Vec<f64> = batch.discounted.iter().map(|x| x.as_f64()).collect();
    let value = point_estimate(&xs, f);
    let std_error = match f {
        Functional::Mean => std_error_of_mean(&xs),
        _ => bootstrap(&xs, batch.seed, |s| point_estimate(s, f)),
    };
    Ok(Estimate { value, std_error })
}

/// Ergodic entropic estimate with its simulation budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErgodicEstimate {
    pub value: f64,
    pub std_error: f64,
    pub steps: usize,
    pub replications: usize,
}

/// `(1/(gamma n)) ln mean exp(gamma C_n)` over `reps` rollouts of `n` steps from `x0`.
pub fn estimate_ergodic_entropic<T: Real, P: RolloutPolicy<T> + ?Sized>(
    m: &FiniteMdp<T>,
    policy: &P,
    gamma: f64,
    n: usize,
    reps: usize,
    seed: u64,
    x0: usize,
) -> Result<ErgodicEstimate> {
    validate_functional(Functional::Entropic { gamma })?;
    if !m.has_costs() {
        return Err(Error::Unsupported("ergodic estimate needs a cost table".into()));
    }
    if n == 0 || reps < 2 {
        return Err(Error::InvalidParameter("need n >= 1 steps and at least two replications".into()));
    }
    let batch = rollout(m, policy, x0, n, seed, reps)?;
    let costs: Vec<f64> = batch.cost.iter().map(|c| c.as_f64()).collect();
    let stat = |s: &[f64]| (log_sum_exp(s.iter().map(|&c| gamma * c)) - (s.len() as f64).ln()) / (gamma * n as f64);
    Ok(ErgodicEstimate { value: stat(&costs), std_error: bootstrap(&costs, seed, stat), steps: n, replications: reps })
}
