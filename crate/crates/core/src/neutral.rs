//! Risk-neutral baseline: discounted value/policy iteration, Q-learning, the
//! unichain average-reward equation and its vanishing-discount connection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{require_unichain, FiniteMdp, StationaryPolicy};
use crate::report::Solution;
use crate::scalar::{sup_distance, Real};

/// Default iteration cap shared by the iterative solvers.
pub const DEFAULT_MAX_ITERS: usize = 1_000_000;

/// Aperiodicity damping used inside relative value iteration.
pub const RVI_DAMPING: f64 = 0.5;

pub(crate) fn expected<T: Real>(row: &[(usize, T)], v: &[T]) -> T {
    row.iter().map(|&(y, p)| p * v[y]).sum()
}

/// Index of the first maximal element (first admissible action wins ties).
pub(crate) fn first_argmax<T: Real>(vals: impl Iterator<Item = T>) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (k, v) in vals.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// `(Tv)(x) = max_a { r(x,a) + beta sum_y v(y) q(y|x,a) }` and its greedy policy.
pub fn bellman_t<T: Real>(m: &FiniteMdp<T>, v: &[T]) -> (Vec<T>, StationaryPolicy) {
    let (vals, choice) = m
        .choices
        .iter()
        .map(|cs| {
            let (k, best) = first_argmax(cs.iter().map(|c| c.reward + m.discount * expected(&c.successors, v)));
            (best, k)
        })
        .unzip();
    (vals, StationaryPolicy { choice })
}

/// Value iteration from `v = 0`, stopped when `||v_{k+1} - v_k|| <= tol (1-beta) / (2 beta)`,
/// which guarantees `||v_{k+1} - V*|| <= tol / 2`.
pub fn value_iteration<T: Real>(m: &FiniteMdp<T>, tol: T, max_iters: usize) -> Result<Solution<T>> {
    m.require_discounted()?;
    let beta = m.discount;
    let threshold = if beta > T::zero() { tol * (T::one() - beta) / (T::lit(2.0) * beta) } else { T::infinity() };
    let mut v = vec![T::zero(); m.n_states()];
    for k in 1..=max_iters {
        let (next, _) = bellman_t(m, &v);
        let diff = sup_distance(&next, &v);
        v = next;
        if diff <= threshold {
            let (_, policy) = bellman_t(m, &v);
            let bound = if beta > T::zero() { beta / (T::one() - beta) * diff } else { T::zero() };
            return Ok(Solution { value: v, policy, iterations: k, residual: diff, error_bound: bound });
        }
    }
    let (next, _) = bellman_t(m, &v);
    Err(Error::IterationLimit { iterations: max_iters, residual: sup_distance(&next, &v).as_f64() })
}

/// Solves `(I - beta P_f) V = r_f` directly.
pub fn policy_evaluation<T: Real>(m: &FiniteMdp<T>, f: &StationaryPolicy) -> Result<Vec<T>> {
    m.require_discounted()?;
    let chain = m.induced_chain(f);
    let n = m.n_states();
    let a = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    let id = if x == y { T::one() } else { T::zero() };
                    id - m.discount * chain.matrix[x][y]
                })
                .collect()
        })
        .collect();
    linalg::solve(a, chain.reward)
}

/// Howard policy iteration from the first-admissible policy.
///
/// An action is replaced only on strict improvement, so the loop stops as soon as the
/// policy repeats; the reported policy is greedy (first-action tie-break) for the final values.
pub fn policy_iteration<T: Real>(m: &FiniteMdp<T>) -> Result<Solution<T>> {
    m.require_discounted()?;
    let mut f = StationaryPolicy::first(m);
    for k in 1..=DEFAULT_MAX_ITERS {
        let v = policy_evaluation(m, &f)?;
        let mut changed = false;
        for (x, cs) in m.choices.iter().enumerate() {
            let q = |slot: usize| {
                let c = &cs[slot];
                c.reward + m.discount * expected(&c.successors, &v)
            };
            let current = q(f.choice[x]);
            let (best, val) = first_argmax((0..cs.len()).map(q));
            let slack = T::resolvable(1e-12, 64.0) * (T::one() + current.abs());
            if val > current + slack {
                f.choice[x] = best;
                changed = true;
            }
        }
        if !changed {
            let (tv, policy) = bellman_t(m, &v);
            return Ok(Solution {
                residual: sup_distance(&tv, &v),
                value: v,
                policy,
                iterations: k,
                error_bound: T::zero(),
            });
        }
    }
    Err(Error::IterationLimit { iterations: DEFAULT_MAX_ITERS, residual: f64::NAN })
}

/// Action-value table on admissible pairs: `table[x][slot]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable<T> {
    pub table: Vec<Vec<T>>,
}

impl<T: Real> QTable<T> {
    /// `Q(x,a) = r(x,a) + beta sum_y v(y) q(y|x,a)`.
    pub fn from_values(m: &FiniteMdp<T>, v: &[T]) -> Self {
        Self {
            table: m
                .choices
                .iter()
                .map(|cs| cs.iter().map(|c| c.reward + m.discount * expected(&c.successors, v)).collect())
                .collect(),
        }
    }

    pub fn values(&self) -> Vec<T> {
        self.table.iter().map(|row| first_argmax(row.iter().copied()).1).collect()
    }

    pub fn greedy(&self) -> StationaryPolicy {
        StationaryPolicy { choice: self.table.iter().map(|row| first_argmax(row.iter().copied()).0).collect() }
    }

    pub fn distance(&self, other: &Self) -> T {
        self.table.iter().zip(&other.table).fold(T::zero(), |m, (a, b)| m.max(sup_distance(a, b)))
    }
}

/// Learning-rate schedule and budget for [`q_learning`].
#[derive(Clone, Copy, Debug)]
pub struct QLearningConfig<T> {
    /// Step size `(1 + visits(x,a))^{-omega}`, `omega` in `(0.5, 1]`.
    pub omega: T,
    /// Total number of single-pair updates.
    pub max_updates: usize,
}

impl<T: Real> Default for QLearningConfig<T> {
    fn default() -> Self {
        Self { omega: T::lit(0.8), max_updates: 1_000_000 }
    }
}

#[derive(Clone, Debug)]
pub struct QLearningOutcome<T> {
    pub q: QTable<T>,
    pub updates: usize,
    /// Sup-norm distance to the reference table after each complete sweep.
    pub distances: Vec<T>,
}

pub(crate) fn sample_successor<T: Real>(row: &[(usize, T)], u: f64) -> usize {
    let mut acc = 0.0;
    for &(y, p) in row {
        acc += p.as_f64();
        if u < acc {
            return y;
        }
    }
    // rounding: fall back to the last charged successor
    row.iter().rev().find(|(_, p)| *p > T::zero()).map_or(row[0].0, |&(y, _)| y)
}

/// Tabular Q-learning with cyclic sweeps over the admissible pairs and successors
/// drawn from the kernel with a seeded generator.
pub fn q_learning<T: Real>(
    m: &FiniteMdp<T>,
    config: &QLearningConfig<T>,
    seed: u64,
    reference: Option<&QTable<T>>,
) -> Result<QLearningOutcome<T>> {
    m.require_discounted()?;
    if !(config.omega > T::lit(0.5) && config.omega <= T::one()) {
        return Err(Error::InvalidParameter(format!(
            "learning-rate exponent omega must lie in (0.5, 1], got {}",
            config.omega
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable { table: m.choices.iter().map(|cs| vec![T::zero(); cs.len()]).collect() };
    let mut visits: Vec<Vec<u64>> = m.choices.iter().map(|cs| vec![0; cs.len()]).collect();
    let pairs: Vec<(usize, usize)> =
        m.choices.iter().enumerate().flat_map(|(x, cs)| (0..cs.len()).map(move |k| (x, k))).collect();
    let mut distances = Vec::new();
    let mut updates = 0;
    'outer: loop {
        for &(x, k) in &pairs {
            if updates >= config.max_updates {
                break 'outer;
            }
            let c = &m.choices[x][k];
            let y = sample_successor(&c.successors, rng.random::<f64>());
            let next = q.table[y].iter().fold(T::neg_infinity(), |a, &b| a.max(b));
            let target = c.reward + m.discount * next;
            let n = visits[x][k] as f64;
            let rate = T::lit(1.0 + n).powf(-config.omega);
            let cur = q.table[x][k];
            q.table[x][k] = cur + rate * (target - cur);
            visits[x][k] += 1;
            updates += 1;
        }
        if let Some(r) = reference {
            distances.push(q.distance(r));
        }
        if pairs.is_empty() {
            break;
        }
    }
    Ok(QLearningOutcome { q, updates, distances })
}

/// Solution of `xi + h(x) = opt_a { payoff(x,a) + sum_y h(y) q(y|x,a) }` with `h(z) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageSolution<T> {
    pub gain: T,
    pub bias: Vec<T>,
    pub policy: StationaryPolicy,
    pub iterations: usize,
    /// Max over states of the optimality-equation residual.
    pub residual: T,
}

/// Relative value iteration for the average-reward optimality equation (maximizing rewards).
pub fn average_reward_rvi<T: Real>(m: &FiniteMdp<T>, tol: T, reference: usize) -> Result<AverageSolution<T>> {
    rvi(m, tol, reference, Sense::Maximize)
}

/// Minimum average cost counterpart of [`average_reward_rvi`]; needs a cost table.
pub fn average_cost_rvi<T: Real>(m: &FiniteMdp<T>, tol: T, reference: usize) -> Result<AverageSolution<T>> {
    if !m.has_costs() {
        return Err(Error::Unsupported("average-cost criterion needs a cost table".into()));
    }
    rvi(m, tol, reference, Sense::Minimize)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sense {
    Maximize,
    Minimize,
}

impl Sense {
    fn payoff<T: Real>(self, m: &FiniteMdp<T>, x: usize, k: usize) -> T {
        match self {
            Sense::Maximize => m.choices[x][k].reward,
            Sense::Minimize => -m.cost(x, k),
        }
    }
}

/// One damped sweep: `opt_a { payoff + (1-tau) h(x) + tau sum q h }` (in maximization form).
fn damped_sweep<T: Real>(m: &FiniteMdp<T>, h: &[T], sense: Sense, tau: T) -> (Vec<T>, StationaryPolicy) {
    let (vals, choice) =
        m.choices
            .iter()
            .enumerate()
            .map(|(x, cs)| {
                let (k, best) =
                    first_argmax(cs.iter().enumerate().map(|(k, c)| {
                        sense.payoff(m, x, k) + (T::one() - tau) * h[x] + tau * expected(&c.successors, h)
                    }));
                (best, k)
            })
            .unzip();
    (vals, StationaryPolicy { choice })
}

fn rvi<T: Real>(m: &FiniteMdp<T>, tol: T, z: usize, sense: Sense) -> Result<AverageSolution<T>> {
    if z >= m.n_states() {
        return Err(Error::InvalidParameter(format!("reference state index {z} out of range")));
    }
    require_unichain(m)?;
    // P -> (1-tau) I + tau P keeps the gain, scales the bias by 1/tau and removes periodicity
    let tau = T::lit(RVI_DAMPING);
    let mut h = vec![T::zero(); m.n_states()];
    for k in 1..=DEFAULT_MAX_ITERS {
        let (th, _) = damped_sweep(m, &h, sense, tau);
        let diffs: Vec<T> = th.iter().zip(&h).map(|(a, b)| *a - *b).collect();
        let hi = diffs.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lo = diffs.iter().fold(T::infinity(), |a, &b| a.min(b));
        let shift = th[z];
        h = th.iter().map(|&v| v - shift).collect();
        if hi - lo <= tol {
            let damped_gain = diffs[z];
            let bias: Vec<T> = h.iter().map(|&v| v * tau).collect();
            let (policy, residual) = average_residual(m, damped_gain, &bias, sense);
            let sign = if sense == Sense::Maximize { T::one() } else { -T::one() };
            return Ok(AverageSolution {
                gain: sign * damped_gain,
                bias: bias.iter().map(|&b| sign * b).collect(),
                policy,
                iterations: k,
                residual,
            });
        }
    }
    Err(Error::IterationLimit { iterations: DEFAULT_MAX_ITERS, residual: f64::NAN })
}

fn average_residual<T: Real>(m: &FiniteMdp<T>, gain: T, h: &[T], sense: Sense) -> (StationaryPolicy, T) {
    let mut residual = T::zero();
    let choice = m
        .choices
        .iter()
        .enumerate()
        .map(|(x, cs)| {
            let (k, best) =
                first_argmax(cs.iter().enumerate().map(|(k, c)| sense.payoff(m, x, k) + expected(&c.successors, h)));
            residual = residual.max((gain + h[x] - best).abs());
            k
        })
        .collect();
    (StationaryPolicy { choice }, residual)
}

/// Gain and bias (with `h(z) = 0`) of a fixed unichain policy, by direct linear solve.
pub fn policy_gain<T: Real>(m: &FiniteMdp<T>, f: &StationaryPolicy, z: usize) -> Result<(T, Vec<T>)> {
    let chain = m.induced_chain(f);
    let n = m.n_states();
    // unknowns: h(0..n) with h(z) replaced by the gain
    let a = (0..n)
        .map(|x| {
            (0..n)
                .map(|y| {
                    if y == z {
                        T::one()
                    } else {
                        let id = if x == y { T::one() } else { T::zero() };
                        id - chain.matrix[x][y]
                    }
                })
                .collect()
        })
        .collect();
    let mut sol = linalg::solve(a, chain.reward)
        .map_err(|_| Error::Precondition("policy is not unichain; gain depends on the start state".into()))?;
    let gain = sol[z];
    sol[z] = T::zero();
    Ok((gain, sol))
}

/// Per-policy comparison `xi_f` versus `(1-beta) J_beta(z, f)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGap<T> {
    pub policy: StationaryPolicy,
    pub gain: T,
    pub scaled_discounted: T,
    /// `gain <= scaled_discounted + epsilon`.
    pub holds: bool,
}

/// Normalized discounted quantities at one discount factor.
#[derive(Clone, Debug, PartialEq)]
pub struct VanishingRow<T> {
    pub beta: T,
    /// `(1 - beta) V_beta(z)`.
    pub scaled_value: T,
    /// `h_beta(x) = V_beta(x) - V_beta(z)`.
    pub bias: Vec<T>,
    pub policy_gaps: Vec<PolicyGap<T>>,
}

/// Tabulates `(1-beta) V_beta(z)` and `h_beta` for each `beta`, and checks every
/// enumerable stationary policy (at most `policy_cap`) against `epsilon`.
pub fn vanishing_discount<T: Real>(
    m: &FiniteMdp<T>,
    betas: &[T],
    z: usize,
    epsilon: T,
    policy_cap: u64,
) -> Result<Vec<VanishingRow<T>>> {
    let policies = if m.policy_count() <= policy_cap { m.enumerate_policies(policy_cap)? } else { Vec::new() };
    let gains = policies.iter().map(|f| policy_gain(m, f, z).map(|(g, _)| g)).collect::<Result<Vec<_>>>()?;
    betas
        .iter()
        .map(|&beta| {
            if !(beta >= T::zero() && beta < T::one()) {
                return Err(Error::InvalidParameter(format!("discount {beta} must lie in [0, 1)")));
            }
            let mb = m.with_discount(beta);
            let sol = policy_iteration(&mb)?;
            let vz = sol.value[z];
            let policy_gaps = policies
                .iter()
                .zip(&gains)
                .map(|(f, &gain)| {
                    let j = policy_evaluation(&mb, f)?;
                    let scaled = (T::one() - beta) * j[z];
                    Ok(PolicyGap {
                        policy: f.clone(),
                        gain,
                        scaled_discounted: scaled,
                        holds: gain <= scaled + epsilon,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VanishingRow {
                beta,
                scaled_value: (T::one() - beta) * vz,
                bias: sol.value.iter().map(|&v| v - vz).collect(),
                policy_gaps,
            })
        })
        .collect()
}
