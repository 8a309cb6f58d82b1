//! Nested (recursive) OCE criterion.
//!
//! The operator `(Lv)(x) = max_a { r(x,a) + beta S_u(v(X_1)) }`, with `X_1 ~ q(.|x,a)`,
//! is a `beta`-contraction; its fixed point is the optimal value and any greedy
//! selector is an optimal stationary policy.

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, StagePolicy, StationaryPolicy};
use crate::neutral::{first_argmax, DEFAULT_MAX_ITERS};
use crate::oce::{oce, DiscreteDistribution, UtilitySpec};
use crate::report::Solution;
use crate::scalar::{log_sum_exp, sup_distance, Real};

fn continuation<T: Real>(row: &[(usize, T)], v: &[T], u: &UtilitySpec<T>) -> T {
    let dist = DiscreteDistribution::push_forward(row, v);
    oce(&dist, u).expect("utility validated by caller").value
}

fn q_value<T: Real>(m: &FiniteMdp<T>, u: &UtilitySpec<T>, x: usize, k: usize, v: &[T]) -> T {
    let c = &m.choices[x][k];
    c.reward + m.discount * continuation(&c.successors, v, u)
}

/// One application of `L` with its greedy policy (first admissible action on ties).
pub fn recursive_bellman_l<T: Real>(
    m: &FiniteMdp<T>,
    u: &UtilitySpec<T>,
    v: &[T],
) -> Result<(Vec<T>, StationaryPolicy)> {
    u.validate()?;
    Ok(apply_l(m, u, v))
}

fn apply_l<T: Real>(m: &FiniteMdp<T>, u: &UtilitySpec<T>, v: &[T]) -> (Vec<T>, StationaryPolicy) {
    let (vals, choice) = (0..m.n_states())
        .map(|x| {
            let (k, best) = first_argmax((0..m.choices[x].len()).map(|k| q_value(m, u, x, k, v)));
            (best, k)
        })
        .unzip();
    (vals, StationaryPolicy { choice })
}

/// `L_f v` for a fixed stationary policy.
pub fn policy_operator<T: Real>(m: &FiniteMdp<T>, u: &UtilitySpec<T>, f: &StationaryPolicy, v: &[T]) -> Vec<T> {
    (0..m.n_states()).map(|x| q_value(m, u, x, f.choice[x], v)).collect()
}

/// Iterates `v_{k+1} = A v_k` from zero until `beta/(1-beta) ||v_{k+1} - v_k|| <= tol`, or
/// until the update falls below `noise`, the rounding floor of `A` (the reported bound
/// then exceeds `tol`).
fn fixed_point<T: Real>(
    m: &FiniteMdp<T>,
    tol: T,
    noise: T,
    max_iters: usize,
    mut step: impl FnMut(&[T]) -> Result<Vec<T>>,
) -> Result<(Vec<T>, usize, T)> {
    let beta = m.discount;
    let factor = beta / (T::one() - beta);
    let mut v = vec![T::zero(); m.n_states()];
    for k in 1..=max_iters {
        let next = step(&v)?;
        let diff = sup_distance(&next, &v);
        v = next;
        if factor * diff <= tol || diff <= noise {
            return Ok((v, k, factor * diff));
        }
    }
    let next = step(&v)?;
    Err(Error::IterationLimit { iterations: max_iters, residual: sup_distance(&next, &v).as_f64() })
}

/// Rounding floor of one sweep whose values are resolved to `scale` absolute units.
fn noise_floor<T: Real>(scale: T) -> T {
    T::resolvable(0.0, 16.0) * (T::one() + scale)
}

/// Fixed point of `L` by value iteration from `v_0 = 0`.
///
/// Stops once the a-posteriori bound `beta/(1-beta) ||v_{k+1} - v_k||` is at most `tol`;
/// the reported residual is `||LV - V||` and the policy is greedy for the returned `V`.
pub fn solve_recursive<T: Real>(m: &FiniteMdp<T>, u: &UtilitySpec<T>, tol: T) -> Result<Solution<T>> {
    m.require_discounted()?;
    u.validate()?;
    let (value, iterations, error_bound) =
        fixed_point(m, tol, noise_floor(m.total_reward_bound()), DEFAULT_MAX_ITERS, |v| Ok(apply_l(m, u, v).0))?;
    let (lv, policy) = apply_l(m, u, &value);
    Ok(Solution { residual: sup_distance(&lv, &value), value, policy, iterations, error_bound })
}

/// One multiplicative sweep in log space: `w = ln V~ = -gamma V`,
/// `w(x) = min_a { -gamma r(x,a) + beta ln sum_y q(y|x,a) e^{w(y)} }`.
fn log_multiplicative_sweep<T: Real>(m: &FiniteMdp<T>, gamma: T, w: &[T]) -> (Vec<T>, StationaryPolicy) {
    let (vals, choice) = m
        .choices
        .iter()
        .map(|cs| {
            let mut best = (0, T::infinity());
            for (k, c) in cs.iter().enumerate() {
                let lse = log_sum_exp(
                    c.successors
                        .iter()
                        .filter(|(_, p)| *p > T::zero())
                        .map(|&(y, p)| p.ln() + w[y])
                        .collect::<Vec<_>>(),
                );
                let val = -gamma * c.reward + m.discount * lse;
                if val < best.1 {
                    best = (k, val);
                }
            }
            (best.1, best.0)
        })
        .unzip();
    (vals, StationaryPolicy { choice })
}

/// Entropic special case solved through the multiplicative Bellman equation
/// `V~(x) = min_a e^{-gamma r(x,a)} (sum_y V~(y) q(y|x,a))^beta`, `V~ = e^{-gamma V}`.
///
/// Since `V~` is decreasing in `V`, maximizing rewards means minimizing `V~`. The
/// iteration runs on `ln V~` so it cannot underflow; non-finite iterates are reported
/// as a range error.
pub fn entropic_fast_path<T: Real>(m: &FiniteMdp<T>, gamma: T, tol: T) -> Result<Solution<T>> {
    m.require_discounted()?;
    UtilitySpec::Entropic { gamma }.validate()?;
    let to_v = |w: &[T]| -> Result<Vec<T>> {
        let v: Vec<T> = w.iter().map(|&x| -x / gamma).collect();
        if v.iter().all(|x| x.is_finite()) {
            Ok(v)
        } else {
            Err(Error::Range(format!("entropic iterate left the representable range for gamma = {gamma}")))
        }
    };
    // ln-space sweeps resolve w = -gamma V, so V only to eps (1 + gamma R) / gamma
    let noise = noise_floor(gamma * m.total_reward_bound()) / gamma;
    let (value, iterations, error_bound) = fixed_point(m, tol, noise, DEFAULT_MAX_ITERS, |v| {
        let w: Vec<T> = v.iter().map(|&x| -gamma * x).collect();
        to_v(&log_multiplicative_sweep(m, gamma, &w).0)
    })?;
    let w: Vec<T> = value.iter().map(|&x| -gamma * x).collect();
    let (next, policy) = log_multiplicative_sweep(m, gamma, &w);
    let lv = to_v(&next)?;
    Ok(Solution { residual: sup_distance(&lv, &value), value, policy, iterations, error_bound })
}

/// Value `J(., f)` of a stationary policy: the fixed point of `L_f`.
pub fn policy_evaluation_recursive<T: Real>(
    m: &FiniteMdp<T>,
    u: &UtilitySpec<T>,
    f: &StationaryPolicy,
    tol: T,
) -> Result<Vec<T>> {
    m.require_discounted()?;
    u.validate()?;
    if !f.is_admissible(m) {
        return Err(Error::InvalidParameter("policy is not admissible for this model".into()));
    }
    fixed_point(m, tol, noise_floor(m.total_reward_bound()), DEFAULT_MAX_ITERS, |v| Ok(policy_operator(m, u, f, v)))
        .map(|(v, _, _)| v)
}

/// `J_N = (L_{pi_0} o ... o L_{pi_{N-1}}) 0`.
pub fn n_stage_value<T: Real>(m: &FiniteMdp<T>, u: &UtilitySpec<T>, policy: &StagePolicy, n: usize) -> Result<Vec<T>> {
    u.validate()?;
    let mut v = vec![T::zero(); m.n_states()];
    for k in (0..n).rev() {
        v = policy_operator(m, u, policy.at(k), &v);
    }
    Ok(v)
}
