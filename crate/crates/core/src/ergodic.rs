//! Ergodic entropic cost.
//!
//! Solves the multiplicative Poisson equation
//!
//! ```text
//! e^{gamma (xi + h(x))} = min_a e^{gamma c(x,a)} sum_y q(y|x,a) e^{gamma h(y)}
//! ```
//!
//! i.e. `rho W = M W` with `W = e^{gamma h}` and `rho = e^{gamma xi}`, by relative value
//! iteration on `ln W`. The damped operator `(1-lambda) W + lambda M W` has the same
//! eigenvector and eigenvalue `1 - lambda + lambda rho`, which removes periodicity.

use crate::error::{Error, Result};
use crate::mdp::{require_unichain, FiniteMdp, StationaryPolicy};
use crate::neutral::{DEFAULT_MAX_ITERS, RVI_DAMPING};
use crate::scalar::{log_sum_exp, Real};

/// Solution of the multiplicative Poisson equation.
#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicSolution<T> {
    /// Optimal long-run entropic cost `xi = ln(rho) / gamma`.
    pub xi: T,
    /// Relative value `h` with `h(reference) = 0`.
    pub h: Vec<T>,
    /// `W = e^{gamma h}`, strictly positive.
    pub w: Vec<T>,
    pub policy: StationaryPolicy,
    pub rho: T,
    pub iterations: usize,
    /// `max_x |min_a {e^{gamma c} sum q W} - rho W(x)| / rho`.
    pub residual: T,
    /// Final log-ratio spread `max_x ln(MW/W) - min_x ln(MW/W)`; brackets `gamma xi`.
    pub spread: T,
}

/// `ln (M W)(x)` for `g = ln W`, and the minimizing slots.
fn log_operator<T: Real>(m: &FiniteMdp<T>, gamma: T, g: &[T]) -> (Vec<T>, Vec<usize>) {
    m.choices
        .iter()
        .enumerate()
        .map(|(x, cs)| {
            let mut best = (0, T::infinity());
            for (k, c) in cs.iter().enumerate() {
                let lse = log_sum_exp(
                    c.successors
                        .iter()
                        .filter(|(_, p)| *p > T::zero())
                        .map(|&(y, p)| p.ln() + g[y])
                        .collect::<Vec<_>>(),
                );
                let v = gamma * m.cost(x, k) + lse;
                if v < best.1 {
                    best = (k, v);
                }
            }
            (best.1, best.0)
        })
        .unzip()
}

fn require_costs<T: Real>(m: &FiniteMdp<T>, gamma: T) -> Result<()> {
    if !m.has_costs() {
        return Err(Error::Unsupported("ergodic entropic criterion needs a cost table".into()));
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(())
}

/// Relative value iteration for the multiplicative Poisson equation.
///
/// Iterates `g <- ln((1-lambda) W + lambda M W) - (same)(z)` on `g = ln W`; the
/// Collatz-Wielandt ratios `(MW)(x) / W(x)` bracket `rho`, and iteration stops once their
/// log spread and the equation residual are at most `tol`.
pub fn ergodic_rvi<T: Real>(m: &FiniteMdp<T>, gamma: T, tol: T, reference: usize) -> Result<ErgodicSolution<T>> {
    require_costs(m, gamma)?;
    if reference >= m.n_states() {
        return Err(Error::InvalidParameter(format!("reference state index {reference} out of range")));
    }
    require_unichain(m)?;
    iterate(m, gamma, tol, reference)
}

fn iterate<T: Real>(m: &FiniteMdp<T>, gamma: T, tol: T, z: usize) -> Result<ErgodicSolution<T>> {
    let lambda = T::lit(RVI_DAMPING);
    let (ln_keep, ln_step) = ((T::one() - lambda).ln(), lambda.ln());
    let mut g = vec![T::zero(); m.n_states()];
    let mut spread = T::infinity();
    for k in 1..=DEFAULT_MAX_ITERS {
        let (mg, _) = log_operator(m, gamma, &g);
        let ratios: Vec<T> = mg.iter().zip(&g).map(|(a, b)| *a - *b).collect();
        let hi = ratios.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let lo = ratios.iter().fold(T::infinity(), |a, &b| a.min(b));
        spread = hi - lo;
        let ln_rho = (hi + lo) / T::lit(2.0);
        let gmax = g.iter().fold(T::zero(), |a, &b| a.max(b));
        let floor = T::resolvable(0.0, 256.0) * (T::one() + gmax.abs() + ln_rho.abs());
        let residual = gmax.exp() * ((spread / T::lit(2.0)).exp() - T::one());
        if (spread <= tol && residual <= tol) || spread <= floor {
            let (_, choice) = log_operator(m, gamma, &g);
            let xi = ln_rho / gamma;
            return Ok(ErgodicSolution {
                xi,
                h: g.iter().map(|&v| v / gamma).collect(),
                w: g.iter().map(|&v| v.exp()).collect(),
                policy: StationaryPolicy { choice },
                rho: ln_rho.exp(),
                iterations: k,
                residual,
                spread,
            });
        }
        let damped: Vec<T> = mg.iter().zip(&g).map(|(&a, &b)| log_sum_exp([ln_keep + b, ln_step + a])).collect();
        let shift = damped[z];
        g = damped.iter().map(|&v| v - shift).collect();
    }
    Err(Error::IterationLimit { iterations: DEFAULT_MAX_ITERS, residual: spread.as_f64() })
}

/// Perron value of `M_f[x][y] = e^{gamma c(x, f(x))} q(y|x, f(x))`: returns
/// `(xi_f, W_f)` with `xi_f = ln(rho_f) / gamma` and `W_f(0) = 1`.
pub fn ergodic_policy_value<T: Real>(m: &FiniteMdp<T>, f: &StationaryPolicy, gamma: T) -> Result<(T, Vec<T>)> {
    require_costs(m, gamma)?;
    if !f.is_admissible(m) {
        return Err(Error::InvalidParameter("policy is not admissible for this model".into()));
    }
    if !m.induced_chain(f).structure().is_irreducible() {
        return Err(Error::Precondition(format!("policy {:?} induces a reducible chain", f.action_names(m))));
    }
    let restricted = FiniteMdp {
        states: m.states.clone(),
        actions: m.actions.clone(),
        choices: m.choices.iter().zip(&f.choice).map(|(cs, &k)| vec![cs[k].clone()]).collect(),
        discount: m.discount,
    };
    let s = iterate(&restricted, gamma, T::resolvable(1e-13, 64.0), 0)?;
    Ok((s.xi, s.w))
}
