//! Optimized certainty equivalents of finite-support distributions.
//!
//! For a concave, nondecreasing utility `u` with `u(0) = 0` and
//! `u'(0+) <= 1 <= u'(0-)`, the optimized certainty equivalent of a payoff `X` is
//!
//! ```text
//! S_u(X) = sup_eta { eta + E u(X - eta) }
//! ```
//!
//! and the supremum may be restricted to `[min X, max X]`. Entropic and CVaR
//! utilities have closed forms; every kind can also be evaluated through
//! [`oce_generic`], which searches the concave objective directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

/// Finite-support distribution over real payoffs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution<T> {
    atoms: Vec<(T, T)>,
}

impl<T: Real> DiscreteDistribution<T> {
    /// Builds a distribution from `(value, probability)` pairs.
    ///
    /// Probabilities must be nonnegative and sum to one within `1e-12`
    /// (relaxed to a few ulps for `f32`). Zero-probability atoms are kept but
    /// never influence any functional.
    pub fn new(atoms: Vec<(T, T)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let mut total = T::zero();
        for (i, &(v, p)) in atoms.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidDistribution(format!("atom {i} has non-finite value")));
            }
            if !(p >= T::zero()) || !p.is_finite() {
                return Err(Error::InvalidDistribution(format!("atom {i} has invalid probability {p}")));
            }
            total += p;
        }
        let tol = T::resolvable(1e-12, 4.0 * atoms.len() as f64);
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}, expected 1")));
        }
        if atoms.iter().all(|&(_, p)| p == T::zero()) {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        Ok(Self { atoms })
    }

    /// Point mass at `c`.
    pub fn point(c: T) -> Self {
        Self { atoms: vec![(c, T::one())] }
    }

    /// Skips validation; callers guarantee a normalized, nonempty support.
    pub(crate) fn from_normalized(atoms: Vec<(T, T)>) -> Self {
        debug_assert!(!atoms.is_empty());
        Self { atoms }
    }

    /// Push-forward of a kernel row through `values`, merging equal payoffs.
    pub(crate) fn push_forward(row: &[(usize, T)], values: &[T]) -> Self {
        let mut atoms: Vec<(T, T)> = row.iter().filter(|(_, p)| *p > T::zero()).map(|&(y, p)| (values[y], p)).collect();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
        atoms.dedup_by(|next, kept| {
            if next.0 == kept.0 {
                kept.1 += next.1;
                true
            } else {
                false
            }
        });
        Self::from_normalized(atoms)
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    fn charged(&self) -> impl Iterator<Item = &(T, T)> + Clone {
        self.atoms.iter().filter(|(_, p)| *p > T::zero())
    }

    pub fn min_support(&self) -> T {
        self.charged().fold(T::infinity(), |m, &(v, _)| m.min(v))
    }

    pub fn max_support(&self) -> T {
        self.charged().fold(T::neg_infinity(), |m, &(v, _)| m.max(v))
    }

    pub fn is_degenerate(&self) -> bool {
        self.min_support() == self.max_support()
    }

    pub fn mean(&self) -> T {
        self.charged().map(|&(v, p)| v * p).sum()
    }

    pub fn variance(&self) -> T {
        let m = self.mean();
        self.charged().map(|&(v, p)| p * (v - m) * (v - m)).sum()
    }

    /// Distribution of `f(X)`.
    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { atoms: self.atoms.iter().map(|&(v, p)| (f(v), p)).collect() }
    }

    /// Expected value of `g(X)`.
    pub fn expect(&self, g: impl Fn(T) -> T) -> T {
        self.charged().map(|&(v, p)| p * g(v)).sum()
    }
}

/// Utility function generating an optimized certainty equivalent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UtilitySpec<T> {
    /// `u(t) = (1 - exp(-gamma t)) / gamma`.
    Entropic { gamma: T },
    /// `u(t) = t / alpha` for `t < 0`, `0` otherwise; the OCE is `-CVaR_alpha`.
    Cvar { alpha: T },
    /// `u(t) = t - t^2 / 2` for `t < 1`, `1/2` otherwise.
    MeanVariance,
    /// Concave piecewise-linear interpolant of `points`, extended linearly.
    #[serde(rename = "piecewise_linear")]
    PiecewiseLinear { points: Vec<(T, T)> },
}

impl<T: Real> UtilitySpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Entropic { gamma } => {
                if !(*gamma > T::zero()) || !gamma.is_finite() {
                    return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
                }
            }
            Self::Cvar { alpha } => {
                if !(*alpha > T::zero() && *alpha < T::one()) {
                    return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
                }
            }
            Self::MeanVariance => {}
            Self::PiecewiseLinear { points } => validate_piecewise(points)?,
        }
        Ok(())
    }

    /// Evaluates `u(t)`.
    pub fn eval(&self, t: T) -> T {
        match self {
            Self::Entropic { gamma } => -(-*gamma * t).exp_m1() / *gamma,
            Self::Cvar { alpha } => {
                if t < T::zero() {
                    t / *alpha
                } else {
                    T::zero()
                }
            }
            Self::MeanVariance => {
                if t < T::one() {
                    t - t * t / T::lit(2.0)
                } else {
                    T::lit(0.5)
                }
            }
            Self::PiecewiseLinear { points } => piecewise_eval(points, t),
        }
    }

    /// Arguments at which `u` has a kink; empty for smooth kinds.
    fn kinks(&self) -> Vec<T> {
        match self {
            Self::Cvar { .. } => vec![T::zero()],
            Self::PiecewiseLinear { points } => points.iter().map(|p| p.0).collect(),
            _ => Vec::new(),
        }
    }

    fn is_piecewise_linear(&self) -> bool {
        matches!(self, Self::Cvar { .. } | Self::PiecewiseLinear { .. })
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Real>(&self) -> UtilitySpec<U> {
        let c = |x: T| U::lit(x.as_f64());
        match self {
            Self::Entropic { gamma } => UtilitySpec::Entropic { gamma: c(*gamma) },
            Self::Cvar { alpha } => UtilitySpec::Cvar { alpha: c(*alpha) },
            Self::MeanVariance => UtilitySpec::MeanVariance,
            Self::PiecewiseLinear { points } => {
                UtilitySpec::PiecewiseLinear { points: points.iter().map(|&(t, u)| (c(t), c(u))).collect() }
            }
        }
    }
}

fn slopes<T: Real>(points: &[(T, T)]) -> Vec<T> {
    points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
}

fn piecewise_eval<T: Real>(points: &[(T, T)], t: T) -> T {
    let n = points.len();
    // index of the segment used: clamp to the first/last for extrapolation
    let seg = match points.iter().position(|p| p.0 > t) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => n - 2,
    }
    .min(n - 2);
    let (t0, u0) = points[seg];
    let (t1, u1) = points[seg + 1];
    u0 + (u1 - u0) * (t - t0) / (t1 - t0)
}

fn validate_piecewise<T: Real>(points: &[(T, T)]) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidParameter(format!("piecewise utility: {m}")));
    if points.len() < 2 {
        return bad("needs at least two points".into());
    }
    if points.iter().any(|(t, u)| !t.is_finite() || !u.is_finite()) {
        return bad("non-finite point".into());
    }
    if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return bad("breakpoints must be strictly increasing".into());
    }
    let s = slopes(points);
    let tol = T::resolvable(1e-12, 16.0);
    if s.iter().any(|&x| x < -tol) {
        return bad("slopes must be nonnegative".into());
    }
    if s.windows(2).any(|w| w[1] > w[0] + tol) {
        return bad("slopes must be nonincreasing (concavity)".into());
    }
    if piecewise_eval(points, T::zero()).abs() > tol {
        return bad("u(0) must equal 0".into());
    }
    let (left, right) = match points.iter().position(|p| p.0 == T::zero()) {
        Some(j) => (s[j.saturating_sub(1)], s[j.min(s.len() - 1)]),
        None => {
            let seg = match points.iter().position(|p| p.0 > T::zero()) {
                Some(0) => 0,
                Some(i) => i - 1,
                None => s.len() - 1,
            }
            .min(s.len() - 1);
            (s[seg], s[seg])
        }
    };
    if left < T::one() - tol || right > T::one() + tol {
        return bad(format!("need left slope at 0 >= 1 >= right slope, got {left} and {right}"));
    }
    Ok(())
}

/// Value of an OCE evaluation together with a maximizing `eta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OceResult<T> {
    pub value: T,
    pub eta_star: T,
    pub objective_evals: usize,
}

fn objective<T: Real>(dist: &DiscreteDistribution<T>, u: &UtilitySpec<T>, eta: T) -> T {
    eta + dist.expect(|v| u.eval(v - eta))
}

/// Optimized certainty equivalent, using closed forms for entropic and CVaR kinds.
pub fn oce<T: Real>(dist: &DiscreteDistribution<T>, u: &UtilitySpec<T>) -> Result<OceResult<T>> {
    u.validate()?;
    if dist.is_degenerate() {
        let c = dist.min_support();
        return Ok(OceResult { value: c, eta_star: c, objective_evals: 0 });
    }
    match u {
        UtilitySpec::Entropic { gamma } => {
            let value = entropic(dist, *gamma)?;
            let eta = value.max(dist.min_support()).min(dist.max_support());
            Ok(OceResult { value, eta_star: eta, objective_evals: 0 })
        }
        UtilitySpec::Cvar { alpha } => {
            let (risk, var) = cvar_with_quantile(dist, *alpha)?;
            Ok(OceResult { value: -risk, eta_star: var, objective_evals: 0 })
        }
        _ => oce_generic(dist, u),
    }
}

/// Optimized certainty equivalent by direct search over `eta` in the support hull.
///
/// Smooth utilities use golden-section search (the objective is concave) followed by a
/// comparison against both endpoints. Piecewise-linear utilities make the objective
/// piecewise linear with kinks at `x_i - t_j`, so every kink is evaluated instead.
pub fn oce_generic<T: Real>(dist: &DiscreteDistribution<T>, u: &UtilitySpec<T>) -> Result<OceResult<T>> {
    u.validate()?;
    let lo = dist.min_support();
    let hi = dist.max_support();
    if lo == hi {
        return Ok(OceResult { value: lo, eta_star: lo, objective_evals: 0 });
    }
    let f = |eta: T| objective(dist, u, eta);
    let mut evals = 0usize;
    let mut best = (lo, f(lo));
    let mut consider = |eta: T, evals: &mut usize| {
        let val = f(eta);
        *evals += 1;
        if val > best.1 {
            best = (eta, val);
        }
    };
    evals += 1;
    consider(hi, &mut evals);
    if u.is_piecewise_linear() {
        for &(v, p) in dist.atoms() {
            if p <= T::zero() {
                continue;
            }
            for t in u.kinks() {
                let eta = v - t;
                if eta > lo && eta < hi {
                    consider(eta, &mut evals);
                }
            }
        }
    } else {
        let tol = T::resolvable(1e-10, 4.0 * (hi.abs().max(lo.abs()).as_f64().max(1.0)));
        let (eta, _, n) = golden_section_max(&f, lo, hi, tol);
        evals += n;
        consider(eta, &mut evals);
    }
    Ok(OceResult { value: best.1, eta_star: best.0, objective_evals: evals })
}

/// Maximizes a unimodal function on `[a, b]`; returns `(argmax, max, evaluations)`.
pub(crate) fn golden_section_max<T: Real>(f: &impl Fn(T) -> T, mut a: T, mut b: T, tol: T) -> (T, T, usize) {
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evals = 2;
    while b - a > tol && evals < 400 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    if fc >= fd {
        (c, fc, evals)
    } else {
        (d, fd, evals)
    }
}

/// Entropic certainty equivalent `-(1/gamma) ln E exp(-gamma X)`.
pub fn entropic<T: Real>(dist: &DiscreteDistribution<T>, gamma: T) -> Result<T> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    let lo = dist.min_support();
    if lo == dist.max_support() {
        return Ok(lo);
    }
    // Shifting by the minimum keeps every exponent nonpositive; ln_1p/expm1 retain
    // precision as gamma -> 0.
    let s: T = dist.expect(|v| (-gamma * (v - lo)).exp_m1());
    let log_mgf = if s > T::lit(-0.5) {
        s.ln_1p()
    } else {
        log_sum_exp(dist.charged().map(|&(v, p)| p.ln() - gamma * (v - lo)).collect::<Vec<_>>())
    };
    Ok(lo - log_mgf / gamma)
}

/// Conditional value-at-risk of a reward `X`: the mean loss over the worst `alpha` tail,
/// with fractional splitting of the atom straddling the quantile.
pub fn cvar<T: Real>(dist: &DiscreteDistribution<T>, alpha: T) -> Result<T> {
    cvar_with_quantile(dist, alpha).map(|(c, _)| c)
}

fn cvar_with_quantile<T: Real>(dist: &DiscreteDistribution<T>, alpha: T) -> Result<(T, T)> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut atoms: Vec<(T, T)> = dist.charged().copied().collect();
    atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite values"));
    let mut remaining = alpha;
    let mut tail = T::zero();
    let mut quantile = atoms[0].0;
    for &(v, p) in &atoms {
        let take = p.min(remaining);
        tail += take * v;
        remaining -= take;
        quantile = v;
        if remaining <= T::zero() {
            break;
        }
    }
    if remaining > T::zero() {
        // rounding left a sliver of tail mass; it belongs to the largest atom
        tail += remaining * quantile;
    }
    Ok((-tail / alpha, quantile))
}

/// Certainty equivalent `u^{-1}(E u(X))`; defined for the invertible entropic kind only.
pub fn certainty_equivalent<T: Real>(dist: &DiscreteDistribution<T>, u: &UtilitySpec<T>) -> Result<T> {
    match u {
        UtilitySpec::Entropic { gamma } => entropic(dist, *gamma),
        other => Err(Error::Unsupported(format!("certainty equivalent needs an invertible utility, got {other:?}"))),
    }
}

/// Cost-side OCE `inf_eta { eta + E l(X - eta) }` with `l(t) = -u(-t)`.
///
/// Substituting `eta -> -eta` shows this equals `-S_u(-X)`, which is how it is evaluated.
pub fn oce_cost<T: Real>(dist: &DiscreteDistribution<T>, u: &UtilitySpec<T>) -> Result<OceResult<T>> {
    let r = oce(&dist.map(|v| -v), u)?;
    Ok(OceResult { value: -r.value, eta_star: -r.eta_star, objective_evals: r.objective_evals })
}
