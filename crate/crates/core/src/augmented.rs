//! OCE of the total discounted reward.
//!
//! For a fixed `eta` the problem `sup_pi E u(R - eta)` becomes an ordinary MDP on the
//! augmented state `(x, y, z)`, where `y` is the reward accumulated so far minus `eta`
//! and `z = beta^n` the current discount level:
//!
//! ```text
//! V(x, y, z) = max_a sum_x' q(x'|x,a) V(x', y + z r(x,a), z beta)
//! ```
//!
//! The value is then `sup_eta { eta + V(x0, -eta, 1) }`. Here `y` lives on a uniform grid
//! over `[-R, R]`, `R = d/(1-beta)`, with linear interpolation between nodes, and `z`
//! on the levels `beta^0 .. beta^N`. Level `N` is terminal and holds one of the bounds
//! `b_lo(y) = u(y)` or `b_hi(y, z) = u(z R + y)`; iterating from both brackets the value.
//! A third table with terminal `u(y + z V*(x))`, `V*` the risk-neutral value, gives the
//! reported value and the policy: it lies between the bounds and does not distort the
//! last decisions before the truncation level.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, StagePolicy, StationaryPolicy};
use crate::neutral::policy_iteration;
use crate::oce::UtilitySpec;
use crate::scalar::{log_sum_exp, Real};

/// Default truncation error for the discount levels.
pub const DEFAULT_TAIL_EPS: f64 = 1e-8;
/// Default number of grid steps covering `[0, d/(1-beta)]`.
pub const DEFAULT_Y_DIVISIONS: f64 = 400.0;
const MAX_TABLE_ENTRIES: usize = 200_000_000;

/// User-facing grid settings; `None` selects the default step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConfig<T> {
    pub y_step: Option<T>,
    pub tail_eps: T,
}

impl<T: Real> Default for GridConfig<T> {
    fn default() -> Self {
        Self { y_step: None, tail_eps: T::lit(DEFAULT_TAIL_EPS) }
    }
}

/// Smallest `N >= 1` with `beta^N d / (1-beta) <= eps`.
pub fn truncation_level<T: Real>(m: &FiniteMdp<T>, eps: T) -> usize {
    let beta = m.discount;
    let d = m.reward_bound();
    if beta <= T::zero() || d <= T::zero() {
        return 1;
    }
    let n = (eps * (T::one() - beta) / d).ln() / beta.ln();
    n.ceil().to_usize().unwrap_or(1).max(1)
}

/// The discretized augmented coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedGrid<T> {
    pub y_step: T,
    /// Nodes are `y_i = (i - half) * y_step` for `i = 0 ..= 2 half`.
    pub half: usize,
    pub n_trunc: usize,
    /// Reward-to-go bound `d / (1-beta)`.
    pub r_max: T,
    /// `z[n] = beta^n` for `n = 0 ..= n_trunc`.
    pub z: Vec<T>,
}

/// Position of a `y` value relative to the grid.
enum Cell<T> {
    Inside(usize, T),
    Above,
}

impl<T: Real> AugmentedGrid<T> {
    pub fn new(m: &FiniteMdp<T>, cfg: &GridConfig<T>) -> Result<Self> {
        m.require_discounted()?;
        let d = m.reward_bound();
        if !(d > T::zero()) {
            return Err(Error::Precondition("all rewards are zero; the augmented grid is empty".into()));
        }
        if !(cfg.tail_eps > T::zero()) {
            return Err(Error::InvalidParameter(format!("tail_eps must be > 0, got {}", cfg.tail_eps)));
        }
        let r_max = d / (T::one() - m.discount);
        let y_step = cfg.y_step.unwrap_or(r_max / T::lit(DEFAULT_Y_DIVISIONS));
        if !(y_step > T::zero()) || !y_step.is_finite() {
            return Err(Error::InvalidParameter(format!("y_step must be > 0, got {y_step}")));
        }
        let half = (r_max / y_step).ceil().to_usize().unwrap_or(usize::MAX);
        let n_trunc = truncation_level(m, cfg.tail_eps);
        let entries = (2 * half.min(usize::MAX / 4) + 1).saturating_mul(n_trunc + 1).saturating_mul(m.n_states());
        if entries > MAX_TABLE_ENTRIES {
            return Err(Error::InvalidParameter(format!(
                "augmented table would hold {entries} entries; increase y_step or tail_eps"
            )));
        }
        let z = (0..=n_trunc).map(|n| m.discount.powi(n as i32)).collect();
        Ok(Self { y_step, half, n_trunc, r_max, z })
    }

    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn y(&self, i: usize) -> T {
        (T::lit(i as f64) - T::lit(self.half as f64)) * self.y_step
    }

    /// Nearest node to `y` (clamped to the grid) and the distance to it.
    pub fn nearest(&self, y: T) -> (usize, T) {
        let t = (y / self.y_step + T::lit(self.half as f64)).round();
        let i = t.max(T::zero()).min(T::lit((self.len() - 1) as f64)).to_usize().unwrap_or(0);
        (i, (y - self.y(i)).abs())
    }

    fn locate(&self, y: T) -> Cell<T> {
        let t = y / self.y_step + T::lit(self.half as f64);
        let last = T::lit((self.len() - 1) as f64);
        if t <= T::zero() {
            return Cell::Inside(0, T::zero());
        }
        if t >= last {
            return if t - last <= T::resolvable(1e-12, 64.0) * last {
                Cell::Inside(self.len() - 1, T::zero())
            } else {
                Cell::Above
            };
        }
        let i = t.floor();
        Cell::Inside(i.to_usize().unwrap_or(0), t - i)
    }
}

/// Which function seeds the terminal level and the region above the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// `u(y)`.
    Lower,
    /// `u(z R + y)`.
    Upper,
    /// `u(y + z V*(x))` with the risk-neutral optimal value `V*`.
    Central,
}

/// Table of `V(x, y_i, beta^n)` for every level `n = 0 ..= n_trunc`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedValueFunction<T> {
    pub grid: AugmentedGrid<T>,
    pub n_states: usize,
    pub bound: Bound,
    pub utility: UtilitySpec<T>,
    /// Risk-neutral optimal values, used by [`Bound::Central`].
    neutral: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> AugmentedValueFunction<T> {
    /// The seed function itself at every level (see [`Bound`]); `neutral` holds `V*` and
    /// is only read for [`Bound::Central`].
    pub fn bound(m: &FiniteMdp<T>, u: &UtilitySpec<T>, grid: &AugmentedGrid<T>, bound: Bound, neutral: &[T]) -> Self {
        let (s, ny) = (m.n_states(), grid.len());
        let mut values = Vec::with_capacity((grid.n_trunc + 1) * s * ny);
        for n in 0..=grid.n_trunc {
            for x in 0..s {
                values.extend((0..ny).map(|i| bound_value(u, grid, bound, neutral, n, x, grid.y(i))));
            }
        }
        Self { grid: grid.clone(), n_states: s, bound, utility: u.clone(), neutral: neutral.to_vec(), values }
    }

    fn level_len(&self) -> usize {
        self.n_states * self.grid.len()
    }

    pub fn get(&self, n: usize, x: usize, i: usize) -> T {
        self.values[n * self.level_len() + x * self.grid.len() + i]
    }

    /// `V(x, y, beta^n)`: linear in `y` between nodes, the bound function above the grid.
    pub fn value_at(&self, n: usize, x: usize, y: T) -> T {
        interpolate(self.level(n), x, y, &self.ctx(), n)
    }

    fn ctx(&self) -> Ctx<'_, T> {
        Ctx { grid: &self.grid, u: &self.utility, bound: self.bound, neutral: &self.neutral }
    }

    fn level(&self, n: usize) -> &[T] {
        let l = self.level_len();
        &self.values[n * l..(n + 1) * l]
    }

    /// Largest violation of `a <= b` over all entries.
    pub fn excess_over(&self, other: &Self) -> T {
        self.values.iter().zip(&other.values).fold(T::zero(), |m, (a, b)| m.max(*a - *b))
    }
}

fn bound_value<T: Real>(
    u: &UtilitySpec<T>,
    grid: &AugmentedGrid<T>,
    bound: Bound,
    neutral: &[T],
    n: usize,
    x: usize,
    y: T,
) -> T {
    match bound {
        Bound::Lower => u.eval(y),
        Bound::Upper => u.eval(grid.z[n] * grid.r_max + y),
        Bound::Central => u.eval(y + grid.z[n] * neutral[x]),
    }
}

/// Read-only pieces a sweep needs besides the tables.
struct Ctx<'a, T> {
    grid: &'a AugmentedGrid<T>,
    u: &'a UtilitySpec<T>,
    bound: Bound,
    neutral: &'a [T],
}

fn interpolate<T: Real>(level: &[T], x: usize, y: T, ctx: &Ctx<'_, T>, n: usize) -> T {
    let ny = ctx.grid.len();
    match ctx.grid.locate(y) {
        Cell::Inside(i, w) => {
            let row = &level[x * ny..(x + 1) * ny];
            if w == T::zero() {
                row[i]
            } else {
                (T::one() - w) * row[i] + w * row[i + 1]
            }
        }
        Cell::Above => bound_value(ctx.u, ctx.grid, ctx.bound, ctx.neutral, n, x, y),
    }
}

/// Best action at `(x, y, beta^n)` given level `n+1` (first admissible on ties).
fn best_action<T: Real>(m: &FiniteMdp<T>, next: &[T], ctx: &Ctx<'_, T>, n: usize, x: usize, y: T) -> (usize, T) {
    let z = ctx.grid.z[n];
    let mut best = (0, T::neg_infinity());
    for (k, c) in m.choices[x].iter().enumerate() {
        let y1 = y + z * c.reward;
        let v: T = c.successors.iter().map(|&(x1, p)| p * interpolate(next, x1, y1, ctx, n + 1)).sum();
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// Recomputes level `n` from level `n+1`, optionally recording the argmax slots.
fn sweep_level<T: Real>(m: &FiniteMdp<T>, v: &mut AugmentedValueFunction<T>, n: usize, argmax: Option<&mut [u32]>) {
    let l = v.level_len();
    let ny = v.grid.len();
    let (head, tail) = v.values.split_at_mut((n + 1) * l);
    let cur = &mut head[n * l..];
    let next = &tail[..l];
    let ctx = Ctx { grid: &v.grid, u: &v.utility, bound: v.bound, neutral: &v.neutral };
    let compute = |idx: usize| best_action(m, next, &ctx, n, idx / ny, ctx.grid.y(idx % ny));
    match argmax {
        Some(arg) => cur.par_iter_mut().zip(arg.par_iter_mut()).enumerate().for_each(|(idx, (c, a))| {
            let (k, val) = compute(idx);
            *c = val;
            *a = k as u32;
        }),
        None => cur.par_iter_mut().enumerate().for_each(|(idx, c)| *c = compute(idx).1),
    }
}

/// One Jacobi application of the augmented operator to every non-terminal level;
/// the terminal level `n_trunc` keeps its bound values.
pub fn augmented_t<T: Real>(m: &FiniteMdp<T>, v: &AugmentedValueFunction<T>) -> AugmentedValueFunction<T> {
    let mut out = v.clone();
    let l = v.level_len();
    let ny = v.grid.len();
    let ctx = v.ctx();
    for n in 0..v.grid.n_trunc {
        let next = v.level(n + 1);
        out.values[n * l..(n + 1) * l].par_iter_mut().enumerate().for_each(|(idx, c)| {
            *c = best_action(m, next, &ctx, n, idx / ny, v.grid.y(idx % ny)).1;
        });
    }
    out
}

/// Lower, upper and central iterates after the sandwich iteration, plus the argmax table.
#[derive(Clone, Debug)]
pub struct SandwichTables<T> {
    pub lower: AugmentedValueFunction<T>,
    pub upper: AugmentedValueFunction<T>,
    pub central: AugmentedValueFunction<T>,
    /// Sweeps performed on each side.
    pub sweeps: usize,
    /// `argmax[(n * n_states + x) * len + i]`, slot of the central iterate's maximizer.
    argmax: Vec<u32>,
}

impl<T: Real> SandwichTables<T> {
    fn action(&self, n: usize, x: usize, i: usize) -> usize {
        let g = &self.lower.grid;
        self.argmax[(n * self.lower.n_states + x) * g.len() + i] as usize
    }

    /// `(lower, central, upper)` values of `V(x0, -eta, 1)`, each evaluated by one exact
    /// step from level 1.
    pub fn start_values(&self, m: &FiniteMdp<T>, x0: usize, eta: T) -> (T, T, T) {
        let side = |t: &AugmentedValueFunction<T>| best_action(m, t.level(1), &t.ctx(), 0, x0, -eta).1;
        (side(&self.lower), side(&self.central), side(&self.upper))
    }
}

/// Runs backward (level `n_trunc - 1` down to `0`) monotone sweeps from both bounds.
///
/// Every sweep is a composition of monotone maps, so the lower side can only rise and
/// the upper side only fall; a violation is reported as an internal error. Because level
/// `n` reads only level `n + 1`, a single backward sweep already reaches the fixed point
/// of the truncated problem and a second sweep confirms it (the central table, which
/// carries no bound, is swept once).
pub fn sandwich<T: Real>(m: &FiniteMdp<T>, u: &UtilitySpec<T>, grid: &AugmentedGrid<T>) -> Result<SandwichTables<T>> {
    u.validate()?;
    let neutral = policy_iteration(m)?.value;
    let mut lower = AugmentedValueFunction::bound(m, u, grid, Bound::Lower, &neutral);
    let mut upper = AugmentedValueFunction::bound(m, u, grid, Bound::Upper, &neutral);
    let mut central = AugmentedValueFunction::bound(m, u, grid, Bound::Central, &neutral);
    let mut argmax = vec![0u32; grid.n_trunc * lower.level_len()];
    let slack = T::resolvable(1e-12, 256.0);
    let mut sweeps = 0;
    loop {
        let (old_lo, old_hi) = (lower.clone(), upper.clone());
        let l = lower.level_len();
        for n in (0..grid.n_trunc).rev() {
            sweep_level(m, &mut lower, n, None);
            sweep_level(m, &mut upper, n, None);
            if sweeps == 0 {
                sweep_level(m, &mut central, n, Some(&mut argmax[n * l..(n + 1) * l]));
            }
        }
        sweeps += 1;
        let scale = T::one() + lower.values.iter().fold(T::zero(), |a, b| a.max(b.abs()));
        if old_lo.excess_over(&lower) > slack * scale || upper.excess_over(&old_hi) > slack * scale {
            return Err(Error::Internal("sandwich iterates lost monotonicity".into()));
        }
        if old_lo == lower && old_hi == upper || sweeps >= 8 {
            break;
        }
    }
    if !lower.values.iter().chain(&upper.values).all(|v| v.is_finite()) {
        return Err(Error::Range("augmented values overflowed; reduce the risk parameter".into()));
    }
    Ok(SandwichTables { lower, upper, central, sweeps, argmax })
}

/// Value of the inner problem at one `eta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InnerValue<T> {
    /// Central estimate of `V(x0, -eta, 1)`, inside `[lower, upper]`.
    pub value: T,
    pub lower: T,
    pub upper: T,
    pub width: T,
    pub sweeps: usize,
}

fn stagnation<T: Real>(width: T, tol: T) -> Error {
    Error::Stagnation {
        width: width.as_f64(),
        tol: tol.as_f64(),
        hint: "decrease tail_eps to deepen the discount levels or shrink y_step".into(),
    }
}

/// `V_inf(x0, -eta, 1)` with its sandwich width.
pub fn solve_inner<T: Real>(
    m: &FiniteMdp<T>,
    u: &UtilitySpec<T>,
    grid: &AugmentedGrid<T>,
    x0: usize,
    eta: T,
    tol: T,
) -> Result<InnerValue<T>> {
    let tables = sandwich(m, u, grid)?;
    let (lower, value, upper) = tables.start_values(m, x0, eta);
    let width = upper - lower;
    if width > tol {
        return Err(stagnation(width, tol));
    }
    Ok(InnerValue { value, lower, upper, width, sweeps: tables.sweeps })
}

/// Optimal total-reward OCE from one start state with its realized policy.
#[derive(Clone, Debug)]
pub struct TotalOceSolution<T> {
    pub start: usize,
    pub value: T,
    pub eta_star: T,
    pub sandwich_width: T,
    /// Optimal value from every start state (each with its own `eta`).
    pub state_values: Vec<T>,
    pub stage_policy: StagePolicy,
    /// Stages where reachable histories ending in the same state disagree on the action.
    pub history_dependent_stages: Vec<usize>,
    pub grid: AugmentedGrid<T>,
    tables: Option<SandwichTables<T>>,
}

fn search_eta<T: Real>(m: &FiniteMdp<T>, tables: &SandwichTables<T>, x0: usize) -> (T, T, T) {
    let grid = &tables.lower.grid;
    let eval = |eta: T| {
        let (lo, mid, hi) = tables.start_values(m, x0, eta);
        (eta + mid, hi - lo)
    };
    let mut best = (T::zero(), eval(T::zero()));
    for k in 1..=grid.half {
        let eta = (T::lit(k as f64) * grid.y_step).min(grid.r_max);
        let v = eval(eta);
        if v.0 > best.1 .0 {
            best = (eta, v);
        }
    }
    // two bisection levels around the best node
    let mut h = grid.y_step;
    for _ in 0..2 {
        h /= T::lit(2.0);
        let centre = best.0;
        for eta in [centre - h, centre + h] {
            if eta >= T::zero() && eta <= grid.r_max {
                let v = eval(eta);
                if v.0 > best.1 .0 {
                    best = (eta, v);
                }
            }
        }
    }
    (best.0, best.1 .0, best.1 .1)
}

/// Solves `sup_eta { eta + V_inf(x0, -eta, 1) }` over `eta` in `[0, d/(1-beta)]`.
///
/// The outer objective is scanned on the `y` grid and refined by two bisection levels
/// around the best node. The realized stage policy follows the argmax table along every
/// reachable grid path from `(x0, -eta*)`; in states with several reachable nodes the
/// lowest accumulated reward decides, and such stages are listed as history dependent.
/// States unreachable at a stage, and every stage from `n_trunc` on, use the
/// risk-neutral optimal policy.
pub fn solve_total_oce<T: Real>(
    m: &FiniteMdp<T>,
    u: &UtilitySpec<T>,
    cfg: &GridConfig<T>,
    x0: usize,
    tol: T,
) -> Result<TotalOceSolution<T>> {
    m.require_discounted()?;
    u.validate()?;
    if x0 >= m.n_states() {
        return Err(Error::InvalidParameter(format!("start state index {x0} out of range")));
    }
    let tail = policy_iteration(m)?.policy;
    if m.reward_bound() <= T::zero() {
        // the total reward is identically zero
        return Ok(TotalOceSolution {
            start: x0,
            value: T::zero(),
            eta_star: T::zero(),
            sandwich_width: T::zero(),
            state_values: vec![T::zero(); m.n_states()],
            stage_policy: StagePolicy::stationary(tail),
            history_dependent_stages: Vec::new(),
            grid: AugmentedGrid {
                y_step: T::one(),
                half: 0,
                n_trunc: 1,
                r_max: T::zero(),
                z: vec![T::one(), m.discount],
            },
            tables: None,
        });
    }
    let grid = AugmentedGrid::new(m, cfg)?;
    let tables = sandwich(m, u, &grid)?;
    let searched: Vec<(T, T, T)> = (0..m.n_states()).map(|x| search_eta(m, &tables, x)).collect();
    let (eta_star, value, width) = searched[x0];
    if width > tol {
        return Err(stagnation(width, tol));
    }
    let (stage_policy, history_dependent_stages) = realize(m, &tables, x0, eta_star, &tail);
    Ok(TotalOceSolution {
        start: x0,
        value,
        eta_star,
        sandwich_width: width,
        state_values: searched.iter().map(|s| s.1).collect(),
        stage_policy,
        history_dependent_stages,
        grid,
        tables: Some(tables),
    })
}

fn trim_stages(stages: &mut Vec<StationaryPolicy>, tail: &StationaryPolicy) {
    while stages.last() == Some(tail) {
        stages.pop();
    }
}

fn realize<T: Real>(
    m: &FiniteMdp<T>,
    tables: &SandwichTables<T>,
    x0: usize,
    eta: T,
    tail: &StationaryPolicy,
) -> (StagePolicy, Vec<usize>) {
    let grid = &tables.lower.grid;
    let mut frontier: BTreeSet<(usize, usize)> = BTreeSet::from([(x0, grid.nearest(-eta).0)]);
    let mut stages = Vec::with_capacity(grid.n_trunc);
    let mut dependent = Vec::new();
    for n in 0..grid.n_trunc {
        let mut stage = tail.clone();
        let mut seen = vec![false; m.n_states()];
        let mut mixed = false;
        // ordered by (state, node), so the first hit per state is its lowest y
        for &(x, i) in &frontier {
            let a = tables.action(n, x, i);
            if !seen[x] {
                seen[x] = true;
                stage.choice[x] = a;
            } else if stage.choice[x] != a {
                mixed = true;
            }
        }
        if mixed {
            dependent.push(n);
        }
        stages.push(stage);
        let mut next = BTreeSet::new();
        for &(x, i) in &frontier {
            let c = &m.choices[x][tables.action(n, x, i)];
            let j = grid.nearest(grid.y(i) + grid.z[n] * c.reward).0;
            for &(x1, p) in &c.successors {
                if p > T::zero() {
                    next.insert((x1, j));
                }
            }
        }
        frontier = next;
    }
    trim_stages(&mut stages, tail);
    (StagePolicy { stages, tail: tail.clone() }, dependent)
}

/// Action chosen by the history-dependent optimal policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructedAction<T> {
    /// Slot in `D(x)`.
    pub slot: usize,
    /// Distance from the accumulated `y` to the grid node used.
    pub rounding: T,
    /// The history was longer than `n_trunc`; the stationary tail action is returned.
    pub truncated: bool,
}

impl<T: Real> TotalOceSolution<T> {
    /// Action at current state `x` after `history` (pairs of state and slot):
    /// `y = sum_k beta^k r(x_k, a_k) - eta*`, `z = beta^n`, with `y` rounded to the grid.
    pub fn reconstruct_policy_action(
        &self,
        m: &FiniteMdp<T>,
        history: &[(usize, usize)],
        x: usize,
    ) -> Result<ReconstructedAction<T>> {
        for &(s, k) in history.iter().chain(std::iter::once(&(x, 0))) {
            if s >= m.n_states() || k >= m.choices[s].len() {
                return Err(Error::InvalidParameter(format!("history entry ({s}, {k}) is not admissible")));
            }
        }
        let n = history.len();
        let Some(tables) = self.tables.as_ref().filter(|_| n < self.grid.n_trunc) else {
            return Ok(ReconstructedAction {
                slot: self.stage_policy.tail.choice[x],
                rounding: T::zero(),
                truncated: true,
            });
        };
        let y = history
            .iter()
            .enumerate()
            .map(|(k, &(s, a))| self.grid.z[k] * m.choices[s][a].reward)
            .fold(-self.eta_star, |acc, r| acc + r);
        let (i, rounding) = self.grid.nearest(y);
        Ok(ReconstructedAction { slot: tables.action(n, x, i), rounding, truncated: false })
    }

    /// Action at `(x, y_i, beta^n)` in the stored argmax table.
    pub fn table_action(&self, n: usize, x: usize, i: usize) -> Option<usize> {
        self.tables.as_ref().filter(|_| n < self.grid.n_trunc).map(|t| t.action(n, x, i))
    }
}

/// Exact entropic total-reward solution on the levels `z = beta^n` (no `y` coordinate).
#[derive(Clone, Debug, PartialEq)]
pub struct EntropicTotal<T> {
    /// `levels[n][x] = V_inf(x, beta^n)`; the last level is the terminal `beta^N V*(x)`.
    pub levels: Vec<Vec<T>>,
    /// Maximizer at each level `n < n_trunc`.
    pub argmax: Vec<StationaryPolicy>,
    pub tail: StationaryPolicy,
    pub n_trunc: usize,
    /// `beta^N d / (1-beta)`, the truncation error bound.
    pub tail_bound: T,
}

/// Backward recursion `V(x, z) = max_a { z r(x,a) - (1/gamma) ln sum q e^{-gamma V(x', z beta)} }`
/// in log-sum-exp form, from `V(., beta^N) = beta^N V*` with `V*` the risk-neutral value.
pub fn entropic_total<T: Real>(m: &FiniteMdp<T>, gamma: T, n_trunc: usize) -> Result<EntropicTotal<T>> {
    m.require_discounted()?;
    UtilitySpec::Entropic { gamma }.validate()?;
    let neutral = policy_iteration(m)?;
    let tail = neutral.policy;
    let beta = m.discount;
    let mut levels = vec![vec![T::zero(); m.n_states()]; n_trunc + 1];
    // risk-neutral continuation beyond the last level: within the tail bound, and it keeps
    // the final decisions from turning myopic
    let z_last = beta.powi(n_trunc as i32);
    levels[n_trunc] = neutral.value.iter().map(|&v| z_last * v).collect();
    let mut argmax = vec![StationaryPolicy::first(m); n_trunc];
    for n in (0..n_trunc).rev() {
        let z = beta.powi(n as i32);
        for (x, cs) in m.choices.iter().enumerate() {
            let vals: Vec<T> = cs
                .iter()
                .map(|c| {
                    let lse = log_sum_exp(
                        c.successors
                            .iter()
                            .filter(|(_, p)| *p > T::zero())
                            .map(|&(y, p)| p.ln() - gamma * levels[n + 1][y])
                            .collect::<Vec<_>>(),
                    );
                    z * c.reward - lse / gamma
                })
                .collect();
            // deep levels differ by less than the log-sum-exp rounding; such near-ties
            // keep the tail action instead of following the noise
            let mut best = (tail.choice[x], vals[tail.choice[x]]);
            for (k, &v) in vals.iter().enumerate() {
                let slack = T::resolvable(0.0, 16.0) * (T::one() / gamma + v.abs());
                if v > best.1 + slack {
                    best = (k, v);
                }
            }
            if !best.1.is_finite() {
                return Err(Error::Range(format!("entropic total value not representable for gamma = {gamma}")));
            }
            levels[n][x] = best.1;
            argmax[n].choice[x] = best.0;
        }
    }
    let tail_bound = beta.powi(n_trunc as i32) * m.total_reward_bound();
    Ok(EntropicTotal { levels, argmax, tail, n_trunc, tail_bound })
}

impl<T: Real> EntropicTotal<T> {
    pub fn value(&self) -> &[T] {
        &self.levels[0]
    }

    /// Per-level argmax restricted to the states reachable from `x0` at each stage;
    /// unreachable states and stages from `n_trunc` on take the stationary tail action.
    pub fn stage_policy(&self, m: &FiniteMdp<T>, x0: usize) -> StagePolicy {
        let mut reach = vec![false; m.n_states()];
        reach[x0] = true;
        let mut stages = Vec::with_capacity(self.n_trunc);
        for f in &self.argmax {
            let mut stage = self.tail.clone();
            let mut next = vec![false; m.n_states()];
            for x in (0..m.n_states()).filter(|&x| reach[x]) {
                stage.choice[x] = f.choice[x];
                for &(y, p) in &m.choices[x][f.choice[x]].successors {
                    next[y] |= p > T::zero();
                }
            }
            stages.push(stage);
            reach = next;
        }
        trim_stages(&mut stages, &self.tail);
        StagePolicy { stages, tail: self.tail.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ent(gamma: f64) -> UtilitySpec<f64> {
        UtilitySpec::Entropic { gamma }
    }

    fn mgf_oracle(terms: usize) -> f64 {
        let m0 = 0.9 * (-1f64).exp() + 0.1 * (-5f64).exp();
        -m0.ln() - (1..terms).map(|n| (0.5 + 0.5 * (-4.0 * 0.25f64.powi(n as i32)).exp()).ln()).sum::<f64>()
    }

    #[test]
    fn truncation_level_matches_formula() {
        let m = fixtures::jaquette();
        let n = truncation_level(&m, 1e-8);
        assert_eq!(n, ((1e-8f64 * 0.5 / 8.0).ln() / 0.5f64.ln()).ceil() as usize);
        assert!(0.5f64.powi(n as i32) * 16.0 <= 1e-8);
        assert!(0.5f64.powi(n as i32 - 1) * 16.0 > 1e-8);
    }

    #[test]
    fn jaquette_exact_entropic_total() {
        let m = fixtures::jaquette();
        let n = truncation_level(&m, 1e-8);
        let sol = entropic_total(&m, 1.0, n).unwrap();
        assert!((sol.value()[0] - mgf_oracle(40)).abs() < 1e-7);
        // b2 at level n iff 2^-n exceeds the root 0.4559
        for (k, f) in sol.argmax.iter().enumerate() {
            assert_eq!(m.action_name(0, f.choice[0]) == "b2", k <= 1, "level {k}");
        }
        let p = sol.stage_policy(&m, 0);
        assert_eq!(m.action_name(0, p.at(0).choice[0]), "b2");
        for k in 1..60 {
            assert_eq!(m.action_name(0, p.at(k).choice[0]), "b1");
        }
    }

    #[test]
    fn bounds_bracket_one_sweep() {
        let m = fixtures::jaquette();
        let grid = AugmentedGrid::new(&m, &GridConfig { y_step: Some(0.25), tail_eps: 1e-3 }).unwrap();
        for u in [ent(1.0), UtilitySpec::Cvar { alpha: 0.3 }] {
            let v = crate::neutral::policy_iteration(&m).unwrap().value;
            let lo = AugmentedValueFunction::bound(&m, &u, &grid, Bound::Lower, &v);
            let hi = AugmentedValueFunction::bound(&m, &u, &grid, Bound::Upper, &v);
            assert!(lo.excess_over(&augmented_t(&m, &lo)) <= 1e-12);
            assert!(augmented_t(&m, &hi).excess_over(&hi) <= 1e-12);
        }
    }

    #[test]
    fn jaquette_grid_path() {
        let m = fixtures::jaquette();
        let sol = solve_total_oce(&m, &ent(1.0), &GridConfig::default(), 0, 1e-6).unwrap();
        assert!((sol.value - mgf_oracle(40)).abs() < 1e-2, "{} vs {}", sol.value, mgf_oracle(40));
        assert_eq!(m.action_name(0, sol.stage_policy.at(0).choice[0]), "b2");
        for k in 1..40 {
            assert_eq!(m.action_name(0, sol.stage_policy.at(k).choice[0]), "b1", "stage {k}");
        }
        let first = sol.reconstruct_policy_action(&m, &[], 0).unwrap();
        assert_eq!(m.action_name(0, first.slot), "b2");
        let later = sol.reconstruct_policy_action(&m, &[(0, 1), (1, 0)], 0).unwrap();
        assert_eq!(m.action_name(0, later.slot), "b1");
        let far = sol.reconstruct_policy_action(&m, &vec![(1, 0); 200], 0).unwrap();
        assert!(far.truncated);
    }

    #[test]
    fn zero_discount_is_one_step() {
        let m = fixtures::jaquette().with_discount(0.0);
        let grid = AugmentedGrid::new(&m, &GridConfig::default()).unwrap();
        assert_eq!(grid.n_trunc, 1);
        for u in [ent(0.7), UtilitySpec::Cvar { alpha: 0.25 }] {
            for eta in [0.0, 2.0] {
                let v = solve_inner(&m, &u, &grid, 2, eta, 1e-12).unwrap();
                assert!((v.value - u.eval(8.0 - eta)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_reward_total_is_deterministic() {
        let mut m = fixtures::inventory_toy();
        for c in m.choices.iter_mut().flatten() {
            c.reward = 1.5;
        }
        for u in [ent(2.0), UtilitySpec::Cvar { alpha: 0.1 }, UtilitySpec::MeanVariance] {
            let err = |step: f64| {
                let cfg = GridConfig { y_step: Some(step), ..Default::default() };
                (solve_total_oce(&m, &u, &cfg, 0, 1e-6).unwrap().value - 15.0).abs()
            };
            let (coarse, fine) = (err(15.0 / 400.0), err(15.0 / 800.0));
            // interpolation error: second order for smooth utilities, first order at a kink
            let (budget, rate) = match u {
                UtilitySpec::Cvar { alpha } => (15.0 / 400.0 / alpha, 0.6),
                _ => (2.0 * (15.0f64 / 400.0).powi(2) / 0.1, 0.3),
            };
            assert!(coarse <= budget, "{u:?}: {coarse} > {budget}");
            assert!(fine <= rate * coarse, "{u:?}: {fine} vs {coarse}");
        }
    }

    #[test]
    fn values_monotone_in_y_and_z() {
        let m = fixtures::jaquette();
        let grid = AugmentedGrid::new(&m, &GridConfig { y_step: Some(0.2), tail_eps: 1e-4 }).unwrap();
        let t = sandwich(&m, &UtilitySpec::Cvar { alpha: 0.2 }, &grid).unwrap();
        for n in 0..=grid.n_trunc {
            for x in 0..3 {
                for i in 1..grid.len() {
                    assert!(t.lower.get(n, x, i) >= t.lower.get(n, x, i - 1) - 1e-12);
                    if n > 0 {
                        assert!(t.lower.get(n - 1, x, i) >= t.lower.get(n, x, i) - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn all_zero_rewards() {
        let mut m = fixtures::jaquette();
        for c in m.choices.iter_mut().flatten() {
            c.reward = 0.0;
        }
        let sol = solve_total_oce(&m, &ent(1.0), &GridConfig::default(), 0, 1e-6).unwrap();
        assert_eq!(sol.value, 0.0);
    }
}
