//! Finite MDP data model, policies and induced Markov chains.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default cap on the number of stationary policies enumerated exhaustively.
pub const DEFAULT_POLICY_CAP: u64 = 1_000_000;

/// One admissible action at a state: its reward, optional cost and transition row.
#[derive(Clone, Debug, PartialEq)]
pub struct Choice<T> {
    /// Index into [`FiniteMdp::actions`].
    pub action: usize,
    pub reward: T,
    pub cost: Option<T>,
    /// `(successor state, probability)` pairs in declared state order.
    pub successors: Vec<(usize, T)>,
}

/// Finite-state, finite-action MDP with bounded nonnegative rewards.
///
/// `choices[x]` lists the admissible actions `D(x)` in declared action order; that
/// order is the tie-break order of every solver.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMdp<T> {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    pub choices: Vec<Vec<Choice<T>>>,
    pub discount: T,
}

/// A single invariant violation found by [`FiniteMdp::validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    /// JSON-pointer style path of the offending entry.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl<T: Real> FiniteMdp<T> {
    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Reward bound `d = max r(x, a)`.
    pub fn reward_bound(&self) -> T {
        self.choices.iter().flatten().fold(T::zero(), |m, c| m.max(c.reward))
    }

    /// `d / (1 - beta)`, the bound on any discounted total reward.
    pub fn total_reward_bound(&self) -> T {
        self.reward_bound() / (T::one() - self.discount)
    }

    pub fn has_costs(&self) -> bool {
        let mut all = self.choices.iter().flatten().peekable();
        all.peek().is_some() && self.choices.iter().flatten().all(|c| c.cost.is_some())
    }

    pub fn state_index(&self, id: &str) -> Option<usize> {
        self.states.iter().position(|s| s == id)
    }

    pub fn action_index(&self, id: &str) -> Option<usize> {
        self.actions.iter().position(|s| s == id)
    }

    /// Position of `action` within `D(x)`.
    pub fn slot_of(&self, x: usize, action: usize) -> Option<usize> {
        self.choices[x].iter().position(|c| c.action == action)
    }

    pub fn action_name(&self, x: usize, slot: usize) -> &str {
        &self.actions[self.choices[x][slot].action]
    }

    pub fn with_discount(&self, discount: T) -> Self {
        Self { discount, ..self.clone() }
    }

    /// Cost of an admissible pair; zero when the model carries no costs.
    pub fn cost(&self, x: usize, slot: usize) -> T {
        self.choices[x][slot].cost.unwrap_or_else(T::zero)
    }

    /// Converts every numeric field to another scalar type.
    pub fn cast<U: Real>(&self) -> FiniteMdp<U> {
        let c = |x: T| U::lit(x.as_f64());
        FiniteMdp {
            states: self.states.clone(),
            actions: self.actions.clone(),
            choices: self
                .choices
                .iter()
                .map(|cs| {
                    cs.iter()
                        .map(|ch| Choice {
                            action: ch.action,
                            reward: c(ch.reward),
                            cost: ch.cost.map(c),
                            successors: ch.successors.iter().map(|&(y, p)| (y, c(p))).collect(),
                        })
                        .collect()
                })
                .collect(),
            discount: c(self.discount),
        }
    }

    /// Lists every invariant violation; empty iff the model is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: String, message: String| out.push(Violation { field, message });
        if self.states.is_empty() {
            push("/states".into(), "no states declared".into());
        }
        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].contains(s) {
                push(format!("/states/{i}"), format!("duplicate state id {s:?}"));
            }
        }
        for (i, a) in self.actions.iter().enumerate() {
            if self.actions[..i].contains(a) {
                push(format!("/actions/{i}"), format!("duplicate action id {a:?}"));
            }
        }
        if self.choices.len() != self.states.len() {
            push(
                "/admissible".into(),
                format!("{} admissible sets for {} states", self.choices.len(), self.states.len()),
            );
        }
        if !(self.discount >= T::zero() && self.discount <= T::one()) {
            push("/discount".into(), format!("discount {} outside [0, 1]", self.discount));
        }
        let any_cost = self.choices.iter().flatten().any(|c| c.cost.is_some());
        let tol = T::resolvable(1e-12, 64.0);
        let n = self.states.len();
        for (x, cs) in self.choices.iter().enumerate() {
            let sx = self.states.get(x).map(String::as_str).unwrap_or("?");
            if cs.is_empty() {
                push(format!("/admissible/{sx}"), "empty admissible action set".into());
            }
            for (k, ch) in cs.iter().enumerate() {
                let Some(an) = self.actions.get(ch.action) else {
                    push(format!("/admissible/{sx}/{k}"), format!("unknown action index {}", ch.action));
                    continue;
                };
                if k > 0 && cs[k - 1].action >= ch.action {
                    push(format!("/admissible/{sx}/{k}"), "actions must be listed once, in declared order".into());
                }
                if !ch.reward.is_finite() || ch.reward < T::zero() {
                    push(format!("/rewards/{sx}/{an}"), format!("reward {} must be finite and >= 0", ch.reward));
                }
                match ch.cost {
                    Some(c) if !c.is_finite() || c < T::zero() => {
                        push(format!("/costs/{sx}/{an}"), format!("cost {c} must be finite and >= 0"))
                    }
                    None if any_cost => push(format!("/costs/{sx}/{an}"), "missing cost".into()),
                    _ => {}
                }
                let mut sum = T::zero();
                let mut ok = true;
                for &(y, p) in &ch.successors {
                    if y >= n {
                        push(format!("/transitions/{sx}/{an}"), format!("unknown successor index {y}"));
                        ok = false;
                    }
                    if !p.is_finite() || p < T::zero() {
                        push(format!("/transitions/{sx}/{an}"), format!("invalid probability {p}"));
                        ok = false;
                    }
                    sum += p;
                }
                if ok && (sum - T::one()).abs() > tol {
                    push(format!("/transitions/{sx}/{an}"), format!("kernel row sums to {sum}, expected 1"));
                }
            }
        }
        out
    }

    /// Fails with [`Error::Validation`] unless [`validate`](Self::validate) is clean.
    pub fn require_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Discounted solvers need `beta < 1`.
    pub fn require_discounted(&self) -> Result<()> {
        if self.discount < T::one() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "discount {} is not < 1; undiscounted models are handled by the ergodic solver",
                self.discount
            )))
        }
    }

    /// `|F| = prod_x |D(x)|`, saturating.
    pub fn policy_count(&self) -> u64 {
        self.choices.iter().fold(1u64, |acc, cs| acc.saturating_mul(cs.len() as u64))
    }

    /// Every stationary policy, in lexicographic slot order; refuses beyond `cap`.
    pub fn enumerate_policies(&self, cap: u64) -> Result<Vec<StationaryPolicy>> {
        let count = self.policy_count();
        if count > cap {
            return Err(Error::Precondition(format!("{count} stationary policies exceed the enumeration cap {cap}")));
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut cur = vec![0usize; self.n_states()];
        loop {
            out.push(StationaryPolicy { choice: cur.clone() });
            let mut x = self.n_states();
            loop {
                if x == 0 {
                    return Ok(out);
                }
                x -= 1;
                cur[x] += 1;
                if cur[x] < self.choices[x].len() {
                    break;
                }
                cur[x] = 0;
            }
        }
    }

    /// Row-stochastic matrix, rewards and costs of the chain induced by `f`.
    pub fn induced_chain(&self, f: &StationaryPolicy) -> InducedChain<T> {
        let n = self.n_states();
        let mut matrix = vec![vec![T::zero(); n]; n];
        let mut reward = Vec::with_capacity(n);
        let mut cost = Vec::with_capacity(n);
        for x in 0..n {
            let ch = &self.choices[x][f.choice[x]];
            for &(y, p) in &ch.successors {
                matrix[x][y] += p;
            }
            reward.push(ch.reward);
            cost.push(ch.cost.unwrap_or_else(T::zero));
        }
        InducedChain { matrix, reward, cost: self.has_costs().then_some(cost) }
    }
}

/// Deterministic stationary decision rule: `choice[x]` indexes into `D(x)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StationaryPolicy {
    pub choice: Vec<usize>,
}

impl StationaryPolicy {
    /// First admissible action everywhere.
    pub fn first<T>(m: &FiniteMdp<T>) -> Self {
        Self { choice: vec![0; m.choices.len()] }
    }

    /// Builds a policy from `(state id, action id)` pairs; unspecified states use the
    /// first admissible action.
    pub fn from_names<T: Real>(m: &FiniteMdp<T>, pairs: &[(&str, &str)]) -> Result<Self> {
        let mut p = Self::first(m);
        for &(s, a) in pairs {
            let x = m.state_index(s).ok_or_else(|| Error::InvalidParameter(format!("unknown state {s:?}")))?;
            let slot = m
                .action_index(a)
                .and_then(|ai| m.slot_of(x, ai))
                .ok_or_else(|| Error::InvalidParameter(format!("action {a:?} not admissible in {s:?}")))?;
            p.choice[x] = slot;
        }
        Ok(p)
    }

    pub fn is_admissible<T>(&self, m: &FiniteMdp<T>) -> bool {
        self.choice.len() == m.choices.len() && self.choice.iter().zip(&m.choices).all(|(&k, cs)| k < cs.len())
    }

    pub fn action_names<'a, T: Real>(&self, m: &'a FiniteMdp<T>) -> Vec<&'a str> {
        self.choice.iter().enumerate().map(|(x, &k)| m.action_name(x, k)).collect()
    }
}

/// Markov policy: `stages[n]` at stage `n < N`, then `tail` forever.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StagePolicy {
    pub stages: Vec<StationaryPolicy>,
    pub tail: StationaryPolicy,
}

impl StagePolicy {
    pub fn stationary(f: StationaryPolicy) -> Self {
        Self { stages: Vec::new(), tail: f }
    }

    pub fn at(&self, n: usize) -> &StationaryPolicy {
        self.stages.get(n).unwrap_or(&self.tail)
    }
}

/// Tabulated function over the state space.
pub type ValueFunction<T> = Vec<T>;

/// Dense transition matrix and per-state payoffs of a fixed stationary policy.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedChain<T> {
    pub matrix: Vec<Vec<T>>,
    pub reward: Vec<T>,
    pub cost: Option<Vec<T>>,
}

/// Communicating-class structure of a finite Markov chain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainStructure {
    /// Closed communicating classes, each sorted.
    pub recurrent_classes: Vec<Vec<usize>>,
    pub transient: Vec<usize>,
    /// Period of each recurrent class.
    pub periods: Vec<usize>,
}

impl ChainStructure {
    pub fn is_unichain(&self) -> bool {
        self.recurrent_classes.len() == 1
    }

    pub fn is_irreducible(&self) -> bool {
        self.is_unichain() && self.transient.is_empty()
    }

    pub fn is_aperiodic(&self) -> bool {
        self.periods.iter().all(|&p| p == 1)
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl<T: Real> InducedChain<T> {
    fn edges(&self) -> Vec<Vec<usize>> {
        self.matrix
            .iter()
            .map(|row| row.iter().enumerate().filter(|(_, p)| **p > T::zero()).map(|(y, _)| y).collect())
            .collect()
    }

    /// Recurrent classes, transient states and periods, from the support graph.
    pub fn structure(&self) -> ChainStructure {
        let edges = self.edges();
        let n = edges.len();
        let reach: Vec<Vec<bool>> = (0..n)
            .map(|s| {
                let mut seen = vec![false; n];
                let mut queue = VecDeque::from([s]);
                seen[s] = true;
                while let Some(x) = queue.pop_front() {
                    for &y in &edges[x] {
                        if !seen[y] {
                            seen[y] = true;
                            queue.push_back(y);
                        }
                    }
                }
                seen
            })
            .collect();
        // x is recurrent iff every state reachable from x reaches back to x
        let recurrent: Vec<bool> = (0..n).map(|x| (0..n).all(|y| !reach[x][y] || reach[y][x])).collect();
        let mut assigned = vec![false; n];
        let mut classes = Vec::new();
        let mut periods = Vec::new();
        for x in 0..n {
            if !recurrent[x] || assigned[x] {
                continue;
            }
            let class: Vec<usize> = (0..n).filter(|&y| reach[x][y]).collect();
            for &y in &class {
                assigned[y] = true;
            }
            periods.push(class_period(&edges, &class));
            classes.push(class);
        }
        ChainStructure { recurrent_classes: classes, transient: (0..n).filter(|&x| !recurrent[x]).collect(), periods }
    }
}

fn class_period(edges: &[Vec<usize>], class: &[usize]) -> usize {
    let n = edges.len();
    let mut level = vec![usize::MAX; n];
    let root = class[0];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut g = 0usize;
    while let Some(x) = queue.pop_front() {
        for &y in &edges[x] {
            if level[y] == usize::MAX {
                level[y] = level[x] + 1;
                queue.push_back(y);
            } else {
                let d = (level[x] + 1).abs_diff(level[y]);
                g = gcd(g, d);
            }
        }
    }
    g.max(1)
}

/// How [`check_unichain_aperiodic`] selects policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyCheck {
    /// Every stationary policy, refusing when `|F|` exceeds the cap.
    Exhaustive { cap: u64 },
    /// `count` policies drawn uniformly with a seeded generator.
    Sampled { count: usize, seed: u64 },
}

impl Default for PolicyCheck {
    fn default() -> Self {
        Self::Exhaustive { cap: DEFAULT_POLICY_CAP }
    }
}

/// A stationary policy whose induced chain is multichain or periodic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyFlag {
    pub policy: StationaryPolicy,
    pub structure: ChainStructure,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainReport {
    pub checked: usize,
    pub exhaustive: bool,
    /// Policies with more than one recurrent class.
    pub reducible: Vec<PolicyFlag>,
    /// Unichain policies whose recurrent class is periodic.
    pub periodic: Vec<PolicyFlag>,
}

impl ChainReport {
    pub fn all_unichain(&self) -> bool {
        self.reducible.is_empty()
    }
}

/// Classifies the chain induced by every (or a sample of) stationary policy.
pub fn check_unichain_aperiodic<T: Real>(m: &FiniteMdp<T>, mode: PolicyCheck) -> Result<ChainReport> {
    let (policies, exhaustive) = match mode {
        PolicyCheck::Exhaustive { cap } => (m.enumerate_policies(cap)?, true),
        PolicyCheck::Sampled { count, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ps = (0..count)
                .map(|_| StationaryPolicy {
                    choice: m.choices.iter().map(|cs| rng.random_range(0..cs.len())).collect(),
                })
                .collect();
            (ps, false)
        }
    };
    let mut report = ChainReport { checked: policies.len(), exhaustive, reducible: Vec::new(), periodic: Vec::new() };
    for policy in policies {
        let structure = m.induced_chain(&policy).structure();
        if !structure.is_unichain() {
            report.reducible.push(PolicyFlag { policy, structure });
        } else if !structure.is_aperiodic() {
            report.periodic.push(PolicyFlag { policy, structure });
        }
    }
    Ok(report)
}

/// Fails unless every checked stationary policy is unichain.
pub(crate) fn require_unichain<T: Real>(m: &FiniteMdp<T>) -> Result<()> {
    let mode = if m.policy_count() <= DEFAULT_POLICY_CAP {
        PolicyCheck::default()
    } else {
        PolicyCheck::Sampled { count: 4096, seed: 0 }
    };
    let report = check_unichain_aperiodic(m, mode)?;
    match report.reducible.first() {
        None => Ok(()),
        Some(flag) => Err(Error::Precondition(format!(
            "policy {:?} induces {} recurrent classes; the model is not unichain",
            flag.policy.action_names(m),
            flag.structure.recurrent_classes.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn chain(rows: Vec<Vec<f64>>) -> InducedChain<f64> {
        let n = rows.len();
        InducedChain { matrix: rows, reward: vec![0.0; n], cost: None }
    }

    #[test]
    fn jaquette_is_valid() {
        let m = fixtures::jaquette();
        assert!(m.validate().is_empty());
        assert_eq!(m.n_states(), 3);
        assert_eq!(m.actions.len(), 3);
        assert_eq!(m.discount, 0.5);
        assert_eq!(m.reward_bound(), 8.0);
    }

    #[test]
    fn short_row_is_one_violation() {
        let mut m = fixtures::jaquette();
        m.choices[0][0].successors[0].1 = 0.4;
        let v = m.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].field.starts_with("/transitions/1/b1"));
    }

    #[test]
    fn empty_admissible_set_is_one_violation() {
        let mut m = fixtures::jaquette();
        m.choices[1].clear();
        let v = m.validate();
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "/admissible/2");
    }

    #[test]
    fn negative_reward_rejected() {
        let mut m = fixtures::jaquette();
        m.choices[2][0].reward = -1.0;
        assert_eq!(m.validate().len(), 1);
    }

    #[test]
    fn jaquette_induced_chain() {
        let m = fixtures::jaquette();
        let f = StationaryPolicy::from_names(&m, &[("1", "b1")]).unwrap();
        let c = m.induced_chain(&f);
        assert_eq!(c.matrix, vec![vec![0.0, 0.5, 0.5], vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]);
        for row in &c.matrix {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let s = c.structure();
        assert_eq!(s.recurrent_classes, vec![vec![0, 1, 2]]);
        assert!(s.transient.is_empty());
        assert_eq!(s.periods, vec![2]);
    }

    #[test]
    fn jaquette_policies_are_unichain_and_periodic() {
        let m = fixtures::jaquette();
        let r = check_unichain_aperiodic(&m, PolicyCheck::default()).unwrap();
        assert_eq!(r.checked, 2);
        assert!(r.all_unichain());
        assert_eq!(r.periodic.len(), 2);
        assert!(r.periodic.iter().all(|f| f.structure.periods == vec![2]));
    }

    #[test]
    fn cycle_and_self_loops() {
        let perm = chain(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        assert_eq!(perm.structure().periods, vec![3]);
        let loops = chain(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert!(loops.structure().is_aperiodic());
        assert!(loops.structure().is_irreducible());
        let split = chain(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(split.structure().recurrent_classes.len(), 2);
        let transient = chain(vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let s = transient.structure();
        assert!(s.is_unichain() && !s.is_irreducible());
        assert_eq!(s.transient, vec![0]);
    }

    #[test]
    fn two_components_flagged_reducible() {
        let m = crate::io::from_json_str(
            r#"{"states":["a","b"],"actions":["s"],"admissible":{"a":["s"],"b":["s"]},
                "transitions":{"a":{"s":{"a":1}},"b":{"s":{"b":1}}},
                "rewards":{"a":{"s":0},"b":{"s":1}},"discount":0.9}"#,
        )
        .unwrap();
        let r = check_unichain_aperiodic(&m, PolicyCheck::default()).unwrap();
        assert_eq!(r.reducible.len(), 1);
        assert!(require_unichain(&m).is_err());
    }

    #[test]
    fn enumeration_cap_is_explicit() {
        let m = fixtures::inventory_toy();
        let err = check_unichain_aperiodic(&m, PolicyCheck::Exhaustive { cap: 2 }).unwrap_err();
        assert!(err.to_string().contains("cap 2"));
        let sampled = check_unichain_aperiodic(&m, PolicyCheck::Sampled { count: 10, seed: 3 }).unwrap();
        assert!(!sampled.exhaustive);
        assert_eq!(sampled.checked, 10);
    }

    #[test]
    fn enumerate_in_lexicographic_order() {
        let m = fixtures::jaquette();
        let ps = m.enumerate_policies(10).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].action_names(&m), vec!["b1", "a", "a"]);
        assert_eq!(ps[1].action_names(&m), vec!["b2", "a", "a"]);
    }
}
