//! Serializable solver output shared by every criterion.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::mdp::{FiniteMdp, StagePolicy, StationaryPolicy};
use crate::oce::UtilitySpec;
use crate::scalar::Real;

/// Result of a discounted fixed-point solve: values, greedy policy and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Solution<T> {
    pub value: Vec<T>,
    pub policy: StationaryPolicy,
    pub iterations: usize,
    /// Sup-norm of the last update (or of the fixed-point residual for direct solves).
    pub residual: T,
    /// Bound on the sup-norm distance to the exact fixed point.
    pub error_bound: T,
}

/// The record emitted by `riskmdp solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub criterion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec<f64>>,
    pub value: IndexMap<String, f64>,
    pub policy: IndexMap<String, String>,
    pub iterations: usize,
    pub residual: f64,
    pub error_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_star: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sandwich_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trunc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_policy: Option<Vec<IndexMap<String, String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<IndexMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

pub fn value_map<T: Real>(m: &FiniteMdp<T>, v: &[T]) -> IndexMap<String, f64> {
    m.states.iter().cloned().zip(v.iter().map(|x| x.as_f64())).collect()
}

pub fn policy_map<T: Real>(m: &FiniteMdp<T>, f: &StationaryPolicy) -> IndexMap<String, String> {
    m.states.iter().cloned().zip(f.action_names(m).into_iter().map(str::to_owned)).collect()
}

impl SolveReport {
    pub fn new<T: Real>(criterion: &str, m: &FiniteMdp<T>, value: &[T], policy: &StationaryPolicy) -> Self {
        Self {
            criterion: criterion.to_owned(),
            method: None,
            utility: None,
            value: value_map(m, value),
            policy: policy_map(m, policy),
            iterations: 0,
            residual: 0.0,
            error_bound: 0.0,
            eta_star: None,
            sandwich_width: None,
            n_trunc: None,
            stage_policy: None,
            gain: None,
            bias: None,
            rho: None,
        }
    }

    pub fn from_solution<T: Real>(criterion: &str, m: &FiniteMdp<T>, s: &Solution<T>) -> Self {
        Self {
            iterations: s.iterations,
            residual: s.residual.as_f64(),
            error_bound: s.error_bound.as_f64(),
            ..Self::new(criterion, m, &s.value, &s.policy)
        }
    }

    pub fn with_stage_policy<T: Real>(mut self, m: &FiniteMdp<T>, p: &StagePolicy) -> Self {
        self.stage_policy = Some(p.stages.iter().map(|f| policy_map(m, f)).collect());
        self
    }

    /// Action at `state` in stage 0 (stage policy when present, else the stationary one).
    pub fn first_action(&self, state: &str) -> Option<&str> {
        self.stage_policy
            .as_ref()
            .and_then(|s| s.first())
            .and_then(|p| p.get(state))
            .or_else(|| self.policy.get(state))
            .map(String::as_str)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    /// Tab-separated rendering: scalar fields as `# key<TAB>value`, then one row per state.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# criterion\t{}\n", self.criterion));
        if let Some(m) = &self.method {
            out.push_str(&format!("# method\t{m}\n"));
        }
        out.push_str(&format!("# iterations\t{}\n", self.iterations));
        out.push_str(&format!("# residual\t{:e}\n", self.residual));
        out.push_str(&format!("# error_bound\t{:e}\n", self.error_bound));
        for (k, v) in [
            ("eta_star", self.eta_star),
            ("sandwich_width", self.sandwich_width),
            ("gain", self.gain),
            ("rho", self.rho),
        ] {
            if let Some(v) = v {
                out.push_str(&format!("# {k}\t{v}\n"));
            }
        }
        if let Some(n) = self.n_trunc {
            out.push_str(&format!("# n_trunc\t{n}\n"));
        }
        let stages = self.stage_policy.as_ref().map_or(0, Vec::len);
        out.push_str("state\tvalue\taction");
        if self.bias.is_some() {
            out.push_str("\tbias");
        }
        for n in 0..stages {
            out.push_str(&format!("\tstage{n}"));
        }
        out.push('\n');
        for (s, v) in &self.value {
            out.push_str(&format!("{s}\t{v}\t{}", self.policy.get(s).map_or("", String::as_str)));
            if let Some(b) = &self.bias {
                out.push_str(&format!("\t{}", b.get(s).copied().unwrap_or(f64::NAN)));
            }
            for stage in self.stage_policy.iter().flatten() {
                out.push_str(&format!("\t{}", stage.get(s).map_or("", String::as_str)));
            }
            out.push('\n');
        }
        out
    }
}
