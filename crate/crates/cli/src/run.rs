//! Solver configuration shared by `solve`, `compare` and `simulate --policy solve`.

use riskmdp::augmented::{entropic_total, solve_total_oce, truncation_level, GridConfig};
use riskmdp::ergodic::ergodic_rvi;
use riskmdp::neutral::policy_iteration;
use riskmdp::recursive::{entropic_fast_path, solve_recursive};
use riskmdp::report::Solution;
use riskmdp::{Error, Mdp, Result, SolveReport, StagePolicy, TotalOceSolution, Utility};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Criterion {
    #[value(name = "risk_neutral")]
    RiskNeutral,
    #[value(name = "recursive_oce")]
    RecursiveOce,
    #[value(name = "total_oce")]
    TotalOce,
    #[value(name = "ergodic_entropic")]
    ErgodicEntropic,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Self::RiskNeutral => "risk_neutral",
            Self::RecursiveOce => "recursive_oce",
            Self::TotalOce => "total_oce",
            Self::ErgodicEntropic => "ergodic_entropic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum UtilityKind {
    #[value(name = "entropic")]
    Entropic,
    #[value(name = "cvar")]
    Cvar,
    #[value(name = "mean_variance")]
    MeanVariance,
    #[value(name = "piecewise_linear")]
    PiecewiseLinear,
}

/// Solver settings after flag parsing; shared by every criterion of one invocation.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub utility: Option<UtilityKind>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub points: Vec<(f64, f64)>,
    pub tol: Option<f64>,
    pub start: usize,
    pub reference: usize,
    pub grid: GridConfig<f64>,
}

const DEFAULT_TOL: f64 = 1e-10;
/// Total-OCE tolerance applies to the sandwich width, which is limited by the grid.
const DEFAULT_WIDTH_TOL: f64 = 1e-2;

impl RunConfig {
    fn tol(&self, c: Criterion) -> Result<f64> {
        let tol = self.tol.unwrap_or(if c == Criterion::TotalOce { DEFAULT_WIDTH_TOL } else { DEFAULT_TOL });
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidParameter(format!("tolerance must be > 0, got {tol}")));
        }
        Ok(tol)
    }

    /// The utility named by `--utility`, or inferred from `--alpha` / `--gamma`.
    pub fn utility(&self) -> Result<Utility> {
        let kind = match self.utility {
            Some(k) => k,
            None if self.alpha.is_some() => UtilityKind::Cvar,
            None if self.gamma.is_some() => UtilityKind::Entropic,
            None => return Err(Error::Unsupported("OCE criteria need --gamma, --alpha or --utility".into())),
        };
        let u = match kind {
            UtilityKind::Entropic => Utility::Entropic {
                gamma: self.gamma.ok_or_else(|| Error::Unsupported("entropic utility needs --gamma".into()))?,
            },
            UtilityKind::Cvar => Utility::Cvar {
                alpha: self.alpha.ok_or_else(|| Error::Unsupported("cvar utility needs --alpha".into()))?,
            },
            UtilityKind::MeanVariance => Utility::MeanVariance,
            UtilityKind::PiecewiseLinear => Utility::PiecewiseLinear { points: self.points.clone() },
        };
        u.validate()?;
        Ok(u)
    }
}

/// Solver output: the report plus what `simulate` needs to follow the policy.
pub enum Solved {
    Stationary(SolveReport),
    Markov(SolveReport, StagePolicy),
    /// History-dependent total-OCE policy driven by the argmax tables.
    Augmented(SolveReport, Box<TotalOceSolution>),
}

impl Solved {
    pub fn report(&self) -> &SolveReport {
        match self {
            Self::Stationary(r) | Self::Markov(r, _) | Self::Augmented(r, _) => r,
        }
    }

    pub fn into_report(self) -> SolveReport {
        match self {
            Self::Stationary(r) | Self::Markov(r, _) | Self::Augmented(r, _) => r,
        }
    }
}

fn with_method(mut r: SolveReport, method: &str, u: Option<Utility>) -> SolveReport {
    r.method = Some(method.to_owned());
    r.utility = u;
    r
}

pub fn solve(m: &Mdp, c: Criterion, cfg: &RunConfig) -> Result<Solved> {
    let tol = cfg.tol(c)?;
    match c {
        Criterion::RiskNeutral => {
            let s = policy_iteration(m)?;
            Ok(Solved::Stationary(with_method(SolveReport::from_solution(c.name(), m, &s), "policy_iteration", None)))
        }
        Criterion::RecursiveOce => {
            let u = cfg.utility()?;
            let (s, method): (Solution<f64>, _) = match u {
                Utility::Entropic { gamma } => (entropic_fast_path(m, gamma, tol)?, "multiplicative_iteration"),
                _ => (solve_recursive(m, &u, tol)?, "value_iteration"),
            };
            Ok(Solved::Stationary(with_method(SolveReport::from_solution(c.name(), m, &s), method, Some(u))))
        }
        Criterion::TotalOce => solve_total(m, cfg, tol),
        Criterion::ErgodicEntropic => {
            let gamma = cfg.gamma.ok_or_else(|| Error::Unsupported("ergodic_entropic needs --gamma".into()))?;
            if !m.has_costs() {
                return Err(Error::Unsupported("ergodic_entropic needs a model with costs".into()));
            }
            let s = ergodic_rvi(m, gamma, tol, cfg.reference)?;
            let mut r = SolveReport::new(c.name(), m, &s.h, &s.policy);
            r.iterations = s.iterations;
            r.residual = s.residual;
            r.error_bound = s.spread / gamma;
            r.gain = Some(s.xi);
            r.rho = Some(s.rho);
            Ok(Solved::Stationary(with_method(r, "relative_value_iteration", Some(Utility::Entropic { gamma }))))
        }
    }
}

fn solve_total(m: &Mdp, cfg: &RunConfig, tol: f64) -> Result<Solved> {
    let c = Criterion::TotalOce;
    let u = cfg.utility()?;
    if let Utility::Entropic { gamma } = u {
        // no y coordinate is needed: the value factorizes over the levels beta^n
        let n = truncation_level(m, cfg.grid.tail_eps);
        let e = entropic_total(m, gamma, n)?;
        let stages = e.stage_policy(m, cfg.start);
        let mut r = SolveReport::new(c.name(), m, e.value(), &stages.tail);
        r.error_bound = e.tail_bound;
        r.n_trunc = Some(e.n_trunc);
        r.iterations = e.n_trunc;
        let r = with_method(r.with_stage_policy(m, &stages), "entropic_levels", Some(u));
        return Ok(Solved::Markov(r, stages));
    }
    let s = solve_total_oce(m, &u, &cfg.grid, cfg.start, tol)?;
    let mut r = SolveReport::new(c.name(), m, &s.state_values, &s.stage_policy.tail);
    r.iterations = s.grid.n_trunc;
    r.error_bound = s.sandwich_width;
    r.eta_star = Some(s.eta_star);
    r.sandwich_width = Some(s.sandwich_width);
    r.n_trunc = Some(s.grid.n_trunc);
    let r = with_method(r.with_stage_policy(m, &s.stage_policy), "augmented_sandwich", Some(u));
    Ok(Solved::Augmented(r, Box::new(s)))
}
