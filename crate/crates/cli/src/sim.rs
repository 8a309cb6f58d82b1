//! `riskmdp simulate`: Monte-Carlo estimates of a policy's risk functional.

use clap::{Args, ValueEnum};
use riskmdp::simulate::{estimate, estimate_ergodic_entropic, horizon_for, rollout, Functional, RolloutPolicy};
use riskmdp::{Error, Mdp, Result, SolveReport, StagePolicy, StationaryPolicy};
use serde_json::json;

use crate::run::{self, Criterion, Solved};
use crate::{load_model, with_path, ModelArg, SolverArgs};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FunctionalKind {
    #[value(name = "mean")]
    Mean,
    #[value(name = "entropic")]
    Entropic,
    #[value(name = "cvar")]
    Cvar,
    /// Long-run entropic cost `(1/(gamma n)) ln E exp(gamma C_n)`.
    #[value(name = "ergodic")]
    Ergodic,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    model: ModelArg,
    /// `first` (first admissible action), `solve` (optimal for --criterion), or a
    /// SolveReport JSON file.
    #[arg(long, default_value = "solve")]
    policy: String,
    /// Criterion solved when `--policy solve`.
    #[arg(long, value_enum, default_value = "risk_neutral")]
    criterion: Criterion,
    #[arg(long, value_enum, default_value = "mean")]
    functional: FunctionalKind,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    /// Trajectory length; defaults to the discounted-tail horizon at 1e-9.
    #[arg(long)]
    horizon: Option<usize>,
    /// Also write the per-replication samples as CSV.
    #[arg(long)]
    samples: Option<std::path::PathBuf>,
}

enum Rollout {
    Stationary(StationaryPolicy),
    Markov(StagePolicy),
    Solved(Box<riskmdp::TotalOceSolution>),
}

impl Rollout {
    fn as_dyn(&self) -> &dyn RolloutPolicy<f64> {
        match self {
            Self::Stationary(f) => f,
            Self::Markov(p) => p,
            Self::Solved(s) => s.as_ref(),
        }
    }
}

fn named(m: &Mdp, map: &indexmap::IndexMap<String, String>) -> Result<StationaryPolicy> {
    let pairs: Vec<(&str, &str)> = map.iter().map(|(s, a)| (s.as_str(), a.as_str())).collect();
    StationaryPolicy::from_names(m, &pairs)
}

fn from_report(m: &Mdp, path: &str) -> Result<Rollout> {
    let text = std::fs::read_to_string(path).map_err(|e| with_path(e.into(), path))?;
    let r: SolveReport = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { pointer: format!("{path}:{}", e.line()), message: e.to_string() })?;
    let tail = named(m, &r.policy)?;
    Ok(match &r.stage_policy {
        Some(stages) if !stages.is_empty() => {
            Rollout::Markov(StagePolicy { stages: stages.iter().map(|s| named(m, s)).collect::<Result<_>>()?, tail })
        }
        _ => Rollout::Stationary(tail),
    })
}

pub fn simulate(args: &SimulateArgs, as_json: bool) -> Result<String> {
    let m = load_model(&args.model.model)?;
    let cfg = args.solver.config(&m)?;
    let policy = match args.policy.as_str() {
        "first" => Rollout::Stationary(StationaryPolicy::first(&m)),
        "solve" => match run::solve(&m, args.criterion, &cfg)? {
            Solved::Stationary(r) => Rollout::Stationary(named(&m, &r.policy)?),
            Solved::Markov(_, p) => Rollout::Markov(p),
            Solved::Augmented(_, s) => Rollout::Solved(s),
        },
        path => from_report(&m, path)?,
    };
    let gamma = || args.solver.gamma.ok_or_else(|| Error::Unsupported("this functional needs --gamma".into()));
    let x0 = cfg.start;
    let (name, value, std_error, horizon, truncation) = if args.functional == FunctionalKind::Ergodic {
        let n = args.horizon.unwrap_or(1_000);
        let e = estimate_ergodic_entropic(&m, policy.as_dyn(), gamma()?, n, args.reps, args.seed, x0)?;
        if let Some(path) = &args.samples {
            let batch = rollout(&m, policy.as_dyn(), x0, n, args.seed, args.reps)?;
            std::fs::write(path, batch.to_csv())?;
        }
        ("ergodic", e.value, e.std_error, n, None)
    } else {
        let f = match args.functional {
            FunctionalKind::Mean => Functional::Mean,
            FunctionalKind::Entropic => Functional::Entropic { gamma: gamma()? },
            _ => Functional::Cvar {
                alpha: args.solver.alpha.ok_or_else(|| Error::Unsupported("cvar needs --alpha".into()))?,
            },
        };
        let horizon = args.horizon.unwrap_or_else(|| horizon_for(&m, 1e-9));
        let batch = rollout(&m, policy.as_dyn(), x0, horizon, args.seed, args.reps)?;
        if let Some(path) = &args.samples {
            std::fs::write(path, batch.to_csv())?;
        }
        let e = estimate(&batch, f)?;
        // rewards beyond the horizon, at most beta^h d / (1 - beta)
        let truncation = m.discount.powi(horizon as i32) * m.total_reward_bound();
        let name = match f {
            Functional::Mean => "mean",
            Functional::Entropic { .. } => "entropic",
            Functional::Cvar { .. } => "cvar",
        };
        (name, e.value, e.std_error, horizon, Some(truncation))
    };
    let fields = [
        ("functional", json!(name)),
        ("gamma", json!(args.solver.gamma)),
        ("alpha", json!(args.solver.alpha)),
        ("policy", json!(args.policy)),
        ("start", json!(m.states[x0])),
        ("seed", json!(args.seed)),
        ("replications", json!(args.reps)),
        ("horizon", json!(horizon)),
        ("value", json!(value)),
        ("std_error", json!(std_error)),
        ("truncation_bound", json!(truncation)),
    ];
    let fields = fields.into_iter().filter(|(_, v)| !v.is_null());
    Ok(if as_json {
        let obj: serde_json::Map<String, serde_json::Value> = fields.map(|(k, v)| (k.to_owned(), v)).collect();
        let mut s = serde_json::to_string_pretty(&obj).expect("json");
        s.push('\n');
        s
    } else {
        fields
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => format!("{k}\t{s}\n"),
                v => format!("{k}\t{v}\n"),
            })
            .collect()
    })
}
