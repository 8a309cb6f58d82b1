//! `riskmdp`: solve, compare and simulate finite MDPs under risk-sensitive criteria.
//!
//! Exit codes: 0 success, 1 invalid model/input or parameter, 2 missing or unreadable
//! file, 3 solver did not converge, 4 unsupported criterion/model combination,
//! 64 command-line usage error.

mod run;
mod sim;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use riskmdp::augmented::GridConfig;
use riskmdp::{fixtures, io, Error, Mdp};
use serde_json::json;

use run::{Criterion, RunConfig, UtilityKind};

#[derive(Parser)]
#[command(name = "riskmdp", version, about = "Risk-sensitive solvers for finite Markov decision processes")]
struct Cli {
    /// Worker threads; 1 runs everything sequentially.
    #[arg(long, global = true, env = "RISKMDP_THREADS")]
    threads: Option<usize>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,
    /// Write the output here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and list every violation.
    Validate {
        #[arg(long)]
        model: String,
    },
    /// Solve one criterion and print its report.
    Solve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum)]
        criterion: Criterion,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Solve several criteria with the same settings; one row per criterion.
    Compare {
        #[command(flatten)]
        model: ModelArg,
        /// Comma-separated criteria; duplicates are dropped.
        #[arg(long, value_enum, value_delimiter = ',', required = true, num_args = 1..)]
        criteria: Vec<Criterion>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Estimate a risk functional of a policy by seeded Monte-Carlo rollouts.
    Simulate(sim::SimulateArgs),
    /// Embedded example models.
    Fixtures {
        #[command(subcommand)]
        action: FixtureCommand,
    },
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Print the fixture names.
    List,
    /// Print one fixture, or write all of them into `--dir`.
    Export {
        name: Option<String>,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
pub struct ModelArg {
    /// Model file, or `fixture:<name>` for an embedded model.
    #[arg(long)]
    model: String,
}

#[derive(Args, Clone)]
pub struct SolverArgs {
    /// Utility of the OCE criteria; inferred from --gamma / --alpha when omitted.
    #[arg(long, value_enum)]
    utility: Option<UtilityKind>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Breakpoints `t:u(t)` of a piecewise-linear utility, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    points: Vec<String>,
    /// Convergence tolerance (sandwich width for total_oce).
    #[arg(long)]
    tol: Option<f64>,
    /// Start state for total_oce.
    #[arg(long)]
    start: Option<String>,
    /// Normalizing state of the relative value iteration.
    #[arg(long)]
    reference_state: Option<String>,
    /// Spacing of the accumulated-reward grid (default: reward bound / 400).
    #[arg(long)]
    y_step: Option<f64>,
    /// Truncation tolerance for the discounted tail.
    #[arg(long, default_value_t = 1e-8)]
    tail_eps: f64,
}

impl SolverArgs {
    pub fn config(&self, m: &Mdp) -> riskmdp::Result<RunConfig> {
        let state = |name: &Option<String>| -> riskmdp::Result<usize> {
            name.as_deref().map_or(Ok(0), |s| {
                m.state_index(s).ok_or_else(|| Error::InvalidParameter(format!("unknown state {s:?}")))
            })
        };
        let points = self
            .points
            .iter()
            .map(|p| {
                let bad = || Error::InvalidParameter(format!("breakpoint {p:?} is not of the form t:u"));
                let (t, u) = p.split_once(':').ok_or_else(bad)?;
                Ok((t.trim().parse().map_err(|_| bad())?, u.trim().parse().map_err(|_| bad())?))
            })
            .collect::<riskmdp::Result<_>>()?;
        Ok(RunConfig {
            utility: self.utility,
            gamma: self.gamma,
            alpha: self.alpha,
            points,
            tol: self.tol,
            start: state(&self.start)?,
            reference: state(&self.reference_state)?,
            grid: GridConfig { y_step: self.y_step, tail_eps: self.tail_eps },
        })
    }
}

pub fn load_model(spec: &str) -> riskmdp::Result<Mdp> {
    match spec.strip_prefix("fixture:") {
        Some(name) => {
            fixtures::by_name(name).ok_or_else(|| Error::InvalidParameter(format!("unknown fixture {name:?}")))
        }
        None => io::load(spec).map_err(|e| with_path(e, spec)),
    }
}

/// Prefixes I/O errors with the offending path.
pub fn with_path(e: Error, path: &str) -> Error {
    match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{path}: {io}"))),
        e => e,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 2,
        Error::IterationLimit { .. } | Error::Stagnation { .. } => 3,
        Error::Unsupported(_) | Error::Precondition(_) | Error::Range(_) => 4,
        _ => 1,
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> riskmdp::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn render(format: Format, report: &riskmdp::SolveReport) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Tsv => report.to_tsv(),
    }
}

fn validate(path: &str, format: Format) -> riskmdp::Result<(String, bool)> {
    let text = match path.strip_prefix("fixture:") {
        Some(name) => fixtures::ALL
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture {name:?}")))?,
        None => std::fs::read_to_string(path).map_err(|e| with_path(e.into(), path))?,
    };
    let violations = match io::from_json_str_unchecked(&text) {
        Ok(m) => m.validate().into_iter().map(|v| (v.field, v.message)).collect(),
        Err(Error::Parse { pointer, message }) => vec![(pointer, message)],
        Err(e) => return Err(e),
    };
    let ok = violations.is_empty();
    let text = match format {
        Format::Json => {
            let list: Vec<_> = violations.iter().map(|(f, m)| json!({"pointer": f, "message": m})).collect();
            let mut s = serde_json::to_string_pretty(&json!({"valid": ok, "violations": list})).expect("json");
            s.push('\n');
            s
        }
        Format::Tsv => {
            let mut s = String::from("pointer\tmessage\n");
            for (f, m) in &violations {
                s.push_str(&format!("{f}\t{m}\n"));
            }
            s
        }
    };
    Ok((text, ok))
}

fn compare(m: &Mdp, criteria: &[Criterion], cfg: &RunConfig, format: Format) -> riskmdp::Result<String> {
    let mut unique: Vec<Criterion> = Vec::new();
    for &c in criteria {
        if !unique.contains(&c) {
            unique.push(c);
        }
    }
    let start = &m.states[cfg.start];
    let mut rows = Vec::new();
    for c in unique {
        let r = run::solve(m, c, cfg)?.into_report();
        rows.push((
            c.name(),
            r.method.clone().unwrap_or_default(),
            r.value[start],
            r.first_action(start).unwrap_or("").to_owned(),
        ));
    }
    Ok(match format {
        Format::Json => {
            let list: Vec<_> = rows
                .iter()
                .map(|(c, meth, v, a)| json!({"criterion": c, "method": meth, "value": v, "action": a}))
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({"state": start, "rows": list})).expect("json");
            s.push('\n');
            s
        }
        Format::Tsv => {
            let mut s = format!("# state\t{start}\ncriterion\tmethod\tvalue\taction\n");
            for (c, meth, v, a) in &rows {
                s.push_str(&format!("{c}\t{meth}\t{v}\t{a}\n"));
            }
            s
        }
    })
}

fn fixtures_cmd(action: FixtureCommand, out: &Option<PathBuf>) -> riskmdp::Result<()> {
    match action {
        FixtureCommand::List => {
            let names: String = fixtures::ALL.iter().map(|(n, _)| format!("{n}\n")).collect();
            emit(out, &names)
        }
        FixtureCommand::Export { name, dir } => {
            let chosen: Vec<_> = match &name {
                Some(n) => {
                    let n = n.strip_suffix(".json").unwrap_or(n);
                    let f = fixtures::ALL
                        .iter()
                        .find(|(k, _)| *k == n)
                        .ok_or_else(|| Error::InvalidParameter(format!("unknown fixture {n:?}")))?;
                    vec![*f]
                }
                None => fixtures::ALL.to_vec(),
            };
            match dir {
                Some(d) => {
                    std::fs::create_dir_all(&d)?;
                    for (n, text) in chosen {
                        std::fs::write(Path::new(&d).join(format!("{n}.json")), text)?;
                    }
                    Ok(())
                }
                None if chosen.len() == 1 => emit(out, chosen[0].1),
                None => Err(Error::InvalidParameter("exporting every fixture needs --dir".into())),
            }
        }
    }
}

fn dispatch(cli: Cli) -> riskmdp::Result<ExitCode> {
    let (fmt, out) = (cli.format, &cli.out);
    match cli.command {
        Command::Validate { model } => {
            let (text, ok) = validate(&model, fmt)?;
            emit(out, &text)?;
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Solve { model, criterion, solver } => {
            let m = load_model(&model.model)?;
            let cfg = solver.config(&m)?;
            emit(out, &render(fmt, run::solve(&m, criterion, &cfg)?.report()))?;
        }
        Command::Compare { model, criteria, solver } => {
            let m = load_model(&model.model)?;
            let cfg = solver.config(&m)?;
            emit(out, &compare(&m, &criteria, &cfg, fmt)?)?;
        }
        Command::Simulate(args) => emit(out, &sim::simulate(&args, fmt == Format::Json)?)?,
        Command::Fixtures { action } => fixtures_cmd(action, out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(64) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(64);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
