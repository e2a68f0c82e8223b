//! Command line front end: simulate constrained dynamics, verify candidate
//! solutions, reduce symmetric models, and list what is registered.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nonholo::config::{parse_grid_spec, RunConfig};
use nonholo::models::{build_model, model_names};
use nonholo::runner::{run_reduce, run_simulate, run_verify};
use nonholo::Error;

#[derive(Parser)]
#[command(
    name = "nonholo",
    about = "Simulate mechanical systems with linear velocity constraints and \
             verify candidate momentum fields",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the constrained dynamics and write trajectory.csv.
    Simulate(RunArgs),
    /// Check a candidate on a sample grid and write report.json.
    Verify(RunArgs),
    /// Reduce a model along its connection and write reduce.json.
    Reduce(RunArgs),
    /// List registered models with their parameters and candidates.
    ListModels,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; the flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model name (see list-models).
    #[arg(long)]
    model: Option<String>,
    /// Candidate name to verify or to derive initial momenta from.
    #[arg(long)]
    candidate: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Integration step size.
    #[arg(long)]
    dt: Option<f64>,
    /// Number of integration steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Pass threshold for normalized residuals.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Re-project momenta onto the constraints after each step.
    #[arg(long)]
    project: bool,
    /// Sample grid as "lo:hi:count,lo:hi:count,..." in display order.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => match &args.model {
            Some(model) => RunConfig::new(model),
            None => return Err(Error::Config("pass --model or --config".into())),
        },
    };
    if let Some(model) = &args.model {
        cfg.model = model.clone();
    }
    if let Some(name) = &args.candidate {
        cfg.candidate = Some(name.clone());
    }
    if let Some(dt) = args.dt {
        cfg.dt = dt;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(tol) = args.tolerance {
        cfg.tolerance = Some(tol);
    }
    if args.project {
        cfg.project = true;
    }
    if let Some(spec) = &args.grid {
        cfg.grid = Some(parse_grid_spec(spec)?);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.4}")).collect();
    format!("({})", parts.join(", "))
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Command::Simulate(args) => {
            let cfg = resolve(args)?;
            let summary = run_simulate(&cfg, &args.out)?;
            if let Some(w) = &summary.initial_residual_warning {
                eprintln!("warning: {w}");
            }
            println!(
                "simulated {} for {} steps (dt = {})",
                summary.model, summary.steps, summary.dt
            );
            println!(
                "  max |Psi| along the run  {:.3e}",
                summary.max_constraint_residual
            );
            println!("  energy drift             {:.3e}", summary.energy_drift);
            println!("  wrote {}", args.out.join("trajectory.csv").display());
            println!("  wrote {}", args.out.join("summary.json").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify(args) => {
            let cfg = resolve(args)?;
            let summary = run_verify(&cfg, &args.out)?;
            println!(
                "checking candidate {} on model {} ({} conditions)",
                summary.candidate, summary.model, summary.check
            );
            for c in &summary.conditions {
                let status = if c.pass { "pass" } else { "FAIL" };
                println!(
                    "  {:<24} {}  raw {:.3e}  normalized {:.3e}  tol {:.1e}  worst at {}",
                    c.condition,
                    status,
                    c.residual,
                    c.normalized_residual,
                    c.tolerance,
                    fmt_point(&c.worst_point)
                );
            }
            println!(
                "verification {}",
                if summary.pass { "PASSED" } else { "FAILED" }
            );
            println!("  wrote {}", args.out.join("report.json").display());
            Ok(if summary.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Reduce(args) => {
            let cfg = resolve(args)?;
            let summary = run_reduce(&cfg, &args.out)?;
            println!(
                "reduced {} to base coordinates ({})",
                summary.model,
                summary.base_coordinates.join(", ")
            );
            println!(
                "  reduced metric at {}:",
                fmt_point(&summary.reduced_metric_point)
            );
            for row in &summary.reduced_metric {
                let parts: Vec<String> = row.iter().map(|x| format!("{x:>12.6}")).collect();
                println!("    [{}]", parts.join(" "));
            }
            println!("  max |alpha*| on the grid {:.3e}", summary.alpha_star_max);
            println!(
                "  reduced vs full dynamics {:.3e}",
                summary.equivalence_deviation
            );
            for rt in &summary.round_trips {
                println!(
                    "  field {:<12} round trip {:.3e}  reduced check {}",
                    rt.field,
                    rt.roundtrip_error,
                    if rt.reduced_check_pass {
                        "pass"
                    } else {
                        "FAIL"
                    }
                );
            }
            println!("  wrote {}", args.out.join("reduce.json").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ListModels => {
            for name in model_names() {
                let model = build_model(name, &BTreeMap::new())?;
                println!("{name}");
                println!("  coordinates  {}", model.display_names().join(", "));
                let params: Vec<String> = model
                    .params()
                    .iter()
                    .map(|(k, v)| format!("{k} = {v}"))
                    .collect();
                println!("  parameters   {}", params.join(", "));
                let candidates: Vec<&str> =
                    model.candidates().iter().map(|(n, _)| n.as_str()).collect();
                println!("  candidates   {}", candidates.join(", "));
                if model.connection().is_some() {
                    let fields: Vec<&str> = model
                        .reduced_fields()
                        .iter()
                        .map(|(n, _)| n.as_str())
                        .collect();
                    println!("  reducible    yes (base fields: {})", fields.join(", "));
                } else {
                    println!("  reducible    no");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err {
                Error::Config(_) | Error::Io(_) => 2,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}
