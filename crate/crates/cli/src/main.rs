//! Command-line front end: configuration-driven runs of the effective
//! Liouville pipeline, plus an invariant verification mode.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 invariant failure in `verify`.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pipeline::Failure;

#[derive(Parser)]
#[command(
    name = "liouville",
    about = "Frequency-dependent effective Liouville engine for open quantum systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured pipeline mode
    /// (full | markov | nz-only | oracle-only | compare-all).
    #[arg(long)]
    mode: Option<String>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<String>,
    /// Override the model seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the smoothing epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured pipeline and write its artifacts.
    Run(CommonArgs),
    /// Run the invariant suite on the configured model (no trajectories).
    Verify(CommonArgs),
}

fn realize(args: &CommonArgs) -> Result<config::RunConfig, config::ConfigError> {
    let raw = config::load(&args.config)?;
    raw.realize(
        args.mode.as_deref(),
        args.out.as_deref(),
        args.seed,
        args.epsilon,
    )
}

fn emit_failure(f: &Failure) -> ExitCode {
    let (payload, code) = match f {
        Failure::Config(msg) => (json!({ "kind": "config", "message": msg }), 1),
        Failure::Numerical(e) => (
            json!({
                "kind": "numerical",
                "module": e.module(),
                "operation": e.operation(),
                "message": e.to_string(),
            }),
            2,
        ),
        Failure::Io(e) => (json!({ "kind": "io", "message": e.to_string() }), 2),
    };
    eprintln!("{}", json!({ "error": payload }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let cfg = match realize(&args) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!(
                        "{}",
                        json!({ "error": { "kind": "config", "field": e.field, "message": e.message } })
                    );
                    return ExitCode::from(1);
                }
            };
            match pipeline::run(&cfg) {
                Ok(report) => {
                    println!(
                        "run complete: mode {} -> {}",
                        report["mode"].as_str().unwrap_or("?"),
                        cfg.out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(f) => emit_failure(&f),
            }
        }
        Command::Verify(args) => {
            let cfg = match realize(&args) {
                Ok(cfg) => cfg,
                Err(e) => {
                    eprintln!(
                        "{}",
                        json!({ "error": { "kind": "config", "field": e.field, "message": e.message } })
                    );
                    return ExitCode::from(1);
                }
            };
            match pipeline::verify(&cfg) {
                Ok(checks) => {
                    let mut failed = 0usize;
                    for c in &checks {
                        let status = if c.pass { "PASS" } else { "FAIL" };
                        match &c.note {
                            Some(note) => println!(
                                "{status} {} residual {:.3e} (tol {:.1e}) [{note}]",
                                c.name, c.residual, c.tolerance
                            ),
                            None => println!(
                                "{status} {} residual {:.3e} (tol {:.1e})",
                                c.name, c.residual, c.tolerance
                            ),
                        }
                        if !c.pass {
                            failed += 1;
                        }
                    }
                    if failed > 0 {
                        eprintln!(
                            "{}",
                            json!({ "error": { "kind": "invariant", "message": format!("{failed} invariant checks failed") } })
                        );
                        ExitCode::from(3)
                    } else {
                        println!("all {} invariants PASS", checks.len());
                        ExitCode::SUCCESS
                    }
                }
                Err(f) => emit_failure(&f),
            }
        }
    }
}
