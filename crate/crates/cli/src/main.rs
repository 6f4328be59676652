//! `oirl`: run the online IRL simulator from a JSON scenario.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 configuration or I/O error,
//! 3 numerical divergence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oirl_core::harness::ablation_report;
use oirl_core::linalg::matrix_to_rows;
use oirl_core::{
    compare_to_oracle, emit_csv, run_ablation, run_scenario, Error, Result, RunOutput,
    ScenarioConfig,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "oirl", version, about = "Online inverse reinforcement learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and compare the terminal estimates to the oracle.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use trajectory samples instead of policy queries.
        #[arg(long)]
        no_query: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the final history stacks as CSV.
        #[arg(long)]
        dump_stacks: bool,
    },
    /// Run the scenario with and without querying and compare the two.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the Riccati solution for the scenario's plant and cost.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } | Error::NonFinite(_) | Error::Convergence { .. } => 3,
        _ => 2,
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pretty(v: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    create_dir(dir)?;
    emit_csv(&out.records, &dir.join("metrics.csv"))?;
    write(
        &dir.join("final.json"),
        &pretty(&json!({ "estimates": out.estimates, "truth": out.truth }))?,
    )?;
    if let Some(stacks) = &out.stacks {
        write(&dir.join("stack_theta.csv"), &stacks.theta)?;
        write(&dir.join("stack_policy.csv"), &stacks.policy)?;
        write(&dir.join("stack_irl.csv"), &stacks.irl)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            out,
            no_query,
            seed,
            dump_stacks,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            cfg.querying &= !no_query;
            cfg.dump_stacks |= dump_stacks;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let output = run_scenario(&cfg)?;
            write_run(&out, &output)?;
            let report = compare_to_oracle(&output.estimates, &output.truth, &cfg.tolerances);
            write(&out.join("report.json"), &pretty(&json!(report))?)?;
            for e in &report.entries {
                let verdict = match e.pass {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "n/a",
                };
                let err = e.error.map_or("-".to_string(), |v| format!("{v:.3e}"));
                println!("{:<16} error {err:>10}  tol {:.1e}  {verdict}", e.quantity, e.tolerance);
            }
            Ok(report.pass)
        }
        Command::Ablate { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            let (with, without) = run_ablation(&cfg)?;
            write_run(&out.join("query"), &with)?;
            write_run(&out.join("no_query"), &without)?;
            let report = ablation_report(&with.records, &without.records)?;
            let comparison = json!({
                "ablation": report,
                "query": compare_to_oracle(&with.estimates, &with.truth, &cfg.tolerances),
                "no_query": compare_to_oracle(&without.estimates, &without.truth, &cfg.tolerances),
            });
            write(&out.join("report.json"), &pretty(&comparison)?)?;
            println!(
                "terminal |W~|: query {:.3e}, no query {:.3e}, ratio {:.1} (need >= {})",
                report.query_error, report.no_query_error, report.ratio, report.required_ratio
            );
            println!(
                "no-query plateau change over final half: {:.2}% (need < {}%)",
                100.0 * report.plateau_change,
                100.0 * report.plateau_tolerance
            );
            Ok(report.pass)
        }
        Command::Oracle { config } => {
            let sc = ScenarioConfig::load(&config)?.build()?;
            let sol = sc.lqr.ok_or_else(|| {
                Error::Unsupported("no ground truth: the plant has no Riccati oracle".into())
            })?;
            let text = pretty(&json!({
                "p": matrix_to_rows(&sol.p),
                "gain": matrix_to_rows(&sol.gain),
                "value_weights": sol.value_weights.iter().collect::<Vec<_>>(),
                "residual": sol.residual,
            }))?;
            print!("{text}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

