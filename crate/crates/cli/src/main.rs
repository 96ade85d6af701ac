use clap::{Parser, Subcommand};
use mmlab_cli::output::{format_float, to_json_string};
use mmlab_cli::run::{validate_config, verdict_label};
use mmlab_cli::{load_config, run_to_dir, CliError};
use mmlab_core::zoo;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mmlab",
    about = "Minimizing-movement laboratory: run refinement experiments for \
             gradient flows along converging functional families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write trajectories.csv, probes.json and
    /// summary.json.
    Run {
        config: PathBuf,
        /// Output directory (default: out/<experiment name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for the refinement (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Print the summary report as JSON on stdout instead of text.
        #[arg(long)]
        json: bool,
    },
    /// List the available functional families.
    ListFamilies {
        #[arg(long)]
        json: bool,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, jobs, json } => cmd_run(&config, out, jobs, json),
        Command::ListFamilies { json } => cmd_list_families(json),
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            validate_config(&cfg)?;
            println!("ok: {}", cfg.name);
            Ok(())
        }
    }
}

fn cmd_run(
    config: &PathBuf,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    json: bool,
) -> Result<(), CliError> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs {n}: {e}")))?;
    }
    let cfg = load_config(config)?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let outcome = run_to_dir(&cfg, &out_dir)?;
    if json {
        println!("{}", to_json_string(&outcome.report)?);
    } else {
        render_text(&outcome, &out_dir);
    }
    match outcome.expectation_failure() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn render_text(outcome: &mmlab_cli::ExperimentOutcome, out_dir: &std::path::Path) {
    let report = &outcome.report;
    println!("experiment: {}", report.config.name);
    for r in &report.runs {
        println!(
            "  tau = {:<10} eps = {:<12} steps = {:<6} final = {:?}  energy {} -> {}",
            r.tau,
            r.epsilon,
            r.n_steps,
            r.final_point.coords(),
            format_float(r.initial_energy),
            format_float(r.final_energy),
        );
    }
    for p in &report.convergence.probes {
        println!(
            "  t = {}: successive interpolant gaps {:?}",
            p.time, p.successive_distances
        );
    }
    if let Some(ratio) = &report.probes.ratio {
        println!(
            "  ratio probe: {} (liminf estimate {} vs target {}, tolerance {})",
            verdict_label(ratio.verdict),
            format_float(ratio.liminf_estimate),
            format_float(ratio.target),
            format_float(ratio.tolerance),
        );
    }
    if let Some(slope) = &report.probes.slope {
        println!(
            "  slope probe: {} (liminf estimate {} vs target {})",
            verdict_label(slope.verdict),
            format_float(slope.liminf_estimate),
            format_float(slope.target),
        );
    }
    for e in &report.expectations {
        println!(
            "  expectation {} at t = {}: {} (distance {} vs threshold {})",
            e.kind,
            e.time,
            if e.passed { "pass" } else { "FAIL" },
            format_float(e.observed_distance),
            format_float(e.threshold),
        );
    }
    println!("reports written to {}", out_dir.display());
}

#[derive(Serialize)]
struct FamilyInfo {
    name: String,
    summary: String,
    parameters: std::collections::BTreeMap<String, f64>,
}

fn cmd_list_families(json: bool) -> Result<(), CliError> {
    let infos: Vec<FamilyInfo> = zoo::registry()
        .into_iter()
        .map(|spec| FamilyInfo {
            name: spec.name.clone(),
            summary: spec.summary.clone(),
            parameters: spec.parameters.clone(),
        })
        .collect();
    if json {
        println!("{}", to_json_string(&infos)?);
    } else {
        for info in infos {
            println!("{:<14} {}", info.name, info.summary);
            for (k, v) in &info.parameters {
                println!("{:<14}   parameter {k} (default {v})", "");
            }
        }
    }
    Ok(())
}
