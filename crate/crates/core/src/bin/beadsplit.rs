//! Command-line front end: experiment configuration, seeding, Monte
//! Carlo suite orchestration and report emission.
//!
//! Exit codes: 0 success, 1 statistical failure, 2 configuration
//! error, 3 numerical error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use beadsplit::config::{ConfigError, ExperimentConfig};
use beadsplit::report::{fmt_f64, write_csv, write_text};
use beadsplit::suites::{self, MomentsReport, StatTestRow, SuiteError};

#[derive(Parser)]
#[command(name = "beadsplit", about = "Fragmenter, bifurcator and bead-splitting simulation suites")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the replicate count.
    #[arg(long, global = true)]
    replicates: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the worker count (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// z-score threshold for moment identities.
    #[arg(long, global = true, default_value_t = 4.0)]
    z_threshold: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the moment-identity catalog by Monte Carlo.
    Moments,
    /// Grow bead-splitting chains, dump checkpoint trees and report
    /// convergence diagnostics.
    Grow,
    /// Run the Brownian CRT reference suite.
    BrownianSuite,
    /// Stream one JSON record per bifurcator replicate.
    Bifurcate,
    /// Validate a density spec and print its analytic functionals.
    CheckDensity,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let path = cli.config.as_ref().ok_or_else(|| ConfigError::Parse(
        "missing --config <file>".to_string(),
    ))?;
    let mut cfg = ExperimentConfig::from_file(&path.display().to_string())?;
    if let Some(seed) = cli.seed {
        cfg.experiment.master_seed = seed;
    }
    if let Some(reps) = cli.replicates {
        cfg.experiment.replicates = reps;
    }
    if let Some(out) = &cli.out {
        cfg.experiment.out_dir = out.display().to_string();
    }
    if let Some(workers) = cli.workers {
        cfg.experiment.workers = workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn suite_exit_code(e: &SuiteError) -> u8 {
    match e {
        SuiteError::Config(_) => 2,
        _ => 3,
    }
}

fn stat_rows_csv(rows: &[StatTestRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|t| {
            vec![
                t.test.clone(),
                fmt_f64(t.statistic),
                fmt_f64(t.p_or_z),
                fmt_f64(t.threshold),
                t.pass.to_string(),
            ]
        })
        .collect()
}

fn write_moments(out_dir: &Path, report: &MomentsReport) -> std::io::Result<()> {
    let rows = report.rows.iter().map(|r| {
        vec![
            r.identity.clone(),
            fmt_f64(r.analytic),
            fmt_f64(r.mc_mean),
            fmt_f64(r.se),
            fmt_f64(r.z),
        ]
    });
    write_csv(
        &out_dir.join("moments.csv"),
        &["identity", "analytic", "mc_mean", "se", "z"],
        rows,
    )?;
    write_csv(
        &out_dir.join("stats_tests.csv"),
        &["test", "statistic", "p_or_z", "threshold", "pass"],
        stat_rows_csv(&report.tests),
    )?;
    write_csv(
        &out_dir.join("exponents.csv"),
        &["rho", "phi", "phi_eps", "phi_star", "phi_star_eps"],
        report.exponents.iter().map(|e| {
            vec![
                fmt_f64(e.rho),
                fmt_f64(e.phi),
                fmt_f64(e.phi_eps),
                fmt_f64(e.phi_star),
                fmt_f64(e.phi_star_eps),
            ]
        }),
    )
}

fn run(cli: &Cli) -> Result<bool, (u8, String)> {
    let cfg = load_config(cli).map_err(|e| (2u8, e.to_string()))?;
    let out_dir = PathBuf::from(&cfg.experiment.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| (2, format!("cannot create out dir: {e}")))?;
    let io_err = |e: std::io::Error| (2u8, format!("cannot write report: {e}"));

    match cli.command {
        Command::Moments => {
            let report =
                suites::moments_suite(&cfg).map_err(|e| (suite_exit_code(&e), e.to_string()))?;
            let analytic =
                suites::analytic_suite(&cfg).map_err(|e| (suite_exit_code(&e), e.to_string()))?;
            write_moments(&out_dir, &report).map_err(io_err)?;
            write_csv(
                &out_dir.join("analytic_checks.csv"),
                &["test", "statistic", "p_or_z", "threshold", "pass"],
                stat_rows_csv(&analytic),
            )
            .map_err(io_err)?;
            let ok = report.all_pass(cli.z_threshold) && analytic.iter().all(|t| t.pass);
            println!(
                "moments: {} identities, max |z| = {:.3}, {} tests -> {}",
                report.rows.len(),
                report.max_abs_z(),
                report.tests.len() + analytic.len(),
                if ok { "PASS" } else { "FAIL" }
            );
            Ok(ok)
        }
        Command::Grow => {
            let report =
                suites::grow_suite(&cfg).map_err(|e| (suite_exit_code(&e), e.to_string()))?;
            write_csv(
                &out_dir.join("convergence.csv"),
                &[
                    "replicate",
                    "n",
                    "hausdorff_bound",
                    "ghp_bound",
                    "largest_atom",
                    "total_length",
                    "leaf_gap",
                ],
                report.convergence.iter().map(|r| {
                    vec![
                        r.replicate.to_string(),
                        r.n.to_string(),
                        fmt_f64(r.hausdorff_bound),
                        fmt_f64(r.ghp_bound),
                        fmt_f64(r.largest_atom),
                        fmt_f64(r.total_length),
                        fmt_f64(r.leaf_gap),
                    ]
                }),
            )
            .map_err(io_err)?;
            write_csv(
                &out_dir.join("halving_bounds.csv"),
                &["replicate", "n", "ghp_bound_half_to_n"],
                report.halving.iter().flat_map(|(rep, rows)| {
                    rows.iter()
                        .map(move |(n, g)| vec![rep.to_string(), n.to_string(), fmt_f64(*g)])
                }),
            )
            .map_err(io_err)?;
            write_csv(
                &out_dir.join("junction_hits.csv"),
                &["replicate", "n", "m", "hits", "hits_over_sqrt_m", "sqrt2_lambda_rn"],
                report.junction_hits.iter().map(|r| {
                    vec![
                        r.replicate.to_string(),
                        r.n.to_string(),
                        r.m.to_string(),
                        r.hits.to_string(),
                        fmt_f64(r.hits_over_sqrt_m),
                        fmt_f64(r.sqrt2_lambda_rn),
                    ]
                }),
            )
            .map_err(io_err)?;
            for (n, json) in &report.dumps {
                write_text(&out_dir.join(format!("tree_rep0_n{n}.json")), json)
                    .map_err(io_err)?;
            }
            if cfg.grow.steps >= 5 {
                let comp = suites::composition_suite(&cfg, 4)
                    .map_err(|e| (suite_exit_code(&e), e.to_string()))?;
                write_csv(
                    &out_dir.join("compositions.csv"),
                    &["composition", "direct_c3", "deleted_from_c4"],
                    comp.counts
                        .iter()
                        .map(|(k, a, b)| vec![k.clone(), a.to_string(), b.to_string()]),
                )
                .map_err(io_err)?;
            }
            println!(
                "grow: {} chains of {} steps, {} checkpoint rows",
                cfg.experiment.replicates,
                cfg.grow.steps,
                report.convergence.len()
            );
            Ok(true)
        }
        Command::BrownianSuite => {
            let report =
                suites::brownian_suite(&cfg).map_err(|e| (suite_exit_code(&e), e.to_string()))?;
            write_csv(
                &out_dir.join("brownian_tests.csv"),
                &["test", "statistic", "p_or_z", "threshold", "pass"],
                stat_rows_csv(&report.rows),
            )
            .map_err(io_err)?;
            write_csv(
                &out_dir.join("brownian_moments.csv"),
                &["identity", "analytic", "mc_mean", "se", "z"],
                report.moment_rows.iter().map(|r| {
                    vec![
                        r.identity.clone(),
                        fmt_f64(r.analytic),
                        fmt_f64(r.mc_mean),
                        fmt_f64(r.se),
                        fmt_f64(r.z),
                    ]
                }),
            )
            .map_err(io_err)?;
            let ok = report.all_pass(cli.z_threshold);
            println!(
                "brownian-suite: {} tests, {} moment rows -> {}",
                report.rows.len(),
                report.moment_rows.len(),
                if ok { "PASS" } else { "FAIL" }
            );
            Ok(ok)
        }
        Command::Bifurcate => {
            let lines =
                suites::bifurcate_suite(&cfg).map_err(|e| (suite_exit_code(&e), e.to_string()))?;
            let mut text = lines.join("\n");
            if !text.is_empty() {
                text.push('\n');
            }
            write_text(&out_dir.join("bifurcate.jsonl"), &text).map_err(io_err)?;
            println!("bifurcate: {} records", lines.len());
            Ok(true)
        }
        Command::CheckDensity => {
            let v = suites::check_density(&cfg)
                .map_err(|e| (suite_exit_code(&e), e.to_string()))?;
            let pretty = serde_json::to_string_pretty(&v).expect("report serializes");
            write_text(&out_dir.join("density.json"), &pretty).map_err(io_err)?;
            println!("{pretty}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}
