//! Command-line front end: single runs, parameter sweeps, the closed-form
//! validation table, and the false-positive experiment. All output is
//! deterministic CSV plus a human-readable table on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crowdfind::analysis::{validation_table, ValidationRow};
use crowdfind::harness::sweep::{runs_to_csv, CSV_SCHEMA_COMMENT};
use crowdfind::harness::{run_replicates, run_sweep, RunRecord, SimConfig, SweepSpec};
use crowdfind::owner::Scheme;

#[derive(Parser)]
#[command(name = "crowdfind", about = "Crowdsourced object-finding protocol simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (key = value lines); defaults apply when absent
    #[arg(long)]
    config: Option<PathBuf>,

    /// Root seed override
    #[arg(long)]
    seed: Option<u64>,

    /// Replicates override
    #[arg(long)]
    replicates: Option<usize>,

    /// Output directory for CSV files
    #[arg(long, default_value = ".")]
    out: PathBuf,

    /// Scheme override
    #[arg(long)]
    scheme: Option<Scheme>,

    /// Use the density-preserving desk-scale geometry (625 detectors,
    /// 500 m side) instead of the full-scale defaults
    #[arg(long)]
    desk: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the configured replicates of one experiment
    Run {
        #[command(flatten)]
        common: CommonOpts,

        /// Also write per-round owner traces (round, gamma, candidates,
        /// positions) to this file
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep one parameter over a list of values
    Sweep {
        #[command(flatten)]
        common: CommonOpts,

        /// Parameter to sweep: p_thre|k|f|omega|q|C
        #[arg(long)]
        param: String,

        /// Comma-separated values to visit
        #[arg(long)]
        values: String,
    },
    /// Print the closed-form versus oracle validation table
    ValidateAnalysis {
        /// Output directory for the CSV copy
        #[arg(long, default_value = ".")]
        out: PathBuf,

        /// Seed for the Monte-Carlo oracles
        #[arg(long, default_value_t = 0x0a11_ce5e)]
        seed: u64,
    },
    /// Run the false-positive experiment (no tag present)
    FpExperiment {
        #[command(flatten)]
        common: CommonOpts,

        /// Fixed number of polling rounds per run
        #[arg(long, default_value_t = 3)]
        rounds: u32,
    },
}

fn load_config(common: &CommonOpts) -> anyhow::Result<SimConfig> {
    let mut config = match &common.config {
        Some(path) => SimConfig::parse(&fs::read_to_string(path)?)?,
        None if common.desk => SimConfig::desk_defaults(),
        None => SimConfig::full_scale_defaults(),
    };
    if common.desk && common.config.is_some() {
        config.detectors = 625;
        config.side = 500.0;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(replicates) = common.replicates {
        config.replicates = replicates;
    }
    if let Some(scheme) = common.scheme {
        config.scheme = scheme;
    }
    config.validate()?;
    Ok(config)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn print_validation(rows: &[ValidationRow]) {
    println!(
        "{:<55} {:>14} {:>14} {:>12} {:>10}",
        "formula", "closed_form", "oracle", "|delta|", "verdict"
    );
    for row in rows {
        println!(
            "{:<55} {:>14.8} {:>14.8} {:>12.3e} {:>10}",
            row.formula, row.closed_form, row.oracle, row.abs_delta, row.verdict()
        );
    }
}

fn validation_csv(rows: &[ValidationRow]) -> String {
    let mut out = String::new();
    out.push_str(CSV_SCHEMA_COMMENT);
    out.push('\n');
    out.push_str("formula,closed_form,oracle,abs_delta,tolerance,verdict\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.formula.replace(',', ";"),
            row.closed_form,
            row.oracle,
            row.abs_delta,
            row.tolerance,
            row.verdict()
        ));
    }
    out
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, trace } => {
            let config = load_config(&common)?;
            let reports = run_replicates(&config)?;
            let records: Vec<RunRecord> = reports
                .iter()
                .enumerate()
                .map(|(i, r)| RunRecord::from_report(i, r))
                .collect();
            let csv = runs_to_csv(&records);
            let path = write_out(&common.out, "runs.csv", &csv)?;
            if let Some(trace_path) = trace {
                let mut lines = String::new();
                for (i, report) in reports.iter().enumerate() {
                    for summary in &report.rounds_log {
                        lines.push_str(&format!(
                            "replicate={} round={} gamma={} candidates={} positions={:?}\n",
                            i,
                            summary.round,
                            summary
                                .gamma
                                .map(|g| g.to_string())
                                .unwrap_or_else(|| "-".into()),
                            summary.candidates_after.len(),
                            summary.positions.as_deref().unwrap_or(&[])
                        ));
                    }
                }
                fs::write(&trace_path, lines)?;
            }
            let located = reports.iter().filter(|r| r.metrics.located).count();
            println!(
                "{} replicates, located {}/{}, csv: {}",
                reports.len(),
                located,
                reports.len(),
                path.display()
            );
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let config = load_config(&common)?;
            let param = param.parse()?;
            let values = values
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()?;
            let spec = SweepSpec {
                param,
                values,
                replicates: config.replicates,
            };
            let table = run_sweep(&spec, &config)?;
            let csv = table.to_csv();
            let name = format!("sweep_{}.csv", spec.param.key());
            let path = write_out(&common.out, &name, &csv)?;
            println!("{} points, csv: {}", table.points.len(), path.display());
        }
        Command::ValidateAnalysis { out, seed } => {
            let rows = validation_table(seed);
            print_validation(&rows);
            let path = write_out(&out, "validate_analysis.csv", &validation_csv(&rows))?;
            println!("csv: {}", path.display());
        }
        Command::FpExperiment { common, rounds } => {
            let config = load_config(&common)?;
            let summary = crowdfind::harness::fp_batch(&config, rounds)?;
            let csv = format!(
                "{CSV_SCHEMA_COMMENT}\nruns,triggered,frequency,closed_form\n{},{},{},{}\n",
                summary.runs, summary.triggered, summary.frequency, summary.closed_form
            );
            let path = write_out(&common.out, "fp_experiment.csv", &csv)?;
            println!(
                "false positives: {}/{} ({:.5}), closed form {:.5}, csv: {}",
                summary.triggered,
                summary.runs,
                summary.frequency,
                summary.closed_form,
                path.display()
            );
        }
    }
    Ok(())
}
