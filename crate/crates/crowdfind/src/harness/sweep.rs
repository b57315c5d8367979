//! Parameter sweeps and deterministic CSV emission.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::config::SimConfig;
use crate::harness::run::{run_once, RunReport};
use crate::rng::run_seed;

/// Sweepable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    PThre,
    HashCount,
    FrameLen,
    Polled,
    DummyProb,
    Detectors,
}

impl SweepParam {
    pub fn key(&self) -> &'static str {
        match self {
            SweepParam::PThre => "p_thre",
            SweepParam::HashCount => "k",
            SweepParam::FrameLen => "f",
            SweepParam::Polled => "omega",
            SweepParam::DummyProb => "q",
            SweepParam::Detectors => "C",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_thre" => Ok(SweepParam::PThre),
            "k" => Ok(SweepParam::HashCount),
            "f" => Ok(SweepParam::FrameLen),
            "omega" => Ok(SweepParam::Polled),
            "q" => Ok(SweepParam::DummyProb),
            "C" => Ok(SweepParam::Detectors),
            other => Err(Error::invalid(format!(
                "unknown sweep parameter '{other}' (p_thre|k|f|omega|q|C)"
            ))),
        }
    }
}

/// One parameter sweep: values to visit and replicates per point.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub replicates: usize,
}

fn require_count(param: &SweepParam, value: f64) -> Result<usize> {
    if value < 0.0 || value.fract() != 0.0 {
        return Err(Error::config(
            param.key(),
            format!("value {value} must be a non-negative integer"),
        ));
    }
    Ok(value as usize)
}

/// Applies one sweep value to a base configuration and validates it.
pub fn apply_value(base: &SimConfig, param: SweepParam, value: f64) -> Result<SimConfig> {
    let mut config = *base;
    match param {
        SweepParam::PThre => config.p_thre = value,
        SweepParam::HashCount => config.hash_count = require_count(&param, value)?,
        SweepParam::FrameLen => config.frame_len = require_count(&param, value)?,
        SweepParam::Polled => config.polled = require_count(&param, value)?,
        SweepParam::DummyProb => config.dummy_prob = value,
        SweepParam::Detectors => config.detectors = require_count(&param, value)?,
    }
    config.validate()?;
    Ok(config)
}

/// Flat per-run record used for CSV rows and aggregation.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub replicate: usize,
    pub seed: u64,
    pub scheme: &'static str,
    pub rounds: f64,
    pub settle_round: f64,
    pub tag_comm_bits: f64,
    pub tag_hash_ops: f64,
    pub detector_comm_bits: f64,
    pub owner_msgs: f64,
    pub terminal_candidates: f64,
    pub located: f64,
    pub fp_triggered: f64,
    pub clamped_gamma_rounds: f64,
    pub norm_rank_bit_ones: Option<f64>,
    pub norm_rank_p_value: Option<f64>,
}

impl RunRecord {
    pub fn from_report(replicate: usize, report: &RunReport) -> Self {
        let m = &report.metrics;
        RunRecord {
            replicate,
            seed: report.run_seed,
            scheme: report.scheme.name(),
            rounds: m.rounds as f64,
            settle_round: m.settle_round as f64,
            tag_comm_bits: m.tag_comm_bits as f64,
            tag_hash_ops: m.tag_hash_ops as f64,
            detector_comm_bits: m.detector_comm_bits as f64,
            owner_msgs: m.owner_msgs as f64,
            terminal_candidates: m.terminal_candidates as f64,
            located: if m.located { 1.0 } else { 0.0 },
            fp_triggered: if m.fp_triggered { 1.0 } else { 0.0 },
            clamped_gamma_rounds: m.clamped_gamma_rounds as f64,
            norm_rank_bit_ones: report.norm_rank_bit_ones,
            norm_rank_p_value: report.norm_rank_p_value,
        }
    }

    fn numeric_fields(&self) -> [f64; 10] {
        [
            self.rounds,
            self.settle_round,
            self.tag_comm_bits,
            self.tag_hash_ops,
            self.detector_comm_bits,
            self.owner_msgs,
            self.terminal_candidates,
            self.located,
            self.fp_triggered,
            self.clamped_gamma_rounds,
        ]
    }
}

/// Aggregate over one sweep point. Computed from records sorted by
/// replicate index, so execution order never affects the result.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub mean: [f64; 10],
    pub stderr: [f64; 10],
    pub mean_rank_bit_ones: Option<f64>,
    pub mean_rank_p_value: Option<f64>,
}

pub fn aggregate(records: &[RunRecord]) -> Aggregate {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    let n = sorted.len().max(1) as f64;
    let mut mean = [0.0; 10];
    for r in &sorted {
        for (m, v) in mean.iter_mut().zip(r.numeric_fields()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = [0.0; 10];
    for r in &sorted {
        for ((v, m), x) in var.iter_mut().zip(mean).zip(r.numeric_fields()) {
            *v += (x - m) * (x - m);
        }
    }
    let mut stderr = [0.0; 10];
    if sorted.len() > 1 {
        for (s, v) in stderr.iter_mut().zip(var) {
            *s = (v / (n - 1.0) / n).sqrt();
        }
    }
    let mean_opt = |get: fn(&RunRecord) -> Option<f64>| {
        let values: Vec<f64> = sorted.iter().filter_map(|r| get(r)).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    Aggregate {
        mean,
        stderr,
        mean_rank_bit_ones: mean_opt(|r| r.norm_rank_bit_ones),
        mean_rank_p_value: mean_opt(|r| r.norm_rank_p_value),
    }
}

/// One sweep point with its per-replicate records and aggregate.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub records: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

/// Completed sweep.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub param: SweepParam,
    pub points: Vec<SweepPoint>,
}

/// Runs the sweep. Every point is validated before any run starts.
pub fn run_sweep(spec: &SweepSpec, base: &SimConfig) -> Result<SweepTable> {
    let mut configs = Vec::with_capacity(spec.values.len());
    for &value in &spec.values {
        let mut config = apply_value(base, spec.param, value)?;
        config.replicates = spec.replicates;
        configs.push((value, config));
    }
    let mut points = Vec::with_capacity(configs.len());
    for (value, config) in configs {
        let records: Result<Vec<RunRecord>> = (0..config.replicates)
            .into_par_iter()
            .map(|r| {
                run_once(&config, run_seed(config.seed, r as u64))
                    .map(|report| RunRecord::from_report(r, &report))
            })
            .collect();
        let mut records = records?;
        records.sort_by_key(|r| r.replicate);
        let aggregate = aggregate(&records);
        points.push(SweepPoint {
            value,
            records,
            aggregate,
        });
    }
    Ok(SweepTable {
        param: spec.param,
        points,
    })
}

pub const CSV_SCHEMA_COMMENT: &str = "# crowdfind csv v1";

const COLUMNS: [&str; 17] = [
    "param",
    "value",
    "replicate",
    "scheme",
    "seed",
    "rounds",
    "settle_round",
    "tag_comm_bits",
    "tag_hash_ops",
    "detector_comm_bits",
    "owner_msgs",
    "terminal_candidates",
    "located",
    "fp_triggered",
    "clamped_gamma_rounds",
    "norm_rank_bit_ones",
    "norm_rank_p_value",
];

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| format!("{v}")).unwrap_or_default()
}

impl SweepTable {
    /// Deterministic CSV: a schema comment line, one header row, one row
    /// per (value, replicate), then mean and stderr rows per value.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_SCHEMA_COMMENT);
        out.push('\n');
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        let key = self.param.key();
        for point in &self.points {
            for r in &point.records {
                out.push_str(&format!(
                    "{key},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    point.value,
                    r.replicate,
                    r.scheme,
                    r.seed,
                    r.rounds,
                    r.settle_round,
                    r.tag_comm_bits,
                    r.tag_hash_ops,
                    r.detector_comm_bits,
                    r.owner_msgs,
                    r.terminal_candidates,
                    r.located,
                    r.fp_triggered,
                    r.clamped_gamma_rounds,
                    fmt_opt(r.norm_rank_bit_ones),
                    fmt_opt(r.norm_rank_p_value),
                ));
            }
            let a = &point.aggregate;
            for (label, fields) in [("mean", &a.mean), ("stderr", &a.stderr)] {
                out.push_str(&format!(
                    "{key},{},{label},,,{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    point.value,
                    fields[0],
                    fields[1],
                    fields[2],
                    fields[3],
                    fields[4],
                    fields[5],
                    fields[6],
                    fields[7],
                    fields[8],
                    fields[9],
                    if label == "mean" {
                        fmt_opt(a.mean_rank_bit_ones)
                    } else {
                        String::new()
                    },
                    if label == "mean" {
                        fmt_opt(a.mean_rank_p_value)
                    } else {
                        String::new()
                    },
                ));
            }
        }
        out
    }
}

/// CSV for a plain replicate batch (the `run` subcommand).
pub fn runs_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::new();
    out.push_str(CSV_SCHEMA_COMMENT);
    out.push('\n');
    out.push_str(&COLUMNS[2..].join(","));
    out.push('\n');
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.replicate);
    for r in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.replicate,
            r.scheme,
            r.seed,
            r.rounds,
            r.settle_round,
            r.tag_comm_bits,
            r.tag_hash_ops,
            r.detector_comm_bits,
            r.owner_msgs,
            r.terminal_candidates,
            r.located,
            r.fp_triggered,
            r.clamped_gamma_rounds,
            fmt_opt(r.norm_rank_bit_ones),
            fmt_opt(r.norm_rank_p_value),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_base() -> SimConfig {
        let mut config = SimConfig::desk_defaults();
        config.detectors = 40;
        config.side = 200.0;
        config.replicates = 3;
        config
    }

    #[test]
    fn empty_values_give_header_only_csv() {
        let spec = SweepSpec {
            param: SweepParam::PThre,
            values: vec![],
            replicates: 2,
        };
        let table = run_sweep(&spec, &tiny_base()).unwrap();
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], CSV_SCHEMA_COMMENT);
        assert!(lines[1].starts_with("param,value,replicate"));
    }

    #[test]
    fn invalid_values_rejected_before_running() {
        let spec = SweepSpec {
            param: SweepParam::Polled,
            values: vec![15.0, 400.0],
            replicates: 1,
        };
        assert!(run_sweep(&spec, &tiny_base()).is_err());
        let spec = SweepSpec {
            param: SweepParam::HashCount,
            values: vec![2.5],
            replicates: 1,
        };
        assert!(run_sweep(&spec, &tiny_base()).is_err());
    }

    #[test]
    fn sweep_csv_is_reproducible() {
        let spec = SweepSpec {
            param: SweepParam::DummyProb,
            values: vec![0.5, 0.9],
            replicates: 3,
        };
        let a = run_sweep(&spec, &tiny_base()).unwrap().to_csv();
        let b = run_sweep(&spec, &tiny_base()).unwrap().to_csv();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregation_ignores_record_order() {
        let spec = SweepSpec {
            param: SweepParam::DummyProb,
            values: vec![0.9],
            replicates: 5,
        };
        let table = run_sweep(&spec, &tiny_base()).unwrap();
        let records = &table.points[0].records;
        let forward = aggregate(records);
        let mut shuffled: Vec<RunRecord> = records.clone();
        shuffled.reverse();
        shuffled.swap(0, 2);
        let back = aggregate(&shuffled);
        assert_eq!(forward.mean, back.mean);
        assert_eq!(forward.stderr, back.stderr);
    }
}
