//! Experiment orchestration: configuration, seeded replicate execution,
//! parameter sweeps, and CSV emission.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::SimConfig;
pub use run::{
    fp_batch, homogenized_rank_trial, run_once, run_replicates, FpSummary, Metrics, RoundSummary,
    RunReport,
};
pub use sweep::{run_sweep, RunRecord, SweepParam, SweepSpec, SweepTable};
