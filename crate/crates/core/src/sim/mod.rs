//! Monte Carlo sweeps with per-trial seeding and CSV output.

pub mod config;
pub mod harness;
pub mod table;

pub use config::{Baseline, Compensation, Preset, SimConfig};
pub use harness::{
    default_probe_grid, evaluate_trial, methods_for, run_beampattern, run_se_vs_bandwidth,
    run_se_vs_snr, Method, Trial, TrialOutcome, Workspace,
};
pub use table::{config_from_csv, BeampatternReport, DesignDump, ResultRow, ResultTable};
