//! Scenario-driven runs that write plot data as CSV.
//!
//! Each CSV starts with a single header line of `name [unit]` columns, where
//! `time` and `demand` stand for the model's time and demand units.

mod runner;
mod scenario;

pub use runner::{
    confidence_bands, convergence_study, run_scenario, write_bands_csv, write_convergence_csv,
    BandMethod, BandTable, ConvergenceRow, RunSummary,
};
pub use scenario::{
    resolve, Artifact, DemandMode, DemandOverrides, GridOverrides, JumpHeightSpec, MeanSpec,
    Scenario, ScenarioOverrides, UpdateOverrides, PRESET_NAMES,
};
