//! Experiment runner behind the `wolf` command-line tool.

pub mod config;
pub mod filters;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, RegressionModel, RegressionSetup, RunConfig, Scenario, ScenarioKind, SweepConfig};
pub use filters::{ensemble_step, gaussian_step, FilterKind, FilterSpec, GaussianFilterState, Observation};
pub use report::{summarise, summarise_sweep, write_experiment, write_pif, write_sweep, ReportError, SummaryRow};
pub use run::{run_experiment, run_pif, run_sweep, run_trial, ExperimentResult, PifResult, SweepResult, TrialResult, TrialStatus};
