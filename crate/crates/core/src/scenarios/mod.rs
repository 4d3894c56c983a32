//! Synthetic experiments and the metrics used to score them.

pub mod ingest;
pub mod lorenz96;
pub mod metrics;
pub mod mlp;
pub mod regression;
pub mod tracking;

pub use ingest::{load_csv, Dataset};
pub use lorenz96::{lorenz96_drift, lorenz96_generate, rk4_step, Lorenz96Config, Lorenz96Data};
pub use metrics::{bootstrap_mean_ci, median, metric_j, metric_lt, metric_rmedse, BootstrapCi, TrialReport};
pub use mlp::{mlp_apply, mlp_jacobian, MlpObservation, MlpSpec};
pub use regression::{
    regression1d_stream, regression1d_value, ParametricObservation, Regression1dConfig, RegressionSample, THETA_STAR,
};
pub use tracking::{tracking2d_generate, Tracking2dConfig, TrackingData, TrackingVariant};
