pub mod baselines;
pub mod ensemble;
pub mod error;
pub mod gaussian;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod robustness;
pub mod scenarios;
pub mod weights;

pub use error::{Error, Result};
pub use linalg::{gaussian_kl, mahalanobis_sq, sample_mvn, GaussianBelief, SpdMatrix};
pub use rng::RngStream;
pub use weights::{compute_weight, compute_weight_vector, map_weight_oracle, WeightSpec};
