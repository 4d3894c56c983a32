//! Comparison filters: variational inverse-Wishart and Beta-Bernoulli
//! updates, and Adam-based online gradient descent.

pub mod adam;
pub mod digamma;
pub mod kfb;
pub mod kfiw;

pub use adam::{adam_ogd_step, AdamState};
pub use digamma::digamma;
pub use kfb::{kfb_update, KfBConfig, KfbOutcome};
pub use kfiw::{kfiw_update, KfIwConfig};
