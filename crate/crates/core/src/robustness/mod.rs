//! Posterior influence diagnostics.

pub mod assignment;
pub mod pif;

pub use assignment::{min_cost_assignment, pif_ensemble_w2, W2Distance, EXACT_W2_LIMIT};
pub use pif::{pif_gaussian, pif_grid, GridSpec, PifContext, PifGrid, PifOrientation, PifProblem};
