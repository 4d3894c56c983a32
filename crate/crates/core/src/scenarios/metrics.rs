//! Error metrics, percentile bootstrap and per-trial records.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// Per-component root of the summed squared error (no `1/T` factor).
pub fn metric_j(states: &DMatrix<f64>, means: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_dim("metric_j rows", states.nrows(), means.nrows())?;
    check_dim("metric_j cols", states.ncols(), means.ncols())?;
    Ok(DVector::from_fn(states.ncols(), |i, _| {
        (states.column(i) - means.column(i)).norm_squared().sqrt()
    }))
}

/// Median with midpoint averaging for even lengths. Errors on empty input.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn metric_rmedse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_dim("metric_rmedse", y.len(), yhat.len())?;
    let sq: Vec<f64> = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).collect();
    Ok(median(&sq)?.sqrt())
}

pub fn metric_lt(state: &DVector<f64>, mean: &DVector<f64>) -> Result<f64> {
    check_dim("metric_lt", state.len(), mean.len())?;
    if state.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(((state - mean).norm_squared() / state.len() as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapCi {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

/// Percentile bootstrap of the mean.
pub fn bootstrap_mean_ci(samples: &[f64], b: usize, level: f64, rng: &mut RngStream) -> Result<BootstrapCi> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if b < 100 {
        return Err(Error::InvalidParameter(format!("B = {b} must be at least 100")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("level = {level} outside (0, 1)")));
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut means: Vec<f64> = (0..b)
        .map(|_| (0..n).map(|_| samples[rng.index(n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCi {
        mean,
        low: quantile_sorted(&means, alpha),
        high: quantile_sorted(&means, 1.0 - alpha),
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Step-by-step record of one filter on one trial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialReport {
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
    pub outliers: Vec<bool>,
    pub means: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
    pub step_time_ns: Vec<u64>,
}

impl TrialReport {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            states: Vec::with_capacity(n),
            measurements: Vec::with_capacity(n),
            outliers: Vec::with_capacity(n),
            means: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            step_time_ns: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, state: DVector<f64>, y: DVector<f64>, outlier: bool, mean: DVector<f64>, weight: f64, ns: u64) {
        self.states.push(state);
        self.measurements.push(y);
        self.outliers.push(outlier);
        self.means.push(mean);
        self.weights.push(weight);
        self.step_time_ns.push(ns);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// True when every per-step array has the same length.
    pub fn is_consistent(&self) -> bool {
        let n = self.states.len();
        [
            self.measurements.len(),
            self.outliers.len(),
            self.means.len(),
            self.weights.len(),
            self.step_time_ns.len(),
        ]
        .iter()
        .all(|&l| l == n)
    }

    pub fn state_matrix(&self) -> DMatrix<f64> {
        stack(&self.states)
    }

    pub fn mean_matrix(&self) -> DMatrix<f64> {
        stack(&self.means)
    }
}

fn stack(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |t, i| rows[t][i])
}
