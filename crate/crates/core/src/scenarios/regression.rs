//! One-dimensional nonlinear regression stream with uniform outliers.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::MeasurementModel;
use crate::linalg::SpdMatrix;
use crate::rng::RngStream;

pub const THETA_STAR: [f64; 4] = [0.2, -10.0, 1.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Regression1dConfig {
    pub steps: usize,
    pub p_eps: f64,
    pub sorted: bool,
    /// Variance of the Gaussian noise on clean samples.
    pub noise_var: f64,
    pub x_half_width: f64,
    pub outlier_half_width: f64,
    pub theta: [f64; 4],
}

impl Default for Regression1dConfig {
    fn default() -> Self {
        Self {
            steps: 1500,
            p_eps: 0.05,
            sorted: false,
            noise_var: 3.0,
            x_half_width: 3.0,
            outlier_half_width: 40.0,
            theta: THETA_STAR,
        }
    }
}

impl Regression1dConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_eps) {
            return Err(Error::InvalidParameter(format!("p_eps = {} outside [0, 1]", self.p_eps)));
        }
        let scales = [self.noise_var, self.x_half_width, self.outlier_half_width];
        if scales.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("noise and range parameters must be non-negative".into()));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegressionSample {
    pub x: f64,
    pub y: f64,
    pub outlier: bool,
}

/// `θ₁x − θ₂cos(θ₃πx) + θ₄x³`.
pub fn regression1d_value(theta: &[f64], x: f64) -> f64 {
    theta[0] * x - theta[1] * (theta[2] * PI * x).cos() + theta[3] * x.powi(3)
}

/// Draws `cfg.steps` samples. In sorted mode the same samples are emitted in
/// order of increasing `x`.
pub fn regression1d_stream(cfg: &Regression1dConfig, rng: &mut RngStream) -> Result<Vec<RegressionSample>> {
    cfg.validate()?;
    let sd = cfg.noise_var.sqrt();
    let mut out: Vec<RegressionSample> = (0..cfg.steps)
        .map(|_| {
            let x = rng.uniform(-cfg.x_half_width, cfg.x_half_width);
            let clean = regression1d_value(&cfg.theta, x) + sd * rng.standard_normal();
            if rng.bernoulli(cfg.p_eps) {
                let y = rng.uniform(-cfg.outlier_half_width, cfg.outlier_half_width);
                RegressionSample { x, y, outlier: true }
            } else {
                RegressionSample {
                    x,
                    y: clean,
                    outlier: false,
                }
            }
        })
        .collect();
    if cfg.sorted {
        out.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    Ok(out)
}

/// The generating curve with unknown coefficients, evaluated at a fixed input.
#[derive(Clone, Debug)]
pub struct ParametricObservation {
    pub x: f64,
    r: SpdMatrix,
}

impl ParametricObservation {
    pub fn new(x: f64, r: f64) -> Result<Self> {
        Ok(Self {
            x,
            r: SpdMatrix::new(DMatrix::from_element(1, 1, r))?,
        })
    }
}

impl MeasurementModel for ParametricObservation {
    fn obs_dim(&self) -> usize {
        1
    }

    fn predict_obs(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("ParametricObservation state", 4, theta.len())?;
        Ok(DVector::from_element(1, regression1d_value(theta.as_slice(), self.x)))
    }

    fn obs_jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("ParametricObservation state", 4, theta.len())?;
        let x = self.x;
        let arg = theta[2] * PI * x;
        Ok(DMatrix::from_row_slice(
            1,
            4,
            &[x, -arg.cos(), theta[1] * arg.sin() * PI * x, x.powi(3)],
        ))
    }

    fn obs_cov(&self) -> &SpdMatrix {
        &self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::jacobian;

    #[test]
    fn clean_value_at_origin() {
        assert!((regression1d_value(&THETA_STAR, 0.0) - 10.0).abs() < 1e-15);
    }

    #[test]
    fn sorted_stream_is_monotone() {
        let cfg = Regression1dConfig {
            sorted: true,
            ..Regression1dConfig::default()
        };
        let s = regression1d_stream(&cfg, &mut RngStream::new(9, 0)).unwrap();
        assert_eq!(s.len(), 1500);
        assert!(s.windows(2).all(|w| w[0].x <= w[1].x));
    }

    #[test]
    fn sorting_only_permutes() {
        let base = Regression1dConfig::default();
        let sorted = Regression1dConfig {
            sorted: true,
            ..base.clone()
        };
        let mut a = regression1d_stream(&base, &mut RngStream::new(2, 2)).unwrap();
        let b = regression1d_stream(&sorted, &mut RngStream::new(2, 2)).unwrap();
        a.sort_by(|p, q| p.x.total_cmp(&q.x));
        assert_eq!(a, b);
    }

    #[test]
    fn no_flags_without_contamination() {
        let cfg = Regression1dConfig {
            p_eps: 0.0,
            ..Regression1dConfig::default()
        };
        let s = regression1d_stream(&cfg, &mut RngStream::new(1, 0)).unwrap();
        assert!(s.iter().all(|p| !p.outlier));
        assert!(s.iter().all(|p| p.x.abs() <= 3.0));
    }

    #[test]
    fn outliers_stay_in_range() {
        let cfg = Regression1dConfig {
            p_eps: 0.5,
            ..Regression1dConfig::default()
        };
        let s = regression1d_stream(&cfg, &mut RngStream::new(1, 0)).unwrap();
        assert!(s.iter().filter(|p| p.outlier).all(|p| p.y.abs() <= 40.0));
        assert!(s.iter().any(|p| p.outlier));
    }

    #[test]
    fn parametric_jacobian_matches_differences() {
        let obs = ParametricObservation::new(1.3, 3.0).unwrap();
        let theta = DVector::from_vec(vec![0.4, -7.0, 0.8, 1.2]);
        let analytic = obs.obs_jacobian(&theta).unwrap();
        let numeric = jacobian(&|t: &DVector<f64>| obs.predict_obs(t).unwrap(), &theta).unwrap();
        assert!((analytic - numeric).amax() < 1e-6);
    }
}
