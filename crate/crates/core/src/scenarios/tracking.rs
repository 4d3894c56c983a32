//! Constant-velocity target in the plane observed through noisy positions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{LinearDynamics, LinearObservation};
use crate::linalg::GaussianBelief;
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TrackingVariant {
    Clean,
    /// Gamma-scaled measurement noise. `nu = inf` pins the scale to 1.
    Student { nu: f64 },
    /// With probability `p_eps` the measurement mean becomes `2 H θ`.
    Mixture { p_eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tracking2dConfig {
    pub dt: f64,
    pub q: f64,
    pub r: f64,
    pub steps: usize,
    pub variant: TrackingVariant,
    pub initial_state: [f64; 4],
    pub prior_var: f64,
}

impl Default for Tracking2dConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            q: 0.1,
            r: 10.0,
            steps: 1000,
            variant: TrackingVariant::Clean,
            initial_state: [0.0, 0.0, 1.0, 1.0],
            prior_var: 1.0,
        }
    }
}

impl Tracking2dConfig {
    pub fn student(nu: f64) -> Self {
        Self {
            variant: TrackingVariant::Student { nu },
            ..Self::default()
        }
    }

    pub fn mixture(p_eps: f64) -> Self {
        Self {
            variant: TrackingVariant::Mixture { p_eps },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.q >= 0.0 && self.q.is_finite() && self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParameter("q and r must be finite and non-negative".into()));
        }
        if !(self.prior_var > 0.0 && self.prior_var.is_finite()) {
            return Err(Error::InvalidParameter("prior_var must be positive".into()));
        }
        if self.initial_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial_state".into()));
        }
        match self.variant {
            TrackingVariant::Clean => {}
            TrackingVariant::Student { nu } => {
                if !(nu > 0.0) {
                    return Err(Error::InvalidParameter(format!("nu = {nu} must be positive")));
                }
            }
            TrackingVariant::Mixture { p_eps } => {
                if !(0.0..=1.0).contains(&p_eps) {
                    return Err(Error::InvalidParameter(format!("p_eps = {p_eps} outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn transition(&self) -> DMatrix<f64> {
        let mut f = DMatrix::identity(4, 4);
        f[(0, 2)] = self.dt;
        f[(1, 3)] = self.dt;
        f
    }

    pub fn projection(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        h
    }

    /// The filter's model. Zero noise levels are jittered to stay SPD.
    pub fn model(&self) -> Result<(LinearDynamics, LinearObservation)> {
        self.validate()?;
        let dynamics = LinearDynamics::new(self.transition(), DMatrix::identity(4, 4) * self.q)?;
        let obs = LinearObservation::new(self.projection(), DMatrix::identity(2, 2) * self.r.max(1e-12))?;
        Ok((dynamics, obs))
    }

    pub fn prior(&self) -> Result<GaussianBelief> {
        GaussianBelief::isotropic(DVector::from_row_slice(&self.initial_state), self.prior_var)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackingData {
    /// `T x 4` rows of (x, y, vx, vy).
    pub states: DMatrix<f64>,
    /// `T x 2` observed positions.
    pub measurements: DMatrix<f64>,
    pub outliers: Vec<bool>,
}

impl TrackingData {
    pub fn measurement(&self, t: usize) -> DVector<f64> {
        self.measurements.row(t).transpose()
    }

    pub fn state(&self, t: usize) -> DVector<f64> {
        self.states.row(t).transpose()
    }
}

/// Simulates `cfg.steps` steps starting from `cfg.initial_state`.
///
/// Draw order per step: four state-noise normals, then the variant draw
/// (gamma or bernoulli, if any), then two measurement-noise normals.
pub fn tracking2d_generate(cfg: &Tracking2dConfig, rng: &mut RngStream) -> Result<TrackingData> {
    cfg.validate()?;
    let f = cfg.transition();
    let (sq, sr) = (cfg.q.sqrt(), cfg.r.sqrt());
    let mut states = DMatrix::zeros(cfg.steps, 4);
    let mut measurements = DMatrix::zeros(cfg.steps, 2);
    let mut outliers = vec![false; cfg.steps];
    let mut theta = DVector::from_row_slice(&cfg.initial_state);
    for t in 0..cfg.steps {
        theta = &f * &theta + rng.standard_normal_vector(4) * sq;
        let mut scale = 1.0;
        let mut shift = 1.0;
        match cfg.variant {
            TrackingVariant::Clean => {}
            TrackingVariant::Student { nu } => {
                if nu.is_finite() {
                    scale = rng.gamma(nu / 2.0, nu / 2.0)?;
                }
            }
            TrackingVariant::Mixture { p_eps } => {
                if rng.bernoulli(p_eps) {
                    shift = 2.0;
                    outliers[t] = true;
                }
            }
        }
        let noise_sd = sr / scale.sqrt();
        for i in 0..2 {
            measurements[(t, i)] = shift * theta[i] + noise_sd * rng.standard_normal();
        }
        states.set_row(t, &theta.transpose());
    }
    Ok(TrackingData {
        states,
        measurements,
        outliers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_constant_velocity() {
        let cfg = Tracking2dConfig {
            q: 0.0,
            r: 0.0,
            steps: 50,
            initial_state: [1.0, -2.0, 0.5, 3.0],
            ..Tracking2dConfig::default()
        };
        let data = tracking2d_generate(&cfg, &mut RngStream::new(3, 0)).unwrap();
        for t in 0..50 {
            let k = (t + 1) as f64 * cfg.dt;
            assert!((data.measurements[(t, 0)] - (1.0 + k * 0.5)).abs() < 1e-12);
            assert!((data.measurements[(t, 1)] - (-2.0 + k * 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_flag_rate() {
        let cfg = Tracking2dConfig {
            steps: 10_000,
            ..Tracking2dConfig::mixture(0.05)
        };
        let data = tracking2d_generate(&cfg, &mut RngStream::new(11, 0)).unwrap();
        let frac = data.outliers.iter().filter(|&&o| o).count() as f64 / 1e4;
        let bound = 3.0 * (0.05f64 * 0.95 / 1e4).sqrt();
        assert!((frac - 0.05).abs() <= bound, "{frac}");
    }

    #[test]
    fn mixture_outliers_double_the_mean() {
        let cfg = Tracking2dConfig {
            r: 0.0,
            steps: 200,
            ..Tracking2dConfig::mixture(0.3)
        };
        let data = tracking2d_generate(&cfg, &mut RngStream::new(2, 0)).unwrap();
        for t in 0..cfg.steps {
            let k = if data.outliers[t] { 2.0 } else { 1.0 };
            assert!((data.measurements[(t, 1)] - k * data.states[(t, 1)]).abs() < 1e-12);
        }
    }

    #[test]
    fn student_unit_scale_is_gaussian() {
        let a = tracking2d_generate(&Tracking2dConfig::student(f64::INFINITY), &mut RngStream::new(5, 1)).unwrap();
        let b = tracking2d_generate(&Tracking2dConfig::default(), &mut RngStream::new(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn student_errors_are_heavy_tailed() {
        let cfg = Tracking2dConfig {
            q: 0.0,
            steps: 50_000,
            ..Tracking2dConfig::student(2.01)
        };
        let data = tracking2d_generate(&cfg, &mut RngStream::new(8, 0)).unwrap();
        let errs: Vec<f64> = (0..cfg.steps)
            .flat_map(|t| (0..2).map(move |i| (t, i)))
            .map(|(t, i)| data.measurements[(t, i)] - data.states[(t, i)])
            .collect();
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let m2 = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        let m4 = errs.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / n;
        assert!(m4 / (m2 * m2) - 3.0 > 0.0);
    }

    #[test]
    fn rejects_bad_probability() {
        assert!(Tracking2dConfig::mixture(1.5).validate().is_err());
        assert!(Tracking2dConfig::student(0.0).validate().is_err());
    }

    #[test]
    fn model_matches_generator_matrices() {
        let cfg = Tracking2dConfig::default();
        let (dyn_, obs) = cfg.model().unwrap();
        assert_eq!(dyn_.f(), &cfg.transition());
        assert_eq!(obs.h(), &cfg.projection());
        assert!((obs.r().matrix()[(0, 0)] - 10.0).abs() < 1e-15);
    }
}
