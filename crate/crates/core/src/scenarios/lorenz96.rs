//! Stochastically forced Lorenz96 system with spike outliers.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::NonlinearModel;
use crate::linalg::GaussianBelief;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lorenz96Config {
    pub dim: usize,
    pub dt: f64,
    pub steps: usize,
    pub forcing_mean: f64,
    pub forcing_std: f64,
    pub obs_std: f64,
    pub p_eps: f64,
    pub outlier_value: f64,
    pub init_std: f64,
    pub particles: usize,
}

impl Default for Lorenz96Config {
    fn default() -> Self {
        Self {
            dim: 40,
            dt: 0.05,
            steps: 60,
            forcing_mean: 8.0,
            forcing_std: 1.0,
            obs_std: 1.0,
            p_eps: 0.01,
            outlier_value: 100.0,
            init_std: 1.0,
            particles: 500,
        }
    }
}

impl Lorenz96Config {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 {
            return Err(Error::InvalidParameter(format!("dim = {} must be at least 4", self.dim)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(0.0..=1.0).contains(&self.p_eps) {
            return Err(Error::InvalidParameter(format!("p_eps = {} outside [0, 1]", self.p_eps)));
        }
        let nonneg = [self.forcing_std, self.obs_std, self.init_std];
        if nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("noise scales must be finite and non-negative".into()));
        }
        if !(self.forcing_mean.is_finite() && self.outlier_value.is_finite()) {
            return Err(Error::NonFinite("forcing_mean or outlier_value".into()));
        }
        if self.particles < 2 {
            return Err(Error::InvalidParameter("particles must be at least 2".into()));
        }
        Ok(())
    }

    /// Filter model: RK4 with the mean forcing, `Q = (dt * forcing_std)^2 I`,
    /// identity observation with `R = obs_std^2 I`.
    pub fn filter_model(&self) -> Result<NonlinearModel> {
        self.validate()?;
        let (d, dt) = (self.dim, self.dt);
        let forcing = DVector::from_element(d, self.forcing_mean);
        let f = Arc::new(move |x: &DVector<f64>| {
            let drift = |z: &DVector<f64>| lorenz96_drift(z, &forcing);
            rk4_step(&drift, x, dt).unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
        });
        let h = Arc::new(|x: &DVector<f64>| x.clone());
        let q = DMatrix::identity(d, d) * (dt * self.forcing_std).powi(2);
        let r = DMatrix::identity(d, d) * self.obs_std.powi(2).max(1e-12);
        NonlinearModel::new(d, d, f, h, q, r)
    }

    pub fn initial_belief(&self) -> Result<GaussianBelief> {
        GaussianBelief::isotropic(
            DVector::from_element(self.dim, self.forcing_mean),
            self.init_std.powi(2).max(1e-12),
        )
    }
}

/// `(θ_{i+1} − θ_{i−2}) θ_{i−1} − θ_i + φ_i` with cyclic indices.
pub fn lorenz96_drift(x: &DVector<f64>, forcing: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    DVector::from_fn(d, |i, _| {
        let ip1 = (i + 1) % d;
        let im1 = (i + d - 1) % d;
        let im2 = (i + d - 2) % d;
        (x[ip1] - x[im2]) * x[im1] - x[i] + forcing[i]
    })
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step(drift: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    let finite = |k: &DVector<f64>, stage: usize| {
        if k.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("rk4 stage {stage}")))
        }
    };
    let k1 = drift(x);
    finite(&k1, 1)?;
    let k2 = drift(&(x + &k1 * (dt / 2.0)));
    finite(&k2, 2)?;
    let k3 = drift(&(x + &k2 * (dt / 2.0)));
    finite(&k3, 3)?;
    let k4 = drift(&(x + &k3 * dt));
    finite(&k4, 4)?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lorenz96Data {
    pub initial_state: DVector<f64>,
    /// `T x d`.
    pub states: DMatrix<f64>,
    /// `T x d`.
    pub measurements: DMatrix<f64>,
    pub outliers: Vec<Vec<bool>>,
}

impl Lorenz96Data {
    pub fn measurement(&self, t: usize) -> DVector<f64> {
        self.measurements.row(t).transpose()
    }

    pub fn state(&self, t: usize) -> DVector<f64> {
        self.states.row(t).transpose()
    }
}

/// Simulates the forced system. The forcing is drawn once per step and held
/// across the RK4 stages.
pub fn lorenz96_generate(cfg: &Lorenz96Config, rng: &mut RngStream) -> Result<Lorenz96Data> {
    cfg.validate()?;
    let d = cfg.dim;
    let initial_state = DVector::from_fn(d, |_, _| cfg.forcing_mean + cfg.init_std * rng.standard_normal());
    let mut theta = initial_state.clone();
    let mut states = DMatrix::zeros(cfg.steps, d);
    let mut measurements = DMatrix::zeros(cfg.steps, d);
    let mut outliers = vec![vec![false; d]; cfg.steps];
    for t in 0..cfg.steps {
        let forcing = DVector::from_fn(d, |_, _| cfg.forcing_mean + cfg.forcing_std * rng.standard_normal());
        let drift = |z: &DVector<f64>| lorenz96_drift(z, &forcing);
        theta = rk4_step(&drift, &theta, cfg.dt).map_err(|_| Error::Diverged { step: t })?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: t });
        }
        for i in 0..d {
            let noisy = theta[i] + cfg.obs_std * rng.standard_normal();
            if rng.bernoulli(cfg.p_eps) {
                measurements[(t, i)] = cfg.outlier_value;
                outliers[t][i] = true;
            } else {
                measurements[(t, i)] = noisy;
            }
        }
        states.set_row(t, &theta.transpose());
    }
    Ok(Lorenz96Data {
        initial_state,
        states,
        measurements,
        outliers,
    })
}
