//! Variational update with a Beta-Bernoulli outlier indicator.

use nalgebra::DVector;

use crate::baselines::digamma::digamma;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::{weighted_update, AppliedWeight, MeasurementModel, UpdateForm};
use crate::linalg::GaussianBelief;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KfBConfig {
    pub alpha0: f64,
    pub beta0: f64,
    pub inner_iters: usize,
    pub tol: f64,
}

impl KfBConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err(Error::InvalidParameter("alpha0 and beta0 must be positive".into()));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidParameter("inner_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!("tol = {} must lie in (0, 1)", self.tol)));
        }
        Ok(())
    }
}

impl Default for KfBConfig {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            beta0: 1.0,
            inner_iters: 1,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KfbOutcome {
    pub posterior: GaussianBelief,
    /// Inlier probability after the last refresh.
    pub rho: f64,
}

pub fn kfb_update<M: MeasurementModel + ?Sized>(
    prior: &GaussianBelief,
    model: &M,
    y: &DVector<f64>,
    cfg: &KfBConfig,
    form: UpdateForm,
) -> Result<KfbOutcome> {
    cfg.validate()?;
    check_dim("kfb y", model.obs_dim(), y.len())?;
    let r = model.obs_cov();
    let yhat = model.predict_obs(prior.mean())?;
    let h_pred = model.obs_jacobian(prior.mean())?;

    let mut rho: f64 = 1.0;
    let mut alpha = cfg.alpha0;
    let mut beta = cfg.beta0;
    let mut post = prior.clone();
    for _ in 0..cfg.inner_iters {
        post = if rho < cfg.tol {
            prior.clone()
        } else {
            // R / ρ is R / w² with w = √ρ
            weighted_update(prior, &h_pred, r, &yhat, y, AppliedWeight::Scalar(rho.sqrt()), form)?.posterior
        };

        let e = y - model.predict_obs(post.mean())?;
        let h = model.obs_jacobian(post.mean())?;
        let quad = if e.iter().all(|v| v.is_finite()) {
            e.dot(&r.solve_vec(&e))
        } else {
            f64::INFINITY
        };
        let spread = (r.solve_mat(&(&h * post.cov() * h.transpose()))).trace();
        let trace = quad + spread;

        let log_pi = digamma(alpha)? - digamma(alpha + beta + 1.0)?;
        let log_not_pi = digamma(beta + 1.0)? - digamma(alpha + beta + 1.0)?;
        let a = log_pi - trace / 2.0;
        rho = 1.0 / (1.0 + (log_not_pi - a).exp());
        alpha = cfg.alpha0 + rho;
        beta = cfg.beta0 + 1.0 - rho;
    }
    Ok(KfbOutcome { posterior: post, rho })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{kf_update, LinearObservation};
    use nalgebra::{dmatrix, dvector};

    fn setup() -> (GaussianBelief, LinearObservation) {
        (
            GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap(),
            LinearObservation::new(dmatrix![1.0], dmatrix![1.0]).unwrap(),
        )
    }

    #[test]
    fn single_pass_is_kalman() {
        let (prior, obs) = setup();
        let cfg = KfBConfig::default();
        let out = kfb_update(&prior, &obs, &dvector![2.0], &cfg, UpdateForm::Precision).unwrap();
        let kf = kf_update(&prior, &obs, &dvector![2.0]).unwrap().posterior;
        assert_eq!(out.posterior.mean(), kf.mean());
        assert_eq!(out.posterior.cov(), kf.cov());
    }

    #[test]
    fn huge_residual_reverts_to_prior() {
        let (prior, obs) = setup();
        let one = KfBConfig { inner_iters: 1, ..KfBConfig::default() };
        let out = kfb_update(&prior, &obs, &dvector![1e3], &one, UpdateForm::Precision).unwrap();
        assert!(out.rho < 1e-6);
        let two = KfBConfig { inner_iters: 2, ..KfBConfig::default() };
        let out = kfb_update(&prior, &obs, &dvector![1e3], &two, UpdateForm::Precision).unwrap();
        assert_eq!(out.posterior.mean(), prior.mean());
        assert_eq!(out.posterior.cov(), prior.cov());
    }

    #[test]
    fn rho_in_unit_interval() {
        let (prior, obs) = setup();
        for y in [-50.0, -3.0, 0.0, 0.5, 4.0, 1e8] {
            let cfg = KfBConfig { inner_iters: 4, ..KfBConfig::default() };
            let out = kfb_update(&prior, &obs, &dvector![y], &cfg, UpdateForm::Precision).unwrap();
            assert!((0.0..=1.0).contains(&out.rho), "{y}: {}", out.rho);
        }
    }

    #[test]
    fn invalid_config() {
        let (prior, obs) = setup();
        let cfg = KfBConfig { alpha0: 0.0, ..KfBConfig::default() };
        assert!(kfb_update(&prior, &obs, &dvector![0.0], &cfg, UpdateForm::Precision).is_err());
        let cfg = KfBConfig { tol: 1.0, ..KfBConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
