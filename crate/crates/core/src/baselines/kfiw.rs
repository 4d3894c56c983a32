//! Variational update with an inverse-Wishart prior on the measurement
//! covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::LinearObservation;
use crate::linalg::{symmetrise, GaussianBelief, SpdMatrix};

#[derive(Clone, Debug)]
pub struct KfIwConfig {
    /// Noise-scaling weight `ℓ` on the prior covariance.
    pub ell: f64,
    pub inner_iters: usize,
    /// Prior measurement covariance `R₀`.
    pub r0: SpdMatrix,
}

impl KfIwConfig {
    pub fn new(ell: f64, inner_iters: usize, r0: SpdMatrix) -> Result<Self> {
        let cfg = Self { ell, inner_iters, r0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ell > 0.0) {
            return Err(Error::InvalidParameter(format!("ell = {} must be positive", self.ell)));
        }
        if self.inner_iters == 0 {
            return Err(Error::InvalidParameter("inner_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Runs `I` coordinate-ascent passes. The residual term `S` uses the running
/// posterior; the gain and covariance use the prior predictive.
pub fn kfiw_update(
    prior: &GaussianBelief,
    obs: &LinearObservation,
    y: &DVector<f64>,
    cfg: &KfIwConfig,
) -> Result<GaussianBelief> {
    cfg.validate()?;
    let h = obs.h();
    let d = h.nrows();
    let m = prior.dim();
    check_dim("kfiw H", m, h.ncols())?;
    check_dim("kfiw y", d, y.len())?;
    check_dim("kfiw R0", d, cfg.r0.dim())?;
    let mu_pred = prior.mean();
    let sigma_pred = prior.cov();
    let innov_pred = y - h * mu_pred;
    if innov_pred.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kfiw innovation".into()));
    }
    let h_sigma_pred = h * sigma_pred;
    let h_sigma_ht = &h_sigma_pred * h.transpose();
    let eye = DMatrix::<f64>::identity(m, m);

    let mut post = prior.clone();
    for _ in 0..cfg.inner_iters {
        let e = y - h * post.mean();
        let s = &e * e.transpose() + h * post.cov() * h.transpose();
        let lambda = (cfg.r0.matrix() * cfg.ell + s) / (cfg.ell + 1.0);
        let innov_cov = SpdMatrix::new(&h_sigma_ht + &lambda)
            .map_err(|err| Error::Singular(format!("kfiw innovation matrix: {err}")))?;
        // d × m, transposed relative to the usual gain
        let k = innov_cov.solve_mat(&h_sigma_pred);
        let mean = mu_pred + k.transpose() * &innov_pred;
        let a = &eye - k.transpose() * h;
        let cov = k.transpose() * &lambda * &k + &a * sigma_pred * a.transpose();
        post = GaussianBelief::new(mean, symmetrise(&cov))?;
    }
    Ok(post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::kf_update;
    use nalgebra::{dmatrix, dvector};

    fn scalar_obs() -> LinearObservation {
        LinearObservation::new(dmatrix![1.0], dmatrix![1.0]).unwrap()
    }

    #[test]
    fn hand_case() {
        let prior = GaussianBelief::new(dvector![0.0], dmatrix![1.0]).unwrap();
        let cfg = KfIwConfig::new(1.0, 1, SpdMatrix::identity(1)).unwrap();
        let post = kfiw_update(&prior, &scalar_obs(), &dvector![0.0], &cfg).unwrap();
        assert!(post.mean()[0].abs() < 1e-15);
        assert!((post.cov()[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn large_ell_is_kalman() {
        let prior = GaussianBelief::new(dvector![0.5, -1.0], dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        let r0 = dmatrix![1.5, 0.2; 0.2, 0.7];
        let obs = LinearObservation::new(dmatrix![1.0, 0.0; 0.5, 2.0], r0.clone()).unwrap();
        let y = dvector![1.0, 3.0];
        let cfg = KfIwConfig::new(1e6, 1, SpdMatrix::new(r0).unwrap()).unwrap();
        let a = kfiw_update(&prior, &obs, &y, &cfg).unwrap();
        let b = kf_update(&prior, &obs, &y).unwrap().posterior;
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-3);
        for i in 0..2 {
            assert!(rel(a.mean()[i], b.mean()[i]) < 1e-4);
            for j in 0..2 {
                assert!(rel(a.cov()[(i, j)], b.cov()[(i, j)]) < 1e-4);
            }
        }
    }

    #[test]
    fn zero_innovation_keeps_mean() {
        let prior = GaussianBelief::new(dvector![0.5, -1.0], dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        let obs = LinearObservation::new(dmatrix![1.0, 1.0], dmatrix![1.0]).unwrap();
        let y = obs.h() * prior.mean();
        for iters in 1..5 {
            let cfg = KfIwConfig::new(2.0, iters, SpdMatrix::identity(1)).unwrap();
            let post = kfiw_update(&prior, &obs, &y, &cfg).unwrap();
            assert!((post.mean() - prior.mean()).amax() < 1e-14);
        }
    }

    #[test]
    fn invalid_config() {
        assert!(KfIwConfig::new(0.0, 1, SpdMatrix::identity(1)).is_err());
        assert!(KfIwConfig::new(1.0, 0, SpdMatrix::identity(1)).is_err());
    }
}
