//! Kalman, extended Kalman and weighted-likelihood Gaussian updates.
//!
//! Every update here is a special case of one routine: a Gaussian
//! conditioning step whose observation precision is `R⁻¹` rescaled by the
//! weight. A scalar weight `w` gives precision `w² R⁻¹`; a weight vector
//! gives `Diag(w) R⁻¹ Diag(w)`. Zero weights remove an observation (or one of
//! its dimensions) entirely.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{symmetrise, GaussianBelief, SpdMatrix, DEFAULT_JITTER};
use crate::rng::RngStream;
use crate::weights::{compute_weight, compute_weight_vector, WeightSpec};

/// Algebraic form of the conditioning step.
///
/// `Precision` inverts the prior and posterior covariances explicitly.
/// `Gain` works in observation space and is much cheaper when the state is
/// large and the observation small. Both give the same posterior.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateForm {
    #[default]
    Precision,
    Gain,
}

/// Weight actually applied to an observation.
#[derive(Clone, Debug, PartialEq)]
pub enum AppliedWeight {
    Scalar(f64),
    PerDim(DVector<f64>),
}

impl AppliedWeight {
    /// Scalar weight, or the mean of per-dimension weights.
    pub fn mean(&self) -> f64 {
        match self {
            AppliedWeight::Scalar(w) => *w,
            AppliedWeight::PerDim(v) => v.mean(),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            AppliedWeight::Scalar(w) => *w == 0.0,
            AppliedWeight::PerDim(v) => v.iter().all(|&x| x == 0.0),
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        let ok = |w: f64| (0.0..=1.0).contains(&w);
        match self {
            AppliedWeight::Scalar(w) if ok(*w) => Ok(()),
            AppliedWeight::PerDim(v) => {
                check_dim("weight vector", d, v.len())?;
                if v.iter().all(|&w| ok(w)) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("weights must lie in [0, 1]".into()))
                }
            }
            AppliedWeight::Scalar(w) => Err(Error::InvalidParameter(format!("weight {w} outside [0, 1]"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct UpdateOutcome {
    pub posterior: GaussianBelief,
    pub weight: AppliedWeight,
    pub innovation: DVector<f64>,
    /// Frobenius norm of the gain actually applied.
    pub gain_norm: f64,
}

#[derive(Clone, Debug)]
pub struct LinearDynamics {
    f: DMatrix<f64>,
    q: SpdMatrix,
    q_jittered: bool,
    q_zero: bool,
}

impl LinearDynamics {
    /// `θ' = F θ + N(0, Q)`. A singular `Q` is regularised with a tiny
    /// diagonal jitter, reported by [`LinearDynamics::q_jittered`].
    pub fn new(f: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        check_dim("LinearDynamics F", f.nrows(), f.ncols())?;
        check_dim("LinearDynamics Q", f.nrows(), q.nrows())?;
        let q_zero = q.iter().all(|&v| v == 0.0);
        let (q, q_jittered) = SpdMatrix::with_jitter(q, DEFAULT_JITTER)?;
        Ok(Self {
            f,
            q,
            q_jittered,
            q_zero,
        })
    }

    /// Static state with random-walk noise `q I`.
    pub fn random_walk(m: usize, q: f64) -> Result<Self> {
        Self::new(DMatrix::identity(m, m), DMatrix::identity(m, m) * q)
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn q(&self) -> &SpdMatrix {
        &self.q
    }

    pub fn q_jittered(&self) -> bool {
        self.q_jittered
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct LinearObservation {
    h: DMatrix<f64>,
    r: SpdMatrix,
}

impl LinearObservation {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let r = SpdMatrix::new(r)?;
        Self::from_spd(h, r)
    }

    pub fn from_spd(h: DMatrix<f64>, r: SpdMatrix) -> Result<Self> {
        check_dim("LinearObservation R", h.nrows(), r.dim())?;
        Ok(Self { h, r })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &SpdMatrix {
        &self.r
    }

    /// Same design matrix with covariance `R / w²`.
    pub fn with_scaled_noise(&self, w: f64) -> Result<Self> {
        Ok(Self {
            h: self.h.clone(),
            r: self.r.scale(1.0 / (w * w))?,
        })
    }
}

pub type VecFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// An observation model `y = h(θ) + N(0, R)`.
pub trait MeasurementModel {
    fn obs_dim(&self) -> usize;
    fn predict_obs(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
    fn obs_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;
    fn obs_cov(&self) -> &SpdMatrix;
}

impl MeasurementModel for LinearObservation {
    fn obs_dim(&self) -> usize {
        self.h.nrows()
    }

    fn predict_obs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("LinearObservation state", self.h.ncols(), x.len())?;
        Ok(&self.h * x)
    }

    fn obs_jacobian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.h.clone())
    }

    fn obs_cov(&self) -> &SpdMatrix {
        &self.r
    }
}

/// Nonlinear state-space model with optional analytic Jacobians.
#[derive(Clone)]
pub struct NonlinearModel {
    state_dim: usize,
    obs_dim: usize,
    f: VecFn,
    h: VecFn,
    f_jac: Option<JacFn>,
    h_jac: Option<JacFn>,
    q: SpdMatrix,
    q_zero: bool,
    r: SpdMatrix,
}

impl std::fmt::Debug for NonlinearModel {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("NonlinearModel")
            .field("state_dim", &self.state_dim)
            .field("obs_dim", &self.obs_dim)
            .field("analytic_f", &self.f_jac.is_some())
            .field("analytic_h", &self.h_jac.is_some())
            .finish()
    }
}

impl NonlinearModel {
    pub fn new(
        state_dim: usize,
        obs_dim: usize,
        f: VecFn,
        h: VecFn,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        check_dim("NonlinearModel Q", state_dim, q.nrows())?;
        check_dim("NonlinearModel R", obs_dim, r.nrows())?;
        let q_zero = q.iter().all(|&v| v == 0.0);
        let (q, _) = SpdMatrix::with_jitter(q, DEFAULT_JITTER)?;
        let r = SpdMatrix::new(r)?;
        Ok(Self {
            state_dim,
            obs_dim,
            f,
            h,
            f_jac: None,
            h_jac: None,
            q,
            q_zero,
            r,
        })
    }

    pub fn from_linear(dynamics: &LinearDynamics, obs: &LinearObservation) -> Self {
        let f = dynamics.f.clone();
        let h = obs.h.clone();
        let (f2, h2) = (f.clone(), h.clone());
        Self {
            state_dim: f.nrows(),
            obs_dim: h.nrows(),
            f: Arc::new(move |x| &f * x),
            h: Arc::new(move |x| &h * x),
            f_jac: Some(Arc::new(move |_| f2.clone())),
            h_jac: Some(Arc::new(move |_| h2.clone())),
            q: dynamics.q.clone(),
            q_zero: dynamics.q_zero,
            r: obs.r.clone(),
        }
    }

    /// Installs an analytic dynamics Jacobian. Debug builds check it against
    /// finite differences.
    pub fn with_dynamics_jacobian(mut self, jac: JacFn) -> Result<Self> {
        if cfg!(debug_assertions) {
            validate_jacobian("dynamics", &*self.f, &*jac, self.state_dim)?;
        }
        self.f_jac = Some(jac);
        Ok(self)
    }

    /// Installs an analytic observation Jacobian. Debug builds check it
    /// against finite differences.
    pub fn with_observation_jacobian(mut self, jac: JacFn) -> Result<Self> {
        if cfg!(debug_assertions) {
            validate_jacobian("observation", &*self.h, &*jac, self.state_dim)?;
        }
        self.h_jac = Some(jac);
        Ok(self)
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn q(&self) -> &SpdMatrix {
        &self.q
    }

    pub fn r(&self) -> &SpdMatrix {
        &self.r
    }

    /// True when the supplied process noise was identically zero.
    pub fn noise_free(&self) -> bool {
        self.q_zero
    }

    pub fn propagate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("NonlinearModel state", self.state_dim, x.len())?;
        let out = (self.f)(x);
        check_dim("NonlinearModel f output", self.state_dim, out.len())?;
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dynamics output".into()));
        }
        Ok(out)
    }

    pub fn dynamics_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.f_jac {
            Some(j) => Ok(j(x)),
            None => jacobian(&*self.f, x),
        }
    }
}

impl MeasurementModel for NonlinearModel {
    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn predict_obs(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("NonlinearModel state", self.state_dim, x.len())?;
        let out = (self.h)(x);
        check_dim("NonlinearModel h output", self.obs_dim, out.len())?;
        Ok(out)
    }

    fn obs_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.h_jac {
            Some(j) => Ok(j(x)),
            None => jacobian(&*self.h, x),
        }
    }

    fn obs_cov(&self) -> &SpdMatrix {
        &self.r
    }
}

fn validate_jacobian(
    what: &str,
    map: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    jac: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    n: usize,
) -> Result<()> {
    // A kink at the first probe is retried once at a second one.
    let mut rng = RngStream::new(0x6a61_636f_6269, 0);
    let mut last = 0.0;
    for _ in 0..2 {
        let x = rng.standard_normal_vector(n);
        let numeric = jacobian(map, &x)?;
        let analytic = jac(&x);
        if analytic.shape() != numeric.shape() {
            return Err(Error::InvalidParameter(format!("{what} Jacobian has wrong shape")));
        }
        last = (&analytic - &numeric).norm() / numeric.norm().max(1.0);
        if last <= 1e-4 {
            return Ok(());
        }
    }
    Err(Error::InvalidParameter(format!(
        "{what} Jacobian disagrees with finite differences (relative error {last:e})"
    )))
}

/// Central finite-difference Jacobian; row `i` holds the gradient of output `i`.
pub fn jacobian(map: &dyn Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = 1e-6 * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let plus = map(&probe);
        probe[i] = x[i] - h;
        let minus = map(&probe);
        probe[i] = x[i];
        if plus.iter().chain(minus.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("map output at probe {i}")));
        }
        cols.push((plus - minus) / (2.0 * h));
    }
    let rows = cols.first().map_or(0, |c| c.len());
    Ok(DMatrix::from_fn(rows, n, |r, c| cols[c][r]))
}

pub fn kf_predict(prior: &GaussianBelief, dynamics: &LinearDynamics) -> Result<GaussianBelief> {
    check_dim("kf_predict", dynamics.state_dim(), prior.dim())?;
    let f = &dynamics.f;
    let mean = f * prior.mean();
    let cov = f * prior.cov() * f.transpose() + dynamics.q.matrix();
    GaussianBelief::new(mean, symmetrise(&cov))
}

/// Conditions `prior` on `y` given the linearisation `(H, ŷ)` and the
/// applied weight. A zero weight returns the prior unchanged.
pub fn weighted_update(
    prior: &GaussianBelief,
    h: &DMatrix<f64>,
    r: &SpdMatrix,
    yhat: &DVector<f64>,
    y: &DVector<f64>,
    weight: AppliedWeight,
    form: UpdateForm,
) -> Result<UpdateOutcome> {
    let d = y.len();
    check_dim("update H columns", prior.dim(), h.ncols())?;
    check_dim("update H rows", d, h.nrows())?;
    check_dim("update R", d, r.dim())?;
    check_dim("update yhat", d, yhat.len())?;
    weight.validate(d)?;
    let innovation = y - yhat;
    if weight.is_zero() {
        return Ok(UpdateOutcome {
            posterior: prior.clone(),
            weight,
            innovation,
            gain_norm: 0.0,
        });
    }
    let active: Vec<usize> = match &weight {
        AppliedWeight::Scalar(_) => (0..d).collect(),
        AppliedWeight::PerDim(v) => (0..d).filter(|&j| v[j] > 0.0).collect(),
    };
    if active.iter().any(|&j| !innovation[j].is_finite()) {
        return Err(Error::NonFinite("innovation on a weighted dimension".into()));
    }
    let (posterior, gain_norm) = match form {
        UpdateForm::Precision => precision_update(prior, h, r, &innovation, &weight, &active)?,
        UpdateForm::Gain => gain_update(prior, h, r, &innovation, &weight, &active)?,
    };
    Ok(UpdateOutcome {
        posterior,
        weight,
        innovation,
        gain_norm,
    })
}

fn weighted_obs_precision(r: &SpdMatrix, weight: &AppliedWeight) -> DMatrix<f64> {
    let rinv = r.inverse();
    match weight {
        AppliedWeight::Scalar(w) => rinv * (w * w),
        AppliedWeight::PerDim(v) => {
            let dw = DMatrix::from_diagonal(v);
            &dw * rinv * &dw
        }
    }
}

fn precision_update(
    prior: &GaussianBelief,
    h: &DMatrix<f64>,
    r: &SpdMatrix,
    innovation: &DVector<f64>,
    weight: &AppliedWeight,
    active: &[usize],
) -> Result<(GaussianBelief, f64)> {
    let rbar_inv = weighted_obs_precision(r, weight);
    let ht = h.transpose();
    let precision = prior.cov_spd().inverse() + &ht * &rbar_inv * h;
    let cov = SpdMatrix::new(precision)?.inverse();
    let gain = &cov * ht * rbar_inv;
    let mut resid = DVector::zeros(innovation.len());
    for &j in active {
        resid[j] = innovation[j];
    }
    let mean = prior.mean() + &gain * resid;
    Ok((GaussianBelief::new(mean, cov)?, gain.norm()))
}

fn gain_update(
    prior: &GaussianBelief,
    h: &DMatrix<f64>,
    r: &SpdMatrix,
    innovation: &DVector<f64>,
    weight: &AppliedWeight,
    active: &[usize],
) -> Result<(GaussianBelief, f64)> {
    let hj = h.select_rows(active);
    let ej = innovation.select_rows(active);
    let rbar = match weight {
        AppliedWeight::Scalar(w) => r.matrix() / (w * w),
        AppliedWeight::PerDim(_) => {
            let p = weighted_obs_precision(r, weight).select_rows(active).select_columns(active);
            SpdMatrix::new(p)?.inverse()
        }
    };
    let ph = prior.cov() * hj.transpose();
    let s = SpdMatrix::new(&hj * &ph + rbar)?;
    let gain = s.solve_mat(&ph.transpose()).transpose();
    let cov = prior.cov() - &gain * ph.transpose();
    let mean = prior.mean() + &gain * ej;
    Ok((GaussianBelief::new(mean, cov)?, gain.norm()))
}

/// Standard Kalman update.
pub fn kf_update(prior: &GaussianBelief, obs: &LinearObservation, y: &DVector<f64>) -> Result<UpdateOutcome> {
    let yhat = obs.predict_obs(prior.mean())?;
    weighted_update(prior, &obs.h, &obs.r, &yhat, y, AppliedWeight::Scalar(1.0), UpdateForm::Precision)
}

/// Weighted-likelihood update for a linear observation.
pub fn wolf_update(
    prior: &GaussianBelief,
    obs: &LinearObservation,
    y: &DVector<f64>,
    spec: &WeightSpec,
) -> Result<UpdateOutcome> {
    wolf_update_with_form(prior, obs, y, spec, UpdateForm::Precision)
}

pub fn wolf_update_with_form(
    prior: &GaussianBelief,
    obs: &LinearObservation,
    y: &DVector<f64>,
    spec: &WeightSpec,
    form: UpdateForm,
) -> Result<UpdateOutcome> {
    ekf_update_with_form(prior, obs, y, spec, form)
}

/// Update with per-dimension weights `w`, i.e. observation precision
/// `Diag(w) R⁻¹ Diag(w)`.
pub fn wolf_update_dimwise(
    prior: &GaussianBelief,
    obs: &LinearObservation,
    y: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<UpdateOutcome> {
    let yhat = obs.predict_obs(prior.mean())?;
    weighted_update(prior, &obs.h, &obs.r, &yhat, y, AppliedWeight::PerDim(w.clone()), UpdateForm::Precision)
}

pub fn ekf_predict(prior: &GaussianBelief, model: &NonlinearModel) -> Result<GaussianBelief> {
    let mean = model.propagate(prior.mean())?;
    let f = model.dynamics_jacobian(prior.mean())?;
    let cov = &f * prior.cov() * f.transpose() + model.q.matrix();
    GaussianBelief::new(mean, symmetrise(&cov))
}

/// Weighted EKF update: linearise `h` at the prior predictive mean, then
/// apply the weighted Gaussian update.
pub fn ekf_update<M: MeasurementModel + ?Sized>(
    prior: &GaussianBelief,
    model: &M,
    y: &DVector<f64>,
    spec: &WeightSpec,
) -> Result<UpdateOutcome> {
    ekf_update_with_form(prior, model, y, spec, UpdateForm::Precision)
}

pub fn ekf_update_with_form<M: MeasurementModel + ?Sized>(
    prior: &GaussianBelief,
    model: &M,
    y: &DVector<f64>,
    spec: &WeightSpec,
    form: UpdateForm,
) -> Result<UpdateOutcome> {
    check_dim("measurement", model.obs_dim(), y.len())?;
    let yhat = model.predict_obs(prior.mean())?;
    let r = model.obs_cov();
    let weight = if spec.is_per_dimension() {
        AppliedWeight::PerDim(compute_weight_vector(spec, y, &yhat, &r.matrix().diagonal())?)
    } else {
        AppliedWeight::Scalar(compute_weight(spec, y, &yhat, r)?)
    };
    let h = model.obs_jacobian(prior.mean())?;
    weighted_update(prior, &h, r, &yhat, y, weight, form)
}
