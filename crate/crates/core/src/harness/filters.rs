//! Filter configurations and a uniform step interface over them.

use nalgebra::{DMatrix, DVector};

use crate::baselines::{adam_ogd_step, kfb_update, kfiw_update, AdamState, KfBConfig, KfIwConfig};
use crate::ensemble::{ensemble_update, inflate, ApGainMode, Ensemble, EnsembleVariant};
use crate::error::{Error, Result};
use crate::gaussian::{ekf_update_with_form, weighted_update, AppliedWeight, LinearObservation, MeasurementModel, UpdateForm};
use crate::linalg::GaussianBelief;
use crate::rng::RngStream;
use crate::weights::WeightSpec;

#[derive(Clone, Debug, PartialEq)]
pub enum FilterKind {
    Kf,
    Wolf(WeightSpec),
    KfB(KfBConfig),
    KfIw { ell: f64, inner_iters: usize },
    Ogd { lr: f64, inner_iters: usize },
    Enkf,
    ApEnkf { c: f64, mode: ApGainMode },
    PpEnkf { c: f64 },
    HubEnkf { c: f64 },
}

impl FilterKind {
    pub fn is_ensemble(&self) -> bool {
        matches!(
            self,
            FilterKind::Enkf | FilterKind::ApEnkf { .. } | FilterKind::PpEnkf { .. } | FilterKind::HubEnkf { .. }
        )
    }

    pub fn label(&self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::Wolf(_) => "wolf",
            FilterKind::KfB(_) => "kfb",
            FilterKind::KfIw { .. } => "kfiw",
            FilterKind::Ogd { .. } => "ogd",
            FilterKind::Enkf => "enkf",
            FilterKind::ApEnkf { .. } => "ap_enkf",
            FilterKind::PpEnkf { .. } => "pp_enkf",
            FilterKind::HubEnkf { .. } => "hub_enkf",
        }
    }

    fn ensemble_variant(&self) -> EnsembleVariant {
        match *self {
            FilterKind::ApEnkf { c, mode } => EnsembleVariant::AveragedParticle { c, mode },
            FilterKind::PpEnkf { c } => EnsembleVariant::PerParticle { c },
            FilterKind::HubEnkf { c } => EnsembleVariant::Huber { c },
            _ => EnsembleVariant::Plain,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterSpec {
    pub kind: FilterKind,
    /// Ensemble size override.
    pub particles: Option<usize>,
    /// Multiplicative spread inflation applied after each ensemble update.
    pub inflation: f64,
    pub form: UpdateForm,
}

impl FilterSpec {
    pub fn new(kind: FilterKind) -> Self {
        Self {
            kind,
            particles: None,
            inflation: 1.0,
            form: UpdateForm::Precision,
        }
    }

    pub fn kf() -> Self {
        Self::new(FilterKind::Kf)
    }

    pub fn wolf(weight: WeightSpec) -> Self {
        Self::new(FilterKind::Wolf(weight))
    }

    pub fn with_form(mut self, form: UpdateForm) -> Self {
        self.form = form;
        self
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.particles = Some(n);
        self
    }

    pub fn with_inflation(mut self, lambda: f64) -> Self {
        self.inflation = lambda;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            FilterKind::Wolf(w) => w.validate()?,
            FilterKind::KfB(cfg) => cfg.validate()?,
            FilterKind::KfIw { ell, inner_iters } => {
                if !(*ell > 0.0 && ell.is_finite()) || *inner_iters == 0 {
                    return Err(Error::InvalidParameter("kfiw needs ell > 0 and inner_iters >= 1".into()));
                }
            }
            FilterKind::Ogd { lr, inner_iters } => {
                if !(*lr > 0.0 && lr.is_finite()) || *inner_iters == 0 {
                    return Err(Error::InvalidParameter("ogd needs lr > 0 and inner_iters >= 1".into()));
                }
            }
            FilterKind::ApEnkf { c, .. } | FilterKind::PpEnkf { c } | FilterKind::HubEnkf { c } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(Error::InvalidParameter(format!("threshold c = {c} must be finite and >= 0")));
                }
            }
            FilterKind::Kf | FilterKind::Enkf => {}
        }
        if !(self.inflation >= 1.0 && self.inflation.is_finite()) {
            return Err(Error::InvalidParameter(format!("inflation = {} must be >= 1", self.inflation)));
        }
        if matches!(self.particles, Some(n) if n < 2) {
            return Err(Error::InvalidParameter("particles must be at least 2".into()));
        }
        Ok(())
    }

    /// Overwrites a named hyperparameter. Returns false when the filter has
    /// no such parameter.
    pub fn set_parameter(&mut self, name: &str, value: f64) -> bool {
        match (name, &mut self.kind) {
            ("c", FilterKind::Wolf(w)) if w.threshold().is_some() => {
                *w = w.with_threshold(value);
                true
            }
            ("c", FilterKind::ApEnkf { c, .. } | FilterKind::PpEnkf { c } | FilterKind::HubEnkf { c }) => {
                *c = value;
                true
            }
            ("ell", FilterKind::KfIw { ell, .. }) => {
                *ell = value;
                true
            }
            ("lr", FilterKind::Ogd { lr, .. }) => {
                *lr = value;
                true
            }
            ("alpha0", FilterKind::KfB(cfg)) => {
                cfg.alpha0 = value;
                true
            }
            ("beta0", FilterKind::KfB(cfg)) => {
                cfg.beta0 = value;
                true
            }
            ("inflation", k) if k.is_ensemble() => {
                self.inflation = value;
                true
            }
            _ => false,
        }
    }
}

/// Measurement model handed to a Gaussian filter step. Linear models skip
/// the linearisation that KF-IW otherwise needs.
pub enum Observation<'a> {
    Linear(&'a LinearObservation),
    General(&'a dyn MeasurementModel),
}

impl Observation<'_> {
    fn model(&self) -> &dyn MeasurementModel {
        match self {
            Observation::Linear(o) => *o,
            Observation::General(m) => *m,
        }
    }
}

/// Per-filter mutable state carried across steps (optimiser moments).
#[derive(Clone, Debug, Default)]
pub struct GaussianFilterState {
    adam: Option<AdamState>,
}

/// One Gaussian-family update. Returns the posterior and the weight (or
/// inlier probability) applied to the measurement.
pub fn gaussian_step(
    spec: &FilterSpec,
    state: &mut GaussianFilterState,
    prior: &GaussianBelief,
    obs: Observation<'_>,
    y: &DVector<f64>,
) -> Result<(GaussianBelief, f64)> {
    match &spec.kind {
        FilterKind::Kf => {
            let model = obs.model();
            let h = model.obs_jacobian(prior.mean())?;
            let yhat = model.predict_obs(prior.mean())?;
            let out = weighted_update(prior, &h, model.obs_cov(), &yhat, y, AppliedWeight::Scalar(1.0), spec.form)?;
            Ok((out.posterior, 1.0))
        }
        FilterKind::Wolf(w) => {
            let out = ekf_update_with_form(prior, obs.model(), y, w, spec.form)?;
            Ok((out.posterior, out.weight.mean()))
        }
        FilterKind::KfB(cfg) => {
            let out = kfb_update(prior, obs.model(), y, cfg, spec.form)?;
            Ok((out.posterior, out.rho))
        }
        FilterKind::KfIw { ell, inner_iters } => {
            let post = match obs {
                Observation::Linear(o) => {
                    let cfg = KfIwConfig::new(*ell, *inner_iters, o.r().clone())?;
                    kfiw_update(prior, o, y, &cfg)?
                }
                Observation::General(m) => {
                    let h = m.obs_jacobian(prior.mean())?;
                    let shifted = y - m.predict_obs(prior.mean())? + &h * prior.mean();
                    let lin = LinearObservation::from_spd(h, m.obs_cov().clone())?;
                    let cfg = KfIwConfig::new(*ell, *inner_iters, m.obs_cov().clone())?;
                    kfiw_update(prior, &lin, &shifted, &cfg)?
                }
            };
            Ok((post, 1.0))
        }
        FilterKind::Ogd { lr, inner_iters } => {
            let model = obs.model();
            let adam = match state.adam.take() {
                Some(a) => a,
                None => AdamState::new(prior.dim(), *lr, *inner_iters)?,
            };
            let mut err = None;
            let grad = |p: &DVector<f64>| -> DVector<f64> {
                match (model.predict_obs(p), model.obs_jacobian(p)) {
                    (Ok(yhat), Ok(h)) => -(h.transpose() * (y - yhat)),
                    (Err(e), _) | (_, Err(e)) => {
                        err = Some(e);
                        DVector::zeros(p.len())
                    }
                }
            };
            let (params, adam) = adam_ogd_step(prior.mean(), grad, &adam)?;
            if let Some(e) = err {
                return Err(e);
            }
            state.adam = Some(adam);
            Ok((GaussianBelief::from_spd(params, prior.cov_spd().clone())?, 1.0))
        }
        other => Err(Error::InvalidParameter(format!(
            "{} is an ensemble filter and has no Gaussian update",
            other.label()
        ))),
    }
}

/// One ensemble update followed by optional inflation. Returns the new
/// ensemble and the mean weight applied.
pub fn ensemble_step<M: MeasurementModel + ?Sized>(
    spec: &FilterSpec,
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<(Ensemble, f64)> {
    if !spec.kind.is_ensemble() {
        return Err(Error::InvalidParameter(format!(
            "{} is not an ensemble filter",
            spec.kind.label()
        )));
    }
    let step = ensemble_update(ens, model, y, spec.kind.ensemble_variant(), rng)?;
    let w = step.weights.mean();
    let out = if spec.inflation == 1.0 {
        step.ensemble
    } else {
        inflate(&step.ensemble, spec.inflation)?
    };
    Ok((out, w))
}

/// Stacks column vectors as the rows of a matrix.
pub(crate) fn rows_to_matrix(rows: &[DVector<f64>]) -> DMatrix<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(rows.len(), cols, |t, i| rows[t][i])
}
