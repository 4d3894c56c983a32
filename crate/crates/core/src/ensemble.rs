//! Ensemble Kalman filter and its weighted and Huberised variants.
//!
//! Predictions `ŷ⁽ⁱ⁾ ~ N(h(θ⁽ⁱ⁾), R)` are drawn particle-major,
//! dimension-minor. All variants share one update path, so with every
//! weight equal to one they reproduce the plain EnKF bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{MeasurementModel, NonlinearModel};
use crate::linalg::{sample_mvn, sample_zero_mean, GaussianBelief, SpdMatrix};
use crate::rng::RngStream;

/// `N × m` particle matrix; rows are state samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    particles: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(particles: DMatrix<f64>) -> Result<Self> {
        if particles.nrows() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: particles.nrows(),
            });
        }
        if particles.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ensemble particle".into()));
        }
        Ok(Self { particles })
    }

    /// `n` independent draws from `belief`.
    pub fn sample(belief: &GaussianBelief, n: usize, rng: &mut RngStream) -> Result<Self> {
        let m = belief.dim();
        let mut p = DMatrix::zeros(n, m);
        for i in 0..n {
            p.set_row(i, &sample_mvn(belief, rng).transpose());
        }
        Self::new(p)
    }

    pub fn n(&self) -> usize {
        self.particles.nrows()
    }

    pub fn dim(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particles(&self) -> &DMatrix<f64> {
        &self.particles
    }

    pub fn particle(&self, i: usize) -> DVector<f64> {
        self.particles.row(i).transpose()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.particles.row_mean().transpose()
    }

    /// Sample covariance with denominator `N − 1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let a = centred(&self.particles);
        a.transpose() * a / (self.n() as f64 - 1.0)
    }
}

fn centred(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = x.row_mean();
    let mut a = x.clone();
    for mut row in a.row_iter_mut() {
        row -= &mean;
    }
    a
}

/// Sample gain over a subset of observation dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleGain {
    /// `m × |J|` matrix.
    pub k: DMatrix<f64>,
    /// Observation dimensions `J` the columns of `k` refer to.
    pub dims: Vec<usize>,
}

/// `K̄ = cov[θ, ŷ] · var[ŷ]⁻¹` restricted to the masked dimensions.
pub fn enkf_gain(states: &Ensemble, preds: &DMatrix<f64>, mask: &[bool]) -> Result<EnsembleGain> {
    check_dim("enkf_gain predictions", states.n(), preds.nrows())?;
    check_dim("enkf_gain mask", preds.ncols(), mask.len())?;
    let dims: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if dims.is_empty() {
        return Ok(EnsembleGain {
            k: DMatrix::zeros(states.dim(), 0),
            dims,
        });
    }
    let denom = states.n() as f64 - 1.0;
    let a = centred(states.particles());
    let b = centred(&preds.select_columns(&dims));
    let cross = a.transpose() * &b / denom;
    let var = SpdMatrix::new(b.transpose() * &b / denom)
        .map_err(|e| Error::Singular(format!("ensemble prediction variance: {e}")))?;
    let k = var.solve_mat(&cross.transpose()).transpose();
    Ok(EnsembleGain { k, dims })
}

pub fn enkf_predict(ens: &Ensemble, model: &NonlinearModel, rng: &mut RngStream) -> Result<Ensemble> {
    check_dim("enkf_predict", model.state_dim(), ens.dim())?;
    let mut p = DMatrix::zeros(ens.n(), ens.dim());
    for i in 0..ens.n() {
        let mut x = model.propagate(&ens.particle(i))?;
        if !model.noise_free() {
            x += sample_zero_mean(model.q(), rng);
        }
        p.set_row(i, &x.transpose());
    }
    Ensemble::new(p)
}

/// How AP-EnKF forms its gain when some dimensions get weight zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApGainMode {
    /// Gain over all dimensions, residuals masked by `Diag(w)`.
    #[default]
    Shortcut,
    /// Gain computed over positive-weight dimensions only.
    Masked,
}

/// Residual treatment used by the shared ensemble update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleVariant {
    Plain,
    AveragedParticle { c: f64, mode: ApGainMode },
    PerParticle { c: f64 },
    Huber { c: f64 },
}

impl EnsembleVariant {
    fn validate(&self) -> Result<()> {
        let c = match *self {
            EnsembleVariant::Plain => return Ok(()),
            EnsembleVariant::AveragedParticle { c, .. }
            | EnsembleVariant::PerParticle { c }
            | EnsembleVariant::Huber { c } => c,
        };
        if c >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("threshold c = {c} must be nonnegative")))
        }
    }
}

/// Weights produced by one ensemble update.
#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleWeights {
    None,
    Shared(DVector<f64>),
    PerParticle(DMatrix<f64>),
}

impl EnsembleWeights {
    /// Mean weight over dimensions (and particles); 1 when unweighted.
    pub fn mean(&self) -> f64 {
        match self {
            EnsembleWeights::None => 1.0,
            EnsembleWeights::Shared(w) => w.mean(),
            EnsembleWeights::PerParticle(w) => w.mean(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleStep {
    pub ensemble: Ensemble,
    pub weights: EnsembleWeights,
}

fn sample_predictions<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let d = model.obs_dim();
    let mut preds = DMatrix::zeros(ens.n(), d);
    for i in 0..ens.n() {
        let mean = model.predict_obs(&ens.particle(i))?;
        check_dim("ensemble prediction", d, mean.len())?;
        let draw = mean + sample_zero_mean(model.obs_cov(), rng);
        preds.set_row(i, &draw.transpose());
    }
    Ok(preds)
}

/// One ensemble update under the given residual treatment.
pub fn ensemble_update<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    variant: EnsembleVariant,
    rng: &mut RngStream,
) -> Result<EnsembleStep> {
    variant.validate()?;
    let d = model.obs_dim();
    check_dim("ensemble measurement", d, y.len())?;
    let n = ens.n();
    let preds = sample_predictions(ens, model, rng)?;
    let mut resid = DMatrix::from_fn(n, d, |i, j| y[j] - preds[(i, j)]);

    let weights = match variant {
        EnsembleVariant::Plain => EnsembleWeights::None,
        EnsembleVariant::AveragedParticle { c, .. } => EnsembleWeights::Shared(DVector::from_fn(d, |j, _| {
            let msq = resid.column(j).iter().map(|e| e * e).sum::<f64>() / n as f64;
            if msq <= c {
                1.0
            } else {
                0.0
            }
        })),
        EnsembleVariant::PerParticle { c } => {
            EnsembleWeights::PerParticle(resid.map(|e| if e * e <= c { 1.0 } else { 0.0 }))
        }
        EnsembleVariant::Huber { c } => {
            resid.apply(|e| {
                if *e > c {
                    *e = c
                } else if *e < -c {
                    *e = -c
                }
            });
            EnsembleWeights::None
        }
    };
    match &weights {
        EnsembleWeights::None => {}
        EnsembleWeights::Shared(w) => {
            for i in 0..n {
                for j in 0..d {
                    resid[(i, j)] = if w[j] > 0.0 { w[j] * resid[(i, j)] } else { 0.0 };
                }
            }
        }
        EnsembleWeights::PerParticle(w) => {
            resid.zip_apply(w, |e, wij| *e = if wij > 0.0 { wij * *e } else { 0.0 });
        }
    }
    if resid.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ensemble residual".into()));
    }

    let mask: Vec<bool> = match (&variant, &weights) {
        (EnsembleVariant::AveragedParticle { mode: ApGainMode::Masked, .. }, EnsembleWeights::Shared(w)) => {
            w.iter().map(|&v| v > 0.0).collect()
        }
        _ => vec![true; d],
    };
    let gain = enkf_gain(ens, &preds, &mask)?;
    let correction = resid.select_columns(&gain.dims) * gain.k.transpose();
    let ensemble = Ensemble::new(ens.particles() + correction)?;
    Ok(EnsembleStep { ensemble, weights })
}

pub fn enkf_update<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    rng: &mut RngStream,
) -> Result<Ensemble> {
    Ok(ensemble_update(ens, model, y, EnsembleVariant::Plain, rng)?.ensemble)
}

/// Average-particle update; returns the shared dimension weights.
pub fn ap_enkf_update<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    c: f64,
    rng: &mut RngStream,
) -> Result<(Ensemble, DVector<f64>)> {
    ap_enkf_update_with_mode(ens, model, y, c, ApGainMode::Shortcut, rng)
}

pub fn ap_enkf_update_with_mode<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    c: f64,
    mode: ApGainMode,
    rng: &mut RngStream,
) -> Result<(Ensemble, DVector<f64>)> {
    let step = ensemble_update(ens, model, y, EnsembleVariant::AveragedParticle { c, mode }, rng)?;
    match step.weights {
        EnsembleWeights::Shared(w) => Ok((step.ensemble, w)),
        _ => unreachable!(),
    }
}

/// Per-particle update; returns the `N × d` weight matrix.
pub fn pp_enkf_update<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    c: f64,
    rng: &mut RngStream,
) -> Result<(Ensemble, DMatrix<f64>)> {
    let step = ensemble_update(ens, model, y, EnsembleVariant::PerParticle { c }, rng)?;
    match step.weights {
        EnsembleWeights::PerParticle(w) => Ok((step.ensemble, w)),
        _ => unreachable!(),
    }
}

/// Update with residuals clipped element-wise to `[−c, c]`.
pub fn hub_enkf_update<M: MeasurementModel + ?Sized>(
    ens: &Ensemble,
    model: &M,
    y: &DVector<f64>,
    c: f64,
    rng: &mut RngStream,
) -> Result<Ensemble> {
    Ok(ensemble_update(ens, model, y, EnsembleVariant::Huber { c }, rng)?.ensemble)
}

/// Scales deviations from the ensemble mean by `lambda ≥ 1`.
pub fn inflate(ens: &Ensemble, lambda: f64) -> Result<Ensemble> {
    if !(lambda >= 1.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("inflation factor {lambda} must be ≥ 1")));
    }
    if lambda == 1.0 {
        return Ok(ens.clone());
    }
    let mean = ens.particles.row_mean();
    let mut p = ens.particles.clone();
    for mut row in p.row_iter_mut() {
        let dev = &row - &mean;
        row.copy_from(&(&mean + dev * lambda));
    }
    Ensemble::new(p)
}
