//! Observation weighting functions `W(y, ŷ)`.
//!
//! All weights lie in `[0, 1]`. A residual with any non-finite entry is
//! treated as a maximal outlier and receives weight zero.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{mahalanobis_sq, SpdMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    Constant { w0: f64 },
    Imq { c: f64 },
    Md { c: f64 },
    Tmd { c: f64 },
    PerDimTmd { c: f64 },
}

impl WeightSpec {
    /// The unit weight, under which every weighted update reduces to its
    /// unweighted counterpart.
    pub const UNIT: WeightSpec = WeightSpec::Constant { w0: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            WeightSpec::Constant { w0 } => {
                if (0.0..=1.0).contains(&w0) {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("constant weight {w0} outside [0, 1]")))
                }
            }
            WeightSpec::Imq { c }
            | WeightSpec::Md { c }
            | WeightSpec::Tmd { c }
            | WeightSpec::PerDimTmd { c } => {
                if c > 0.0 && !c.is_nan() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("threshold c = {c} must be positive")))
                }
            }
        }
    }

    pub fn is_per_dimension(&self) -> bool {
        matches!(self, WeightSpec::PerDimTmd { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            WeightSpec::Constant { .. } => "constant",
            WeightSpec::Imq { .. } => "imq",
            WeightSpec::Md { .. } => "md",
            WeightSpec::Tmd { .. } => "tmd",
            WeightSpec::PerDimTmd { .. } => "perdim_tmd",
        }
    }

    /// Threshold parameter, if the weighting has one.
    pub fn threshold(&self) -> Option<f64> {
        match *self {
            WeightSpec::Constant { .. } => None,
            WeightSpec::Imq { c }
            | WeightSpec::Md { c }
            | WeightSpec::Tmd { c }
            | WeightSpec::PerDimTmd { c } => Some(c),
        }
    }

    /// Copy of the spec with its threshold replaced. Constant specs are
    /// returned unchanged.
    pub fn with_threshold(&self, c: f64) -> WeightSpec {
        match *self {
            WeightSpec::Constant { w0 } => WeightSpec::Constant { w0 },
            WeightSpec::Imq { .. } => WeightSpec::Imq { c },
            WeightSpec::Md { .. } => WeightSpec::Md { c },
            WeightSpec::Tmd { .. } => WeightSpec::Tmd { c },
            WeightSpec::PerDimTmd { .. } => WeightSpec::PerDimTmd { c },
        }
    }
}

fn residual(y: &DVector<f64>, yhat: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    check_dim("weight residual", yhat.len(), y.len())?;
    let e = y - yhat;
    if e.iter().all(|v| v.is_finite()) {
        Ok(Some(e))
    } else {
        Ok(None)
    }
}

fn imq(sq: f64, c: f64) -> f64 {
    (1.0 + sq / (c * c)).powf(-0.5)
}

/// Scalar weight for the given residual.
pub fn compute_weight(
    spec: &WeightSpec,
    y: &DVector<f64>,
    yhat: &DVector<f64>,
    r: &SpdMatrix,
) -> Result<f64> {
    spec.validate()?;
    check_dim("compute_weight R", y.len(), r.dim())?;
    if let WeightSpec::PerDimTmd { .. } = spec {
        return Err(Error::InvalidParameter(
            "per-dimension weights need compute_weight_vector".into(),
        ));
    }
    let Some(e) = residual(y, yhat)? else {
        return Ok(0.0);
    };
    let w = match *spec {
        WeightSpec::Constant { w0 } => w0,
        WeightSpec::Imq { c } => imq(e.norm_squared(), c),
        WeightSpec::Md { c } => imq(mahalanobis_sq(&e, r)?, c),
        WeightSpec::Tmd { c } => {
            if mahalanobis_sq(&e, r)? <= c {
                1.0
            } else {
                0.0
            }
        }
        WeightSpec::PerDimTmd { .. } => unreachable!(),
    };
    Ok(w)
}

/// Per-dimension thresholded weights for a diagonal observation covariance.
pub fn compute_weight_vector(
    spec: &WeightSpec,
    y: &DVector<f64>,
    yhat: &DVector<f64>,
    r_diag: &DVector<f64>,
) -> Result<DVector<f64>> {
    spec.validate()?;
    let WeightSpec::PerDimTmd { c } = *spec else {
        return Err(Error::InvalidParameter(format!(
            "{} is not a per-dimension weight",
            spec.label()
        )));
    };
    check_dim("compute_weight_vector", y.len(), yhat.len())?;
    check_dim("compute_weight_vector Rdiag", y.len(), r_diag.len())?;
    if r_diag.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter("Rdiag entries must be positive".into()));
    }
    Ok(DVector::from_fn(y.len(), |j, _| {
        let e = y[j] - yhat[j];
        if e.is_finite() && e * e / r_diag[j] <= c {
            1.0
        } else {
            0.0
        }
    }))
}

/// Mode of the Gamma posterior over the precision scale under the Gamma
/// prior with `α = (c² − n_y + 2)/2`, `β = c²/2`. Equals `c²/(c² + maha_sq)`.
pub fn map_weight_oracle(c: f64, n_y: usize, maha_sq: f64) -> Result<f64> {
    let ny = n_y as f64;
    let alpha = (c * c - ny + 2.0) / 2.0;
    let beta = c * c / 2.0;
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} is not positive for c = {c}, n_y = {n_y}"
        )));
    }
    if !(maha_sq >= 0.0) {
        return Err(Error::InvalidParameter("maha_sq must be nonnegative".into()));
    }
    Ok((alpha + ny / 2.0 - 1.0) / (beta + maha_sq / 2.0))
}

/// Upper bound on `W(y, ŷ)² ‖y − ŷ‖` over all residuals, given `λmax(R)`.
pub fn sup_weighted_residual(spec: &WeightSpec, r_max_eig: f64) -> f64 {
    match *spec {
        // max of x c² / (c² + x²) at x = c
        WeightSpec::Imq { c } => c / 2.0,
        WeightSpec::Md { c } => r_max_eig.sqrt() * c / 2.0,
        WeightSpec::Tmd { c } | WeightSpec::PerDimTmd { c } => (r_max_eig * c).sqrt(),
        WeightSpec::Constant { .. } => f64::INFINITY,
    }
}
