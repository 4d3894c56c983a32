//! Posterior influence function for Gaussian filters.
//!
//! The PIF compares the posterior obtained from a contaminated last
//! measurement `y_t + ε` with the clean posterior, both conditioned on the
//! same history `y_{1:t−1}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::{kf_predict, wolf_update, LinearDynamics, LinearObservation};
use crate::linalg::{gaussian_kl, GaussianBelief, SpdMatrix};
use crate::weights::{compute_weight, sup_weighted_residual, WeightSpec};

/// Which way round the KL divergence is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PifOrientation {
    /// `KL(contaminated ‖ clean)`.
    #[default]
    ContaminatedClean,
    /// `KL(clean ‖ contaminated)`.
    CleanContaminated,
}

/// `KL(contaminated ‖ clean)`.
pub fn pif_gaussian(clean: &GaussianBelief, contaminated: &GaussianBelief) -> Result<f64> {
    gaussian_kl(contaminated, clean)
}

fn oriented(clean: &GaussianBelief, contaminated: &GaussianBelief, o: PifOrientation) -> Result<f64> {
    match o {
        PifOrientation::ContaminatedClean => gaussian_kl(contaminated, clean),
        PifOrientation::CleanContaminated => gaussian_kl(clean, contaminated),
    }
}

/// Linear-Gaussian model and initial belief the history is filtered with.
#[derive(Clone, Debug)]
pub struct PifProblem {
    pub dynamics: LinearDynamics,
    pub obs: LinearObservation,
    pub prior: GaussianBelief,
}

/// Square grid `[low, high]²` with `points` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub low: f64,
    pub high: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn symmetric(half_width: f64, points: usize) -> Self {
        Self {
            low: -half_width,
            high: half_width,
            points,
        }
    }

    pub fn axis(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![0.5 * (self.low + self.high)];
        }
        let step = (self.high - self.low) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.low + step * i as f64).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.points == 0 || !(self.high >= self.low) {
            return Err(Error::InvalidParameter("grid needs points ≥ 1 and high ≥ low".into()));
        }
        Ok(())
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::symmetric(5.0, 41)
    }
}

#[derive(Clone, Debug)]
pub struct PifGrid {
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    /// `values[(i, j)]` is the PIF at `ε = (eps1[i], eps2[j])`.
    pub values: DMatrix<f64>,
    pub label: String,
    pub t: usize,
}

impl PifGrid {
    pub fn max(&self) -> f64 {
        self.values.max()
    }

    /// `(ε₁, ε₂, pif)` triples in row-major order.
    pub fn triples(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.eps1.len() * self.eps2.len());
        for (i, &a) in self.eps1.iter().enumerate() {
            for (j, &b) in self.eps2.iter().enumerate() {
                out.push((a, b, self.values[(i, j)]));
            }
        }
        out
    }
}

fn filter_label(spec: &WeightSpec) -> String {
    match spec {
        WeightSpec::Constant { w0 } if *w0 == 1.0 => "kf".into(),
        other => format!("wolf-{}", other.label()),
    }
}

/// Filter state just before the last measurement, plus the clean posterior.
#[derive(Clone, Debug)]
pub struct PifContext {
    spec: WeightSpec,
    obs: LinearObservation,
    predictive: GaussianBelief,
    y_last: DVector<f64>,
    clean: GaussianBelief,
    orientation: PifOrientation,
    t: usize,
}

impl PifContext {
    pub fn new(
        spec: &WeightSpec,
        problem: &PifProblem,
        history: &[DVector<f64>],
        orientation: PifOrientation,
    ) -> Result<Self> {
        if history.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: history.len(),
            });
        }
        spec.validate()?;
        let t = history.len();
        let mut belief = problem.prior.clone();
        for y in &history[..t - 1] {
            let pred = kf_predict(&belief, &problem.dynamics)?;
            belief = wolf_update(&pred, &problem.obs, y, spec)?.posterior;
        }
        let predictive = kf_predict(&belief, &problem.dynamics)?;
        let y_last = history[t - 1].clone();
        let clean = wolf_update(&predictive, &problem.obs, &y_last, spec)?.posterior;
        Ok(Self {
            spec: *spec,
            obs: problem.obs.clone(),
            predictive,
            y_last,
            clean,
            orientation,
            t,
        })
    }

    pub fn clean(&self) -> &GaussianBelief {
        &self.clean
    }

    pub fn predictive(&self) -> &GaussianBelief {
        &self.predictive
    }

    /// PIF with the last measurement shifted by `eps`.
    pub fn value(&self, eps: &DVector<f64>) -> Result<f64> {
        check_dim("pif eps", self.y_last.len(), eps.len())?;
        let yc = &self.y_last + eps;
        let contaminated = wolf_update(&self.predictive, &self.obs, &yc, &self.spec)?.posterior;
        oriented(&self.clean, &contaminated, self.orientation)
    }

    pub fn grid(&self, grid: &GridSpec) -> Result<PifGrid> {
        grid.validate()?;
        check_dim("pif grid needs 2-d measurements", 2, self.y_last.len())?;
        let axis = grid.axis();
        let n = axis.len();
        let cells: Vec<f64> = (0..n * n)
            .into_par_iter()
            .map(|k| self.value(&DVector::from_vec(vec![axis[k / n], axis[k % n]])))
            .collect::<Result<_>>()?;
        Ok(PifGrid {
            eps1: axis.clone(),
            eps2: axis,
            values: DMatrix::from_row_slice(n, n, &cells),
            label: filter_label(&self.spec),
            t: self.t,
        })
    }

    /// Contamination-free upper bound on the PIF, assembled from the
    /// trace, mean-shift and log-determinant terms of the KL divergence.
    /// Valid for `KL(clean ‖ contaminated)`; infinite for unweighted
    /// filters.
    pub fn analytic_bound(&self) -> Result<f64> {
        if self.spec.is_per_dimension() {
            return Err(Error::InvalidParameter("bound needs a scalar weight".into()));
        }
        let r = self.obs.r();
        let sup = sup_weighted_residual(&self.spec, r.max_eigenvalue());
        if !sup.is_finite() {
            return Ok(f64::INFINITY);
        }
        let h = self.obs.h();
        let m = self.predictive.dim() as f64;
        let rinv = r.inverse();
        let info = h.transpose() * &rinv * h;
        let sigma_p = self.predictive.cov_spd();
        let sigma_p_inv = sigma_p.inverse();
        let sigma_t = self.clean.cov_spd();

        let c3 = sigma_t.trace() * (sigma_p_inv.trace() + info.trace()) - m;

        let yhat = h * self.predictive.mean();
        let w_clean = compute_weight(&self.spec, &self.y_last, &yhat, r)?.powi(2);
        let gain = sigma_t.matrix() * h.transpose() * &rinv;
        let p_max = &sigma_p_inv + &info;
        let c4 = 2.0 * max_eig(&(gain.transpose() * p_max * &gain));
        let c5 = c4 * (w_clean * (&self.y_last - &yhat).norm()).powi(2);

        let c6 = 2.0 * max_eig(&(&rinv * h * sigma_p.matrix() * h.transpose() * &rinv));
        let c8 = c6 * sup * sup;

        let c10 = sigma_p.ln_det() - sigma_t.ln_det();
        Ok(c3 + c5 + c8 + c10)
    }
}

fn max_eig(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    SpdMatrix::new(sym.clone())
        .map(|s| s.max_eigenvalue())
        .unwrap_or_else(|_| sym.symmetric_eigenvalues().max())
}

pub fn pif_grid(
    spec: &WeightSpec,
    problem: &PifProblem,
    history: &[DVector<f64>],
    grid: &GridSpec,
    orientation: PifOrientation,
) -> Result<PifGrid> {
    PifContext::new(spec, problem, history, orientation)?.grid(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use nalgebra::{dmatrix, dvector};

    fn problem() -> PifProblem {
        let dt = 0.1;
        let f = dmatrix![1.0, 0.0, dt, 0.0; 0.0, 1.0, 0.0, dt; 0.0, 0.0, 1.0, 0.0; 0.0, 0.0, 0.0, 1.0];
        PifProblem {
            dynamics: LinearDynamics::new(f, DMatrix::identity(4, 4) * 0.1).unwrap(),
            obs: LinearObservation::new(dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0], DMatrix::identity(2, 2) * 10.0).unwrap(),
            prior: GaussianBelief::isotropic(DVector::zeros(4), 1.0).unwrap(),
        }
    }

    fn history(t: usize) -> Vec<DVector<f64>> {
        let mut rng = RngStream::new(2, 0);
        (0..t).map(|k| dvector![0.1 * k as f64, -0.05 * k as f64] + rng.standard_normal_vector(2) * 3.0).collect()
    }

    #[test]
    fn identical_posteriors_give_zero() {
        let p = GaussianBelief::isotropic(dvector![1.0, 2.0], 0.5).unwrap();
        assert_eq!(pif_gaussian(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kf_matches_closed_form() {
        let ctx = PifContext::new(&WeightSpec::UNIT, &problem(), &history(20), PifOrientation::default()).unwrap();
        let sigma = ctx.clean().cov_spd();
        let gain = sigma.matrix() * problem().obs.h().transpose() * problem().obs.r().inverse();
        for eps in [dvector![1.0, 0.0], dvector![-3.0, 4.5], dvector![10.0, 10.0]] {
            let want = 0.5 * (&gain * &eps).dot(&sigma.solve_vec(&(&gain * &eps)));
            let got = ctx.value(&eps).unwrap();
            assert!((got - want).abs() < 1e-10 * (1.0 + want), "{got} vs {want}");
        }
    }

    #[test]
    fn grid_origin_is_zero_and_shape() {
        let g = pif_grid(&WeightSpec::Imq { c: 2.0 }, &problem(), &history(20), &GridSpec::symmetric(5.0, 11), PifOrientation::default()).unwrap();
        assert_eq!(g.values.shape(), (11, 11));
        assert!(g.values[(5, 5)].abs() < 1e-10);
        assert_eq!(g.triples().len(), 121);
        assert_eq!(g.label, "wolf-imq");
    }

    #[test]
    fn tmd_rejecting_both_is_zero() {
        let ctx = PifContext::new(&WeightSpec::Tmd { c: 1e-9 }, &problem(), &history(5), PifOrientation::default()).unwrap();
        assert_eq!(ctx.value(&dvector![3.0, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn kf_bound_is_infinite() {
        let ctx = PifContext::new(&WeightSpec::UNIT, &problem(), &history(5), PifOrientation::default()).unwrap();
        assert!(ctx.analytic_bound().unwrap().is_infinite());
    }

    #[test]
    fn short_history_rejected() {
        assert!(PifContext::new(&WeightSpec::UNIT, &problem(), &history(1), PifOrientation::default()).is_err());
    }
}
