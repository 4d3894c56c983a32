//! Dense Gaussian and SPD primitives.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::rng::RngStream;

/// Smallest admissible ratio between the smallest and largest diagonal
/// entries of a Cholesky factor.
pub const SPD_RATIO_TOL: f64 = 1e-12;

/// Diagonal jitter used when a caller opts into regularising a singular
/// covariance.
pub const DEFAULT_JITTER: f64 = 1e-12;

/// Symmetric positive-definite matrix with its Cholesky factor cached.
#[derive(Clone, Debug)]
pub struct SpdMatrix {
    mat: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

pub(crate) fn symmetrise(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

impl SpdMatrix {
    /// Symmetrises `m` and validates it through a Cholesky factorisation.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                context: "SpdMatrix::new",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry".into()));
        }
        let mat = symmetrise(&m);
        let chol = Cholesky::new(mat.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))?;
        let diag = chol.l_dirty().diagonal();
        let max = diag.max();
        let min = diag.min();
        if !(min >= SPD_RATIO_TOL * max) || !(max > 0.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "factor diagonal ratio {:e} below tolerance",
                min / max
            )));
        }
        Ok(Self { mat, chol })
    }

    /// Like [`SpdMatrix::new`], but retries once with `jitter * I` added when
    /// the input is singular. The flag reports whether jitter was used.
    pub fn with_jitter(m: DMatrix<f64>, jitter: f64) -> Result<(Self, bool)> {
        match Self::new(m.clone()) {
            Ok(s) => Ok((s, false)),
            Err(Error::NotPositiveDefinite(_)) => {
                let n = m.nrows();
                let s = Self::new(m + DMatrix::identity(n, n) * jitter)?;
                Ok((s, true))
            }
            Err(e) => Err(e),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    /// `s * I` for `s > 0`.
    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self::new(DMatrix::identity(n, n) * s).expect("positive multiple of identity")
    }

    pub fn from_diagonal(d: &DVector<f64>) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(d))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    /// Lower-triangular factor `L` with `L Lᵀ = A`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrise(&self.chol.inverse())
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        let mut ev = self.mat.clone().symmetric_eigenvalues();
        ev.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
        ev
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().max()
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(&self.mat * s)
    }
}

/// Mean and covariance of a Gaussian over the latent state.
#[derive(Clone, Debug)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::from_spd(mean, SpdMatrix::new(cov)?)
    }

    pub fn from_spd(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        check_dim("GaussianBelief", cov.dim(), mean.len())?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("belief mean".into()));
        }
        Ok(Self { mean, cov })
    }

    /// `N(mean, s * I)`.
    pub fn isotropic(mean: DVector<f64>, s: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, DMatrix::identity(n, n) * s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        self.cov.matrix()
    }

    pub fn cov_spd(&self) -> &SpdMatrix {
        &self.cov
    }

    /// Log-density at `x`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let maha = mahalanobis_sq(&(x - &self.mean), &self.cov)?;
        let n = self.dim() as f64;
        Ok(-0.5 * (maha + self.cov.ln_det() + n * (2.0 * std::f64::consts::PI).ln()))
    }
}

/// `KL(p ‖ q)` between two Gaussians.
pub fn gaussian_kl(p: &GaussianBelief, q: &GaussianBelief) -> Result<f64> {
    check_dim("gaussian_kl", p.dim(), q.dim())?;
    let m = p.dim() as f64;
    let tr = q.cov.solve_mat(p.cov()).trace();
    let diff = q.mean() - p.mean();
    let quad = diff.dot(&q.cov.solve_vec(&diff));
    let kl = 0.5 * (tr - m + quad + q.cov.ln_det() - p.cov.ln_det());
    Ok(kl.max(0.0))
}

/// `eᵀ R⁻¹ e`.
pub fn mahalanobis_sq(e: &DVector<f64>, r: &SpdMatrix) -> Result<f64> {
    check_dim("mahalanobis_sq", r.dim(), e.len())?;
    let l = r.chol.l_dirty();
    let z = l
        .solve_lower_triangular(e)
        .ok_or_else(|| Error::Singular("mahalanobis factor".into()))?;
    Ok(z.norm_squared())
}

/// Draws `mean + L z` with `z` standard normal.
pub fn sample_mvn(belief: &GaussianBelief, rng: &mut RngStream) -> DVector<f64> {
    let z = rng.standard_normal_vector(belief.dim());
    belief.mean() + belief.cov.chol.l_dirty().lower_triangle() * z
}

/// Zero-mean draw with covariance `cov`, using its cached factor.
pub fn sample_zero_mean(cov: &SpdMatrix, rng: &mut RngStream) -> DVector<f64> {
    let z = rng.standard_normal_vector(cov.dim());
    cov.chol.l_dirty().lower_triangle() * z
}

/// Checks `a ⪰ b` in the Loewner order, up to `tol` on the smallest
/// eigenvalue of the difference.
pub fn loewner_ge(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    let d = symmetrise(&(a - b));
    d.symmetric_eigenvalues().min() >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn belief(mean: DVector<f64>, cov: DMatrix<f64>) -> GaussianBelief {
        GaussianBelief::new(mean, cov).unwrap()
    }

    #[test]
    fn kl_identical_is_zero() {
        let p = belief(dvector![0.0, 0.0], DMatrix::identity(2, 2));
        assert_eq!(gaussian_kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        let p = belief(dvector![1.0], dmatrix![1.0]);
        let q = belief(dvector![0.0], dmatrix![1.0]);
        assert_relative_eq!(gaussian_kl(&p, &q).unwrap(), 0.5, epsilon = 1e-14);
        let p = belief(dvector![0.0], dmatrix![2.0]);
        assert_relative_eq!(gaussian_kl(&p, &q).unwrap(), 0.153_426_409_720_027_3, epsilon = 1e-12);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let p = belief(dvector![0.0], dmatrix![1.0]);
        let q = belief(dvector![0.0, 0.0], DMatrix::identity(2, 2));
        assert!(matches!(gaussian_kl(&p, &q), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn mahalanobis_hand_values() {
        let i2 = SpdMatrix::identity(2);
        assert_eq!(mahalanobis_sq(&dvector![0.0, 0.0], &i2).unwrap(), 0.0);
        assert_relative_eq!(mahalanobis_sq(&dvector![3.0, 4.0], &i2).unwrap(), 25.0);
        let r = SpdMatrix::new(dmatrix![4.0]).unwrap();
        assert_relative_eq!(mahalanobis_sq(&dvector![2.0], &r).unwrap(), 1.0);
    }

    #[test]
    fn rejects_non_spd() {
        assert!(SpdMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0]).is_err());
        assert!(SpdMatrix::new(dmatrix![0.0]).is_err());
        assert!(SpdMatrix::new(dmatrix![1.0, 0.0; 0.0, 1e-30]).is_err());
        assert!(SpdMatrix::new(dmatrix![f64::NAN]).is_err());
    }

    #[test]
    fn jitter_only_when_needed() {
        let (_, used) = SpdMatrix::with_jitter(DMatrix::identity(2, 2), DEFAULT_JITTER).unwrap();
        assert!(!used);
        let (s, used) = SpdMatrix::with_jitter(DMatrix::zeros(2, 2), DEFAULT_JITTER).unwrap();
        assert!(used);
        assert_relative_eq!(s.matrix()[(0, 0)], DEFAULT_JITTER);
    }

    #[test]
    fn degenerate_sample_hits_mean() {
        let b = belief(dvector![1.0, -2.0], DMatrix::identity(2, 2) * 1e-30);
        let mut rng = RngStream::new(3, 0);
        let x = sample_mvn(&b, &mut rng);
        assert!((x - b.mean()).amax() < 1e-10);
    }

    #[test]
    fn sample_mean_clt() {
        let b = belief(dvector![0.0], dmatrix![1.0]);
        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let s: f64 = (0..n).map(|_| sample_mvn(&b, &mut rng)[0]).sum();
        assert!((s / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn sample_deterministic() {
        let b = belief(dvector![0.0, 1.0], dmatrix![2.0, 0.5; 0.5, 1.0]);
        let x = sample_mvn(&b, &mut RngStream::new(5, 9));
        let y = sample_mvn(&b, &mut RngStream::new(5, 9));
        assert_eq!(x, y);
    }

    fn spd_strategy(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-2.0f64..2.0, n * n).prop_map(move |v| {
            let a = DMatrix::from_vec(n, n, v);
            &a * a.transpose() + DMatrix::identity(n, n) * 0.5
        })
    }

    proptest! {
        #[test]
        fn identity_mahalanobis_is_norm(v in proptest::collection::vec(-100.0f64..100.0, 1..6)) {
            let e = DVector::from_vec(v);
            let m = mahalanobis_sq(&e, &SpdMatrix::identity(e.len())).unwrap();
            prop_assert!((m - e.norm_squared()).abs() <= 1e-12 * (1.0 + e.norm_squared()));
        }

        #[test]
        fn cholesky_round_trip(a in (1usize..6).prop_flat_map(spd_strategy)) {
            let s = SpdMatrix::new(a.clone()).unwrap();
            let l = s.factor();
            let err = (&l * l.transpose() - &a).norm() / a.norm();
            prop_assert!(err < 1e-10);
        }

        #[test]
        fn kl_nonnegative_and_zero_on_self(a in spd_strategy(3), b in spd_strategy(3),
                                           mu in proptest::collection::vec(-3.0f64..3.0, 3)) {
            let p = GaussianBelief::new(DVector::from_vec(mu), a).unwrap();
            let q = GaussianBelief::new(DVector::zeros(3), b).unwrap();
            prop_assert!(gaussian_kl(&p, &q).unwrap() >= -1e-10);
            prop_assert!(gaussian_kl(&p, &p).unwrap().abs() < 1e-10);
        }
    }
}
