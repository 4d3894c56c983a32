//! Optimal assignment and the 2-Wasserstein distance between ensembles.

use nalgebra::DMatrix;

use crate::ensemble::Ensemble;
use crate::error::{check_dim, Error, Result};

/// Largest ensemble size handled by the exact assignment.
pub const EXACT_W2_LIMIT: usize = 512;

/// Minimum-cost perfect matching on a square cost matrix.
///
/// Returns `perm` with row `i` assigned to column `perm[i]`. Runs the
/// shortest-augmenting-path Hungarian method in `O(n³)`.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    check_dim("assignment cost", n, cost.ncols())?;
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assignment cost".into()));
    }
    // 1-based arrays with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    Ok(perm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct W2Distance {
    pub value: f64,
    /// False when `value` is the identity-pairing upper bound.
    pub exact: bool,
}

/// `W₂` between two equally weighted particle sets.
pub fn pif_ensemble_w2(clean: &Ensemble, contaminated: &Ensemble) -> Result<W2Distance> {
    check_dim("w2 ensemble size", clean.n(), contaminated.n())?;
    check_dim("w2 state dim", clean.dim(), contaminated.dim())?;
    let n = clean.n();
    let a = clean.particles();
    let b = contaminated.particles();
    let sq = |i: usize, j: usize| (a.row(i) - b.row(j)).norm_squared();
    if n > EXACT_W2_LIMIT {
        let total: f64 = (0..n).map(|i| sq(i, i)).sum();
        return Ok(W2Distance {
            value: (total / n as f64).sqrt(),
            exact: false,
        });
    }
    Ok(W2Distance {
        value: w2_points(a, b)?,
        exact: true,
    })
}

/// Exact `W₂` for point sets of any size, including a single point.
fn w2_points(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    check_dim("w2 points", a.nrows(), b.nrows())?;
    let n = a.nrows();
    let cost = DMatrix::from_fn(n, n, |i, j| (a.row(i) - b.row(j)).norm_squared());
    let perm = min_cost_assignment(&cost)?;
    let total: f64 = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((total / n as f64).sqrt())
}
