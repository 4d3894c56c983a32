//! Online gradient descent with Adam moments.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: DVector<f64>,
    pub v: DVector<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub inner_iters: usize,
}

impl AdamState {
    pub fn new(dim: usize, lr: f64, inner_iters: usize) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::InvalidParameter(format!("learning rate {lr} must be positive")));
        }
        if inner_iters == 0 {
            return Err(Error::InvalidParameter("inner_iters must be at least 1".into()));
        }
        Ok(Self {
            m: DVector::zeros(dim),
            v: DVector::zeros(dim),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            inner_iters,
        })
    }
}

/// Runs `inner_iters` Adam iterations on one measurement's loss.
pub fn adam_ogd_step<G>(params: &DVector<f64>, mut grad_fn: G, state: &AdamState) -> Result<(DVector<f64>, AdamState)>
where
    G: FnMut(&DVector<f64>) -> DVector<f64>,
{
    check_dim("adam moments", state.m.len(), params.len())?;
    let mut st = state.clone();
    let mut p = params.clone();
    for _ in 0..st.inner_iters {
        let g = grad_fn(&p);
        check_dim("adam gradient", p.len(), g.len())?;
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        st.step += 1;
        let t = st.step as i32;
        st.m = &st.m * st.beta1 + &g * (1.0 - st.beta1);
        st.v = &st.v * st.beta2 + g.component_mul(&g) * (1.0 - st.beta2);
        let c1 = 1.0 - st.beta1.powi(t);
        let c2 = 1.0 - st.beta2.powi(t);
        for i in 0..p.len() {
            let mhat = st.m[i] / c1;
            let vhat = st.v[i] / c2;
            p[i] -= st.lr * mhat / (vhat.sqrt() + st.eps);
        }
    }
    Ok((p, st))
}
