//! Fully connected ReLU network with a scalar output and flat parameters.
//!
//! Parameter layout: every weight matrix in layer order (each row-major,
//! `out x in`), followed by every bias vector in layer order. The output
//! bias is therefore the last entry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::MeasurementModel;
use crate::linalg::SpdMatrix;
use crate::rng::RngStream;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    layers: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::InvalidParameter("an MLP needs at least input and output layers".into()));
        }
        if layers.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("layer sizes must be positive".into()));
        }
        if *layers.last().unwrap() != 1 {
            return Err(Error::InvalidParameter("output layer must have one unit".into()));
        }
        Ok(Self { layers })
    }

    /// 1-10-10-1, 141 parameters.
    pub fn two_hidden_10() -> Self {
        Self {
            layers: vec![1, 10, 10, 1],
        }
    }

    pub fn single_hidden(n_in: usize, hidden: usize) -> Result<Self> {
        Self::new(vec![n_in, hidden, 1])
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0]
    }

    pub fn n_weights(&self) -> usize {
        self.layers.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn n_params(&self) -> usize {
        self.n_weights() + self.layers[1..].iter().sum::<usize>()
    }

    /// Offsets of each layer's weight block and bias block.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut w_off = 0;
        let mut b_off = self.n_weights();
        self.layers
            .windows(2)
            .map(|w| {
                let out = (w_off, b_off);
                w_off += w[0] * w[1];
                b_off += w[1];
                out
            })
            .collect()
    }

    /// He-style initial mean: weights `N(0, 2 / fan_in)`, zero biases.
    pub fn init_params(&self, rng: &mut RngStream) -> DVector<f64> {
        let mut p = DVector::zeros(self.n_params());
        for (l, (w_off, _)) in self.offsets().into_iter().enumerate() {
            let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
            let sd = (2.0 / fan_in as f64).sqrt();
            for k in 0..fan_in * fan_out {
                p[w_off + k] = sd * rng.standard_normal();
            }
        }
        p
    }

    fn check(&self, params: &DVector<f64>, x: &[f64]) -> Result<()> {
        check_dim("MLP parameters", self.n_params(), params.len())?;
        check_dim("MLP input", self.input_dim(), x.len())
    }

    /// Forward pass keeping each layer's pre-activation.
    fn forward(&self, params: &DVector<f64>, x: &[f64]) -> Vec<DVector<f64>> {
        let n_layers = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(n_layers);
        let mut a = DVector::from_row_slice(x);
        for (l, (w_off, b_off)) in self.offsets().into_iter().enumerate() {
            let (n_in, n_out) = (self.layers[l], self.layers[l + 1]);
            let z = DVector::from_fn(n_out, |i, _| {
                let row = &params.as_slice()[w_off + i * n_in..w_off + (i + 1) * n_in];
                params[b_off + i] + row.iter().zip(a.iter()).map(|(w, v)| w * v).sum::<f64>()
            });
            a = if l + 1 < n_layers { z.map(relu) } else { z.clone() };
            pre.push(z);
        }
        pre
    }
}

fn relu(u: f64) -> f64 {
    u.max(0.0)
}

pub fn mlp_apply(spec: &MlpSpec, params: &DVector<f64>, x: &[f64]) -> Result<f64> {
    spec.check(params, x)?;
    Ok(spec.forward(params, x).last().unwrap()[0])
}

/// Gradient of the output with respect to the flat parameters. The ReLU
/// derivative at 0 is taken as 0.
pub fn mlp_jacobian(spec: &MlpSpec, params: &DVector<f64>, x: &[f64]) -> Result<DVector<f64>> {
    spec.check(params, x)?;
    let pre = spec.forward(params, x);
    let offsets = spec.offsets();
    let n_layers = pre.len();
    let mut grad = DVector::zeros(spec.n_params());
    let mut delta = DVector::from_element(1, 1.0);
    for l in (0..n_layers).rev() {
        let (w_off, b_off) = offsets[l];
        let (n_in, n_out) = (spec.layers[l], spec.layers[l + 1]);
        let input: DVector<f64> = if l == 0 {
            DVector::from_row_slice(x)
        } else {
            pre[l - 1].map(relu)
        };
        for i in 0..n_out {
            grad[b_off + i] = delta[i];
            for j in 0..n_in {
                grad[w_off + i * n_in + j] = delta[i] * input[j];
            }
        }
        if l > 0 {
            delta = DVector::from_fn(n_in, |j, _| {
                if pre[l - 1][j] > 0.0 {
                    (0..n_out).map(|i| params[w_off + i * n_in + j] * delta[i]).sum()
                } else {
                    0.0
                }
            });
        }
    }
    Ok(grad)
}

/// The network evaluated at a fixed input, as a model over its parameters.
#[derive(Clone, Debug)]
pub struct MlpObservation<'a> {
    spec: &'a MlpSpec,
    x: &'a [f64],
    r: SpdMatrix,
}

impl<'a> MlpObservation<'a> {
    pub fn new(spec: &'a MlpSpec, x: &'a [f64], r: f64) -> Result<Self> {
        check_dim("MLP input", spec.input_dim(), x.len())?;
        Ok(Self {
            spec,
            x,
            r: SpdMatrix::new(DMatrix::from_element(1, 1, r))?,
        })
    }
}

impl MeasurementModel for MlpObservation<'_> {
    fn obs_dim(&self) -> usize {
        1
    }

    fn predict_obs(&self, params: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, mlp_apply(self.spec, params, self.x)?))
    }

    fn obs_jacobian(&self, params: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = mlp_jacobian(self.spec, params, self.x)?;
        Ok(DMatrix::from_row_slice(1, g.len(), g.as_slice()))
    }

    fn obs_cov(&self) -> &SpdMatrix {
        &self.r
    }
}
