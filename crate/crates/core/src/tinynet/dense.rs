use ndarray::{Array2, Axis};
use rand::Rng;

use super::{check_width, sigmoid, to_row, ParamId, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }
}

/// Fully connected layer `y = act(M x + b)` with `M` stored as `out x in`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    pub output: Array2<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(&format!("{name}.weight"), &[out_dim, in_dim], in_dim, rng);
        let bias = store.add_uniform(&format!("{name}.bias"), &[out_dim], in_dim, rng);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
            act,
        }
    }

    /// Row-batched forward: `x` is `n x in`.
    pub fn forward_batch(&self, store: &ParamStore, x: Array2<f64>) -> Result<DenseCache> {
        check_width("dense input", x.ncols(), self.in_dim)?;
        let mut pre = x.dot(&store.matrix(self.weight).t());
        let b = store.value(self.bias);
        for mut row in pre.rows_mut() {
            row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
        }
        let act = self.act;
        let output = pre.mapv(|v| act.apply(v));
        Ok(DenseCache {
            input: x,
            pre,
            output,
        })
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward_batch(
        &self,
        store: &mut ParamStore,
        cache: &DenseCache,
        dy: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        check_width("dense upstream gradient", dy.ncols(), self.out_dim)?;
        let act = self.act;
        let mut dpre = dy.clone();
        ndarray::Zip::from(&mut dpre)
            .and(&cache.pre)
            .and(&cache.output)
            .for_each(|g, &x, &y| *g *= act.derivative(x, y));
        let dw = dpre.t().dot(&cache.input);
        store.grad_matrix_mut(self.weight).scaled_add(1.0, &dw);
        let db = dpre.sum_axis(Axis(0));
        store
            .grad_mut(self.bias)
            .iter_mut()
            .zip(db.iter())
            .for_each(|(g, d)| *g += d);
        Ok(dpre.dot(&store.matrix(self.weight)))
    }

    pub fn forward(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(store, to_row(x))?.output.into_raw_vec_and_offset().0)
    }
}
