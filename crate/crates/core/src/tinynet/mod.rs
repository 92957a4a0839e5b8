//! Small differentiable building blocks with hand-written backward passes.
//!
//! Networks here are *architectures*: they hold [`ParamId`]s into a
//! [`ParamStore`] and read values from / accumulate gradients into it. Cloning
//! a store yields an independent copy of the weights (used for target nets).

mod attention;
mod categorical;
pub mod checkpoint;
mod dense;
mod gru;
mod optim;

pub use attention::{
    attention_coefficients, pairwise_decoder_score, AttentionCache, AttentionLayer, Decoder,
    DecoderCache,
};
pub use categorical::CategoricalDist;
pub use checkpoint::Checkpoint;
pub use dense::{Activation, Dense, DenseCache};
pub use gru::{Gru, GruCache};
pub use optim::{clip_grad_norm, OptimizerState};

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Named flat tensors with same-shaped gradient slots.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor initialised uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let value = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.insert(name, shape, value)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        let n: usize = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    pub fn insert(&mut self, name: &str, shape: &[usize], value: Vec<f64>) -> ParamId {
        assert_eq!(shape.iter().product::<usize>(), value.len(), "shape/data mismatch for {name}");
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let id = self.params.len();
        self.params.push(Param {
            name: name.to_string(),
            shape: shape.to_vec(),
            grad: vec![0.0; value.len()],
            value,
        });
        self.index.insert(name.to_string(), id);
        ParamId(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.params[id.0].grad
    }

    /// Row-major matrix view of a rank-2 tensor.
    pub fn matrix(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let p = &self.params[id.0];
        ArrayView2::from_shape((p.shape[0], p.shape[1]), &p.value).expect("rank-2 parameter")
    }

    pub fn grad_matrix_mut(&mut self, id: ParamId) -> ArrayViewMut2<'_, f64> {
        let p = &mut self.params[id.0];
        ArrayViewMut2::from_shape((p.shape[0], p.shape[1]), &mut p.grad).expect("rank-2 parameter")
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn scale_grads(&mut self, s: f64) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g *= s);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Copies every value from `other`, which must have the same layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.params.len() != other.params.len() {
            return Err(Error::Dimension("parameter stores differ in layout".into()));
        }
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(Error::Dimension(format!(
                    "parameter {} does not match {}",
                    dst.name, src.name
                )));
            }
            dst.value.copy_from_slice(&src.value);
        }
        Ok(())
    }

    pub fn values_equal(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.value == b.value)
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}

pub(crate) fn check_width(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!("{what}: width {got}, expected {want}")));
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn to_row(x: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector")
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn store_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        let a = s.add_uniform("a", &[3, 4], 4, &mut rng);
        let b = s.add_zeros("b", &[3]);
        assert_eq!(s.id("a"), Some(a));
        assert_eq!(s.param(a).grad.len(), 12);
        assert!(s.value(a).iter().all(|v| v.abs() <= 0.5));
        assert_eq!(s.value(b), &[0.0; 3]);
        assert_eq!(s.num_scalars(), 15);
        s.grad_mut(b)[1] = 2.0;
        assert_eq!(s.grad_norm(), 2.0);
        s.zero_grads();
        assert_eq!(s.grad_norm(), 0.0);

        let mut t = s.clone();
        t.value_mut(a)[0] = 9.0;
        assert!(!t.values_equal(&s));
        t.copy_values_from(&s).unwrap();
        assert!(t.values_equal(&s));
    }
}
