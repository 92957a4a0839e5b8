use ndarray::{s, Array2, Axis};
use rand::Rng;

use super::{check_width, sigmoid, to_row, ParamId, ParamStore};
use crate::error::Result;

/// Gated recurrent cell, gate order (reset, update, candidate):
///
/// ```text
/// r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
/// z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_in: ParamId,
    pub w_hid: ParamId,
    pub b_in: ParamId,
    pub b_hid: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Array2<f64>,
    h: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    hn: Array2<f64>,
}

impl Gru {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let h3 = 3 * hidden;
        Self {
            w_in: store.add_uniform(&format!("{name}.w_in"), &[h3, in_dim], hidden, rng),
            w_hid: store.add_uniform(&format!("{name}.w_hid"), &[h3, hidden], hidden, rng),
            b_in: store.add_uniform(&format!("{name}.b_in"), &[h3], hidden, rng),
            b_hid: store.add_uniform(&format!("{name}.b_hid"), &[h3], hidden, rng),
            in_dim,
            hidden,
        }
    }

    /// Row-batched step: `x` is `n x in`, `h` is `n x hidden`.
    pub fn step_batch(
        &self,
        store: &ParamStore,
        x: Array2<f64>,
        h: Array2<f64>,
    ) -> Result<(Array2<f64>, GruCache)> {
        check_width("gru input", x.ncols(), self.in_dim)?;
        check_width("gru state", h.ncols(), self.hidden)?;
        let hd = self.hidden;
        let mut gi = x.dot(&store.matrix(self.w_in).t());
        let mut gh = h.dot(&store.matrix(self.w_hid).t());
        add_bias(&mut gi, store.value(self.b_in));
        add_bias(&mut gh, store.value(self.b_hid));

        let r = (&gi.slice(s![.., 0..hd]) + &gh.slice(s![.., 0..hd])).mapv(sigmoid);
        let z = (&gi.slice(s![.., hd..2 * hd]) + &gh.slice(s![.., hd..2 * hd])).mapv(sigmoid);
        let hn = gh.slice(s![.., 2 * hd..]).to_owned();
        let n = (&gi.slice(s![.., 2 * hd..]) + &(&r * &hn)).mapv(f64::tanh);
        let h_new = &n + &(&z * &(&h - &n));
        Ok((h_new, GruCache { x, h, r, z, n, hn }))
    }

    /// Accumulates parameter gradients; returns `(dL/dx, dL/dh)`.
    pub fn backward_batch(
        &self,
        store: &mut ParamStore,
        cache: &GruCache,
        dh_new: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        check_width("gru upstream gradient", dh_new.ncols(), self.hidden)?;
        let hd = self.hidden;
        let rows = dh_new.nrows();
        let GruCache { x, h, r, z, n, hn } = cache;

        let dn = dh_new * &z.mapv(|v| 1.0 - v);
        let dz = dh_new * &(h - n);
        let mut dh = dh_new * z;
        let dn_pre = &dn * &n.mapv(|v| 1.0 - v * v);
        let dr = &dn_pre * hn;
        let dr_pre = &dr * &r.mapv(|v| v * (1.0 - v));
        let dz_pre = &dz * &z.mapv(|v| v * (1.0 - v));

        let mut dgi = Array2::<f64>::zeros((rows, 3 * hd));
        dgi.slice_mut(s![.., 0..hd]).assign(&dr_pre);
        dgi.slice_mut(s![.., hd..2 * hd]).assign(&dz_pre);
        dgi.slice_mut(s![.., 2 * hd..]).assign(&dn_pre);
        let mut dgh = dgi.clone();
        dgh.slice_mut(s![.., 2 * hd..]).assign(&(&dn_pre * r));

        store.grad_matrix_mut(self.w_in).scaled_add(1.0, &dgi.t().dot(x));
        store.grad_matrix_mut(self.w_hid).scaled_add(1.0, &dgh.t().dot(h));
        accumulate(store.grad_mut(self.b_in), &dgi);
        accumulate(store.grad_mut(self.b_hid), &dgh);

        let dx = dgi.dot(&store.matrix(self.w_in));
        dh += &dgh.dot(&store.matrix(self.w_hid));
        Ok((dx, dh))
    }

    pub fn step(&self, store: &ParamStore, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let (h_new, _) = self.step_batch(store, to_row(x), to_row(h))?;
        Ok(h_new.into_raw_vec_and_offset().0)
    }
}

fn add_bias(m: &mut Array2<f64>, b: &[f64]) {
    for mut row in m.rows_mut() {
        row.iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
    }
}

fn accumulate(grad: &mut [f64], d: &Array2<f64>) {
    grad.iter_mut()
        .zip(d.sum_axis(Axis(0)).iter())
        .for_each(|(g, v)| *g += v);
}
