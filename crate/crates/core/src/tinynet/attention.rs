//! Graph attention encoder layer and the pairwise edge decoder.
//!
//! Both operate on node features of several graphs stacked row-wise: rows
//! `g*d .. (g+1)*d` hold the `d` agents of graph `g`.

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use super::{check_width, sigmoid, Activation, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Softmax attention over the other agents:
/// `a[i][j] = softmax_{j != i}((h_i P)(h_j P)^T / sqrt(latent))`, `a[i][i] = 0`.
pub fn attention_coefficients(h: ArrayView2<'_, f64>, proj: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    check_width("attention features", h.ncols(), proj.nrows())?;
    if h.nrows() < 2 {
        return Err(Error::Degenerate(
            "attention needs at least two agents".into(),
        ));
    }
    let q = h.dot(&proj);
    Ok(softmax_off_diagonal(&(q.dot(&q.t()) / (proj.ncols() as f64).sqrt())))
}

fn softmax_off_diagonal(scores: &Array2<f64>) -> Array2<f64> {
    let d = scores.nrows();
    let mut a = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        let max = (0..d)
            .filter(|&j| j != i)
            .map(|j| scores[[i, j]])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for j in (0..d).filter(|&j| j != i) {
            let e = (scores[[i, j]] - max).exp();
            a[[i, j]] = e;
            total += e;
        }
        a.row_mut(i).mapv_inplace(|v| v / total);
    }
    a
}

#[derive(Debug, Clone)]
struct Head {
    proj: ParamId,
    weight: ParamId,
}

/// One multi-head attention layer:
/// `h'_i = elu((1/M) sum_m sum_{j != i} a_m[i][j] W_m h_j)`.
#[derive(Debug, Clone)]
pub struct AttentionLayer {
    heads: Vec<Head>,
    pub in_dim: usize,
    pub out_dim: usize,
    pub latent: usize,
    pub act: Activation,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    group: usize,
    input: Array2<f64>,
    q: Vec<Array2<f64>>,
    coef: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    pre: Array2<f64>,
    output: Array2<f64>,
}

impl AttentionCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Attention coefficients of head `m`, stacked per graph (`rows x d`).
    pub fn coefficients(&self, m: usize) -> &Array2<f64> {
        &self.coef[m]
    }
}

impl AttentionLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        latent: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads >= 1, "attention needs at least one head");
        let heads = (0..heads)
            .map(|m| Head {
                proj: store.add_uniform(&format!("{name}.head{m}.proj"), &[in_dim, latent], in_dim, rng),
                weight: store.add_uniform(&format!("{name}.head{m}.weight"), &[out_dim, in_dim], in_dim, rng),
            })
            .collect();
        Self {
            heads,
            in_dim,
            out_dim,
            latent,
            act: Activation::Elu,
        }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head_params(&self, m: usize) -> (ParamId, ParamId) {
        (self.heads[m].proj, self.heads[m].weight)
    }

    pub fn forward(&self, store: &ParamStore, h: Array2<f64>, group: usize) -> Result<AttentionCache> {
        check_width("attention input", h.ncols(), self.in_dim)?;
        if group < 2 {
            return Err(Error::Degenerate("attention needs at least two agents".into()));
        }
        if !h.nrows().is_multiple_of(group) {
            return Err(Error::Dimension(format!(
                "{} rows do not split into graphs of {group}",
                h.nrows()
            )));
        }
        let graphs = h.nrows() / group;
        let scale = 1.0 / (self.latent as f64).sqrt();
        let inv_heads = 1.0 / self.heads.len() as f64;
        let mut pre = Array2::<f64>::zeros((h.nrows(), self.out_dim));
        let mut qs = Vec::with_capacity(self.heads.len());
        let mut coefs = Vec::with_capacity(self.heads.len());
        let mut vs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = h.dot(&store.matrix(head.proj));
            let v = h.dot(&store.matrix(head.weight).t());
            let mut coef = Array2::<f64>::zeros((h.nrows(), group));
            for g in 0..graphs {
                let rows = s![g * group..(g + 1) * group, ..];
                let qg = q.slice(rows);
                let a = softmax_off_diagonal(&(qg.dot(&qg.t()) * scale));
                pre.slice_mut(rows).scaled_add(inv_heads, &a.dot(&v.slice(rows)));
                coef.slice_mut(rows).assign(&a);
            }
            qs.push(q);
            coefs.push(coef);
            vs.push(v);
        }
        let act = self.act;
        let output = pre.mapv(|x| act.apply(x));
        Ok(AttentionCache {
            group,
            input: h,
            q: qs,
            coef: coefs,
            v: vs,
            pre,
            output,
        })
    }

    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &AttentionCache,
        dout: &Array2<f64>,
    ) -> Result<Array2<f64>> {
        check_width("attention upstream gradient", dout.ncols(), self.out_dim)?;
        let group = cache.group;
        let graphs = cache.input.nrows() / group;
        let scale = 1.0 / (self.latent as f64).sqrt();
        let inv_heads = 1.0 / self.heads.len() as f64;
        let act = self.act;
        let mut dagg = dout.clone();
        ndarray::Zip::from(&mut dagg)
            .and(&cache.pre)
            .and(&cache.output)
            .for_each(|g, &x, &y| *g *= act.derivative(x, y) * inv_heads);

        let h = &cache.input;
        let mut dh = Array2::<f64>::zeros(h.raw_dim());
        for (m, head) in self.heads.iter().enumerate() {
            let (q, a_all, v) = (&cache.q[m], &cache.coef[m], &cache.v[m]);
            let mut dv = Array2::<f64>::zeros(v.raw_dim());
            let mut dq = Array2::<f64>::zeros(q.raw_dim());
            for g in 0..graphs {
                let rows = s![g * group..(g + 1) * group, ..];
                let a = a_all.slice(rows);
                let dagg_g = dagg.slice(rows);
                let da = dagg_g.dot(&v.slice(rows).t());
                dv.slice_mut(rows).assign(&a.t().dot(&dagg_g));
                let mut ds = Array2::<f64>::zeros((group, group));
                for i in 0..group {
                    let inner: f64 = (0..group).map(|k| a[[i, k]] * da[[i, k]]).sum();
                    for j in (0..group).filter(|&j| j != i) {
                        ds[[i, j]] = a[[i, j]] * (da[[i, j]] - inner);
                    }
                }
                let sym = &ds + &ds.t();
                dq.slice_mut(rows).assign(&(sym.dot(&q.slice(rows)) * scale));
            }
            store.grad_matrix_mut(head.weight).scaled_add(1.0, &dv.t().dot(h));
            store.grad_matrix_mut(head.proj).scaled_add(1.0, &h.t().dot(&dq));
            dh += &dv.dot(&store.matrix(head.weight));
            dh += &dq.dot(&store.matrix(head.proj).t());
        }
        Ok(dh)
    }
}

/// `sigmoid(u^T tanh(W_l h_l + W_r h_r))`.
pub fn pairwise_decoder_score(
    h_l: ArrayView1<'_, f64>,
    h_r: ArrayView1<'_, f64>,
    w_l: ArrayView2<'_, f64>,
    w_r: ArrayView2<'_, f64>,
    u: ArrayView1<'_, f64>,
) -> Result<f64> {
    check_width("decoder left input", h_l.len(), w_l.ncols())?;
    check_width("decoder right input", h_r.len(), w_r.ncols())?;
    check_width("decoder hidden", w_l.nrows(), u.len())?;
    check_width("decoder hidden", w_r.nrows(), u.len())?;
    let inner = (&w_l.dot(&h_l) + &w_r.dot(&h_r)).mapv(f64::tanh);
    Ok(sigmoid(u.dot(&inner)))
}

/// Pairwise decoder producing edge logits for every ordered agent pair.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub w_l: ParamId,
    pub w_r: ParamId,
    pub u: ParamId,
    pub enc_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    group: usize,
    h_l: Array2<f64>,
    h_r: Array2<f64>,
    /// tanh activations, one row per (graph, i, j) triple
    t: Array2<f64>,
    logits: Array2<f64>,
}

impl DecoderCache {
    /// Edge logits stacked per graph (`rows x d`); diagonal entries are 0.
    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }
}

impl Decoder {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        enc_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w_l: store.add_uniform(&format!("{name}.w_l"), &[hidden, enc_dim], enc_dim, rng),
            w_r: store.add_uniform(&format!("{name}.w_r"), &[hidden, enc_dim], enc_dim, rng),
            u: store.add_uniform(&format!("{name}.u"), &[hidden], hidden, rng),
            enc_dim,
            hidden,
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        h_l: Array2<f64>,
        h_r: Array2<f64>,
        group: usize,
    ) -> Result<DecoderCache> {
        check_width("decoder left input", h_l.ncols(), self.enc_dim)?;
        check_width("decoder right input", h_r.ncols(), self.enc_dim)?;
        if h_l.nrows() != h_r.nrows() || group == 0 || !h_l.nrows().is_multiple_of(group) {
            return Err(Error::Dimension("decoder inputs do not form whole graphs".into()));
        }
        let graphs = h_l.nrows() / group;
        let left = h_l.dot(&store.matrix(self.w_l).t());
        let right = h_r.dot(&store.matrix(self.w_r).t());
        let u = ArrayView1::from(store.value(self.u));
        let mut t = Array2::<f64>::zeros((graphs * group * group, self.hidden));
        let mut logits = Array2::<f64>::zeros((graphs * group, group));
        for g in 0..graphs {
            for i in 0..group {
                for j in 0..group {
                    if i == j {
                        continue;
                    }
                    let row = (g * group + i) * group + j;
                    let mut tr = t.row_mut(row);
                    tr.assign(&(&left.row(g * group + i) + &right.row(g * group + j)));
                    tr.mapv_inplace(f64::tanh);
                    logits[[g * group + i, j]] = u.dot(&tr);
                }
            }
        }
        Ok(DecoderCache {
            group,
            h_l,
            h_r,
            t,
            logits,
        })
    }

    /// Backward from edge-logit gradients; returns `(dL/dh_l, dL/dh_r)`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &DecoderCache,
        dlogits: &Array2<f64>,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        if dlogits.raw_dim() != cache.logits.raw_dim() {
            return Err(Error::Dimension("decoder gradient shape mismatch".into()));
        }
        let group = cache.group;
        let rows = cache.h_l.nrows();
        let graphs = rows / group;
        let u = store.value(self.u).to_vec();
        let mut du = vec![0.0; self.hidden];
        let mut dleft = Array2::<f64>::zeros((rows, self.hidden));
        let mut dright = Array2::<f64>::zeros((rows, self.hidden));
        for g in 0..graphs {
            for i in 0..group {
                for j in 0..group {
                    let dl = dlogits[[g * group + i, j]];
                    if i == j || dl == 0.0 {
                        continue;
                    }
                    let t = cache.t.row((g * group + i) * group + j);
                    for k in 0..self.hidden {
                        du[k] += dl * t[k];
                        let dpre = dl * u[k] * (1.0 - t[k] * t[k]);
                        dleft[[g * group + i, k]] += dpre;
                        dright[[g * group + j, k]] += dpre;
                    }
                }
            }
        }
        store.grad_mut(self.u).iter_mut().zip(&du).for_each(|(g, d)| *g += d);
        store.grad_matrix_mut(self.w_l).scaled_add(1.0, &dleft.t().dot(&cache.h_l));
        store.grad_matrix_mut(self.w_r).scaled_add(1.0, &dright.t().dot(&cache.h_r));
        let dh_l = dleft.dot(&store.matrix(self.w_l));
        let dh_r = dright.dot(&store.matrix(self.w_r));
        Ok((dh_l, dh_r))
    }

    /// Edge probability for one ordered pair of feature rows.
    pub fn score(&self, store: &ParamStore, h_l: ArrayView1<'_, f64>, h_r: ArrayView1<'_, f64>) -> Result<f64> {
        pairwise_decoder_score(
            h_l,
            h_r,
            store.matrix(self.w_l),
            store.matrix(self.w_r),
            ArrayView1::from(store.value(self.u)),
        )
    }
}
