//! Graph generator: per-agent features -> two attention encoders -> pairwise
//! decoder -> edge probabilities `W` -> Bernoulli sample -> acyclic repair.
//!
//! Training combines a score-function estimate for the sampling step with
//! exact gradients of the augmented-Lagrangian penalty
//! `l1 g(W) + l2 c(W^k) + xi/2 (g^2 + c^2)` taken through `W`.

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::dagmath::{
    acyclicity_grad, acyclicity_value, depth_grad, depth_value, find_cycle, topological_order,
    AdjacencyMatrix, TopoOrder, WeightMatrix,
};
use crate::error::{Error, Result};
use crate::tinynet::{
    sigmoid, Activation, AttentionCache, AttentionLayer, Checkpoint, Decoder, DecoderCache, Dense,
    DenseCache, ParamStore,
};

pub const PROB_CLAMP: f64 = 1e-6;
pub const XI_MAX: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub agents: usize,
    pub obs_dim: usize,
    pub n_actions: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
}

impl GeneratorConfig {
    /// Hidden width 64, four attention layers of eight heads.
    pub fn new(agents: usize, obs_dim: usize, n_actions: usize) -> Self {
        Self {
            agents,
            obs_dim,
            n_actions,
            hidden: 64,
            layers: 4,
            heads: 8,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.obs_dim + self.n_actions
    }
}

#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    pub weights: WeightMatrix,
    /// Bernoulli sample before repair.
    pub sampled: AdjacencyMatrix,
    pub dag: AdjacencyMatrix,
    pub order: TopoOrder,
    /// Log-probability of `sampled` under `weights`.
    pub logprob: f64,
    /// Feature-network input rows (`d x (obs + actions)`), kept for replay.
    pub inputs: Array2<f64>,
}

impl GeneratorOutput {
    pub fn was_repaired(&self) -> bool {
        self.sampled != self.dag
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianState {
    pub xi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub k: usize,
    pub violation_prev: f64,
}

impl LagrangianState {
    pub fn new(k: usize) -> Self {
        Self {
            xi: 1.0,
            lambda1: 0.0,
            lambda2: 0.0,
            k,
            violation_prev: f64::INFINITY,
        }
    }
}

/// Dual ascent on the multipliers; the penalty grows tenfold (capped at
/// `1e8`) whenever the total violation fails to shrink by a factor of four.
pub fn lagrangian_step(lag: &LagrangianState, g: f64, c: f64) -> LagrangianState {
    let violation = g + c;
    let mut next = *lag;
    next.lambda1 += lag.xi * g;
    next.lambda2 += lag.xi * c;
    if violation > 0.25 * lag.violation_prev {
        next.xi = (10.0 * lag.xi).min(XI_MAX);
    }
    next.violation_prev = violation;
    next
}

/// `(g(W), c(W^k))` on the continuous weights.
pub fn constraint_values(out: &GeneratorOutput, k: usize) -> Result<(f64, f64)> {
    let w = out.weights.as_array();
    Ok((acyclicity_value(w)?, depth_value(w, k)?))
}

/// Independent Bernoulli draws for every off-diagonal entry, row-major.
pub fn sample_graph<R: Rng + ?Sized>(weights: &WeightMatrix, rng: &mut R) -> AdjacencyMatrix {
    let d = weights.dim();
    let mut a = AdjacencyMatrix::empty(d);
    for i in 0..d {
        for j in 0..d {
            if i != j && rng.gen::<f64>() < weights.get(i, j) {
                a.set_edge(i, j, true).expect("off-diagonal");
            }
        }
    }
    a
}

/// `sum_{i != j} [a_ij ln w_ij + (1 - a_ij) ln(1 - w_ij)]` with clamped `w`.
pub fn graph_logprob(weights: &WeightMatrix, sampled: &AdjacencyMatrix) -> Result<f64> {
    let d = weights.dim();
    if sampled.dim() != d {
        return Err(Error::Dimension(format!("graph of {} for weights of {d}", sampled.dim())));
    }
    let mut lp = 0.0;
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            let w = weights.get(i, j).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            lp += if sampled.has_edge(i, j) { w.ln() } else { (1.0 - w).ln() };
        }
    }
    Ok(lp)
}

/// Breaks cycles one at a time, deleting the lowest-weight edge of the cycle
/// found first (ties go to the smallest `(source, target)`).
pub fn repair_to_dag(sampled: &AdjacencyMatrix, weights: &WeightMatrix) -> Result<AdjacencyMatrix> {
    if sampled.dim() != weights.dim() {
        return Err(Error::Dimension("graph and weights differ in size".into()));
    }
    let mut a = sampled.clone();
    while let Some(cycle) = find_cycle(&a) {
        let n = cycle.len();
        let (src, dst) = (0..n)
            .map(|p| (cycle[p], cycle[(p + 1) % n]))
            .min_by(|&(s1, t1), &(s2, t2)| {
                weights
                    .get(s1, t1)
                    .total_cmp(&weights.get(s2, t2))
                    .then((s1, t1).cmp(&(s2, t2)))
            })
            .expect("cycles are nonempty");
        a.set_edge(src, dst, false)?;
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Baseline {
    BatchMean,
    Constant(f64),
}

/// Summary of one gradient accumulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStats {
    pub g_mean: f64,
    pub c_mean: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone)]
struct ForwardCache {
    group: usize,
    mlp: Vec<DenseCache>,
    left: Vec<AttentionCache>,
    right: Vec<AttentionCache>,
    decoder: DecoderCache,
    probs: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub config: GeneratorConfig,
    pub store: ParamStore,
    mlp: Vec<Dense>,
    left: Vec<AttentionLayer>,
    right: Vec<AttentionLayer>,
    decoder: Decoder,
    forced: Option<WeightMatrix>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        if config.agents == 0 || config.hidden == 0 || config.heads == 0 {
            return Err(Error::Argument("generator sizes must be positive".into()));
        }
        let mut store = ParamStore::new();
        let h = config.hidden;
        let mlp = vec![
            Dense::new(&mut store, "gen.mlp0", config.input_dim(), h, Activation::Relu, rng),
            Dense::new(&mut store, "gen.mlp1", h, h, Activation::Relu, rng),
        ];
        let mut stack = |side: &str, store: &mut ParamStore| {
            (0..config.layers)
                .map(|l| AttentionLayer::new(store, &format!("gen.{side}{l}"), h, h, h, config.heads, rng))
                .collect::<Vec<_>>()
        };
        let left = stack("left", &mut store);
        let right = stack("right", &mut store);
        let decoder = Decoder::new(&mut store, "gen.dec", h, h, rng);
        Ok(Self {
            config,
            store,
            mlp,
            left,
            right,
            decoder,
            forced: None,
        })
    }

    /// Replaces the network output with fixed weights (tests, scripted runs).
    pub fn force_weights(&mut self, weights: Option<WeightMatrix>) -> Result<()> {
        if let Some(w) = &weights {
            if w.dim() != self.config.agents {
                return Err(Error::Dimension("forced weights have the wrong size".into()));
            }
        }
        self.forced = weights;
        Ok(())
    }

    pub fn forced_weights(&self) -> Option<&WeightMatrix> {
        self.forced.as_ref()
    }

    /// Feature-network input rows: observation followed by the one-hot
    /// previous action (all zeros at the first step).
    pub fn inputs(&self, obs: &[Vec<f64>], last_actions: Option<&[usize]>) -> Result<Array2<f64>> {
        let cfg = &self.config;
        if obs.len() != cfg.agents {
            return Err(Error::Dimension(format!("{} observations for {} agents", obs.len(), cfg.agents)));
        }
        let mut x = Array2::<f64>::zeros((cfg.agents, cfg.input_dim()));
        for (i, o) in obs.iter().enumerate() {
            if o.len() != cfg.obs_dim {
                return Err(Error::Dimension(format!("observation width {} != {}", o.len(), cfg.obs_dim)));
            }
            x.row_mut(i).as_slice_mut().expect("standard layout")[..cfg.obs_dim].copy_from_slice(o);
            if let Some(acts) = last_actions {
                let a = *acts.get(i).ok_or_else(|| Error::Dimension("too few last actions".into()))?;
                if a >= cfg.n_actions {
                    return Err(Error::Argument(format!("last action {a} out of range")));
                }
                x[[i, cfg.obs_dim + a]] = 1.0;
            }
        }
        Ok(x)
    }

    fn forward(&self, x: Array2<f64>, group: usize) -> Result<ForwardCache> {
        let mut mlp = Vec::with_capacity(self.mlp.len());
        let mut h = x;
        for layer in &self.mlp {
            let c = layer.forward_batch(&self.store, h)?;
            h = c.output.clone();
            mlp.push(c);
        }
        let encode = |stack: &[AttentionLayer]| -> Result<(Vec<AttentionCache>, Array2<f64>)> {
            let mut caches = Vec::with_capacity(stack.len());
            let mut z = h.clone();
            for layer in stack {
                let c = layer.forward(&self.store, z, group)?;
                z = c.output().clone();
                caches.push(c);
            }
            Ok((caches, z))
        };
        let (left, h_l) = encode(&self.left)?;
        let (right, h_r) = encode(&self.right)?;
        let decoder = self.decoder.forward(&self.store, h_l, h_r, group)?;
        let mut probs = decoder.logits().mapv(sigmoid);
        for (r, mut row) in probs.axis_iter_mut(Axis(0)).enumerate() {
            row[r % group] = 0.0;
        }
        Ok(ForwardCache {
            group,
            mlp,
            left,
            right,
            decoder,
            probs,
        })
    }

    fn backward(&mut self, cache: &ForwardCache, dlogits: &Array2<f64>) -> Result<()> {
        let (dh_l, dh_r) = self.decoder.backward(&mut self.store, &cache.decoder, dlogits)?;
        let mut dh = Array2::<f64>::zeros(dh_l.raw_dim());
        for (stack, caches, top) in [(&self.left, &cache.left, dh_l), (&self.right, &cache.right, dh_r)] {
            let mut d = top;
            for (layer, c) in stack.iter().zip(caches).rev() {
                d = layer.backward(&mut self.store, c, &d)?;
            }
            dh += &d;
        }
        for (layer, c) in self.mlp.iter().zip(&cache.mlp).rev() {
            dh = layer.backward_batch(&mut self.store, c, &dh)?;
        }
        let _ = cache.group;
        Ok(())
    }

    /// Edge probabilities for one set of input rows.
    pub fn weights(&self, inputs: &Array2<f64>) -> Result<WeightMatrix> {
        if let Some(w) = &self.forced {
            return Ok(w.clone());
        }
        let d = inputs.nrows();
        if d < 2 {
            return Ok(WeightMatrix::zeros(d));
        }
        WeightMatrix::new(self.forward(inputs.clone(), d)?.probs)
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        obs: &[Vec<f64>],
        last_actions: Option<&[usize]>,
        rng: &mut R,
    ) -> Result<GeneratorOutput> {
        let inputs = self.inputs(obs, last_actions)?;
        let d = inputs.nrows();
        if d == 1 && self.forced.is_none() {
            let empty = AdjacencyMatrix::empty(1);
            return Ok(GeneratorOutput {
                weights: WeightMatrix::zeros(1),
                sampled: empty.clone(),
                dag: empty,
                order: TopoOrder::identity(1),
                logprob: 0.0,
                inputs,
            });
        }
        let weights = self.weights(&inputs)?;
        let sampled = sample_graph(&weights, rng);
        let logprob = graph_logprob(&weights, &sampled)?;
        let dag = repair_to_dag(&sampled, &weights)?;
        let order = topological_order(&dag)?;
        Ok(GeneratorOutput {
            weights,
            sampled,
            dag,
            order,
            logprob,
            inputs,
        })
    }

    /// Accumulates into `store` the gradient of the minimised loss
    ///
    /// `-mean_b[(score_b - baseline) log p(A_b)] + mean_b[l1 g + l2 c + xi/2 (g^2 + c^2)]`
    ///
    /// with `W` recomputed from the stored inputs under the current
    /// parameters. Forced weights have no parameters and are rejected.
    pub fn generator_gradient(
        &mut self,
        batch: &[(&GeneratorOutput, f64)],
        lag: &LagrangianState,
        baseline: Baseline,
    ) -> Result<GradientStats> {
        if batch.is_empty() {
            return Err(Error::Argument("empty generator batch".into()));
        }
        if self.forced.is_some() {
            return Err(Error::Protocol("forced weights have no gradient".into()));
        }
        if let Some((_, s)) = batch.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFinite(format!("generator score {s}")));
        }
        let d = self.config.agents;
        if d < 2 {
            return Ok(GradientStats { g_mean: 0.0, c_mean: 0.0, baseline: 0.0 });
        }
        let n = batch.len();
        let base = match baseline {
            Baseline::BatchMean => batch.iter().map(|(_, s)| s).sum::<f64>() / n as f64,
            Baseline::Constant(b) => b,
        };
        let mut x = Array2::<f64>::zeros((n * d, self.config.input_dim()));
        for (b, (out, _)) in batch.iter().enumerate() {
            if out.inputs.dim() != (d, self.config.input_dim()) || out.sampled.dim() != d {
                return Err(Error::Dimension("generator output does not match this network".into()));
            }
            x.slice_mut(ndarray::s![b * d..(b + 1) * d, ..]).assign(&out.inputs);
        }
        let cache = self.forward(x, d)?;
        let inv_n = 1.0 / n as f64;
        let mut dlogits = Array2::<f64>::zeros((n * d, d));
        let (mut g_sum, mut c_sum) = (0.0, 0.0);
        for (b, (out, score)) in batch.iter().enumerate() {
            let w = cache.probs.slice(ndarray::s![b * d..(b + 1) * d, ..]).to_owned();
            let g = acyclicity_value(&w)?;
            let c = depth_value(&w, lag.k)?;
            g_sum += g;
            c_sum += c;
            let dw = acyclicity_grad(&w)? * (lag.lambda1 + lag.xi * g)
                + depth_grad(&w, lag.k)? * (lag.lambda2 + lag.xi * c);
            let adv = score - base;
            for i in 0..d {
                for j in 0..d {
                    if i == j {
                        continue;
                    }
                    let p = w[[i, j]];
                    let a = if out.sampled.has_edge(i, j) { 1.0 } else { 0.0 };
                    // d log p / d logit is (a - p) unless the clamp is active
                    let score_term = if (PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p) {
                        -adv * (a - p)
                    } else {
                        0.0
                    };
                    dlogits[[b * d + i, j]] = inv_n * (score_term + dw[[i, j]] * p * (1.0 - p));
                }
            }
        }
        if !dlogits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("generator logit gradient".into()));
        }
        self.backward(&cache, &dlogits)?;
        Ok(GradientStats {
            g_mean: g_sum * inv_n,
            c_mean: c_sum * inv_n,
            baseline: base,
        })
    }

    pub fn save_into(&self, ck: &mut Checkpoint) {
        ck.add_store("generator", &self.store);
    }

    pub fn load_from(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.load_store("generator", &mut self.store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagmath::is_acyclic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(agents: usize, rng: &mut ChaCha8Rng) -> Generator {
        let cfg = GeneratorConfig {
            hidden: 8,
            layers: 1,
            heads: 2,
            ..GeneratorConfig::new(agents, 3, 2)
        };
        Generator::new(cfg, rng).unwrap()
    }

    fn obs(d: usize, t: f64) -> Vec<Vec<f64>> {
        (0..d).map(|i| vec![0.1 * i as f64, t, -0.3 * t]).collect()
    }

    fn wm(rows: &[&[f64]]) -> WeightMatrix {
        let d = rows.len();
        WeightMatrix::new(Array2::from_shape_fn((d, d), |(i, j)| rows[i][j])).unwrap()
    }

    #[test]
    fn repair_examples() {
        let w = wm(&[&[0.0, 0.9], &[0.2, 0.0]]);
        let a = AdjacencyMatrix::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        let r = repair_to_dag(&a, &w).unwrap();
        assert_eq!(r, AdjacencyMatrix::from_edges(2, &[(0, 1)]).unwrap());

        let w = wm(&[&[0.0, 0.5, 0.0], &[0.0, 0.0, 0.5], &[0.5, 0.0, 0.0]]);
        let a = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let r = repair_to_dag(&a, &w).unwrap();
        assert_eq!(r, AdjacencyMatrix::from_edges(3, &[(1, 2), (2, 0)]).unwrap());

        let chain = AdjacencyMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(repair_to_dag(&chain, &w).unwrap(), chain);
    }

    #[test]
    fn repair_keeps_edges_off_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let d = rng.gen_range(2..7);
            let w = WeightMatrix::new(Array2::from_shape_fn((d, d), |(i, j)| {
                if i == j { 0.0 } else { rng.gen::<f64>() }
            }))
            .unwrap();
            let a = sample_graph(&w, &mut rng);
            let r = repair_to_dag(&a, &w).unwrap();
            assert!(is_acyclic(&r));
            assert!(r.is_subgraph_of(&a));
            // an edge (i, j) lies on no cycle iff j cannot reach i
            let reach = reachability(&a);
            for (i, j) in a.edges() {
                if !reach[j][i] {
                    assert!(r.has_edge(i, j));
                }
            }
        }
    }

    fn reachability(a: &AdjacencyMatrix) -> Vec<Vec<bool>> {
        let d = a.dim();
        let mut r: Vec<Vec<bool>> = (0..d).map(|i| (0..d).map(|j| a.has_edge(i, j)).collect()).collect();
        for k in 0..d {
            for i in 0..d {
                for j in 0..d {
                    if r[i][k] && r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
        r
    }

    #[test]
    fn lagrangian_examples() {
        let lag = LagrangianState::new(5);
        assert_eq!(lagrangian_step(&lag, 0.0, 0.0).xi, 1.0);
        assert_eq!(lagrangian_step(&lag, 0.0, 0.0).lambda1, 0.0);
        let next = lagrangian_step(&lag, 0.5, 0.0);
        assert_eq!(next.lambda1, 0.5);
        assert_eq!(next.xi, 1.0);
        assert_eq!(next.violation_prev, 0.5);
        let next = lagrangian_step(&next, 0.3, 0.1);
        assert_eq!(next.xi, 10.0);
        assert_eq!(next.lambda1, 0.8);
        assert_eq!(next.lambda2, 0.1);
        let mut s = next;
        for _ in 0..20 {
            s = lagrangian_step(&s, 0.3, 0.1);
        }
        assert_eq!(s.xi, 1e8);
    }

    #[test]
    fn constraint_value_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut gen = small(2, &mut rng);
        gen.force_weights(Some(wm(&[&[0.0, 0.5], &[0.5, 0.0]]))).unwrap();
        let out = gen.generate(&obs(2, 0.0), None, &mut rng).unwrap();
        let (g, c) = constraint_values(&out, 2).unwrap();
        assert!((g - (2.0 * 0.25f64.cosh() - 2.0)).abs() < 1e-12);
        assert!((g - 0.0628262).abs() < 1e-7);
        assert!((c - 0.5).abs() < 1e-15);

        gen.force_weights(Some(WeightMatrix::zeros(2))).unwrap();
        let out = gen.generate(&obs(2, 0.0), None, &mut rng).unwrap();
        assert_eq!(constraint_values(&out, 2).unwrap(), (0.0, 0.0));

        gen.force_weights(Some(wm(&[&[0.0, 1.0], &[0.0, 0.0]]))).unwrap();
        let out = gen.generate(&obs(2, 0.0), None, &mut rng).unwrap();
        assert_eq!(constraint_values(&out, 5).unwrap().0, 0.0);
    }

    #[test]
    fn forced_zero_weights_give_empty_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut gen = small(4, &mut rng);
        gen.force_weights(Some(WeightMatrix::zeros(4))).unwrap();
        let out = gen.generate(&obs(4, 0.2), Some(&[0, 1, 1, 0]), &mut rng).unwrap();
        assert!(out.dag.is_empty_graph());
        assert_eq!(out.order.as_slice(), &[0, 1, 2, 3]);
        assert!((out.logprob - 12.0 * (1.0 - PROB_CLAMP).ln()).abs() < 1e-15);
        assert!(out.logprob.abs() < 1e-4);
    }

    #[test]
    fn single_agent_is_degenerate_but_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gen = small(1, &mut rng);
        let out = gen.generate(&obs(1, 0.5), None, &mut rng).unwrap();
        assert!(out.dag.is_empty_graph());
        assert_eq!(out.logprob, 0.0);
    }

    #[test]
    fn zero_decoder_vector_gives_fair_coins() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut gen = small(3, &mut rng);
        gen.store.value_mut(gen.decoder.u).iter_mut().for_each(|v| *v = 0.0);
        let n = 10_000;
        let mut counts = Array2::<f64>::zeros((3, 3));
        for _ in 0..n {
            let out = gen.generate(&obs(3, 0.7), None, &mut rng).unwrap();
            assert!(out.weights.as_array().iter().enumerate().all(|(k, &w)| if k % 4 == 0 { w == 0.0 } else { w == 0.5 }));
            for (i, j) in out.sampled.edges() {
                counts[[i, j]] += 1.0;
            }
        }
        let sigma = (0.25 / n as f64).sqrt();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!((counts[[i, j]] / n as f64 - 0.5).abs() < 3.0 * sigma);
                }
            }
        }
    }

    #[test]
    fn outputs_are_acyclic_with_exact_logprob() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..5 {
            let gen = small(5, &mut rng);
            for s in 0..2000 {
                let t = (s % 13) as f64 / 13.0;
                let last: Vec<usize> = (0..5).map(|i| (i + s + trial) % 2).collect();
                let out = gen.generate(&obs(5, t), Some(&last), &mut rng).unwrap();
                assert!(is_acyclic(&out.dag));
                assert!(out.dag.is_subgraph_of(&out.sampled));
                out.order.validate(&out.dag).unwrap();
                let direct = graph_logprob(&out.weights, &out.sampled).unwrap();
                assert!((out.logprob - direct).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_scores_leave_only_the_penalty_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut gen = small(3, &mut rng);
        let outs: Vec<_> = (0..6)
            .map(|s| gen.generate(&obs(3, s as f64 * 0.1), None, &mut rng).unwrap())
            .collect();
        let batch: Vec<_> = outs.iter().map(|o| (o, 2.5)).collect();
        let zero = LagrangianState { xi: 0.0, ..LagrangianState::new(2) };
        gen.generator_gradient(&batch, &zero, Baseline::BatchMean).unwrap();
        assert!(gen.store.grad_norm() < 1e-14);

        let scored: Vec<_> = outs.iter().map(|o| (o, 0.0)).collect();
        gen.generator_gradient(&scored, &zero, Baseline::Constant(0.0)).unwrap();
        assert_eq!(gen.store.grad_norm(), 0.0);

        let lag = LagrangianState { lambda1: 1.0, ..LagrangianState::new(2) };
        gen.generator_gradient(&batch, &lag, Baseline::BatchMean).unwrap();
        assert!(gen.store.grad_norm() > 0.0);
        assert!(gen.generator_gradient(&[], &lag, Baseline::BatchMean).is_err());
    }

    /// Full loss recomputed from scratch for finite differences.
    fn loss(gen: &Generator, batch: &[(&GeneratorOutput, f64)], lag: &LagrangianState, base: f64) -> f64 {
        let n = batch.len() as f64;
        batch
            .iter()
            .map(|(out, s)| {
                let w = gen.weights(&out.inputs).unwrap();
                let lp = graph_logprob(&w, &out.sampled).unwrap();
                let g = acyclicity_value(w.as_array()).unwrap();
                let c = depth_value(w.as_array(), lag.k).unwrap();
                (-(s - base) * lp + lag.lambda1 * g + lag.lambda2 * c + 0.5 * lag.xi * (g * g + c * c)) / n
            })
            .sum()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        use crate::tinynet::gradcheck::*;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut gen = small(3, &mut rng);
        let outs: Vec<_> = (0..4)
            .map(|s| gen.generate(&obs(3, s as f64 * 0.2), Some(&[s % 2, 1, 0]), &mut rng).unwrap())
            .collect();
        let batch: Vec<_> = outs.iter().enumerate().map(|(b, o)| (o, b as f64 * 0.7 - 1.0)).collect();
        let lag = LagrangianState { xi: 3.0, lambda1: 0.4, lambda2: 0.2, k: 2, violation_prev: 1.0 };
        let stats = gen.generator_gradient(&batch, &lag, Baseline::BatchMean).unwrap();
        let base = stats.baseline;
        let numeric = numeric_param_grads(&gen.store, |s| {
            let mut probe = gen.clone();
            probe.store = s.clone();
            loss(&probe, &batch, &lag, base)
        });
        assert_store_grads_match(&gen.store, &numeric, 1e-4);
    }

    #[test]
    fn penalty_path_lowers_acyclicity() {
        use crate::tinynet::OptimizerState;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut gen = small(4, &mut rng);
        let outs: Vec<_> = (0..8)
            .map(|s| gen.generate(&obs(4, s as f64 * 0.1), None, &mut rng).unwrap())
            .collect();
        let batch: Vec<_> = outs.iter().map(|o| (o, 1.0)).collect();
        let lag = LagrangianState { xi: 10.0, lambda1: 10.0, lambda2: 10.0, k: 5, violation_prev: 1.0 };
        let mut opt = OptimizerState::new(1e-3, 0.99);
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let stats = gen.generator_gradient(&batch, &lag, Baseline::BatchMean).unwrap();
            assert!(stats.g_mean < prev, "{} !< {prev}", stats.g_mean);
            prev = stats.g_mean;
            opt.step(&mut gen.store).unwrap();
        }
    }
}
