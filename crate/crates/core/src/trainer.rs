//! Episode rollout, the training loop, metrics rows and greedy evaluation.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::fixed_baseline;
use crate::config::{epsilon_at, GraphMode, RunConfig};
use crate::coordpolicy::{ActionSelection, CoordPolicy, NextAction, PolicyConfig};
use crate::dagmath::{nilpotent_index, topological_order, AdjacencyMatrix, WeightMatrix};
use crate::envs::{EnvConfig, Environment};
use crate::error::{Error, Result};
use crate::graphgen::{
    constraint_values, lagrangian_step, Baseline, Generator, GeneratorConfig, GeneratorOutput, LagrangianState,
};
use crate::replay::{EpisodeRecord, ReplayBuffer, Transition};
use crate::tinynet::{Checkpoint, OptimizerState};

pub const METRICS_HEADER: &str = "episode,steps,return,eval_return,g_value,c_value,xi,lambda1,lambda2,epsilon,\
edges_mean,nilpotent_mean,repair_rate,actor_loss,critic_loss";

const STREAM_INIT: u64 = 1;
const STREAM_ENV: u64 = 2;
const STREAM_ROLLOUT: u64 = 3;
const STREAM_REPLAY: u64 = 4;
const STREAM_EVAL_ENV: u64 = 5;
const STREAM_EVAL_ROLLOUT: u64 = 6;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for `(stream, index)` from a run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ stream) ^ index)
}

/// Formats like C's `%.9g`.
pub fn fmt_sig9(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

/// Where each step's coordination graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphSource {
    Learned,
    Fixed(AdjacencyMatrix),
}

impl GraphSource {
    pub fn from_mode(mode: &GraphMode, agents: usize) -> Result<Self> {
        let a = match mode {
            GraphMode::Learned => return Ok(Self::Learned),
            GraphMode::Empty => AdjacencyMatrix::empty(agents),
            GraphMode::G528 => fixed_baseline()?,
            GraphMode::Matrix(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                AdjacencyMatrix::parse(&text)?
            }
        };
        Self::fixed(a, agents)
    }

    /// A fixed graph, checked for size and acyclicity.
    pub fn fixed(a: AdjacencyMatrix, agents: usize) -> Result<Self> {
        if a.dim() != agents {
            return Err(Error::Dimension(format!("{}-node graph for {agents} agents", a.dim())));
        }
        topological_order(&a)?;
        Ok(Self::Fixed(a))
    }
}

/// Number of edges removed from every emitted graph during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDrop {
    Count(usize),
    All,
}

impl FromStr for EdgeDrop {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "inf" {
            return Ok(Self::All);
        }
        s.parse::<usize>()
            .map(Self::Count)
            .map_err(|_| Error::Argument(format!("edge drop must be a nonnegative integer or `inf`, got `{s}`")))
    }
}

impl std::fmt::Display for EdgeDrop {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Count(n) => write!(f, "{n}"),
            Self::All => f.write_str("inf"),
        }
    }
}

/// Removes uniformly chosen edges from the emitted graph and recomputes the order.
pub fn drop_edges<R: Rng + ?Sized>(out: &mut GeneratorOutput, drop: EdgeDrop, rng: &mut R) -> Result<()> {
    let edges: Vec<(usize, usize)> = out.dag.edges().collect();
    let victims: Vec<(usize, usize)> = match drop {
        EdgeDrop::Count(0) => return Ok(()),
        EdgeDrop::All => edges,
        EdgeDrop::Count(n) if n >= edges.len() => edges,
        EdgeDrop::Count(n) => sample_indices(rng, edges.len(), n).iter().map(|i| edges[i]).collect(),
    };
    for (s, t) in victims {
        out.dag.set_edge(s, t, false)?;
    }
    out.order = topological_order(&out.dag)?;
    Ok(())
}

fn fixed_output(
    generator: &Generator,
    a: &AdjacencyMatrix,
    obs: &[Vec<f64>],
    last: Option<&[usize]>,
) -> Result<GeneratorOutput> {
    Ok(GeneratorOutput {
        weights: WeightMatrix::new(a.to_real())?,
        sampled: a.clone(),
        dag: a.clone(),
        order: topological_order(a)?,
        logprob: 0.0,
        inputs: generator.inputs(obs, last)?,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeSettings<'a> {
    pub graph: &'a GraphSource,
    pub drop: EdgeDrop,
    pub selection: ActionSelection,
    pub gamma: f64,
}

/// One episode: per step a graph is drawn from the current observations and
/// previous actions, agents act in its topological order, and the
/// environment advances.
pub fn run_episode<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    generator: &Generator,
    policy: &CoordPolicy,
    settings: EpisodeSettings<'_>,
    env_seed: u64,
    rng: &mut R,
) -> Result<EpisodeRecord> {
    let mut obs = env.reset(env_seed);
    let mut hidden = policy.zero_hidden();
    let mut last: Option<Vec<usize>> = None;
    let mut steps = Vec::with_capacity(env.episode_len());
    for _ in 0..env.episode_len() {
        let mut graph = match settings.graph {
            GraphSource::Learned => generator.generate(&obs, last.as_deref(), rng)?,
            GraphSource::Fixed(a) => fixed_output(generator, a, &obs, last.as_deref())?,
        };
        drop_edges(&mut graph, settings.drop, rng)?;
        let act = policy.act_in_order(
            &graph.dag,
            &graph.order,
            &obs,
            last.as_deref(),
            &hidden,
            settings.selection,
            rng,
        )?;
        let res = env.step(&act.actions)?;
        hidden = act.hidden;
        steps.push(Transition {
            observations: obs,
            last_actions: last,
            graph,
            actions: act.actions.clone(),
            reward: res.reward,
            done: res.done,
        });
        last = Some(act.actions);
        obs = res.observations;
        if res.done {
            break;
        }
    }
    Ok(EpisodeRecord::new(steps, obs, settings.gamma))
}

/// Graph statistics over the steps of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GraphStats {
    pub g_mean: f64,
    pub c_mean: f64,
    pub edges_mean: f64,
    pub nilpotent_mean: f64,
    pub repair_rate: f64,
    /// Steps whose sample needed repair or whose graph is deeper than `k`.
    pub violations: usize,
}

pub fn graph_stats(episode: &EpisodeRecord, k: usize) -> Result<GraphStats> {
    let n = episode.len();
    if n == 0 {
        return Ok(GraphStats::default());
    }
    let mut s = GraphStats::default();
    for step in &episode.steps {
        let (g, c) = constraint_values(&step.graph, k)?;
        let idx = nilpotent_index(&step.graph.dag)
            .ok_or_else(|| Error::Consistency("emitted graph is cyclic".into()))?;
        s.g_mean += g;
        s.c_mean += c;
        s.edges_mean += step.graph.dag.edge_count() as f64;
        s.nilpotent_mean += idx as f64;
        let repaired = step.graph.was_repaired();
        if repaired {
            s.repair_rate += 1.0;
        }
        if repaired || idx > k {
            s.violations += 1;
        }
    }
    let inv = 1.0 / n as f64;
    s.g_mean *= inv;
    s.c_mean *= inv;
    s.edges_mean *= inv;
    s.nilpotent_mean *= inv;
    s.repair_rate *= inv;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub episode: usize,
    /// Environment steps taken so far, this episode included.
    pub steps: u64,
    /// Undiscounted episode return.
    pub episode_return: f64,
    pub eval_return: Option<f64>,
    pub g_value: f64,
    pub c_value: f64,
    pub xi: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub edges_mean: f64,
    pub nilpotent_mean: f64,
    pub repair_rate: f64,
    pub actor_loss: Option<f64>,
    pub critic_loss: Option<f64>,
}

impl MetricsRow {
    /// One CSV line without the trailing newline; missing values are empty.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt_sig9).unwrap_or_default();
        let mut s = String::new();
        let _ = write!(s, "{},{},{},{}", self.episode, self.steps, fmt_sig9(self.episode_return), opt(self.eval_return));
        for v in [
            self.g_value,
            self.c_value,
            self.xi,
            self.lambda1,
            self.lambda2,
            self.epsilon,
            self.edges_mean,
            self.nilpotent_mean,
            self.repair_rate,
        ] {
            let _ = write!(s, ",{}", fmt_sig9(v));
        }
        let _ = write!(s, ",{},{}", opt(self.actor_loss), opt(self.critic_loss));
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Replaces the run's graph source.
    pub graph_override: Option<AdjacencyMatrix>,
    pub drop: EdgeDrop,
    pub selection: ActionSelection,
}

impl EvalOptions {
    /// Greedy rollouts with the run's own graphs.
    pub fn greedy(episodes: usize, seed: u64) -> Self {
        Self {
            episodes,
            seed,
            graph_override: None,
            drop: EdgeDrop::Count(0),
            selection: ActionSelection::Greedy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean_return: f64,
    /// Population standard deviation.
    pub std_return: f64,
    pub mean_edges: f64,
    pub mean_nilpotent: f64,
    /// Fraction of steps needing repair or exceeding the depth bound.
    pub violation_rate: f64,
    pub returns: Vec<f64>,
}

/// Rollouts over a frozen snapshot. Episode `i` uses seeds derived from
/// `(opts.seed, i)` only, so results do not depend on evaluation order.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    env_cfg: &EnvConfig,
    generator: &Generator,
    policy: &CoordPolicy,
    graph: &GraphSource,
    k: usize,
    gamma: f64,
    opts: &EvalOptions,
) -> Result<EvalSummary> {
    if opts.episodes == 0 {
        return Ok(EvalSummary::default());
    }
    let graph = match &opts.graph_override {
        Some(a) => GraphSource::fixed(a.clone(), env_cfg.agents)?,
        None => graph.clone(),
    };
    let mut env = env_cfg.build()?;
    let settings = EpisodeSettings {
        graph: &graph,
        drop: opts.drop,
        selection: opts.selection,
        gamma,
    };
    let mut returns = Vec::with_capacity(opts.episodes);
    let (mut edges, mut nil, mut viol, mut steps) = (0.0, 0.0, 0usize, 0usize);
    for i in 0..opts.episodes as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, STREAM_EVAL_ROLLOUT, i));
        let env_seed = derive_seed(opts.seed, STREAM_EVAL_ENV, i);
        let rec = run_episode(env.as_mut(), generator, policy, settings, env_seed, &mut rng)?;
        let gs = graph_stats(&rec, k)?;
        returns.push(rec.undiscounted_return());
        edges += gs.edges_mean * rec.len() as f64;
        nil += gs.nilpotent_mean * rec.len() as f64;
        viol += gs.violations;
        steps += rec.len();
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let per_step = |x: f64| if steps == 0 { 0.0 } else { x / steps as f64 };
    Ok(EvalSummary {
        episodes: returns.len(),
        mean_return: mean,
        std_return: var.sqrt(),
        mean_edges: per_step(edges),
        mean_nilpotent: per_step(nil),
        violation_rate: per_step(viol as f64),
        returns,
    })
}

/// Training state for one run. Drive it with [`Trainer::train_episode`] or [`train`].
pub struct Trainer {
    pub config: RunConfig,
    pub generator: Generator,
    pub policy: CoordPolicy,
    pub lagrangian: LagrangianState,
    pub graph: GraphSource,
    pub episodes_done: usize,
    pub total_steps: u64,
    pub updates: usize,
    env: Box<dyn Environment>,
    gen_opt: OptimizerState,
    buffer: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    last_eval: Option<f64>,
}

impl Trainer {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let env = config.env.build()?;
        let (agents, obs_dim, n_actions) = (env.n_agents(), env.obs_dim(), env.n_actions());
        let graph = GraphSource::from_mode(&config.graph.mode, agents)?;
        let mut init = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_INIT, 0));
        let gen_cfg = GeneratorConfig {
            hidden: config.graph.hidden,
            layers: config.graph.layers,
            heads: config.graph.heads,
            ..GeneratorConfig::new(agents, obs_dim, n_actions)
        };
        let generator = Generator::new(gen_cfg, &mut init)?;
        let hp = &config.train;
        let pol_cfg = PolicyConfig {
            hidden: config.policy_hidden,
            critic_hidden: config.critic_hidden,
            learning_rate: hp.lr,
            alpha: hp.rms_alpha,
            ..PolicyConfig::new(agents, obs_dim, n_actions)
        };
        let policy = CoordPolicy::new(pol_cfg, &mut init)?;
        Ok(Self {
            lagrangian: LagrangianState::new(config.graph.k),
            gen_opt: OptimizerState::new(hp.lr, hp.rms_alpha),
            buffer: ReplayBuffer::new(hp.buffer)?,
            replay_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_REPLAY, 0)),
            config,
            generator,
            policy,
            graph,
            episodes_done: 0,
            total_steps: 0,
            updates: 0,
            env,
            last_eval: None,
        })
    }

    /// Rebuilds networks from a checkpoint's config echo and loads its tensors.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config = RunConfig::parse(&ck.config)?;
        let mut t = Self::new(config)?;
        t.generator.load_from(ck)?;
        t.policy.load_from(ck)?;
        if let Some(lag) = ck.get("lagrangian") {
            if lag.data.len() != 4 {
                return Err(Error::Format("lagrangian record must hold 4 values".into()));
            }
            t.lagrangian.xi = lag.data[0] as f64;
            t.lagrangian.lambda1 = lag.data[1] as f64;
            t.lagrangian.lambda2 = lag.data[2] as f64;
            t.lagrangian.violation_prev = lag.data[3] as f64;
        }
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.config.to_text());
        self.generator.save_into(&mut ck);
        self.policy.save_into(&mut ck);
        let l = &self.lagrangian;
        ck.push(
            "lagrangian",
            vec![4],
            vec![l.xi as f32, l.lambda1 as f32, l.lambda2 as f32, l.violation_prev as f32],
        );
        ck
    }

    pub fn evaluate(&self, opts: &EvalOptions) -> Result<EvalSummary> {
        evaluate(
            &self.config.env,
            &self.generator,
            &self.policy,
            &self.graph,
            self.config.graph.k,
            self.config.train.gamma,
            opts,
        )
    }

    /// Seed used for the periodic evaluations recorded in the metrics.
    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.config.seed, STREAM_EVAL_ENV, u64::MAX)
    }

    /// Runs one exploring episode, then one update round once warmup is over.
    pub fn train_episode(&mut self) -> Result<MetricsRow> {
        let hp = self.config.train.clone();
        let k = self.config.graph.k;
        let idx = self.episodes_done as u64;
        let epsilon = epsilon_at(self.total_steps, &hp);
        let env_seed = derive_seed(self.config.seed ^ splitmix(self.config.env.seed), STREAM_ENV, idx);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.config.seed, STREAM_ROLLOUT, idx));
        let settings = EpisodeSettings {
            graph: &self.graph,
            drop: EdgeDrop::Count(0),
            selection: ActionSelection::Explore(epsilon),
            gamma: hp.gamma,
        };
        let rec = run_episode(self.env.as_mut(), &self.generator, &self.policy, settings, env_seed, &mut rng)?;
        let stats = graph_stats(&rec, k)?;
        let episode_return = rec.undiscounted_return();
        if !episode_return.is_finite() {
            return Err(Error::NonFinite(format!("episode {idx} return {episode_return}")));
        }
        self.total_steps += rec.len() as u64;
        self.buffer.push(rec);
        self.episodes_done += 1;

        let (mut actor_loss, mut critic_loss) = (None, None);
        if self.episodes_done > hp.warmup {
            let batch = self.buffer.sample(hp.batch, &mut self.replay_rng)?;
            actor_loss = Some(self.policy.actor_update(&batch)?);
            let mut grad_stats = None;
            if self.graph == GraphSource::Learned {
                let pairs: Vec<(&GeneratorOutput, f64)> = batch
                    .iter()
                    .flat_map(|ep| ep.steps.iter().map(|s| (&s.graph, ep.discounted_return)))
                    .collect();
                let gs = self
                    .generator
                    .generator_gradient(&pairs, &self.lagrangian, Baseline::BatchMean)?;
                self.gen_opt.step(&mut self.generator.store)?;
                grad_stats = Some(gs);
            }
            critic_loss = Some(self.policy.critic_update(&batch, hp.gamma, NextAction::TargetActors)?);
            self.updates += 1;
            if self.updates.is_multiple_of(hp.target_sync) {
                self.policy.sync_targets();
            }
            if let Some(gs) = grad_stats {
                self.lagrangian = lagrangian_step(&self.lagrangian, gs.g_mean, gs.c_mean);
            }
            for (name, v) in [("actor loss", actor_loss), ("critic loss", critic_loss)] {
                if let Some(v) = v.filter(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("episode {idx} {name} {v}")));
                }
            }
            if !self.policy.all_finite() || !self.generator.store.all_finite() {
                return Err(Error::NonFinite(format!("episode {idx}: non-finite parameters")));
            }
        }

        let every = self.config.eval_every;
        if every > 0 && self.episodes_done.is_multiple_of(every) {
            let opts = EvalOptions::greedy(self.config.eval_episodes, self.eval_seed());
            self.last_eval = Some(self.evaluate(&opts)?.mean_return);
        }
        let l = &self.lagrangian;
        Ok(MetricsRow {
            episode: idx as usize,
            steps: self.total_steps,
            episode_return,
            eval_return: self.last_eval,
            g_value: stats.g_mean,
            c_value: stats.c_mean,
            xi: l.xi,
            lambda1: l.lambda1,
            lambda2: l.lambda2,
            epsilon,
            edges_mean: stats.edges_mean,
            nilpotent_mean: stats.nilpotent_mean,
            repair_rate: stats.repair_rate,
            actor_loss,
            critic_loss,
        })
    }
}

/// Runs `config.episodes` episodes, handing every metrics row to `on_row`.
pub fn train<F>(config: RunConfig, mut on_row: F) -> Result<Trainer>
where
    F: FnMut(&MetricsRow, &Trainer) -> Result<()>,
{
    let mut t = Trainer::new(config)?;
    for _ in 0..t.config.episodes {
        let row = t.train_episode()?;
        on_row(&row, &t)?;
    }
    Ok(t)
}

/// Spearman rank correlation with average ranks for ties; `None` when
/// either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &p in &idx[i..=j] {
                r[p] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dagmath::is_acyclic;
    use crate::envs::EnvName;

    fn tiny(env: EnvName) -> RunConfig {
        let mut cfg = RunConfig::defaults(env);
        cfg.graph.hidden = 8;
        cfg.graph.layers = 1;
        cfg.graph.heads = 2;
        cfg.policy_hidden = 8;
        cfg.critic_hidden = 8;
        cfg.train.warmup = 2;
        cfg.train.batch = 4;
        cfg.train.target_sync = 3;
        cfg
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(0.125), "0.125");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(-2.0 / 3.0), "-0.666666667");
        assert_eq!(fmt_sig9(123456789.0), "123456789");
        assert_eq!(fmt_sig9(1e8), "100000000");
        assert_eq!(fmt_sig9(1e9), "1e+09");
        assert_eq!(fmt_sig9(1.5e-7), "1.5e-07");
        assert_eq!(fmt_sig9(9.9999999999), "10");
        assert_eq!(fmt_sig9(f64::INFINITY), "inf");
    }

    #[test]
    fn edge_drop_parsing_and_effect() {
        assert_eq!("inf".parse::<EdgeDrop>().unwrap(), EdgeDrop::All);
        assert_eq!("7".parse::<EdgeDrop>().unwrap(), EdgeDrop::Count(7));
        assert!("-1".parse::<EdgeDrop>().is_err());
        let a = fixed_baseline().unwrap();
        let mut out = GeneratorOutput {
            weights: WeightMatrix::new(a.to_real()).unwrap(),
            sampled: a.clone(),
            dag: a.clone(),
            order: topological_order(&a).unwrap(),
            logprob: 0.0,
            inputs: ndarray::Array2::zeros((10, 1)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        drop_edges(&mut out, EdgeDrop::Count(0), &mut rng).unwrap();
        assert_eq!(out.dag, a);
        drop_edges(&mut out, EdgeDrop::Count(5), &mut rng).unwrap();
        assert_eq!(out.dag.edge_count(), 23);
        assert!(out.dag.is_subgraph_of(&a));
        out.order.validate(&out.dag).unwrap();
        drop_edges(&mut out, EdgeDrop::Count(100), &mut rng).unwrap();
        assert!(out.dag.is_empty_graph());
    }

    #[test]
    fn empty_graph_source_yields_zero_dags() {
        let mut cfg = tiny(EnvName::Cgs);
        cfg.env.agents = 3;
        cfg.graph.mode = GraphMode::Empty;
        let mut t = Trainer::new(cfg).unwrap();
        let mut env = t.config.env.build().unwrap();
        let settings = EpisodeSettings {
            graph: &t.graph,
            drop: EdgeDrop::Count(0),
            selection: ActionSelection::Explore(0.2),
            gamma: 0.99,
        };
        let rec = run_episode(env.as_mut(), &t.generator, &t.policy, settings, 1, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(rec.len(), 10);
        assert!(rec.steps.iter().all(|s| s.graph.dag.is_empty_graph()));
        for _ in 0..4 {
            let row = t.train_episode().unwrap();
            assert_eq!(row.edges_mean, 0.0);
            assert_eq!(row.xi, 1.0);
        }
    }

    #[test]
    fn learned_rollouts_are_acyclic_and_recorded() {
        let mut cfg = tiny(EnvName::Cgs);
        cfg.env.agents = 4;
        let t = Trainer::new(cfg).unwrap();
        let mut env = t.config.env.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for e in 0..5 {
            let settings = EpisodeSettings {
                graph: &t.graph,
                drop: EdgeDrop::Count(0),
                selection: ActionSelection::Explore(0.5),
                gamma: 0.99,
            };
            let rec = run_episode(env.as_mut(), &t.generator, &t.policy, settings, e, &mut rng).unwrap();
            assert_eq!(rec.len(), 10);
            assert!(rec.steps[0].last_actions.is_none());
            for (a, b) in rec.steps.iter().zip(&rec.steps[1..]) {
                assert_eq!(b.last_actions.as_ref(), Some(&a.actions));
            }
            for s in &rec.steps {
                assert!(is_acyclic(&s.graph.dag));
                s.graph.order.validate(&s.graph.dag).unwrap();
            }
            let r = rec.returns();
            for i in 0..rec.len() - 1 {
                assert!((r[i] - (rec.steps[i].reward + 0.99 * r[i + 1])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        // chi-square over the 4 joint actions of coordgame, 1e4 episodes
        let cfg = tiny(EnvName::CoordGame);
        let t = Trainer::new(cfg).unwrap();
        let mut env = t.config.env.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for e in 0..n {
            let settings = EpisodeSettings {
                graph: &t.graph,
                drop: EdgeDrop::Count(0),
                selection: ActionSelection::Explore(1.0),
                gamma: 0.99,
            };
            let rec = run_episode(env.as_mut(), &t.generator, &t.policy, settings, e, &mut rng).unwrap();
            let a = &rec.steps[0].actions;
            counts[a[0] * 2 + a[1]] += 1;
        }
        let expect = n as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        // 99.9% quantile of chi-square with 3 degrees of freedom
        assert!(chi2 < 16.27, "chi2 {chi2} counts {counts:?}");
    }

    #[test]
    fn metrics_are_deterministic_and_targets_sync_on_schedule() {
        let cfg = tiny(EnvName::CoordGame);
        let run = |cfg: RunConfig| {
            let mut rows = Vec::new();
            let mut sync_points = Vec::new();
            train(cfg, |row, t| {
                rows.push(row.to_csv());
                sync_points.push((t.updates, t.policy.targets_in_sync()));
                Ok(())
            })
            .map(|t| (rows, sync_points, t.updates))
            .unwrap()
        };
        let mut cfg = cfg;
        cfg.episodes = 12;
        let (a, syncs, updates) = run(cfg.clone());
        let (b, _, _) = run(cfg);
        assert_eq!(a, b);
        assert_eq!(a.len(), 12);
        assert_eq!(updates, 10);
        for (u, in_sync) in syncs {
            if u > 0 {
                assert_eq!(in_sync, u % 3 == 0, "after update {u}");
            }
        }
        assert!(a[0].ends_with(",,"), "no losses before warmup: {}", a[0]);
        assert_eq!(a[0].split(',').count(), METRICS_HEADER.split(',').count());
    }

    #[test]
    fn checkpoint_roundtrip_preserves_behaviour() {
        let mut cfg = tiny(EnvName::Cgs);
        cfg.env.agents = 3;
        cfg.episodes = 4;
        let t = train(cfg, |_, _| Ok(())).unwrap();
        let bytes = t.checkpoint().encode();
        let back = Trainer::from_checkpoint(&Checkpoint::decode(&bytes).unwrap()).unwrap();
        let opts = EvalOptions::greedy(3, 11);
        let a = t.evaluate(&opts).unwrap();
        let b = back.evaluate(&opts).unwrap();
        // tensors are stored as f32, so compare loosely
        for (x, y) in a.returns.iter().zip(&b.returns) {
            assert!((x - y).abs() < 1e-3 * (1.0 + x.abs()), "{x} vs {y}");
        }
        assert_eq!(back.lagrangian.k, t.lagrangian.k);
    }

    #[test]
    fn evaluation_overrides_and_drops() {
        let mut cfg = tiny(EnvName::Cgs);
        cfg.env.agents = 10;
        cfg.env.episode_len = 3;
        let t = Trainer::new(cfg).unwrap();
        assert_eq!(t.evaluate(&EvalOptions::greedy(0, 1)).unwrap(), EvalSummary::default());
        let g = EvalOptions {
            graph_override: Some(fixed_baseline().unwrap()),
            ..EvalOptions::greedy(2, 1)
        };
        let s = t.evaluate(&g).unwrap();
        assert_eq!(s.mean_edges, 28.0);
        assert_eq!(s.mean_nilpotent, 4.0);
        assert_eq!(s.violation_rate, 0.0);
        let empty = EvalOptions {
            graph_override: Some(AdjacencyMatrix::empty(10)),
            ..EvalOptions::greedy(3, 2)
        };
        let all = EvalOptions {
            drop: EdgeDrop::All,
            ..EvalOptions::greedy(3, 2)
        };
        assert_eq!(t.evaluate(&empty).unwrap().returns, t.evaluate(&all).unwrap().returns);
        let plain = EvalOptions::greedy(3, 2);
        let zero = EvalOptions {
            drop: EdgeDrop::Count(0),
            ..plain.clone()
        };
        assert_eq!(t.evaluate(&plain).unwrap(), t.evaluate(&zero).unwrap());
        assert!(t.evaluate(&EvalOptions {
            graph_override: Some(AdjacencyMatrix::empty(4)),
            ..plain
        })
        .is_err());
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 5.0, 9.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[1.0, 1.0]), None);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 0.0]).unwrap();
        assert!(r < 0.0 && r > -1.0);
    }
}
