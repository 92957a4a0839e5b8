//! Flat `section.key = value` run configuration with a closed schema.
//!
//! ```text
//! # comments run to end of line
//! env.name = coordgame
//! run.episodes = 5000
//! graph.k = 5
//! ```
//!
//! Unknown keys, duplicates and malformed values are all reported together.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::envs::{EnvConfig, EnvName};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub gamma: f64,
    pub lr: f64,
    pub rms_alpha: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_anneal_steps: u64,
    pub batch: usize,
    pub target_sync: usize,
    pub warmup: usize,
    pub buffer: usize,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 5e-4,
            rms_alpha: 0.99,
            eps_start: 0.2,
            eps_end: 0.05,
            eps_anneal_steps: 50_000,
            batch: 32,
            target_sync: 200,
            warmup: 100,
            buffer: 5000,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            errs.push(format!("train.gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errs.push(format!("train.lr must be positive, got {}", self.lr));
        }
        if !(self.rms_alpha > 0.0 && self.rms_alpha < 1.0) {
            errs.push(format!("train.rms_alpha must lie in (0, 1), got {}", self.rms_alpha));
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            errs.push("train.eps_start and train.eps_end must lie in [0, 1]".into());
        } else if self.eps_end > self.eps_start {
            errs.push("train.eps_end must not exceed train.eps_start".into());
        }
        for (name, v) in [
            ("train.batch", self.batch),
            ("train.target_sync", self.target_sync),
            ("train.buffer", self.buffer),
        ] {
            if v == 0 {
                errs.push(format!("{name} must be positive"));
            }
        }
        join_errors(errs)
    }
}

/// Linear decay from `eps_start` at step 0 to `eps_end` at
/// `eps_anneal_steps`, constant afterwards.
pub fn epsilon_at(step: u64, hp: &HyperParams) -> f64 {
    if hp.eps_anneal_steps == 0 || step >= hp.eps_anneal_steps {
        return hp.eps_end;
    }
    let frac = step as f64 / hp.eps_anneal_steps as f64;
    hp.eps_start + (hp.eps_end - hp.eps_start) * frac
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphMode {
    Learned,
    Empty,
    /// The built-in 10-agent reference graph with 28 edges.
    G528,
    /// Fixed graph read from a 0/1 matrix file.
    Matrix(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphParams {
    pub mode: GraphMode,
    pub k: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            mode: GraphMode::Learned,
            k: 5,
            hidden: 64,
            layers: 4,
            heads: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub episodes: usize,
    pub output_dir: PathBuf,
    pub run_id: String,
    pub checkpoint_every: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub env: EnvConfig,
    pub train: HyperParams,
    pub graph: GraphParams,
    pub policy_hidden: usize,
    pub critic_hidden: usize,
}

const KEYS: &[&str] = &[
    "run.seed",
    "run.episodes",
    "run.output_dir",
    "run.id",
    "run.checkpoint_every",
    "run.eval_every",
    "run.eval_episodes",
    "env.name",
    "env.agents",
    "env.episode_len",
    "env.seed",
    "env.terminal_reward_only",
    "train.gamma",
    "train.lr",
    "train.rms_alpha",
    "train.eps_start",
    "train.eps_end",
    "train.eps_anneal_steps",
    "train.batch",
    "train.target_sync",
    "train.warmup",
    "train.buffer",
    "graph.mode",
    "graph.matrix_file",
    "graph.k",
    "graph.hidden",
    "graph.layers",
    "graph.heads",
    "policy.hidden",
    "policy.critic_hidden",
];

fn join_errors(errs: Vec<String>) -> Result<()> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errs.join("; ")))
    }
}

impl RunConfig {
    /// Defaults for an environment: 20000 episodes, seed 0, output under `runs/run`.
    pub fn defaults(env: EnvName) -> Self {
        Self {
            seed: 0,
            episodes: 20_000,
            output_dir: PathBuf::from("runs"),
            run_id: "run".into(),
            checkpoint_every: 0,
            eval_every: 0,
            eval_episodes: 100,
            env: EnvConfig::defaults(env),
            train: HyperParams::default(),
            graph: GraphParams::default(),
            policy_hidden: 64,
            critic_hidden: 64,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        let mut errs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errs.push(format!("line {}: expected `key = value`", n + 1));
                continue;
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KEYS.contains(&k.as_str()) {
                errs.push(format!("line {}: unknown key `{k}`", n + 1));
            } else if pairs.iter().any(|(seen, _)| *seen == k) {
                errs.push(format!("line {}: duplicate key `{k}`", n + 1));
            } else {
                pairs.push((k, v));
            }
        }
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());

        let env_name = match get("env.name") {
            None => {
                errs.push("missing required key `env.name`".into());
                None
            }
            Some(v) => match v.parse::<EnvName>() {
                Ok(e) => Some(e),
                Err(e) => {
                    errs.push(e.to_string());
                    None
                }
            },
        };
        let Some(env_name) = env_name else {
            return Err(Error::Config(errs.join("; ")));
        };
        let mut cfg = Self::defaults(env_name);

        fn set<T: std::str::FromStr>(errs: &mut Vec<String>, key: &str, v: Option<&str>, slot: &mut T) {
            if let Some(v) = v {
                match v.parse::<T>() {
                    Ok(x) => *slot = x,
                    Err(_) => errs.push(format!("`{key}`: cannot parse `{v}`")),
                }
            }
        }
        set(&mut errs, "run.seed", get("run.seed"), &mut cfg.seed);
        set(&mut errs, "run.episodes", get("run.episodes"), &mut cfg.episodes);
        if let Some(v) = get("run.output_dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        if let Some(v) = get("run.id") {
            cfg.run_id = v.to_string();
        }
        set(&mut errs, "run.checkpoint_every", get("run.checkpoint_every"), &mut cfg.checkpoint_every);
        set(&mut errs, "run.eval_every", get("run.eval_every"), &mut cfg.eval_every);
        set(&mut errs, "run.eval_episodes", get("run.eval_episodes"), &mut cfg.eval_episodes);
        set(&mut errs, "env.agents", get("env.agents"), &mut cfg.env.agents);
        set(&mut errs, "env.episode_len", get("env.episode_len"), &mut cfg.env.episode_len);
        set(&mut errs, "env.seed", get("env.seed"), &mut cfg.env.seed);
        set(
            &mut errs,
            "env.terminal_reward_only",
            get("env.terminal_reward_only"),
            &mut cfg.env.terminal_reward_only,
        );
        let t = &mut cfg.train;
        set(&mut errs, "train.gamma", get("train.gamma"), &mut t.gamma);
        set(&mut errs, "train.lr", get("train.lr"), &mut t.lr);
        set(&mut errs, "train.rms_alpha", get("train.rms_alpha"), &mut t.rms_alpha);
        set(&mut errs, "train.eps_start", get("train.eps_start"), &mut t.eps_start);
        set(&mut errs, "train.eps_end", get("train.eps_end"), &mut t.eps_end);
        set(&mut errs, "train.eps_anneal_steps", get("train.eps_anneal_steps"), &mut t.eps_anneal_steps);
        set(&mut errs, "train.batch", get("train.batch"), &mut t.batch);
        set(&mut errs, "train.target_sync", get("train.target_sync"), &mut t.target_sync);
        set(&mut errs, "train.warmup", get("train.warmup"), &mut t.warmup);
        set(&mut errs, "train.buffer", get("train.buffer"), &mut t.buffer);
        let g = &mut cfg.graph;
        set(&mut errs, "graph.k", get("graph.k"), &mut g.k);
        set(&mut errs, "graph.hidden", get("graph.hidden"), &mut g.hidden);
        set(&mut errs, "graph.layers", get("graph.layers"), &mut g.layers);
        set(&mut errs, "graph.heads", get("graph.heads"), &mut g.heads);
        match (get("graph.mode"), get("graph.matrix_file")) {
            (None | Some("learned"), None) => {}
            (Some("empty"), None) => g.mode = GraphMode::Empty,
            (Some("g528"), None) => g.mode = GraphMode::G528,
            (Some("matrix"), Some(path)) => g.mode = GraphMode::Matrix(PathBuf::from(path)),
            (Some("matrix"), None) => errs.push("graph.mode = matrix needs graph.matrix_file".into()),
            (_, Some(_)) => errs.push("graph.matrix_file is only valid with graph.mode = matrix".into()),
            (Some(other), None) => errs.push(format!(
                "graph.mode must be one of learned, empty, g528, matrix (got `{other}`)"
            )),
        }
        set(&mut errs, "policy.hidden", get("policy.hidden"), &mut cfg.policy_hidden);
        set(&mut errs, "policy.critic_hidden", get("policy.critic_hidden"), &mut cfg.critic_hidden);

        if errs.is_empty() {
            if let Err(Error::Config(e)) = cfg.validate() {
                errs.push(e);
            }
        }
        join_errors(errs)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(e) = self.env.validate() {
            errs.push(e.to_string());
        }
        if let Err(Error::Config(e)) = self.train.validate() {
            errs.push(e);
        }
        if self.graph.k == 0 {
            errs.push("graph.k must be at least 1".into());
        }
        if self.graph.hidden == 0 || self.graph.heads == 0 {
            errs.push("graph.hidden and graph.heads must be positive".into());
        }
        if self.policy_hidden == 0 || self.critic_hidden == 0 {
            errs.push("policy.hidden and policy.critic_hidden must be positive".into());
        }
        if self.graph.mode == GraphMode::G528 && self.env.agents != 10 {
            errs.push(format!("graph.mode = g528 needs 10 agents, env has {}", self.env.agents));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            errs.push("run.id must be a nonempty file-name component".into());
        }
        join_errors(errs)
    }

    /// Applies the `ACGM_SEED` override when present.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var("ACGM_SEED") {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("ACGM_SEED must be an unsigned integer, got `{v}`")))?;
        }
        Ok(())
    }

    /// Canonical echo listing every key, parseable by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("run.seed", &self.seed);
        line("run.episodes", &self.episodes);
        line("run.output_dir", &self.output_dir.display());
        line("run.id", &self.run_id);
        line("run.checkpoint_every", &self.checkpoint_every);
        line("run.eval_every", &self.eval_every);
        line("run.eval_episodes", &self.eval_episodes);
        line("env.name", &self.env.name);
        line("env.agents", &self.env.agents);
        line("env.episode_len", &self.env.episode_len);
        line("env.seed", &self.env.seed);
        line("env.terminal_reward_only", &self.env.terminal_reward_only);
        let t = &self.train;
        line("train.gamma", &t.gamma);
        line("train.lr", &t.lr);
        line("train.rms_alpha", &t.rms_alpha);
        line("train.eps_start", &t.eps_start);
        line("train.eps_end", &t.eps_end);
        line("train.eps_anneal_steps", &t.eps_anneal_steps);
        line("train.batch", &t.batch);
        line("train.target_sync", &t.target_sync);
        line("train.warmup", &t.warmup);
        line("train.buffer", &t.buffer);
        let mode = match &self.graph.mode {
            GraphMode::Learned => "learned".to_string(),
            GraphMode::Empty => "empty".to_string(),
            GraphMode::G528 => "g528".to_string(),
            GraphMode::Matrix(_) => "matrix".to_string(),
        };
        line("graph.mode", &mode);
        if let GraphMode::Matrix(p) = &self.graph.mode {
            line("graph.matrix_file", &p.display());
        }
        line("graph.k", &self.graph.k);
        line("graph.hidden", &self.graph.hidden);
        line("graph.layers", &self.graph.layers);
        line("graph.heads", &self.graph.heads);
        line("policy.hidden", &self.policy_hidden);
        line("policy.critic_hidden", &self.critic_hidden);
        s
    }
}
