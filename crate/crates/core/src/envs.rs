//! Seedable cooperative environments with a shared reward.
//!
//! * [`GaussianSqueeze`]: agents pick integer effort levels in `-10..=10`,
//!   scaled by private resources `s_i`; the team is paid by a signed pair of
//!   Gaussian bumps around a total of +5 and -5.
//! * [`CooperativeNavigation`]: first-order particle world on `[-1, 1]^2`,
//!   covering landmarks while avoiding collisions.
//! * [`CoordGame`]: one-shot two-agent game where only agent 0 sees the
//!   target and agent 1 must copy agent 0's action.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Output of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn n_agents(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn episode_len(&self) -> usize;
    /// Starts a new episode; identical seeds give identical episodes.
    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>>;
    /// Advances by one joint action given as per-agent action indices.
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;
}

/// Centralised state seen by the critics: all observations concatenated.
pub fn global_state(observations: &[Vec<f64>]) -> Vec<f64> {
    observations.iter().flatten().copied().collect()
}

fn check_joint_action(actions: &[usize], agents: usize, n_actions: usize) -> Result<()> {
    if actions.len() != agents {
        return Err(Error::Argument(format!(
            "joint action has {} entries for {agents} agents",
            actions.len()
        )));
    }
    if let Some(a) = actions.iter().find(|&&a| a >= n_actions) {
        return Err(Error::Argument(format!("action index {a} out of range 0..{n_actions}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Collaborative Gaussian Squeeze

pub const CGS_MU: f64 = 5.0;
pub const CGS_SIGMA: f64 = 1.25;
pub const CGS_MAX_ACTION: i32 = 10;
pub const CGS_MAX_RESOURCE: f64 = 0.2;

/// `G(f) = f exp(-(f - 5)^2 / 1.25^2) - f exp(-(f + 5)^2 / 1.25^2)`.
pub fn cgs_reward(f: f64) -> f64 {
    let s2 = CGS_SIGMA * CGS_SIGMA;
    f * (-(f - CGS_MU).powi(2) / s2).exp() - f * (-(f + CGS_MU).powi(2) / s2).exp()
}

#[derive(Debug, Clone)]
pub struct GaussianSqueeze {
    agents: usize,
    episode_len: usize,
    terminal_reward_only: bool,
    resources: Vec<f64>,
    t: usize,
    done: bool,
}

impl GaussianSqueeze {
    pub fn new(agents: usize, episode_len: usize, terminal_reward_only: bool) -> Self {
        Self {
            agents,
            episode_len,
            terminal_reward_only,
            resources: vec![0.0; agents],
            t: 0,
            done: true,
        }
    }

    pub fn resources(&self) -> &[f64] {
        &self.resources
    }

    /// Starts an episode with explicit resources.
    pub fn reset_with(&mut self, resources: Vec<f64>) -> Result<Vec<Vec<f64>>> {
        if resources.len() != self.agents {
            return Err(Error::Argument(format!(
                "{} resources for {} agents",
                resources.len(),
                self.agents
            )));
        }
        if resources.iter().any(|s| !(0.0..=CGS_MAX_RESOURCE).contains(s)) {
            return Err(Error::Argument(format!("resources {resources:?} outside [0, 0.2]")));
        }
        self.resources = resources;
        self.t = 0;
        self.done = false;
        Ok(self.observations())
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let frac = self.t as f64 / self.episode_len as f64;
        self.resources.iter().map(|&s| vec![s, frac]).collect()
    }

    /// Steps with raw effort levels in `-10..=10`.
    pub fn cgs_step(&mut self, efforts: &[i32]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode".into()));
        }
        if efforts.len() != self.agents {
            return Err(Error::Argument(format!(
                "joint action has {} entries for {} agents",
                efforts.len(),
                self.agents
            )));
        }
        if let Some(a) = efforts.iter().find(|a| a.abs() > CGS_MAX_ACTION) {
            return Err(Error::Argument(format!("effort {a} outside -10..=10")));
        }
        let f: f64 = self
            .resources
            .iter()
            .zip(efforts)
            .map(|(s, &a)| s * a as f64)
            .sum();
        self.t += 1;
        self.done = self.t >= self.episode_len;
        let reward = if self.terminal_reward_only && !self.done {
            0.0
        } else {
            cgs_reward(f)
        };
        Ok(StepResult {
            observations: self.observations(),
            reward,
            done: self.done,
        })
    }
}

impl Environment for GaussianSqueeze {
    fn n_agents(&self) -> usize {
        self.agents
    }

    fn n_actions(&self) -> usize {
        (2 * CGS_MAX_ACTION + 1) as usize
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let resources = (0..self.agents)
            .map(|_| rng.gen_range(0.0..=CGS_MAX_RESOURCE))
            .collect();
        self.reset_with(resources).expect("sampled resources are valid")
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        check_joint_action(actions, self.agents, self.n_actions())?;
        let efforts: Vec<i32> = actions.iter().map(|&a| a as i32 - CGS_MAX_ACTION).collect();
        self.cgs_step(&efforts)
    }
}

// ---------------------------------------------------------------------------
// Cooperative Navigation

pub const NAV_MOVE: f64 = 0.1;
pub const NAV_COLLISION_RADIUS: f64 = 0.1;
pub const NAV_ARENA: f64 = 1.0;

/// Action indices: up, down, left, right, stop.
const NAV_DIRECTIONS: [(f64, f64); 5] = [(0.0, 1.0), (0.0, -1.0), (-1.0, 0.0), (1.0, 0.0), (0.0, 0.0)];

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// `-sum_l min_a |x_a - l| - #colliding pairs`.
pub fn nav_reward(agents: &[(f64, f64)], landmarks: &[(f64, f64)]) -> f64 {
    let coverage: f64 = landmarks
        .iter()
        .map(|&l| agents.iter().map(|&a| dist(a, l)).fold(f64::INFINITY, f64::min))
        .sum();
    let mut collisions = 0usize;
    for i in 0..agents.len() {
        for j in i + 1..agents.len() {
            if dist(agents[i], agents[j]) < NAV_COLLISION_RADIUS {
                collisions += 1;
            }
        }
    }
    -coverage - collisions as f64
}

#[derive(Debug, Clone)]
pub struct CooperativeNavigation {
    agents: usize,
    episode_len: usize,
    positions: Vec<(f64, f64)>,
    landmarks: Vec<(f64, f64)>,
    t: usize,
    done: bool,
}

impl CooperativeNavigation {
    pub fn new(agents: usize, episode_len: usize) -> Self {
        Self {
            agents,
            episode_len,
            positions: vec![(0.0, 0.0); agents],
            landmarks: vec![(0.0, 0.0); agents],
            t: 0,
            done: true,
        }
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn landmarks(&self) -> &[(f64, f64)] {
        &self.landmarks
    }

    /// Starts an episode from explicit agent and landmark positions.
    pub fn reset_with(
        &mut self,
        positions: Vec<(f64, f64)>,
        landmarks: Vec<(f64, f64)>,
    ) -> Result<Vec<Vec<f64>>> {
        if positions.len() != self.agents || landmarks.is_empty() {
            return Err(Error::Argument("agent/landmark counts do not match".into()));
        }
        let inside = |p: &(f64, f64)| p.0.abs() <= NAV_ARENA && p.1.abs() <= NAV_ARENA;
        if !positions.iter().chain(&landmarks).all(inside) {
            return Err(Error::Argument("positions outside the arena".into()));
        }
        self.positions = positions;
        self.landmarks = landmarks;
        self.t = 0;
        self.done = false;
        Ok(self.observations())
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.agents)
            .map(|i| {
                let (x, y) = self.positions[i];
                let mut o = vec![x, y];
                for &(lx, ly) in &self.landmarks {
                    o.extend([lx - x, ly - y]);
                }
                for (j, &(ox, oy)) in self.positions.iter().enumerate() {
                    if j != i {
                        o.extend([ox - x, oy - y]);
                    }
                }
                o
            })
            .collect()
    }

    pub fn nav_step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode".into()));
        }
        check_joint_action(actions, self.agents, NAV_DIRECTIONS.len())?;
        for (p, &a) in self.positions.iter_mut().zip(actions) {
            let (dx, dy) = NAV_DIRECTIONS[a];
            p.0 = (p.0 + NAV_MOVE * dx).clamp(-NAV_ARENA, NAV_ARENA);
            p.1 = (p.1 + NAV_MOVE * dy).clamp(-NAV_ARENA, NAV_ARENA);
        }
        self.t += 1;
        self.done = self.t >= self.episode_len;
        Ok(StepResult {
            observations: self.observations(),
            reward: nav_reward(&self.positions, &self.landmarks),
            done: self.done,
        })
    }
}

impl Environment for CooperativeNavigation {
    fn n_agents(&self) -> usize {
        self.agents
    }

    fn n_actions(&self) -> usize {
        NAV_DIRECTIONS.len()
    }

    fn obs_dim(&self) -> usize {
        2 + 2 * self.landmarks.len() + 2 * (self.agents - 1)
    }

    fn episode_len(&self) -> usize {
        self.episode_len
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point = || (rng.gen_range(-NAV_ARENA..=NAV_ARENA), rng.gen_range(-NAV_ARENA..=NAV_ARENA));
        let positions = (0..self.agents).map(|_| point()).collect();
        let landmarks = (0..self.agents).map(|_| point()).collect();
        self.reset_with(positions, landmarks).expect("sampled positions are valid")
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        self.nav_step(actions)
    }
}

// ---------------------------------------------------------------------------
// Two-agent coordination game

/// Agent 0 observes a hidden bit `z`; both are paid 1 iff `u0 = z` and `u1 = u0`.
#[derive(Debug, Clone, Default)]
pub struct CoordGame {
    target: usize,
    done: bool,
}

impl CoordGame {
    pub fn new() -> Self {
        Self { target: 0, done: true }
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn reset_with(&mut self, target: usize) -> Result<Vec<Vec<f64>>> {
        if target > 1 {
            return Err(Error::Argument(format!("target {target} is not a bit")));
        }
        self.target = target;
        self.done = false;
        Ok(self.observations())
    }

    fn observations(&self) -> Vec<Vec<f64>> {
        let mut seen = vec![0.0; 2];
        seen[self.target] = 1.0;
        vec![seen, vec![0.0; 2]]
    }

    pub fn coordgame_step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.done {
            return Err(Error::Protocol("step called on a finished episode".into()));
        }
        check_joint_action(actions, 2, 2)?;
        self.done = true;
        let reward = if actions[0] == self.target && actions[1] == actions[0] {
            1.0
        } else {
            0.0
        };
        Ok(StepResult {
            observations: self.observations(),
            reward,
            done: true,
        })
    }
}

impl Environment for CoordGame {
    fn n_agents(&self) -> usize {
        2
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn episode_len(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = rng.gen_range(0..2);
        self.reset_with(target).expect("sampled bit")
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        self.coordgame_step(actions)
    }
}

// ---------------------------------------------------------------------------
// Selection

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvName {
    Cgs,
    Nav,
    CoordGame,
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cgs" => Ok(EnvName::Cgs),
            "nav" => Ok(EnvName::Nav),
            "coordgame" => Ok(EnvName::CoordGame),
            other => Err(Error::Config(format!(
                "env.name must be one of cgs, nav, coordgame (got {other:?})"
            ))),
        }
    }
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvName::Cgs => "cgs",
            EnvName::Nav => "nav",
            EnvName::CoordGame => "coordgame",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub name: EnvName,
    pub agents: usize,
    pub episode_len: usize,
    pub seed: u64,
    pub terminal_reward_only: bool,
}

impl EnvConfig {
    /// Defaults per environment: CGS 10 agents x 10 steps, navigation
    /// 4 agents x 25 steps, coordination game 2 agents x 1 step.
    pub fn defaults(name: EnvName) -> Self {
        let (agents, episode_len) = match name {
            EnvName::Cgs => (10, 10),
            EnvName::Nav => (4, 25),
            EnvName::CoordGame => (2, 1),
        };
        Self {
            name,
            agents,
            episode_len,
            seed: 0,
            terminal_reward_only: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.episode_len == 0 {
            return Err(Error::Config("env.agents and env.episode_len must be positive".into()));
        }
        if self.name == EnvName::CoordGame && (self.agents != 2 || self.episode_len != 1) {
            return Err(Error::Config(
                "coordgame has exactly 2 agents and episode length 1".into(),
            ));
        }
        if self.agents > 64 {
            return Err(Error::Config("at most 64 agents are supported".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        self.validate()?;
        Ok(match self.name {
            EnvName::Cgs => Box::new(GaussianSqueeze::new(
                self.agents,
                self.episode_len,
                self.terminal_reward_only,
            )),
            EnvName::Nav => Box::new(CooperativeNavigation::new(self.agents, self.episode_len)),
            EnvName::CoordGame => Box::new(CoordGame::new()),
        })
    }
}
