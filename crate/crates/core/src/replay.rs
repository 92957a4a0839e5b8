//! Whole-episode records and the FIFO replay buffer.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphgen::GeneratorOutput;

#[derive(Debug, Clone)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub last_actions: Option<Vec<usize>>,
    pub graph: GeneratorOutput,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeRecord {
    pub steps: Vec<Transition>,
    /// Observations after the last step, used when bootstrapping past it.
    pub final_observations: Vec<Vec<f64>>,
    pub gamma: f64,
    pub discounted_return: f64,
}

impl EpisodeRecord {
    pub fn new(steps: Vec<Transition>, final_observations: Vec<Vec<f64>>, gamma: f64) -> Self {
        let mut rec = Self {
            steps,
            final_observations,
            gamma,
            discounted_return: 0.0,
        };
        rec.discounted_return = rec.returns().first().copied().unwrap_or(0.0);
        rec
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `R_t = r_t + gamma R_{t+1}` for every step.
    pub fn returns(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.steps.len()];
        let mut acc = 0.0;
        for (t, step) in self.steps.iter().enumerate().rev() {
            acc = step.reward + self.gamma * acc;
            out[t] = acc;
        }
        out
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Argument("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Appends an episode, evicting the oldest when full.
    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn get(&self, i: usize) -> Option<&EpisodeRecord> {
        self.episodes.get(i)
    }

    /// `n` episodes drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&EpisodeRecord>> {
        if self.episodes.is_empty() {
            return Err(Error::Argument("sampling from an empty replay buffer".into()));
        }
        Ok((0..n)
            .map(|_| &self.episodes[rng.gen_range(0..self.episodes.len())])
            .collect())
    }
}
