use rand::Rng;

use crate::error::{Error, Result};

/// Probability vector over a finite action set, with log-probabilities kept
/// separately so saturated softmaxes still give finite logs.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist {
    probs: Vec<f64>,
    logs: Vec<f64>,
}

fn logs_of(probs: &[f64]) -> Vec<f64> {
    probs.iter().map(|p| p.ln()).collect()
}

impl CategoricalDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Argument("empty action set".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Argument(format!("invalid probabilities {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Argument(format!("probabilities sum to {total}")));
        }
        Ok(Self {
            logs: logs_of(&probs),
            probs,
        })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
            logs: vec![-(n as f64).ln(); n],
        }
    }

    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[k] = 1.0;
        Self {
            logs: logs_of(&probs),
            probs,
        }
    }

    /// Numerically stable softmax of `logits`; logs come from log-softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let log_total = total.ln();
        Self {
            probs: exps.into_iter().map(|e| e / total).collect(),
            logs: logits.iter().map(|l| l - max - log_total).collect(),
        }
    }

    /// `(1 - eps) * self + eps * uniform`.
    pub fn mix_uniform(&self, eps: f64) -> Self {
        let n = self.probs.len() as f64;
        let probs: Vec<f64> = self.probs.iter().map(|p| (1.0 - eps) * p + eps / n).collect();
        Self {
            logs: logs_of(&probs),
            probs,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF sampling.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last_nonzero = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last_nonzero = k;
            }
            acc += p;
            if u < acc {
                return k;
            }
        }
        last_nonzero
    }

    /// Most probable action, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    pub fn log_prob(&self, a: usize) -> Result<f64> {
        let lp = *self
            .logs
            .get(a)
            .ok_or_else(|| Error::Argument(format!("action {a} outside support of {}", self.len())))?;
        if !lp.is_finite() {
            return Err(Error::NonFinite(format!("log-probability of zero-mass action {a}")));
        }
        Ok(lp)
    }
}
