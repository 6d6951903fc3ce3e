//! Probability vectors over a finite outcome set.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln};

/// Sum-to-one tolerance enforced by [`Dist::new`].
pub const SUM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dist {
    probs: Vec<f64>,
}

impl Dist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDist("empty outcome set".into()));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidDist(format!("entry {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDist(format!("entries sum to {sum}")));
        }
        Ok(Dist { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidDist(format!("weights sum to {sum}")));
        }
        Dist::new(weights.iter().map(|w| w / sum).collect())
    }

    /// Softmax of `logits`, max-shifted.
    pub fn softmax(logits: &[f64]) -> Result<Self> {
        Dist::from_log_weights(logits)
    }

    /// Normalizes `exp(log_weights)` without overflow.
    pub fn from_log_weights(log_weights: &[f64]) -> Result<Self> {
        let m = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::InvalidDist(format!("max log weight is {m}")));
        }
        let w: Vec<f64> = log_weights.iter().map(|l| exp(l - m)).collect();
        Dist::from_weights(&w)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDist("empty outcome set".into()));
        }
        Ok(Dist { probs: alloc::vec![1.0 / n as f64; n] })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    /// Errors unless every entry is strictly positive.
    pub fn require_positive(&self) -> Result<()> {
        match self.probs.iter().position(|p| *p <= 0.0) {
            Some(i) => Err(Error::InvalidDist(format!("entry {i} is zero"))),
            None => Ok(()),
        }
    }

    pub fn expect(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    pub fn ln_probs(&self) -> Vec<f64> {
        self.probs.iter().map(|p| ln(*p)).collect()
    }

    /// Total variation distance.
    pub fn total_variation(&self, other: &Dist) -> f64 {
        0.5 * self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}
