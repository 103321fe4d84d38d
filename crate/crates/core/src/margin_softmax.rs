//! Additive-cosine-margin softmax probabilities.
//!
//! Logits are `s * cos(theta_j)` for every class, with `m` subtracted from the
//! target cosine before scaling. Extraction uses `m = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine similarity of one embedding to every class center, plus its label.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineLogits {
    cosines: Vec<f64>,
    target: u32,
}

impl CosineLogits {
    /// `target` is 1-based.
    pub fn new(cosines: Vec<f64>, target: u32) -> Result<Self> {
        if cosines.is_empty() {
            return Err(Error::InvalidParam("no classes".into()));
        }
        if let Some(c) = cosines.iter().find(|c| !(-1.0..=1.0).contains(*c)) {
            return Err(Error::InvalidParam(format!("cosine {c} outside [-1, 1]")));
        }
        if target == 0 || target as usize > cosines.len() {
            return Err(Error::InvalidParam(format!(
                "target {target} outside [1, {}]",
                cosines.len()
            )));
        }
        Ok(CosineLogits { cosines, target })
    }

    pub fn cosines(&self) -> &[f64] {
        &self.cosines
    }

    pub fn target(&self) -> u32 {
        self.target
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSoftmaxConfig {
    /// Additive cosine margin.
    pub m: f64,
    /// Logit scale.
    pub s: f64,
}

impl MarginSoftmaxConfig {
    pub fn new(m: f64, s: f64) -> Result<Self> {
        let cfg = MarginSoftmaxConfig { m, s };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::InvalidParam(format!("margin m = {} must be >= 0", self.m)));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::InvalidParam(format!("scale s = {} must be > 0", self.s)));
        }
        Ok(())
    }
}

impl Default for MarginSoftmaxConfig {
    /// Inference mode: no margin, scale 64.
    fn default() -> Self {
        MarginSoftmaxConfig { m: 0.0, s: 64.0 }
    }
}

pub fn apply_margin(logits: &CosineLogits, cfg: &MarginSoftmaxConfig) -> Vec<f64> {
    let target = logits.target as usize - 1;
    logits
        .cosines
        .iter()
        .enumerate()
        .map(|(j, &c)| if j == target { cfg.s * (c - cfg.m) } else { cfg.s * c })
        .collect()
}

/// Max-shifted softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax probability of the target class after the margin is applied.
pub fn ground_truth_prob(logits: &CosineLogits, cfg: &MarginSoftmaxConfig) -> f64 {
    softmax(&apply_margin(logits, cfg))[logits.target as usize - 1]
}

/// Margin-free argmax over the cosines (1-based); ties go to the lowest index.
pub fn predict_class(logits: &CosineLogits) -> u32 {
    argmax(&logits.cosines) as u32 + 1
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}
