//! Label transformations applied during the correction phase, and the
//! training loss they feed.
//!
//! Per epoch, every sample's target is rebuilt from its *original* label in
//! two steps. Bootstrapping replaces the label outright with the network's
//! soft prediction when the in-distribution posterior `u` is confidently
//! high. Dynamic softening then re-temperates the result: the label is
//! pushed through `softmax(v * y / alpha)`, so a sample believed
//! in-distribution (`v = 1`) gets sharpened toward one-hot while a sample
//! believed out-of-distribution (`v = 0`) collapses to the exact uniform
//! distribution and stops expressing a class preference at all.
//!
//! The batch loss is a soft cross entropy against these rebuilt targets
//! plus a weighted entropy penalty that pushes predictions to be confident
//! on samples with high `v` and leaves suspected OOD samples alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{softmax, SoftLabel};
use crate::metrics::shannon_entropy;
use crate::nn::cross_entropy_soft;

fn default_alpha() -> f64 {
    0.05
}
fn default_gamma() -> f64 {
    0.4
}
fn default_bootstrap_threshold() -> f64 {
    0.9
}
fn default_mixup_beta() -> f64 {
    1.0
}

/// Knobs of the correction phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionParams {
    /// Softening temperature scale; the effective temperature of a sample
    /// is `alpha / v`.
    pub alpha: f64,
    /// Weight of the entropy penalty in the total loss.
    pub gamma: f64,
    /// Bootstrap only when `u` strictly exceeds this.
    pub bootstrap_threshold: f64,
    /// Shape of the symmetric Beta distribution the mixup coefficient is
    /// drawn from.
    pub mixup_beta: f64,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        CorrectionParams {
            alpha: default_alpha(),
            gamma: default_gamma(),
            bootstrap_threshold: default_bootstrap_threshold(),
            mixup_beta: default_mixup_beta(),
        }
    }
}

impl CorrectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::Config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !(self.bootstrap_threshold > 0.0 && self.bootstrap_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "bootstrap_threshold must lie in (0, 1], got {}",
                self.bootstrap_threshold
            )));
        }
        if !(self.mixup_beta > 0.0) || !self.mixup_beta.is_finite() {
            return Err(Error::Config(format!(
                "mixup_beta must be positive, got {}",
                self.mixup_beta
            )));
        }
        Ok(())
    }
}

/// Replaces the given label with the network's full soft prediction when
/// the in-distribution posterior is confidently high (strict inequality,
/// so `u == threshold` keeps the given label). The result is a plain
/// value, never part of any gradient computation.
pub fn bootstrap_label(
    given: &SoftLabel,
    predicted: &SoftLabel,
    u: f64,
    threshold: f64,
) -> SoftLabel {
    assert_eq!(given.num_classes(), predicted.num_classes());
    if u > threshold {
        predicted.clone()
    } else {
        given.clone()
    }
}

/// The softening map on raw component values: `softmax(v * y / alpha)`.
/// Shift invariance of the softmax makes the result insensitive to a
/// constant added to all of `values`.
pub fn soften_values(values: &[f64], v: f64, alpha: f64) -> Vec<f64> {
    assert!(alpha > 0.0, "softening needs a positive temperature scale");
    assert!((0.0..=1.0).contains(&v), "v must lie in [0, 1], got {v}");
    let scaled: Vec<f64> = values.iter().map(|y| v * y / alpha).collect();
    softmax(&scaled)
}

/// Re-temperates a label. `v = 1` sharpens it toward its mode, `v = 0`
/// yields the exact uniform distribution.
pub fn dynamic_soften(label: &SoftLabel, v: f64, alpha: f64) -> SoftLabel {
    SoftLabel::new(soften_values(label.probs(), v, alpha))
        .expect("softmax output is a valid distribution")
}

/// Convex combination of a batch with a permuted copy of itself:
/// `x' = λx + (1−λ)x_perm`, same for the labels. The caller supplies the
/// mixing coefficient and the permutation (a bijection on batch indices).
pub fn mixup_batch(
    features: &[Vec<f64>],
    labels: &[SoftLabel],
    lambda: f64,
    permutation: &[usize],
) -> (Vec<Vec<f64>>, Vec<SoftLabel>) {
    let n = features.len();
    assert_eq!(labels.len(), n, "feature/label batch mismatch");
    assert_eq!(permutation.len(), n, "permutation length mismatch");
    assert!((0.0..=1.0).contains(&lambda), "lambda must lie in [0, 1]");
    let mut seen = vec![false; n];
    for &j in permutation {
        assert!(j < n && !seen[j], "permutation must be a bijection");
        seen[j] = true;
    }

    let mixed_features = features
        .iter()
        .zip(permutation)
        .map(|(x, &j)| {
            x.iter()
                .zip(&features[j])
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect()
        })
        .collect();
    let mixed_labels = labels
        .iter()
        .zip(permutation)
        .map(|(y, &j)| {
            let probs: Vec<f64> = y
                .probs()
                .iter()
                .zip(labels[j].probs())
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect();
            SoftLabel::new(probs).expect("convex mix of distributions is a distribution")
        })
        .collect();
    (mixed_features, mixed_labels)
}

/// Mean per-sample prediction entropy, weighted by `v`: samples the
/// pipeline considers out-of-distribution (`v ≈ 0`) contribute nothing,
/// so minimizing the total loss leaves them free to stay uncertain.
pub fn entropy_penalty(probs: &[SoftLabel], v_weights: &[f64]) -> Result<f64> {
    if probs.len() != v_weights.len() {
        return Err(Error::Input(format!(
            "{} entropy weights for {} predictions",
            v_weights.len(),
            probs.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Input("empty batch".to_string()));
    }
    let mut sum = 0.0;
    for (p, &v) in probs.iter().zip(v_weights) {
        assert!((0.0..=1.0).contains(&v), "v weights must lie in [0, 1]");
        sum += v * shannon_entropy(p);
    }
    Ok(sum / probs.len() as f64)
}

/// The full training objective: mean soft cross entropy against the
/// (bootstrapped, softened) targets plus `gamma` times the weighted
/// entropy penalty. Agrees with the loss the backward pass reports.
pub fn total_loss(
    probs: &[SoftLabel],
    targets: &[SoftLabel],
    v_weights: &[f64],
    params: &CorrectionParams,
) -> Result<f64> {
    if probs.len() != targets.len() {
        return Err(Error::Input(format!(
            "{} targets for {} predictions",
            targets.len(),
            probs.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Input("empty batch".to_string()));
    }
    let mut ce_sum = 0.0;
    for (p, t) in probs.iter().zip(targets) {
        ce_sum += cross_entropy_soft(p, t);
    }
    let ce = ce_sum / probs.len() as f64;
    Ok(ce + params.gamma * entropy_penalty(probs, v_weights)?)
}
