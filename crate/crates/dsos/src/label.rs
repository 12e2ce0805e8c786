use crate::error::{Error, Result};

/// Probabilities below this are clamped before any logarithm is taken.
pub const PROB_FLOOR: f64 = 1e-12;

/// Maximum drift from 1.0 a probability vector may show and still be
/// accepted as a distribution.
pub const SUM_TOL: f64 = 1e-9;

/// A probability distribution over class indices.
///
/// Every entry lies in [0, 1] and the entries sum to one within `SUM_TOL`.
/// Constructors either guarantee this by construction (`one_hot`,
/// `uniform`, `from_logits`) or validate it (`new`).
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    /// Validates and wraps an explicit probability vector.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::Input(format!(
                "a label needs at least 2 classes, got {}",
                probs.len()
            )));
        }
        let mut sum = 0.0;
        for (c, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0 + SUM_TOL).contains(&p) {
                return Err(Error::Input(format!(
                    "probability for class {c} is {p}, expected a value in [0, 1]"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Input(format!(
                "probabilities sum to {sum}, expected 1 within {SUM_TOL}"
            )));
        }
        Ok(SoftLabel { probs })
    }

    /// All mass on `class`.
    pub fn one_hot(class: usize, num_classes: usize) -> Self {
        assert!(class < num_classes, "class {class} out of {num_classes}");
        let mut probs = vec![0.0; num_classes];
        probs[class] = 1.0;
        SoftLabel { probs }
    }

    /// Equal mass on every class.
    pub fn uniform(num_classes: usize) -> Self {
        assert!(num_classes >= 2);
        SoftLabel {
            probs: vec![1.0 / num_classes as f64; num_classes],
        }
    }

    /// Softmax of raw scores, computed with max subtraction so large
    /// logits cannot overflow.
    pub fn from_logits(logits: &[f64]) -> Self {
        assert!(logits.len() >= 2);
        SoftLabel {
            probs: softmax(logits),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, class: usize) -> f64 {
        self.probs[class]
    }

    /// Index of the largest entry; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = c;
            }
        }
        best
    }
}

/// Numerically stable softmax. The output sums to 1 within `SUM_TOL` and is
/// invariant (to well below that) under a constant shift of the input.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// ln(p) with the probability clamped to [`PROB_FLOOR`, 1] first.
pub fn ln_clamped(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0).ln()
}
