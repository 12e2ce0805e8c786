//! Per-sample noise detection metrics.
//!
//! The core signal is the collision entropy of the *interpolated label*,
//! the midpoint between a sample's given one-hot label and the network's
//! prediction. When label and prediction agree the midpoint is nearly
//! one-hot and the entropy is near 0. When the network confidently
//! disagrees, the midpoint has two bins of mass 1/2 and the entropy lands
//! exactly at `-ln(1/2)` regardless of the class count; this value is the
//! `PIVOT` separating agreeing from disagreeing samples. When the network
//! is maximally unsure (an out-of-distribution sample), the midpoint is a
//! half-uniform mix whose collision probability is `1/4 + 3/(4C)`, so the
//! entropy meets the pivot at C = 3 and rises strictly above it for C >= 4,
//! approaching `2 ln 2`. That headroom over the disagreeing case is what
//! lets the two noise flavours be told apart downstream. At C = 2 the
//! half-uniform mix falls *below* the pivot, which is why the pipeline
//! refuses binary problems.
//!
//! Two reference metrics are included for comparison: the Shannon entropy
//! of the same interpolation, and the classic small-loss criterion (the
//! cross entropy against the given label alone).

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::label::{ln_clamped, SoftLabel};

/// Collision entropy of an even two-bin split: `-ln(1/2)`. Samples whose
/// detection value stays at or below this agree with their label; values
/// above it indicate noise.
pub const PIVOT: f64 = std::f64::consts::LN_2;

/// Midpoint between two distributions over the same classes.
pub fn interpolated_label(given: &SoftLabel, predicted: &SoftLabel) -> Result<SoftLabel> {
    if given.num_classes() != predicted.num_classes() {
        return Err(Error::Input(format!(
            "label width mismatch: {} vs {}",
            given.num_classes(),
            predicted.num_classes()
        )));
    }
    let probs: Vec<f64> = given
        .probs()
        .iter()
        .zip(predicted.probs())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    SoftLabel::new(probs)
}

/// `-ln` of the collision probability (the chance two independent draws
/// from the distribution coincide). Zero for a one-hot distribution,
/// `ln C` for a uniform one.
pub fn collision_entropy(label: &SoftLabel) -> f64 {
    let sum_sq: f64 = label.probs().iter().map(|p| p * p).sum();
    -sum_sq.ln()
}

/// Shannon entropy with the `0 ln 0 = 0` convention.
pub fn shannon_entropy(label: &SoftLabel) -> f64 {
    -label
        .probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * ln_clamped(p))
        .sum::<f64>()
}

/// Cross entropy of the prediction against the given hard label.
pub fn small_loss(predicted: &SoftLabel, given_class: usize) -> f64 {
    -ln_clamped(predicted.get(given_class))
}

/// Which detection signal a metric vector holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    /// Collision entropy of the interpolated label. The primary signal.
    IlCollision,
    /// Shannon entropy of the interpolated label.
    IlShannon,
    /// Cross entropy against the given label.
    SmallLoss,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::IlCollision => "il_collision",
            MetricKind::IlShannon => "il_shannon",
            MetricKind::SmallLoss => "small_loss",
        }
    }
}

/// One detection value per sample, in dataset order.
#[derive(Debug, Clone)]
pub struct MetricVector {
    pub kind: MetricKind,
    pub values: Vec<f64>,
}

/// Evaluates a detection metric for every sample against its *original*
/// given label. Predictions must be row-aligned with the dataset.
pub fn compute_metric_vector(
    ds: &Dataset,
    predictions: &[SoftLabel],
    kind: MetricKind,
) -> Result<MetricVector> {
    if predictions.len() != ds.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} samples",
            predictions.len(),
            ds.len()
        )));
    }
    let mut values = Vec::with_capacity(ds.len());
    for (i, pred) in predictions.iter().enumerate() {
        if pred.num_classes() != ds.num_classes() {
            return Err(Error::Input(format!(
                "prediction {i} has {} classes, dataset has {}",
                pred.num_classes(),
                ds.num_classes()
            )));
        }
        let record = ds.record(i);
        let v = match kind {
            MetricKind::IlCollision => {
                collision_entropy(&interpolated_label(&ds.one_hot_label(i), pred)?)
            }
            MetricKind::IlShannon => {
                shannon_entropy(&interpolated_label(&ds.one_hot_label(i), pred)?)
            }
            MetricKind::SmallLoss => small_loss(pred, record.given_label),
        };
        values.push(v);
    }
    Ok(MetricVector { kind, values })
}

/// The affine transform produced by min-max normalization, kept so fixed
/// raw-space thresholds (the pivot) can be mapped into normalized space.
#[derive(Debug, Clone, Copy)]
pub struct AffineMap {
    min: f64,
    /// Zero marks a degenerate (constant input) map that sends everything
    /// to 0.
    range: f64,
}

impl AffineMap {
    pub fn apply(&self, x: f64) -> f64 {
        if self.range == 0.0 {
            0.0
        } else {
            (x - self.min) / self.range
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.range == 0.0
    }
}

/// Relative spread below which a value vector counts as constant. Keeps
/// ulp-level jitter (identical distributions summed in different bin
/// orders) from exploding into a full 0-to-1 spread.
const DEGENERATE_REL_SPREAD: f64 = 1e-12;

/// Maps values onto [0, 1] by min and max. A constant vector maps to all
/// zeros and yields a degenerate map.
pub fn minmax_normalize(values: &[f64]) -> (Vec<f64>, AffineMap) {
    assert!(!values.is_empty(), "cannot normalize an empty vector");
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spread_floor = DEGENERATE_REL_SPREAD * min.abs().max(max.abs()).max(1.0);
    if max - min <= spread_floor {
        let map = AffineMap { min, range: 0.0 };
        return (vec![0.0; values.len()], map);
    }
    let map = AffineMap {
        min,
        range: max - min,
    };
    (values.iter().map(|&v| map.apply(v)).collect(), map)
}

/// A metric vector together with its normalized form.
#[derive(Debug, Clone)]
pub struct NormalizedMetric {
    pub kind: MetricKind,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub map: AffineMap,
}

impl NormalizedMetric {
    pub fn from_metric(metric: MetricVector) -> Self {
        let (normalized, map) = minmax_normalize(&metric.values);
        NormalizedMetric {
            kind: metric.kind,
            raw: metric.values,
            normalized,
            map,
        }
    }

    /// The raw-space pivot carried through the same affine map as the
    /// values.
    pub fn pivot_normalized(&self) -> f64 {
        self.map.apply(PIVOT)
    }
}
