//! Two-component beta mixture over normalized detection values, and the
//! per-sample noise assessment built on top of it.
//!
//! Samples whose normalized detection value stays at or below the
//! normalized pivot are taken as clean. The values above it come from two
//! populations: in-distribution flips pile up just past the pivot, while
//! out-of-distribution samples drift toward the top of the range. A beta
//! mixture fitted to those values by expectation-maximization gives every
//! noisy sample a posterior probability of belonging to the lower (flip)
//! component; that posterior drives both label bootstrapping and label
//! softening downstream.
//!
//! The fit is intentionally rigid: moment-matched updates, a fixed
//! iteration count, no randomness. When the fitted flip component has no
//! interior mode (its density piles onto a boundary instead of forming a
//! bump inside (0, 1)) the mixture cannot be trusted and a fixed threshold
//! at 0.5 takes over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::NormalizedMetric;

/// Fitted values are clamped into [`VALUE_FLOOR`, 1 - `VALUE_FLOOR`] so
/// boundary points cannot produce infinite densities.
pub const VALUE_FLOOR: f64 = 1e-4;

/// Shape parameters are clamped into [`SHAPE_MIN`, `SHAPE_MAX`].
pub const SHAPE_MIN: f64 = 0.05;
pub const SHAPE_MAX: f64 = 100.0;

/// Minimum number of values the EM fit accepts.
pub const MIN_FIT_VALUES: usize = 20;

/// Beta density at `x`, with `x` clamped into the fit range first.
/// Computed through log-gamma so large shapes stay finite.
pub fn beta_pdf(x: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta shapes must be positive");
    let x = x.clamp(VALUE_FLOOR, 1.0 - VALUE_FLOOR);
    let ln_norm = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
    ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_norm).exp()
}

/// Posterior of one value under the mixture.
#[derive(Debug, Clone, Copy)]
pub struct Posterior {
    /// Probability the value belongs to the lower (in-distribution flip)
    /// component.
    pub p_id: f64,
    /// Probability it belongs to the upper (out-of-distribution)
    /// component.
    pub p_ood: f64,
    /// Both densities underflowed; the posterior fell back to (0.5, 0.5).
    pub underflow: bool,
}

/// A two-component beta mixture with components ordered by mean ascending:
/// component 1 models in-distribution flips, component 2 models
/// out-of-distribution samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaMixture2 {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub w1: f64,
    pub w2: f64,
}

impl BetaMixture2 {
    pub fn mean1(&self) -> f64 {
        self.a1 / (self.a1 + self.b1)
    }

    pub fn mean2(&self) -> f64 {
        self.a2 / (self.a2 + self.b2)
    }

    /// Bayes rule over the two components.
    pub fn posterior(&self, x: f64) -> Posterior {
        let f1 = self.w1 * beta_pdf(x, self.a1, self.b1);
        let f2 = self.w2 * beta_pdf(x, self.a2, self.b2);
        let total = f1 + f2;
        if total <= 0.0 || !total.is_finite() {
            return Posterior {
                p_id: 0.5,
                p_ood: 0.5,
                underflow: true,
            };
        }
        Posterior {
            p_id: f1 / total,
            p_ood: f2 / total,
            underflow: false,
        }
    }

    /// True when the flip component has a mode strictly inside (0, 1),
    /// which needs both shapes above 1. A boundary-piled flip component
    /// means the mixture failed to isolate a flip population.
    pub fn id_mode_valid(&self) -> bool {
        self.a1 > 1.0 && self.b1 > 1.0
    }
}

/// Shape parameters matched to a weighted mean and variance. A collapsed
/// component (no variance) carries no shape information and is flattened
/// to the uniform (1, 1), which also fails the interior-mode check.
fn moment_shapes(mean: f64, var: f64) -> (f64, f64) {
    if var < 1e-12 {
        return (1.0, 1.0);
    }
    let factor = mean * (1.0 - mean) / var - 1.0;
    let a = (mean * factor).clamp(SHAPE_MIN, SHAPE_MAX);
    let b = ((1.0 - mean) * factor).clamp(SHAPE_MIN, SHAPE_MAX);
    (a, b)
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Fits a two-component mixture by EM with moment-matched M-steps.
///
/// Initialization splits the sorted values at the median; exactly `iters`
/// EM iterations run (no early exit, so identical inputs give identical
/// fits); the returned components are ordered by mean ascending.
pub fn fit(values: &[f64], iters: usize) -> Result<BetaMixture2> {
    if values.len() < MIN_FIT_VALUES {
        return Err(Error::Fit(format!(
            "need at least {MIN_FIT_VALUES} values, got {}",
            values.len()
        )));
    }
    let xs: Vec<f64> = values
        .iter()
        .map(|v| v.clamp(VALUE_FLOOR, 1.0 - VALUE_FLOOR))
        .collect();

    let mut sorted = xs.clone();
    sorted.sort_by(f64::total_cmp);
    let half = sorted.len() / 2;
    let (lo_mean, lo_var) = mean_var(&sorted[..half]);
    let (hi_mean, hi_var) = mean_var(&sorted[half..]);
    let (mut a1, mut b1) = moment_shapes(lo_mean, lo_var);
    let (mut a2, mut b2) = moment_shapes(hi_mean, hi_var);
    let mut w1 = half as f64 / sorted.len() as f64;
    let mut w2 = 1.0 - w1;

    let n = xs.len() as f64;
    let mut resp = vec![0.5; xs.len()];
    for _ in 0..iters {
        for (r, &x) in resp.iter_mut().zip(&xs) {
            let f1 = w1 * beta_pdf(x, a1, b1);
            let f2 = w2 * beta_pdf(x, a2, b2);
            let total = f1 + f2;
            *r = if total > 0.0 && total.is_finite() {
                f1 / total
            } else {
                0.5
            };
        }
        let n1: f64 = resp.iter().sum();
        let n2 = n - n1;
        if n1 > 1e-12 {
            let m1 = resp.iter().zip(&xs).map(|(r, x)| r * x).sum::<f64>() / n1;
            let v1 = resp
                .iter()
                .zip(&xs)
                .map(|(r, x)| r * (x - m1) * (x - m1))
                .sum::<f64>()
                / n1;
            (a1, b1) = moment_shapes(m1, v1);
        }
        if n2 > 1e-12 {
            let m2 = resp
                .iter()
                .zip(&xs)
                .map(|(r, x)| (1.0 - r) * x)
                .sum::<f64>()
                / n2;
            let v2 = resp
                .iter()
                .zip(&xs)
                .map(|(r, x)| (1.0 - r) * (x - m2) * (x - m2))
                .sum::<f64>()
                / n2;
            (a2, b2) = moment_shapes(m2, v2);
        }
        w1 = n1 / n;
        w2 = n2 / n;
    }

    let mut model = BetaMixture2 {
        a1,
        b1,
        a2,
        b2,
        w1,
        w2,
    };
    if model.mean1() > model.mean2() {
        model = BetaMixture2 {
            a1: model.a2,
            b1: model.b2,
            a2: model.a1,
            b2: model.b1,
            w1: model.w2,
            w2: model.w1,
        };
    }
    Ok(model)
}

/// Assessed noise category of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Clean,
    IdNoise,
    Ood,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Clean => "clean",
            Category::IdNoise => "id",
            Category::Ood => "ood",
        }
    }
}

/// Per-sample verdict of the detection stage.
#[derive(Debug, Clone, Copy)]
pub struct NoiseAssessment {
    /// Raw detection value.
    pub raw: f64,
    /// Detection value after min-max normalization.
    pub normalized: f64,
    /// Posterior of being an in-distribution flip; drives bootstrapping.
    /// Exactly 0 for samples taken as clean.
    pub id_posterior: f64,
    /// One minus the out-of-distribution posterior; scales label sharpness
    /// and the entropy penalty. Exactly 1 for clean, 0 for certain
    /// out-of-distribution.
    pub soften_weight: f64,
    pub category: Category,
}

/// Why the mixture path was not used for the noisy samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FallbackReason {
    /// Fewer noisy samples than the fit needs.
    TooFewNoisy { count: usize },
    /// The fitted flip component had no interior mode.
    NoInteriorIdMode,
}

impl FallbackReason {
    pub fn describe(self) -> String {
        match self {
            FallbackReason::TooFewNoisy { count } => {
                format!("too few noisy samples for a mixture fit ({count} < {MIN_FIT_VALUES})")
            }
            FallbackReason::NoInteriorIdMode => {
                "flip component has no interior mode".to_string()
            }
        }
    }
}

/// How the noisy samples were categorized.
#[derive(Debug, Clone)]
pub enum MixtureOutcome {
    /// Every sample sat at or below the pivot; nothing to fit.
    AllClean,
    /// Mixture path. `monotone` records whether the id-posterior was
    /// non-increasing along the sorted noisy values (checked empirically,
    /// violations are flagged rather than fatal).
    Fitted {
        model: BetaMixture2,
        monotone: bool,
    },
    /// Threshold path: normalized value below 0.5 counts as a flip, above
    /// as out-of-distribution.
    Fallback { reason: FallbackReason },
}

/// Full verdict for a dataset at one point in training.
#[derive(Debug, Clone)]
pub struct Assessment {
    pub per_sample: Vec<NoiseAssessment>,
    pub outcome: MixtureOutcome,
    pub pivot_normalized: f64,
}

impl Assessment {
    /// (clean, id-noise, ood) counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for a in &self.per_sample {
            match a.category {
                Category::Clean => c.0 += 1,
                Category::IdNoise => c.1 += 1,
                Category::Ood => c.2 += 1,
            }
        }
        c
    }
}

/// Splits samples into clean / flip / out-of-distribution from their
/// normalized detection values.
///
/// Samples at or below the normalized pivot are clean with
/// `(id_posterior, soften_weight) = (0, 1)`. The rest go through the
/// mixture when it can be fitted and trusted, otherwise through the fixed
/// 0.5 threshold with hard weights (1, 1) for flips and (0, 0) for
/// out-of-distribution.
pub fn assess(norm: &NormalizedMetric, bmm_iters: usize) -> Assessment {
    let pivot_normalized = norm.pivot_normalized();
    let n = norm.normalized.len();
    let noisy_idx: Vec<usize> = (0..n)
        .filter(|&i| norm.normalized[i] > pivot_normalized)
        .collect();

    let clean_verdict = |i: usize| NoiseAssessment {
        raw: norm.raw[i],
        normalized: norm.normalized[i],
        id_posterior: 0.0,
        soften_weight: 1.0,
        category: Category::Clean,
    };

    if noisy_idx.is_empty() {
        return Assessment {
            per_sample: (0..n).map(clean_verdict).collect(),
            outcome: MixtureOutcome::AllClean,
            pivot_normalized,
        };
    }

    let noisy_values: Vec<f64> = noisy_idx.iter().map(|&i| norm.normalized[i]).collect();
    let fitted = if noisy_values.len() < MIN_FIT_VALUES {
        Err(FallbackReason::TooFewNoisy {
            count: noisy_values.len(),
        })
    } else {
        match fit(&noisy_values, bmm_iters) {
            Ok(model) if model.id_mode_valid() => Ok(model),
            Ok(_) => Err(FallbackReason::NoInteriorIdMode),
            Err(_) => Err(FallbackReason::TooFewNoisy {
                count: noisy_values.len(),
            }),
        }
    };

    let mut per_sample: Vec<NoiseAssessment> = (0..n).map(clean_verdict).collect();
    let outcome = match fitted {
        Ok(model) => {
            for &i in &noisy_idx {
                let x = norm.normalized[i];
                let post = model.posterior(x);
                let category = if post.p_id >= 0.5 {
                    Category::IdNoise
                } else {
                    Category::Ood
                };
                per_sample[i] = NoiseAssessment {
                    raw: norm.raw[i],
                    normalized: x,
                    id_posterior: post.p_id,
                    soften_weight: 1.0 - post.p_ood,
                    category,
                };
            }
            let mut order: Vec<usize> = noisy_idx.clone();
            order.sort_by(|&a, &b| norm.normalized[a].total_cmp(&norm.normalized[b]));
            let monotone = order.windows(2).all(|w| {
                per_sample[w[1]].id_posterior <= per_sample[w[0]].id_posterior + 1e-9
            });
            MixtureOutcome::Fitted { model, monotone }
        }
        Err(reason) => {
            for &i in &noisy_idx {
                let x = norm.normalized[i];
                let is_id = x < 0.5;
                per_sample[i] = NoiseAssessment {
                    raw: norm.raw[i],
                    normalized: x,
                    id_posterior: if is_id { 1.0 } else { 0.0 },
                    soften_weight: if is_id { 1.0 } else { 0.0 },
                    category: if is_id { Category::IdNoise } else { Category::Ood },
                };
            }
            MixtureOutcome::Fallback { reason }
        }
    };

    Assessment {
        per_sample,
        outcome,
        pivot_normalized,
    }
}
