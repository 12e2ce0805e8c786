//! Retrieval scoring, accuracy, and structured experiment reports.
//!
//! Detection quality is summarized as three one-vs-all AUCs: how well the
//! raw metric retrieves clean samples (low metric means clean, so the score
//! is the negated metric), how well the in-distribution posterior `u`
//! retrieves flipped-label samples, and how well `1 - v` retrieves
//! out-of-distribution samples. AUC is the Mann-Whitney rank statistic
//! with average ranks for ties, so it is exact and invariant under any
//! strictly monotone rescaling of the scores.
//!
//! Reports are JSON-shaped text with a fixed key order and floats at 17
//! significant digits, so identical runs produce byte-identical files.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::{Dataset, Truth};
use crate::error::{Error, Result};
use crate::metrics::MetricVector;
use crate::mixture::{Assessment, BetaMixture2, MixtureOutcome, NoiseAssessment};
use crate::nn::Network;
use crate::textio;

/// Probability that a uniformly drawn positive outscores a uniformly drawn
/// negative, ties counting one half.
pub fn auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(Error::Input(format!(
            "{} scores but {} class flags",
            scores.len(),
            positives.len()
        )));
    }
    if let Some(k) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Input(format!("score {k} is not finite")));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average 1-based ranks over tied runs.
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }

    let rank_sum: f64 = ranks
        .iter()
        .zip(positives)
        .filter(|(_, &p)| p)
        .map(|(r, _)| r)
        .sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// One-vs-all retrieval quality plus the truth-by-assessed confusion
/// matrix. Rows and columns are ordered clean, in-distribution noise,
/// out-of-distribution. An AUC is `None` when its truth category is
/// absent from the dataset (no positives, or no negatives).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub auc_clean: Option<f64>,
    pub auc_id: Option<f64>,
    pub auc_ood: Option<f64>,
    pub confusion: [[u64; 3]; 3],
    pub noise_counts: [u64; 3],
}

fn truth_index(t: &Truth) -> usize {
    match t {
        Truth::Clean => 0,
        Truth::IdNoise { .. } => 1,
        Truth::Ood => 2,
    }
}

/// Scores every sample three ways and compares against the truth tags.
pub fn retrieval_report(
    per_sample: &[NoiseAssessment],
    truths: &[Option<Truth>],
    metric: &MetricVector,
) -> Result<RetrievalReport> {
    if per_sample.len() != truths.len() || per_sample.len() != metric.values.len() {
        return Err(Error::Input(format!(
            "mismatched lengths: {} assessments, {} truth tags, {} metric values",
            per_sample.len(),
            truths.len(),
            metric.values.len()
        )));
    }
    let mut resolved = Vec::with_capacity(truths.len());
    for (i, t) in truths.iter().enumerate() {
        match t {
            Some(t) => resolved.push(t.clone()),
            None => {
                return Err(Error::Report(format!(
                    "sample {i} has no truth tag; retrieval scoring needs labelled noise"
                )))
            }
        }
    }

    let score_auc = |scores: Vec<f64>, positives: Vec<bool>| -> Result<Option<f64>> {
        match auc(&scores, &positives) {
            Ok(a) => Ok(Some(a)),
            Err(Error::UndefinedAuc) => Ok(None),
            Err(e) => Err(e),
        }
    };

    let auc_clean = score_auc(
        metric.values.iter().map(|m| -m).collect(),
        resolved.iter().map(|t| matches!(t, Truth::Clean)).collect(),
    )?;
    let auc_id = score_auc(
        per_sample.iter().map(|a| a.id_posterior).collect(),
        resolved
            .iter()
            .map(|t| matches!(t, Truth::IdNoise { .. }))
            .collect(),
    )?;
    let auc_ood = score_auc(
        per_sample.iter().map(|a| 1.0 - a.soften_weight).collect(),
        resolved.iter().map(|t| matches!(t, Truth::Ood)).collect(),
    )?;

    let mut confusion = [[0u64; 3]; 3];
    let mut noise_counts = [0u64; 3];
    for (a, t) in per_sample.iter().zip(&resolved) {
        let ti = truth_index(t);
        noise_counts[ti] += 1;
        confusion[ti][a.category as usize] += 1;
    }

    Ok(RetrievalReport {
        auc_clean,
        auc_id,
        auc_ood,
        confusion,
        noise_counts,
    })
}

/// Fraction of test samples whose argmax prediction equals the label,
/// argmax ties resolved toward the lowest class index.
pub fn test_accuracy(net: &Network, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Input("empty test set".to_string()));
    }
    let features: Vec<Vec<f64>> = test.records().iter().map(|r| r.features.clone()).collect();
    let probs = net.forward(&features)?;
    let hits = probs
        .iter()
        .zip(test.records())
        .filter(|(p, r)| p.argmax() == r.given_label)
        .count();
    Ok(hits as f64 / test.len() as f64)
}

/// One training-curve row. Assessment counts are zero on warm-up epochs,
/// where no assessment is made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: u64,
    pub lr: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub n_clean: u64,
    pub n_id: u64,
    pub n_ood: u64,
}

/// Per-sample assessment as written to reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: u64,
    pub l_detect_raw: f64,
    pub l_detect_norm: f64,
    pub u: f64,
    pub v: f64,
    pub category: String,
}

/// Wire form of the mixture outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeSummary {
    AllClean,
    Fitted { model: BetaMixture2, monotone: bool },
    Fallback { reason: String },
}

impl From<&MixtureOutcome> for OutcomeSummary {
    fn from(outcome: &MixtureOutcome) -> Self {
        match outcome {
            MixtureOutcome::AllClean => OutcomeSummary::AllClean,
            MixtureOutcome::Fitted { model, monotone } => OutcomeSummary::Fitted {
                model: model.clone(),
                monotone: *monotone,
            },
            MixtureOutcome::Fallback { reason } => OutcomeSummary::Fallback {
                reason: reason.describe(),
            },
        }
    }
}

/// Flattens an assessment into report rows, one per dataset id.
pub fn sample_rows(ids: &[u64], assessment: &Assessment) -> Vec<SampleRow> {
    assert_eq!(ids.len(), assessment.per_sample.len());
    ids.iter()
        .zip(&assessment.per_sample)
        .map(|(&id, a)| SampleRow {
            id,
            l_detect_raw: a.raw,
            l_detect_norm: a.normalized,
            u: a.id_posterior,
            v: a.soften_weight,
            category: a.category.name().to_string(),
        })
        .collect()
}

/// Full training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format_version: String,
    pub config: serde_json::Value,
    pub best_accuracy: f64,
    pub last_accuracy: f64,
    pub per_epoch: Vec<EpochRow>,
    pub retrieval: Option<RetrievalReport>,
    pub outcome: OutcomeSummary,
    pub assessments: Vec<SampleRow>,
}

/// Standalone audit of an externally supplied prediction matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDoc {
    pub format_version: String,
    pub num_samples: u64,
    pub num_classes: u64,
    pub pivot_normalized: f64,
    pub counts: [u64; 3],
    pub outcome: OutcomeSummary,
    pub retrieval: Option<RetrievalReport>,
    pub assessments: Vec<SampleRow>,
}

fn render_json<T: Serialize>(doc: &T) -> Result<String> {
    let value = serde_json::to_value(doc)?;
    let mut text = textio::to_json_string(&value);
    text.push('\n');
    Ok(text)
}

pub fn render_report(doc: &ReportDoc) -> Result<String> {
    render_json(doc)
}

pub fn write_report(doc: &ReportDoc, path: &Path) -> Result<()> {
    textio::write_output(path, &render_report(doc)?)
}

pub fn read_report(path: &Path) -> Result<ReportDoc> {
    let text = textio::read_input(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn render_audit(doc: &AuditDoc) -> Result<String> {
    render_json(doc)
}

pub fn write_audit(doc: &AuditDoc, path: &Path) -> Result<()> {
    textio::write_output(path, &render_audit(doc)?)
}

pub fn read_audit(path: &Path) -> Result<AuditDoc> {
    let text = textio::read_input(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Training curves as flat CSV for plotting.
pub fn render_curves(per_epoch: &[EpochRow]) -> String {
    let mut out = String::from("epoch,lr,train_loss,test_acc,n_clean,n_id,n_ood\n");
    for row in per_epoch {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.epoch,
            textio::fmt_float(row.lr),
            textio::fmt_float(row.train_loss),
            textio::fmt_float(row.test_accuracy),
            row.n_clean,
            row.n_id,
            row.n_ood
        ));
    }
    out
}

pub fn write_curves(per_epoch: &[EpochRow], path: &Path) -> Result<()> {
    textio::write_output(path, &render_curves(per_epoch))
}
