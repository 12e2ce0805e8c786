//! Synthetic benchmark data and the CSV formats the lab speaks.
//!
//! A dataset is a list of feature vectors with one *given* label each, plus
//! an optional ground-truth tag used only for evaluation. Synthetic data is
//! drawn from Gaussian class clusters; label noise is injected in two
//! flavours: a fraction `rho` of samples have their features replaced by
//! draws from far-away clusters that belong to no class
//! (out-of-distribution), and a fraction `psi` keep their features but get
//! their label flipped to a different class (in-distribution noise).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::label::SoftLabel;
use crate::textio;

/// Ground truth for one sample, known only for synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    /// Given label equals the true label.
    Clean,
    /// In-distribution sample whose given label was flipped away from
    /// `true_label`.
    IdNoise { true_label: usize },
    /// Sample drawn from outside every class; its given label is
    /// meaningless.
    Ood,
}

impl Truth {
    fn to_field(self) -> String {
        match self {
            Truth::Clean => "clean".to_string(),
            Truth::IdNoise { true_label } => format!("id:{true_label}"),
            Truth::Ood => "ood".to_string(),
        }
    }

    fn parse_field(field: &str, line: usize) -> Result<Option<Truth>> {
        if field == "-" {
            return Ok(None);
        }
        if field == "clean" {
            return Ok(Some(Truth::Clean));
        }
        if field == "ood" {
            return Ok(Some(Truth::Ood));
        }
        if let Some(rest) = field.strip_prefix("id:") {
            let true_label = rest.parse::<usize>().map_err(|_| {
                Error::parse(line, format!("bad true label in truth tag {field:?}"))
            })?;
            return Ok(Some(Truth::IdNoise { true_label }));
        }
        Err(Error::parse(
            line,
            format!("unknown truth tag {field:?}, expected clean, id:<label>, ood or -"),
        ))
    }
}

#[derive(Debug, Clone)]
pub struct SampleRecord {
    pub id: u64,
    pub features: Vec<f64>,
    pub given_label: usize,
    pub truth: Option<Truth>,
}

/// A labelled dataset with uniform feature width and ids 0..n.
#[derive(Debug, Clone)]
pub struct Dataset {
    num_classes: usize,
    feature_dim: usize,
    records: Vec<SampleRecord>,
}

impl Dataset {
    /// Validates widths, label ranges and id contiguity, then stores the
    /// records sorted by id.
    pub fn new(num_classes: usize, mut records: Vec<SampleRecord>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {num_classes}"
            )));
        }
        if records.is_empty() {
            return Err(Error::Input("dataset has no records".to_string()));
        }
        let feature_dim = records[0].features.len();
        if feature_dim == 0 {
            return Err(Error::Input("records have no features".to_string()));
        }
        for r in &records {
            if r.features.len() != feature_dim {
                return Err(Error::Input(format!(
                    "inconsistent feature width: id {} has {} features, expected {feature_dim}",
                    r.id,
                    r.features.len()
                )));
            }
            if r.given_label >= num_classes {
                return Err(Error::Input(format!(
                    "id {}: label {} out of range for {num_classes} classes",
                    r.id, r.given_label
                )));
            }
            if let Some(Truth::IdNoise { true_label }) = r.truth {
                if true_label >= num_classes {
                    return Err(Error::Input(format!(
                        "id {}: true label {true_label} out of range for {num_classes} classes",
                        r.id
                    )));
                }
            }
        }
        records.sort_by_key(|r| r.id);
        for (i, r) in records.iter().enumerate() {
            if r.id != i as u64 {
                return Err(Error::Input(format!(
                    "sample ids must be contiguous from 0: expected id {i}, found {}",
                    r.id
                )));
            }
        }
        Ok(Dataset {
            num_classes,
            feature_dim,
            records,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SampleRecord] {
        &self.records
    }

    pub fn record(&self, i: usize) -> &SampleRecord {
        &self.records[i]
    }

    /// One-hot encoding of the given label of sample `i`.
    pub fn one_hot_label(&self, i: usize) -> SoftLabel {
        SoftLabel::one_hot(self.records[i].given_label, self.num_classes)
    }

    /// True when every record carries a truth tag.
    pub fn has_truth(&self) -> bool {
        self.records.iter().all(|r| r.truth.is_some())
    }

    /// (clean, id-noise, ood) counts over the tagged records.
    pub fn truth_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for r in &self.records {
            match r.truth {
                Some(Truth::Clean) => counts.0 += 1,
                Some(Truth::IdNoise { .. }) => counts.1 += 1,
                Some(Truth::Ood) => counts.2 += 1,
                None => {}
            }
        }
        counts
    }

    /// Reinterprets the dataset as having `num_classes` classes. Used when
    /// the class count is known from elsewhere (a manifest, a prediction
    /// matrix) and exceeds the largest label present.
    pub fn with_num_classes(self, num_classes: usize) -> Result<Self> {
        Dataset::new(num_classes, self.records)
    }
}

/// Configuration for the synthetic generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    /// Fraction of training samples replaced by out-of-distribution draws.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Fraction of training samples whose label is flipped to another class.
    #[serde(default = "default_psi")]
    pub psi: f64,
    /// Scale of the class centers; also the minimum distance an
    /// out-of-distribution cluster center keeps from every class center.
    #[serde(default = "default_class_separation")]
    pub class_separation: f64,
    #[serde(default = "default_within_class_sigma")]
    pub within_class_sigma: f64,
    #[serde(default = "default_num_ood_centers")]
    pub num_ood_centers: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_num_classes() -> usize {
    10
}
fn default_feature_dim() -> usize {
    16
}
fn default_train_size() -> usize {
    5000
}
fn default_test_size() -> usize {
    1000
}
// Default noise composition: 70.30% clean, 24.38% out-of-distribution,
// 5.32% flipped, mirroring the mix observed in web-crawled label noise.
fn default_rho() -> f64 {
    0.2438
}
fn default_psi() -> f64 {
    0.0532
}
fn default_class_separation() -> f64 {
    3.0
}
fn default_within_class_sigma() -> f64 {
    1.0
}
fn default_num_ood_centers() -> usize {
    3
}
fn default_seed() -> u64 {
    1
}

impl Default for GenConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".to_string()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config(
                "train_size and test_size must be positive".to_string(),
            ));
        }
        for (name, v) in [("rho", self.rho), ("psi", self.psi)] {
            if !v.is_finite() || !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.rho + self.psi >= 1.0 {
            return Err(Error::Config(format!(
                "rho + psi must stay below 1 so clean samples remain, got {}",
                self.rho + self.psi
            )));
        }
        if !(self.class_separation > 0.0) {
            return Err(Error::Config(
                "class_separation must be positive".to_string(),
            ));
        }
        if !(self.within_class_sigma > 0.0) {
            return Err(Error::Config(
                "within_class_sigma must be positive".to_string(),
            ));
        }
        if self.num_ood_centers == 0 {
            return Err(Error::Config(
                "num_ood_centers must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * scale
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Draws class and out-of-distribution cluster centers. Out-of-distribution
/// centers are rejection-resampled until they keep at least
/// `class_separation` distance from every class center; the proposal scale
/// grows slowly so the loop always terminates.
fn draw_centers(cfg: &GenConfig, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let id_centers: Vec<Vec<f64>> = (0..cfg.num_classes)
        .map(|_| gaussian_vec(rng, cfg.feature_dim, cfg.class_separation))
        .collect();
    let mut ood_centers = Vec::with_capacity(cfg.num_ood_centers);
    let mut scale = cfg.class_separation;
    let mut attempts = 0usize;
    while ood_centers.len() < cfg.num_ood_centers {
        let cand = gaussian_vec(rng, cfg.feature_dim, scale);
        let ok = id_centers
            .iter()
            .all(|c| distance(&cand, c) >= cfg.class_separation);
        if ok {
            ood_centers.push(cand);
            attempts = 0;
        } else {
            attempts += 1;
            if attempts >= 1000 {
                scale *= 1.5;
                attempts = 0;
            }
        }
    }
    (id_centers, ood_centers)
}

/// Synthesizes a (train, test) pair.
///
/// The train set has exactly `floor(rho * n)` out-of-distribution samples
/// (features replaced, label kept) and exactly `floor(psi * n)` flipped
/// samples drawn from the remainder (label moved uniformly to one of the
/// other classes). The test set is fully clean. Identical configs produce
/// byte-identical datasets.
pub fn generate(cfg: &GenConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (id_centers, ood_centers) = draw_centers(cfg, &mut rng);
    let c = cfg.num_classes;
    let n = cfg.train_size;

    let mut records: Vec<SampleRecord> = (0..n)
        .map(|i| {
            let class = i % c;
            let noise = gaussian_vec(&mut rng, cfg.feature_dim, cfg.within_class_sigma);
            let features: Vec<f64> = id_centers[class]
                .iter()
                .zip(&noise)
                .map(|(m, e)| m + e)
                .collect();
            SampleRecord {
                id: i as u64,
                features,
                given_label: class,
                truth: Some(Truth::Clean),
            }
        })
        .collect();

    let n_ood = (cfg.rho * n as f64).floor() as usize;
    let n_flip = (cfg.psi * n as f64).floor() as usize;

    let mut ood_idx = rand::seq::index::sample(&mut rng, n, n_ood).into_vec();
    ood_idx.sort_unstable();
    for &i in &ood_idx {
        let center = &ood_centers[rng.gen_range(0..ood_centers.len())];
        let noise = gaussian_vec(&mut rng, cfg.feature_dim, cfg.within_class_sigma);
        records[i].features = center.iter().zip(&noise).map(|(m, e)| m + e).collect();
        records[i].truth = Some(Truth::Ood);
    }

    let pool: Vec<usize> = (0..n)
        .filter(|i| records[*i].truth == Some(Truth::Clean))
        .collect();
    let mut flip_pick = rand::seq::index::sample(&mut rng, pool.len(), n_flip).into_vec();
    flip_pick.sort_unstable();
    for &p in &flip_pick {
        let i = pool[p];
        let true_label = records[i].given_label;
        let mut flipped = rng.gen_range(0..c - 1);
        if flipped >= true_label {
            flipped += 1;
        }
        records[i].given_label = flipped;
        records[i].truth = Some(Truth::IdNoise { true_label });
    }

    let test_records: Vec<SampleRecord> = (0..cfg.test_size)
        .map(|i| {
            let class = i % c;
            let noise = gaussian_vec(&mut rng, cfg.feature_dim, cfg.within_class_sigma);
            let features: Vec<f64> = id_centers[class]
                .iter()
                .zip(&noise)
                .map(|(m, e)| m + e)
                .collect();
            SampleRecord {
                id: i as u64,
                features,
                given_label: class,
                truth: Some(Truth::Clean),
            }
        })
        .collect();

    let train = Dataset::new(c, records)?;
    let test = Dataset::new(c, test_records)?;
    Ok((train, test))
}

/// Renders a dataset in the lab's CSV dialect: header
/// `id,label,truth,f0,...`, LF newlines, floats at 17 significant digits so
/// a read-back reproduces the exact values.
pub fn dataset_to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    out.push_str("id,label,truth");
    for d in 0..ds.feature_dim() {
        out.push_str(&format!(",f{d}"));
    }
    out.push('\n');
    for r in ds.records() {
        out.push_str(&format!("{},{}", r.id, r.given_label));
        match r.truth {
            Some(t) => out.push_str(&format!(",{}", t.to_field())),
            None => out.push_str(",-"),
        }
        for f in &r.features {
            out.push(',');
            out.push_str(&textio::fmt_float(*f));
        }
        out.push('\n');
    }
    out
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_csv(ds)).map_err(|e| Error::io(path, e))
}

/// Parses the CSV dialect written by [`dataset_to_csv`].
///
/// The class count is inferred as one past the largest label mentioned
/// (given or true); use [`Dataset::with_num_classes`] when the real count
/// is known to be larger. Errors carry the 1-based line number.
pub fn dataset_from_csv(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file, expected a header"))?;
    let header = header.trim_end_matches('\r');
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 4 || cols[0] != "id" || cols[1] != "label" || cols[2] != "truth" {
        return Err(Error::parse(
            1,
            format!("bad header {header:?}, expected id,label,truth,f0,..."),
        ));
    }
    let dim = cols.len() - 3;
    for (d, col) in cols[3..].iter().enumerate() {
        if *col != format!("f{d}") {
            return Err(Error::parse(
                1,
                format!("bad feature column {col:?}, expected f{d}"),
            ));
        }
    }

    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut records = Vec::new();
    let mut max_label = 0usize;
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != dim + 3 {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", dim + 3, fields.len()),
            ));
        }
        let id = fields[0]
            .parse::<u64>()
            .map_err(|_| Error::parse(line, format!("bad id {:?}", fields[0])))?;
        if let Some(prev) = seen.insert(id, line) {
            return Err(Error::parse(
                line,
                format!("duplicate id {id}, first seen at line {prev}"),
            ));
        }
        let given_label = fields[1]
            .parse::<usize>()
            .map_err(|_| Error::parse(line, format!("bad label {:?}", fields[1])))?;
        let truth = Truth::parse_field(fields[2], line)?;
        max_label = max_label.max(given_label);
        if let Some(Truth::IdNoise { true_label }) = truth {
            max_label = max_label.max(true_label);
        }
        let mut features = Vec::with_capacity(dim);
        for f in &fields[3..] {
            let v = f
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad feature value {f:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line, format!("non-finite feature value {f:?}")));
            }
            features.push(v);
        }
        records.push(SampleRecord {
            id,
            features,
            given_label,
            truth,
        });
    }
    Dataset::new((max_label + 1).max(2), records)
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let text = textio::read_input(path)?;
    dataset_from_csv(&text)
}

/// One row of an externally supplied prediction matrix.
#[derive(Debug, Clone)]
pub struct PredictionRow {
    pub id: u64,
    pub probs: Vec<f64>,
    /// 1-based CSV line the row came from, for error reporting.
    pub line: usize,
}

/// Parses a prediction matrix CSV with header `id,p0,...,p{C-1}`.
///
/// Each row must be row-stochastic within 1e-6; rows are renormalized to
/// sum exactly to one after that check.
pub fn predictions_from_csv(text: &str) -> Result<Vec<PredictionRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "empty file, expected a header"))?;
    let header = header.trim_end_matches('\r');
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "id" {
        return Err(Error::parse(
            1,
            format!("bad header {header:?}, expected id,p0,p1,..."),
        ));
    }
    let c = cols.len() - 1;
    for (k, col) in cols[1..].iter().enumerate() {
        if *col != format!("p{k}") {
            return Err(Error::parse(
                1,
                format!("bad probability column {col:?}, expected p{k}"),
            ));
        }
    }

    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != c + 1 {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", c + 1, fields.len()),
            ));
        }
        let id = fields[0]
            .parse::<u64>()
            .map_err(|_| Error::parse(line, format!("bad id {:?}", fields[0])))?;
        if let Some(prev) = seen.insert(id, line) {
            return Err(Error::parse(
                line,
                format!("duplicate id {id}, first seen at line {prev}"),
            ));
        }
        let mut probs = Vec::with_capacity(c);
        let mut sum = 0.0;
        for f in &fields[1..] {
            let v = f
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad probability {f:?}")))?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::parse(
                    line,
                    format!("probability {f:?} must be finite and non-negative"),
                ));
            }
            sum += v;
            probs.push(v);
        }
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::parse(
                line,
                format!("row sums to {sum}, expected 1 within 1e-6"),
            ));
        }
        for p in &mut probs {
            *p /= sum;
        }
        rows.push(PredictionRow { id, probs, line });
    }
    Ok(rows)
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRow>> {
    let text = textio::read_input(path)?;
    predictions_from_csv(&text)
}

/// Matches prediction rows to dataset samples by id and returns them in
/// dataset order. Every sample must be covered exactly once.
pub fn align_predictions(ds: &Dataset, rows: &[PredictionRow]) -> Result<Vec<SoftLabel>> {
    let mut by_id: HashMap<u64, &PredictionRow> = HashMap::new();
    for row in rows {
        by_id.insert(row.id, row);
    }
    for row in rows {
        if row.id >= ds.len() as u64 {
            return Err(Error::Input(format!(
                "line {}: prediction for unknown sample id {}",
                row.line, row.id
            )));
        }
    }
    let mut out = Vec::with_capacity(ds.len());
    for r in ds.records() {
        let row = by_id.get(&r.id).ok_or_else(|| {
            Error::Input(format!("no prediction row for sample id {}", r.id))
        })?;
        out.push(SoftLabel::new(row.probs.clone())?);
    }
    Ok(out)
}
