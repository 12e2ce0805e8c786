//! The two-phase training schedule.
//!
//! Epochs are numbered from 0. During warm-up the network trains on the
//! given labels (optionally mixup-blended) under cross entropy plus the
//! entropy penalty with all weights 1. From `warmup_end` on, every epoch
//! starts by sweeping the frozen network over the train set, scoring each
//! sample's label agreement, and assessing the noise; training then runs
//! on targets rebuilt *from the original labels* through bootstrapping and
//! dynamic softening. Corrections never compound: epoch `e + 1` rebuilds
//! its targets from the same pristine labels epoch `e` did.
//!
//! The learning rate at epoch `e` is `lr / factor^k` where `k` counts the
//! configured drop epochs that are ≤ `e`; the default `warmup_end` is one
//! epoch past the first drop.
//!
//! Randomness comes from three independent streams of one seeded
//! generator: weight initialization, batch shuffling, and mixup draws.
//! Toggling mixup or correction therefore never changes the batch order.

use rand::distributions::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correction::{
    bootstrap_label, dynamic_soften, mixup_batch, CorrectionParams,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::label::SoftLabel;
use crate::metrics::{compute_metric_vector, MetricKind, NormalizedMetric};
use crate::mixture::{assess, Assessment};
use crate::nn::{sgd_step, LossTerms, Network, OptimizerState};
use crate::report::test_accuracy;

fn default_hidden_dims() -> Vec<usize> {
    vec![64, 32]
}
fn default_lr() -> f64 {
    0.03
}
fn default_lr_drop_epochs() -> Vec<usize> {
    vec![50, 80]
}
fn default_lr_drop_factor() -> f64 {
    10.0
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-4
}
fn default_batch_size() -> usize {
    32
}
fn default_bmm_iters() -> usize {
    10
}
fn default_seed() -> u64 {
    1
}
fn default_true() -> bool {
    true
}

/// Everything the training loop needs. Only `epochs` is mandatory in
/// config files; the rest defaults to the reference schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Total epoch count; epochs run 0 .. epochs-1.
    pub epochs: usize,
    /// First correction epoch. Unset means one epoch after the first
    /// learning-rate drop. Equal to `epochs` means the whole run is
    /// warm-up (the plain-baseline configuration).
    #[serde(default)]
    pub warmup_end: Option<usize>,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    /// Epochs at which the learning rate is divided by `lr_drop_factor`;
    /// the drop applies from the named epoch on.
    #[serde(default = "default_lr_drop_epochs")]
    pub lr_drop_epochs: Vec<usize>,
    #[serde(default = "default_lr_drop_factor")]
    pub lr_drop_factor: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub correction: CorrectionParams,
    /// Blend warm-up batches with mixup.
    #[serde(default = "default_true")]
    pub warmup_mixup: bool,
    /// Blend correction-phase batches too (off by default).
    #[serde(default)]
    pub correction_mixup: bool,
    #[serde(default = "default_bmm_iters")]
    pub bmm_iters: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Ablation switches: with correction off the whole run is warm-up;
    /// with softening off targets skip the temperature map and entropy
    /// weights stay 1; with bootstrapping off labels are never replaced.
    #[serde(default = "default_true")]
    pub correction_enabled: bool,
    #[serde(default = "default_true")]
    pub softening_enabled: bool,
    #[serde(default = "default_true")]
    pub bootstrap_enabled: bool,
}

impl TrainConfig {
    /// A minimal config for the given epoch budget; everything else at
    /// defaults.
    pub fn with_epochs(epochs: usize) -> Self {
        serde_json::from_value(serde_json::json!({ "epochs": epochs }))
            .expect("literal config is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".to_string()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(self.lr_drop_factor > 0.0) || !self.lr_drop_factor.is_finite() {
            return Err(Error::Config(format!(
                "lr_drop_factor must be positive, got {}",
                self.lr_drop_factor
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".to_string()));
        }
        if self.bmm_iters == 0 {
            return Err(Error::Config("bmm_iters must be positive".to_string()));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(
                "hidden layer sizes must be positive".to_string(),
            ));
        }
        for w in self.lr_drop_epochs.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Config(
                    "lr_drop_epochs must be strictly increasing".to_string(),
                ));
            }
        }
        if let Some(&d) = self.lr_drop_epochs.iter().find(|&&d| d >= self.epochs) {
            return Err(Error::Config(format!(
                "lr drop at epoch {d} is outside the {} scheduled epochs",
                self.epochs
            )));
        }
        let warmup_end = self.resolved_warmup_end()?;
        if warmup_end == 0 {
            return Err(Error::Config(
                "warmup_end must be positive: the first epoch has no predictions to correct with"
                    .to_string(),
            ));
        }
        if warmup_end > self.epochs {
            return Err(Error::Config(format!(
                "warmup_end {warmup_end} exceeds the {} scheduled epochs",
                self.epochs
            )));
        }
        self.correction.validate()
    }

    /// The first correction epoch: explicit, or one past the first lr drop.
    pub fn resolved_warmup_end(&self) -> Result<usize> {
        match self.warmup_end {
            Some(w) => Ok(w),
            None => match self.lr_drop_epochs.first() {
                Some(&d) => Ok(d + 1),
                None => Err(Error::Config(
                    "warmup_end must be set when lr_drop_epochs is empty".to_string(),
                )),
            },
        }
    }

    /// Learning rate in force at a given epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = self.lr_drop_epochs.iter().filter(|&&d| d <= epoch).count();
        self.lr / self.lr_drop_factor.powi(k as i32)
    }
}

/// One epoch's recorded stats. `counts` is `None` on warm-up epochs,
/// where no assessment is made.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub counts: Option<(usize, usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_accuracy: f64,
    pub last_accuracy: f64,
}

/// Result of a full run: the trained network, the per-epoch history, and
/// a final frozen-network sweep for retrieval scoring.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: Network,
    pub history: TrainHistory,
    pub final_predictions: Vec<SoftLabel>,
    pub final_assessment: Assessment,
}

/// Full-dataset forward sweep (no augmentation) followed by label
/// agreement scoring and noise assessment. Always computed against the
/// dataset's original labels.
pub fn evaluate_metrics(
    net: &Network,
    train: &Dataset,
    bmm_iters: usize,
) -> Result<(Vec<SoftLabel>, Assessment)> {
    let features: Vec<Vec<f64>> = train.records().iter().map(|r| r.features.clone()).collect();
    let predictions = net.forward(&features)?;
    let metric = compute_metric_vector(train, &predictions, MetricKind::IlCollision)?;
    let norm = NormalizedMetric::from_metric(metric);
    let assessment = assess(&norm, bmm_iters);
    Ok((predictions, assessment))
}

/// Rebuilds every sample's training target from its original label:
/// bootstrap (label replaced by the prediction when `u` is confidently
/// high), then dynamic softening by `v`. The ablation switches skip
/// either stage.
pub fn correction_targets(
    train: &Dataset,
    predictions: &[SoftLabel],
    assessment: &Assessment,
    params: &CorrectionParams,
    bootstrap_enabled: bool,
    softening_enabled: bool,
) -> Vec<SoftLabel> {
    assert_eq!(predictions.len(), train.len());
    assert_eq!(assessment.per_sample.len(), train.len());
    (0..train.len())
        .map(|i| {
            let original = train.one_hot_label(i);
            let a = &assessment.per_sample[i];
            let booted = if bootstrap_enabled {
                bootstrap_label(&original, &predictions[i], a.id_posterior, params.bootstrap_threshold)
            } else {
                original
            };
            if softening_enabled {
                dynamic_soften(&booted, a.soften_weight, params.alpha)
            } else {
                booted
            }
        })
        .collect()
}

/// Shuffled index order for one epoch, then contiguous batches with the
/// short remainder kept.
fn epoch_batches(n: usize, batch_size: usize, shuffle_rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(shuffle_rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

struct SweepSpec<'a> {
    epoch: usize,
    targets: &'a [SoftLabel],
    v_weights: &'a [f64],
    use_mixup: bool,
}

/// One pass over the whole train set in mini-batches: forward, backward,
/// optimizer step. Returns the sample-weighted mean loss.
fn training_sweep(
    net: &mut Network,
    opt: &mut OptimizerState,
    train: &Dataset,
    config: &TrainConfig,
    spec: &SweepSpec,
    shuffle_rng: &mut ChaCha8Rng,
    mixup_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let n = train.len();
    let gamma = config.correction.gamma;
    let mut loss_sum = 0.0;

    for (batch_idx, batch) in epoch_batches(n, config.batch_size, shuffle_rng)
        .into_iter()
        .enumerate()
    {
        let mut features: Vec<Vec<f64>> = batch
            .iter()
            .map(|&i| train.record(i).features.clone())
            .collect();
        let mut targets: Vec<SoftLabel> =
            batch.iter().map(|&i| spec.targets[i].clone()).collect();
        let mut v: Vec<f64> = batch.iter().map(|&i| spec.v_weights[i]).collect();

        if spec.use_mixup {
            let beta = rand_distr::Beta::new(config.correction.mixup_beta, config.correction.mixup_beta)
                .expect("validated mixup_beta is positive");
            let lambda: f64 = beta.sample(mixup_rng);
            let mut permutation: Vec<usize> = (0..batch.len()).collect();
            permutation.shuffle(mixup_rng);
            let (fx, tx) = mixup_batch(&features, &targets, lambda, &permutation);
            features = fx;
            targets = tx;
            // Blend the entropy weights the same way the labels blend.
            v = (0..batch.len())
                .map(|i| lambda * v[i] + (1.0 - lambda) * v[permutation[i]])
                .collect();
        }

        let terms = LossTerms {
            entropy_weight: gamma,
            v_weights: Some(&v),
        };
        let (loss, grads) = net.backward(&features, &targets, &terms)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch: spec.epoch,
                batch: batch_idx,
                msg: format!("loss became {loss}"),
            });
        }
        sgd_step(net, &grads, opt).map_err(|e| Error::Training {
            epoch: spec.epoch,
            batch: batch_idx,
            msg: e.to_string(),
        })?;
        loss_sum += loss * batch.len() as f64;
    }
    Ok(loss_sum / n as f64)
}

/// One warm-up epoch: original one-hot labels, all entropy weights 1,
/// mixup when configured.
pub fn warmup_epoch(
    net: &mut Network,
    opt: &mut OptimizerState,
    train: &Dataset,
    config: &TrainConfig,
    epoch: usize,
    shuffle_rng: &mut ChaCha8Rng,
    mixup_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let targets: Vec<SoftLabel> = (0..train.len()).map(|i| train.one_hot_label(i)).collect();
    let v = vec![1.0; train.len()];
    let spec = SweepSpec {
        epoch,
        targets: &targets,
        v_weights: &v,
        use_mixup: config.warmup_mixup,
    };
    training_sweep(net, opt, train, config, &spec, shuffle_rng, mixup_rng)
}

/// One correction epoch: targets rebuilt from the pristine labels via
/// this epoch's assessment, entropy weights taken from `v`.
#[allow(clippy::too_many_arguments)]
pub fn correction_epoch(
    net: &mut Network,
    opt: &mut OptimizerState,
    train: &Dataset,
    predictions: &[SoftLabel],
    assessment: &Assessment,
    config: &TrainConfig,
    epoch: usize,
    shuffle_rng: &mut ChaCha8Rng,
    mixup_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let targets = correction_targets(
        train,
        predictions,
        assessment,
        &config.correction,
        config.bootstrap_enabled,
        config.softening_enabled,
    );
    let v: Vec<f64> = if config.softening_enabled {
        assessment
            .per_sample
            .iter()
            .map(|a| a.soften_weight)
            .collect()
    } else {
        vec![1.0; train.len()]
    };
    let spec = SweepSpec {
        epoch,
        targets: &targets,
        v_weights: &v,
        use_mixup: config.correction_mixup,
    };
    training_sweep(net, opt, train, config, &spec, shuffle_rng, mixup_rng)
}

fn check_datasets(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<()> {
    if train.num_classes() < 3 {
        return Err(Error::Config(format!(
            "noise detection needs at least 3 classes, the dataset has {}",
            train.num_classes()
        )));
    }
    if test.feature_dim() != train.feature_dim() {
        return Err(Error::Input(format!(
            "train features are {}-dimensional but test features are {}-dimensional",
            train.feature_dim(),
            test.feature_dim()
        )));
    }
    if test.num_classes() > train.num_classes() {
        return Err(Error::Input(format!(
            "test set uses {} classes but training uses {}",
            test.num_classes(),
            train.num_classes()
        )));
    }
    config.validate()
}

/// Runs the full schedule and returns the trained network, history, and a
/// final frozen-network assessment of the train set.
pub fn run(config: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<TrainOutcome> {
    check_datasets(config, train, test)?;
    let warmup_end = config.resolved_warmup_end()?;

    let mut layer_dims = vec![train.feature_dim()];
    layer_dims.extend_from_slice(&config.hidden_dims);
    layer_dims.push(train.num_classes());
    let mut net = Network::new(&layer_dims, config.seed)?;
    let mut opt = OptimizerState::new(&net, config.lr, config.momentum, config.weight_decay)?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(2);
    let mut mixup_rng = ChaCha8Rng::seed_from_u64(config.seed);
    mixup_rng.set_stream(3);

    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        opt.set_lr(lr);
        let in_warmup = !config.correction_enabled || epoch < warmup_end;
        let (train_loss, counts) = if in_warmup {
            let loss = warmup_epoch(
                &mut net,
                &mut opt,
                train,
                config,
                epoch,
                &mut shuffle_rng,
                &mut mixup_rng,
            )?;
            (loss, None)
        } else {
            let (predictions, assessment) = evaluate_metrics(&net, train, config.bmm_iters)?;
            let loss = correction_epoch(
                &mut net,
                &mut opt,
                train,
                &predictions,
                &assessment,
                config,
                epoch,
                &mut shuffle_rng,
                &mut mixup_rng,
            )?;
            (loss, Some(assessment.counts()))
        };
        let acc = test_accuracy(&net, test)?;
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            test_accuracy: acc,
            counts,
        });
    }

    let best_accuracy = records
        .iter()
        .map(|r| r.test_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let last_accuracy = records.last().expect("at least one epoch").test_accuracy;
    let (final_predictions, final_assessment) = evaluate_metrics(&net, train, config.bmm_iters)?;

    Ok(TrainOutcome {
        net,
        history: TrainHistory {
            epochs: records,
            best_accuracy,
            last_accuracy,
        },
        final_predictions,
        final_assessment,
    })
}
