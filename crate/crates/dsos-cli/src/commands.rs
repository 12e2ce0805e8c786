//! Implementations of the four subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;

use dsos::data::{
    align_predictions, dataset_from_csv, dataset_to_csv, generate, predictions_from_csv, Dataset,
};
use dsos::metrics::{compute_metric_vector, MetricKind, MetricVector, NormalizedMetric};
use dsos::mixture::assess;
use dsos::report::{
    render_curves, retrieval_report, read_report, sample_rows, write_audit, write_curves,
    write_report, AuditDoc, EpochRow, OutcomeSummary, ReportDoc, RetrievalReport,
};
use dsos::textio;
use dsos::trainer::{run, TrainOutcome};
use dsos::{Error, Result, SoftLabel};

use crate::config::{load_config, resolve_path, ExperimentConfig, FORMAT_VERSION};

/// Ablation and reproducibility switches shared by `train`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainOverrides {
    pub seed: Option<u64>,
    pub disable_correction: bool,
    pub disable_softening: bool,
    pub disable_bootstrap: bool,
    pub warmup_mixup: Option<bool>,
}

fn output_dir(
    config_path: &Path,
    config: &ExperimentConfig,
    out: Option<&Path>,
) -> Result<PathBuf> {
    if let Some(dir) = out {
        return Ok(dir.to_path_buf());
    }
    if let Some(dir) = &config.output_dir {
        return Ok(resolve_path(config_path, dir));
    }
    Err(Error::Config(
        "no output directory: pass --out or set output_dir in the config".to_string(),
    ))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct Manifest {
    format_version: String,
    seed: u64,
    num_classes: usize,
    feature_dim: usize,
    train_size: usize,
    test_size: usize,
    train_clean: usize,
    train_id_noise: usize,
    train_ood: usize,
}

fn write_json<T: Serialize>(doc: &T, path: &Path) -> Result<()> {
    let value = serde_json::to_value(doc)?;
    let mut text = textio::to_json_string(&value);
    text.push('\n');
    textio::write_output(path, &text)
}

/// `gen`: synthesize the corrupted train set and clean test set, write
/// both as CSV plus a manifest of the exact counts.
pub fn cmd_gen(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut config = load_config(config_path)?;
    let dir = output_dir(config_path, &config, out)?;
    let gen = config
        .gen
        .as_mut()
        .ok_or_else(|| Error::Config("gen needs a gen block in the config".to_string()))?;
    if let Some(s) = seed {
        gen.seed = s;
    }
    let (train, test) = generate(gen)?;

    ensure_dir(&dir)?;
    let train_path = dir.join("train.csv");
    let test_path = dir.join("test.csv");
    textio::write_output(&train_path, &dataset_to_csv(&train))?;
    textio::write_output(&test_path, &dataset_to_csv(&test))?;

    let (clean, id_noise, ood) = train.truth_counts();
    let manifest = Manifest {
        format_version: FORMAT_VERSION.to_string(),
        seed: gen.seed,
        num_classes: train.num_classes(),
        feature_dim: train.feature_dim(),
        train_size: train.len(),
        test_size: test.len(),
        train_clean: clean,
        train_id_noise: id_noise,
        train_ood: ood,
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest, &manifest_path)?;

    println!("wrote {}", train_path.display());
    println!("wrote {}", test_path.display());
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn load_datasets(config_path: &Path, config: &ExperimentConfig) -> Result<(Dataset, Dataset)> {
    if let Some(gen) = &config.gen {
        return generate(gen);
    }
    let paths = config
        .dataset
        .as_ref()
        .expect("validated config has a data source");
    let train_path = resolve_path(config_path, &paths.train);
    let test_path = resolve_path(config_path, &paths.test);
    let train = dataset_from_csv(&textio::read_input(&train_path)?)?;
    let test = dataset_from_csv(&textio::read_input(&test_path)?)?;
    // Class counts are inferred per file as max label + 1; lift the test
    // set to the training class count when it uses fewer.
    let test = if test.num_classes() < train.num_classes() {
        test.with_num_classes(train.num_classes())?
    } else {
        test
    };
    Ok((train, test))
}

fn metric_from_assessment(assessment: &dsos::mixture::Assessment) -> MetricVector {
    MetricVector {
        kind: MetricKind::IlCollision,
        values: assessment.per_sample.iter().map(|a| a.raw).collect(),
    }
}

fn maybe_retrieval(
    train: &Dataset,
    assessment: &dsos::mixture::Assessment,
) -> Result<Option<RetrievalReport>> {
    if !train.has_truth() {
        return Ok(None);
    }
    let truths: Vec<_> = train.records().iter().map(|r| r.truth).collect();
    let metric = metric_from_assessment(assessment);
    Ok(Some(retrieval_report(
        &assessment.per_sample,
        &truths,
        &metric,
    )?))
}

/// `train`: run the full schedule and write the report plus curves CSV.
pub fn cmd_train(config_path: &Path, out: Option<&Path>, overrides: &TrainOverrides) -> Result<()> {
    let mut config = load_config(config_path)?;
    let dir = output_dir(config_path, &config, out)?;

    let mut tc = config.train_section()?.clone();
    if let Some(s) = overrides.seed {
        tc.seed = s;
        if let Some(gen) = config.gen.as_mut() {
            gen.seed = s;
        }
    }
    if overrides.disable_correction {
        tc.correction_enabled = false;
    }
    if overrides.disable_softening {
        tc.softening_enabled = false;
    }
    if overrides.disable_bootstrap {
        tc.bootstrap_enabled = false;
    }
    if let Some(m) = overrides.warmup_mixup {
        tc.warmup_mixup = m;
    }
    tc.validate()?;
    config.train = Some(tc.clone());

    let (train, test) = load_datasets(config_path, &config)?;
    let outcome: TrainOutcome = run(&tc, &train, &test)?;

    let per_epoch: Vec<EpochRow> = outcome
        .history
        .epochs
        .iter()
        .map(|r| {
            let (n_clean, n_id, n_ood) = r.counts.unwrap_or((0, 0, 0));
            EpochRow {
                epoch: r.epoch as u64,
                lr: r.lr,
                train_loss: r.train_loss,
                test_accuracy: r.test_accuracy,
                n_clean: n_clean as u64,
                n_id: n_id as u64,
                n_ood: n_ood as u64,
            }
        })
        .collect();
    let retrieval = maybe_retrieval(&train, &outcome.final_assessment)?;
    let ids: Vec<u64> = train.records().iter().map(|r| r.id).collect();
    let doc = ReportDoc {
        format_version: FORMAT_VERSION.to_string(),
        config: serde_json::to_value(&config)?,
        best_accuracy: outcome.history.best_accuracy,
        last_accuracy: outcome.history.last_accuracy,
        per_epoch,
        retrieval,
        outcome: OutcomeSummary::from(&outcome.final_assessment.outcome),
        assessments: sample_rows(&ids, &outcome.final_assessment),
    };

    ensure_dir(&dir)?;
    let report_path = dir.join("report.json");
    let curves_path = dir.join("curves.csv");
    write_report(&doc, &report_path)?;
    write_curves(&doc.per_epoch, &curves_path)?;
    println!("wrote {}", report_path.display());
    println!("wrote {}", curves_path.display());
    println!(
        "best accuracy {:.4}, last accuracy {:.4}",
        doc.best_accuracy, doc.last_accuracy
    );
    Ok(())
}

/// `audit`: assess an externally produced prediction matrix against a
/// labelled dataset, no training involved.
pub fn cmd_audit(
    predictions_path: &Path,
    dataset_path: &Path,
    out: &Path,
    bmm_iters: usize,
) -> Result<()> {
    if bmm_iters == 0 {
        return Err(Error::Config("bmm_iters must be positive".to_string()));
    }
    let rows = predictions_from_csv(&textio::read_input(predictions_path)?)?;
    let num_classes = match rows.first() {
        Some(row) => row.probs.len(),
        None => {
            return Err(Error::Input(format!(
                "{}: no prediction rows",
                predictions_path.display()
            )))
        }
    };
    if num_classes < 3 {
        return Err(Error::Config(format!(
            "noise detection needs at least 3 classes, the predictions have {num_classes}"
        )));
    }

    let ds = dataset_from_csv(&textio::read_input(dataset_path)?)?;
    if ds.num_classes() > num_classes {
        return Err(Error::Input(format!(
            "dataset labels span {} classes but the predictions have only {num_classes} columns",
            ds.num_classes()
        )));
    }
    let ds = ds.with_num_classes(num_classes)?;
    let predictions: Vec<SoftLabel> = align_predictions(&ds, &rows)?;

    let metric = compute_metric_vector(&ds, &predictions, MetricKind::IlCollision)?;
    let norm = NormalizedMetric::from_metric(metric);
    let assessment = assess(&norm, bmm_iters);

    let retrieval = maybe_retrieval(&ds, &assessment)?;
    let (clean, id_noise, ood) = assessment.counts();
    let ids: Vec<u64> = ds.records().iter().map(|r| r.id).collect();
    let doc = AuditDoc {
        format_version: FORMAT_VERSION.to_string(),
        num_samples: ds.len() as u64,
        num_classes: num_classes as u64,
        pivot_normalized: assessment.pivot_normalized,
        counts: [clean as u64, id_noise as u64, ood as u64],
        outcome: OutcomeSummary::from(&assessment.outcome),
        retrieval,
        assessments: sample_rows(&ids, &assessment),
    };

    ensure_dir(out)?;
    let audit_path = out.join("audit.json");
    write_audit(&doc, &audit_path)?;
    println!("wrote {}", audit_path.display());
    println!("clean {clean}, id {id_noise}, ood {ood}");
    Ok(())
}

/// `report`: re-render the curves CSV from an existing report file.
pub fn cmd_report(report_path: &Path, out: &Path) -> Result<()> {
    let doc = read_report(report_path)?;
    ensure_dir(out)?;
    let curves_path = out.join("curves.csv");
    textio::write_output(&curves_path, &render_curves(&doc.per_epoch))?;
    println!("wrote {}", curves_path.display());
    Ok(())
}
