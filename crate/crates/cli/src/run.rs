use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use kbc_core::data::{FilterIndex, TripleStore};
use kbc_core::eval::{evaluate_with, EvalOptions, EvalResult};
use kbc_core::model::{write_checkpoint, Formulation, Variant};
use kbc_core::train::{fit, TrainConfig, TrainHistory, ADAGRAD_EPSILON};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Invalid;
use crate::prepare::{resolve, PreparedData};

pub const RECORD: &str = "record.json";
pub const CHECKPOINT: &str = "model.kbcm";
pub const HISTORY: &str = "history.csv";

/// One training run as read from `--config`. Relative paths are taken
/// relative to the config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Output of `kbc prepare-data`.
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Failed,
}

/// Conventions fixed by the implementation that change what a learning rate
/// or penalty weight means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub batch_loss_reduction: String,
    pub adagrad_epsilon: f64,
    pub precision: String,
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            batch_loss_reduction: "sum".into(),
            adagrad_epsilon: ADAGRAD_EPSILON,
            precision: "f64".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: TrainConfig,
    pub config_hash: String,
    pub conventions: Conventions,
    pub dataset: PathBuf,
    /// sha256 of the raw split files the caches were built from.
    pub data_fingerprint: BTreeMap<String, String>,
    pub num_entities: usize,
    pub num_predicates: usize,
    pub history: TrainHistory,
    pub valid: Option<EvalResult>,
    pub test: Option<EvalResult>,
    pub train_seconds: f64,
    pub eval_seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Option<RunRecord> {
        let text = fs::read_to_string(dir.join(RECORD)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn is_complete(&self) -> bool {
        self.status == RunStatus::Completed
    }
}

/// Stored next to the checkpoint; enough to evaluate it again.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: Variant,
    pub formulation: Formulation,
    pub num_entities: usize,
    /// Base predicates of the dataset (before reciprocal augmentation).
    pub num_predicates: usize,
    pub config: TrainConfig,
    pub data_fingerprint: BTreeMap<String, String>,
}

pub fn config_hash(config: &TrainConfig) -> String {
    // serde_json::Value keeps object keys sorted, which makes this canonical.
    let canonical = serde_json::to_value(config)
        .map(|v| v.to_string())
        .unwrap_or_default();
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Parses JSON, or TOML when the extension is `.toml`.
pub fn parse_config_text<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let mut config: RunConfig = parse_config_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    config.dataset = resolve(base, &config.dataset);
    config.output_dir = resolve(base, &config.output_dir);
    Ok(config)
}

/// Filter index over every split, with reciprocal keys when needed.
pub fn full_filter(data: &PreparedData, formulation: Formulation) -> Result<FilterIndex> {
    let reciprocal = formulation == Formulation::Reciprocal;
    Ok(FilterIndex::build(&[&data.train, &data.valid, &data.test], reciprocal)?)
}

fn training_store(data: &PreparedData, formulation: Formulation) -> Result<TripleStore> {
    Ok(match formulation {
        Formulation::Standard => data.train.clone(),
        Formulation::Reciprocal => data.train.augment_reciprocal()?,
    })
}

fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["epoch", "loss", "penalty", "valid_mrr"])?;
    for e in &history.epochs {
        w.write_record([
            e.epoch.to_string(),
            e.objective.to_string(),
            e.penalty.to_string(),
            e.valid_mrr.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_record(dir: &Path, record: &RunRecord) -> Result<()> {
    let path = dir.join(RECORD);
    fs::write(&path, serde_json::to_string_pretty(record)?)
        .with_context(|| format!("writing {}", path.display()))
}

/// Trains and evaluates one configuration into `dir`. The record is written
/// whether or not the run succeeds; the error, if any, is returned as well.
pub fn execute(config: &TrainConfig, dataset: &Path, data: &PreparedData, dir: &Path) -> (RunRecord, Result<()>) {
    let mut record = RunRecord {
        status: RunStatus::Failed,
        error: None,
        config: config.clone(),
        config_hash: config_hash(config),
        conventions: Conventions::default(),
        dataset: dataset.to_owned(),
        data_fingerprint: data.fingerprint(),
        num_entities: data.manifest.num_entities,
        num_predicates: data.manifest.num_predicates,
        history: TrainHistory::default(),
        valid: None,
        test: None,
        train_seconds: 0.0,
        eval_seconds: 0.0,
        checkpoint: None,
    };
    let outcome = train_and_evaluate(config, data, dir, &mut record);
    match &outcome {
        Ok(()) => record.status = RunStatus::Completed,
        Err(e) => record.error = Some(format!("{e:#}")),
    }
    let written = fs::create_dir_all(dir)
        .map_err(anyhow::Error::from)
        .and_then(|_| write_record(dir, &record));
    (record, outcome.and(written))
}

fn train_and_evaluate(config: &TrainConfig, data: &PreparedData, dir: &Path, record: &mut RunRecord) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let filter = full_filter(data, config.formulation)?;
    let train = training_store(data, config.formulation)?;
    let valid = (!data.valid.is_empty()).then_some(&data.valid);
    if valid.is_none() {
        warn!("validation split is empty; keeping the final parameters");
    }

    let start = Instant::now();
    let (model, history) = fit(config, &train, valid, Some(&filter))?;
    record.train_seconds = start.elapsed().as_secs_f64();
    record.history = history;

    let start = Instant::now();
    let options = EvalOptions {
        exec: config.exec,
        ..EvalOptions::default()
    };
    if let Some(v) = valid {
        record.valid = Some(evaluate_with(&model, v, &filter, config.formulation, &options, None)?);
    }
    if !data.test.is_empty() {
        record.test = Some(evaluate_with(&model, &data.test, &filter, config.formulation, &options, None)?);
    }
    record.eval_seconds = start.elapsed().as_secs_f64();

    let checkpoint = dir.join(CHECKPOINT);
    let meta = CheckpointMeta {
        variant: config.model.variant,
        formulation: config.formulation,
        num_entities: data.manifest.num_entities,
        num_predicates: data.manifest.num_predicates,
        config: config.clone(),
        data_fingerprint: data.fingerprint(),
    };
    write_checkpoint(&checkpoint, &model, &meta)?;
    record.checkpoint = Some(checkpoint);
    write_history(&dir.join(HISTORY), &record.history)?;
    Ok(())
}

pub fn cmd_train(path: &Path) -> Result<()> {
    let config = load_run_config(path)?;
    let mut problems = Vec::new();
    if let Err(e) = config.train.validate() {
        problems.push(e.to_string());
    }
    let data = match PreparedData::open(&config.dataset) {
        Ok(d) => Some(d),
        Err(e) => {
            problems.push(format!("dataset: {e:#}"));
            None
        }
    };
    let Some(data) = data.filter(|_| problems.is_empty()) else {
        return Err(Invalid(format!("{}:\n  {}", path.display(), problems.join("\n  "))).into());
    };

    info!(
        "training {} {} with {} (lambda {}) on N={} P={}",
        config.train.formulation.name(),
        config.train.model.variant,
        config.train.regularizer.variant.name(),
        config.train.regularizer.lambda,
        data.manifest.num_entities,
        data.manifest.num_predicates
    );
    let (record, outcome) = execute(&config.train, &config.dataset, &data, &config.output_dir);
    outcome?;
    if let Some(v) = &record.valid {
        println!("valid: MRR {:.4}  H@1 {:.4}  H@3 {:.4}  H@10 {:.4}", v.mrr, v.hits1, v.hits3, v.hits10);
    }
    if let Some(t) = &record.test {
        println!("test:  MRR {:.4}  H@1 {:.4}  H@3 {:.4}  H@10 {:.4}", t.mrr, t.hits1, t.hits3, t.hits10);
    }
    println!("run written to {}", config.output_dir.display());
    Ok(())
}
