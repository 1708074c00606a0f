use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use kbc_core::data::{relation_type_table, Split, DEFAULT_DEGREE_CUTOFF};
use kbc_core::eval::{evaluate_with, EvalOptions};
use kbc_core::model::{read_checkpoint, sidecar_path};

use crate::failure::Invalid;
use crate::prepare::PreparedData;
use crate::run::{full_filter, CheckpointMeta};

pub fn cmd_eval(checkpoint: &Path, data_dir: &Path, split: Split, by_type: bool, raw: bool, json: bool) -> Result<()> {
    let model = read_checkpoint(checkpoint)?;
    let side = sidecar_path(checkpoint);
    let meta: CheckpointMeta = serde_json::from_str(
        &fs::read_to_string(&side).with_context(|| format!("reading {}", side.display()))?,
    )
    .map_err(|e| Invalid(format!("{}: {e}", side.display())))?;
    if meta.variant != model.variant() {
        return Err(Invalid(format!(
            "{} says {}, checkpoint holds {}",
            side.display(),
            meta.variant,
            model.variant()
        ))
        .into());
    }

    let data = PreparedData::open(data_dir)?;
    let n = data.manifest.num_entities;
    let p = data.manifest.num_predicates;
    let rows = meta.formulation.model_predicates(p);
    if model.num_entities() != n || model.num_predicates() != rows {
        return Err(Invalid(format!(
            "checkpoint is N={} with {} predicate rows; {} needs N={n} with {rows} ({} over P={p})",
            model.num_entities(),
            model.num_predicates(),
            data_dir.display(),
            meta.formulation.name()
        ))
        .into());
    }
    if meta.data_fingerprint != data.fingerprint() {
        log::warn!("checkpoint was trained on different data files than {}", data_dir.display());
    }

    let filter = full_filter(&data, meta.formulation)?;
    let table = if by_type {
        Some(relation_type_table(&data.train.augment_reciprocal()?, DEFAULT_DEGREE_CUTOFF)?)
    } else {
        None
    };
    let options = EvalOptions {
        filtered: !raw,
        ..EvalOptions::default()
    };
    let result = evaluate_with(&model, data.split(split), &filter, meta.formulation, &options, table.as_ref())?;
    if json {
        println!("{}", serde_json::to_string_pretty(&result)?);
    } else {
        println!("{} split, {} ranking", split.name(), if raw { "raw" } else { "filtered" });
        print!("{}", result.to_table());
    }
    Ok(())
}
