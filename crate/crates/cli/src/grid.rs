use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use kbc_core::train::TrainConfig;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::failure::Invalid;
use crate::prepare::{resolve, PreparedData};
use crate::run::{config_hash, execute, parse_config_text, RunRecord, RunStatus};

pub const SUMMARY: &str = "summary.csv";

/// A base training configuration and the values to sweep.
///
/// Axis keys are dotted paths into the configuration, e.g.
/// `learning_rate`, `regularizer.lambda` or `model.rank`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    pub base: Value,
    pub axes: BTreeMap<String, Vec<Value>>,
}

/// One cell of the grid.
#[derive(Clone, Debug)]
pub struct Cell {
    pub assignment: Vec<(String, Value)>,
    pub config: TrainConfig,
    pub hash: String,
}

impl Cell {
    pub fn dir_name(&self) -> &str {
        &self.hash[..12]
    }
}

fn set_path(target: &mut Value, path: &str, value: Value) -> std::result::Result<(), String> {
    let mut node = target;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(format!("axis '{path}' has an empty path segment"));
        }
        let Value::Object(map) = node else {
            return Err(format!("axis '{path}': '{}' is not an object", parts[..i].join(".")));
        };
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split always yields at least one segment")
}

/// Expands the Cartesian product, last axis varying fastest. Every problem
/// across every cell is collected before anything runs.
pub fn expand(spec: &GridSpec) -> Result<Vec<Cell>> {
    let mut problems = Vec::new();
    if !spec.base.is_object() {
        problems.push("base must be a table/object".to_string());
    }
    for (axis, values) in &spec.axes {
        if values.is_empty() {
            problems.push(format!("axis '{axis}' has no values"));
        }
    }
    if !problems.is_empty() {
        return Err(Invalid(problems.join("\n  ")).into());
    }

    let axes: Vec<(&String, &Vec<Value>)> = spec.axes.iter().collect();
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut cells = Vec::with_capacity(total);
    for index in 0..total {
        let mut rest = index;
        let mut assignment = vec![(String::new(), Value::Null); axes.len()];
        for (slot, (axis, values)) in axes.iter().enumerate().rev() {
            assignment[slot] = ((*axis).clone(), values[rest % values.len()].clone());
            rest /= values.len();
        }
        let mut value = spec.base.clone();
        let mut ok = true;
        for (axis, v) in &assignment {
            if let Err(e) = set_path(&mut value, axis, v.clone()) {
                problems.push(e);
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let label = describe(&assignment);
        match serde_json::from_value::<TrainConfig>(value) {
            Ok(config) => match config.validate() {
                Ok(()) => cells.push(Cell {
                    hash: config_hash(&config),
                    assignment,
                    config,
                }),
                Err(e) => problems.push(format!("cell {label}: {e}")),
            },
            Err(e) => problems.push(format!("cell {label}: {e}")),
        }
    }
    problems.dedup();
    if !problems.is_empty() {
        return Err(Invalid(problems.join("\n  ")).into());
    }
    Ok(cells)
}

fn describe(assignment: &[(String, Value)]) -> String {
    let parts: Vec<String> = assignment.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("[{}]", parts.join(", "))
}

fn load_spec(path: &Path) -> Result<GridSpec> {
    let mut spec: GridSpec = parse_config_text(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    spec.dataset = resolve(base, &spec.dataset);
    spec.output_dir = resolve(base, &spec.output_dir);
    Ok(spec)
}

struct Row {
    cell: Cell,
    record: RunRecord,
}

fn write_summary(path: &Path, axes: &[String], rows: &mut [Row]) -> Result<()> {
    let key = |r: &Row| match (r.record.status, &r.record.valid) {
        (RunStatus::Completed, Some(v)) => v.mrr,
        _ => f64::NEG_INFINITY,
    };
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)).then_with(|| a.cell.hash.cmp(&b.cell.hash)));

    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["rank", "run", "status"];
    header.extend(axes.iter().map(String::as_str));
    header.extend([
        "valid_mrr",
        "valid_hits10",
        "test_mrr",
        "test_hits1",
        "test_hits3",
        "test_hits10",
        "best_epoch",
        "train_seconds",
        "error",
    ]);
    w.write_record(&header)?;
    let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for (i, row) in rows.iter().enumerate() {
        let r = &row.record;
        let mut line = vec![
            (i + 1).to_string(),
            row.cell.dir_name().to_string(),
            serde_json::to_value(r.status)?.as_str().unwrap_or_default().to_string(),
        ];
        line.extend(row.cell.assignment.iter().map(|(_, v)| match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }));
        line.extend([
            num(r.valid.as_ref().map(|v| v.mrr)),
            num(r.valid.as_ref().map(|v| v.hits10)),
            num(r.test.as_ref().map(|t| t.mrr)),
            num(r.test.as_ref().map(|t| t.hits1)),
            num(r.test.as_ref().map(|t| t.hits3)),
            num(r.test.as_ref().map(|t| t.hits10)),
            r.history.best_epoch.map(|e| e.to_string()).unwrap_or_default(),
            r.train_seconds.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_grid(path: &Path) -> Result<()> {
    let spec = load_spec(path)?;
    let cells = expand(&spec).with_context(|| format!("invalid grid {}", path.display()))?;
    let data = PreparedData::open(&spec.dataset)?;
    println!("grid: {} runs", cells.len());
    std::fs::create_dir_all(&spec.output_dir)
        .with_context(|| format!("creating {}", spec.output_dir.display()))?;

    let mut rows = Vec::with_capacity(cells.len());
    let mut failed = 0usize;
    for (i, cell) in cells.into_iter().enumerate() {
        let dir = spec.output_dir.join(cell.dir_name());
        let label = describe(&cell.assignment);
        if let Some(done) = RunRecord::load(&dir).filter(|r| r.is_complete() && r.config_hash == cell.hash) {
            info!("run {}: {label} already complete, skipping", i + 1);
            rows.push(Row { cell, record: done });
            continue;
        }
        info!("run {}: {label}", i + 1);
        let (record, outcome) = execute(&cell.config, &spec.dataset, &data, &dir);
        if let Err(e) = outcome {
            warn!("run {} failed: {e:#}", i + 1);
            failed += 1;
        }
        rows.push(Row { cell, record });
    }

    let axes: Vec<String> = spec.axes.keys().cloned().collect();
    write_summary(&spec.output_dir.join(SUMMARY), &axes, &mut rows)?;
    if let Some(best) = rows.first().filter(|r| r.record.is_complete()) {
        println!(
            "best: {} {} valid MRR {}",
            best.cell.dir_name(),
            describe(&best.cell.assignment),
            best.record.valid.as_ref().map(|v| format!("{:.4}", v.mrr)).unwrap_or_else(|| "n/a".into())
        );
        println!("{}", serde_json::to_string_pretty(&best.cell.config)?);
    }
    println!("summary written to {}", spec.output_dir.join(SUMMARY).display());
    if failed > 0 {
        anyhow::bail!("{failed} of {} runs failed; see {SUMMARY}", rows.len());
    }
    Ok(())
}
