use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kbc_core::data::{read_cache, write_cache, Dataset, Split, TripleStore, SPLIT_FILES};
use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Invalid;

pub const MANIFEST: &str = "manifest.json";
const ENTITIES: &str = "entities.tsv";
const PREDICATES: &str = "predicates.tsv";

/// Written last by `prepare-data`; its presence marks a complete output dir.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// sha256 of each raw split file, by file name.
    pub sources: BTreeMap<String, String>,
    pub allow_unseen: bool,
    pub num_entities: usize,
    pub num_predicates: usize,
    /// Triples per split after duplicate removal.
    pub counts: BTreeMap<String, usize>,
    /// sha256 of each cache and vocabulary file, by file name.
    pub outputs: BTreeMap<String, String>,
}

/// Cached splits loaded back from a `prepare-data` directory.
pub struct PreparedData {
    pub manifest: Manifest,
    pub train: TripleStore,
    pub valid: TripleStore,
    pub test: TripleStore,
}

impl PreparedData {
    pub fn open(dir: &Path) -> Result<PreparedData> {
        let manifest = read_manifest(dir).with_context(|| {
            format!("{} is not a prepared dataset (run `kbc prepare-data`)", dir.display())
        })?;
        let changed = changed_outputs(dir, &manifest)?;
        if !changed.is_empty() {
            return Err(Invalid(format!(
                "{}: {} changed since preparation; rerun prepare-data",
                dir.display(),
                changed.join(", ")
            ))
            .into());
        }
        let load = |split: Split| read_cache(&dir.join(cache_name(split)), split);
        let data = PreparedData {
            train: load(Split::Train)?,
            valid: load(Split::Valid)?,
            test: load(Split::Test)?,
            manifest,
        };
        for store in [&data.train, &data.valid, &data.test] {
            if store.num_entities() != data.manifest.num_entities
                || store.num_predicates() != data.manifest.num_predicates
            {
                return Err(Invalid(format!(
                    "{} cache dimensions disagree with {MANIFEST}",
                    store.split().name()
                ))
                .into());
            }
        }
        Ok(data)
    }

    pub fn split(&self, split: Split) -> &TripleStore {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    /// Fingerprint of the raw inputs and options the caches came from.
    pub fn fingerprint(&self) -> BTreeMap<String, String> {
        let mut f = self.manifest.sources.clone();
        f.insert("allow_unseen".into(), self.manifest.allow_unseen.to_string());
        f
    }
}

pub fn cache_name(split: Split) -> String {
    format!("{}.kbc", split.name())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn changed_outputs(dir: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let mut changed = Vec::new();
    for (name, hash) in &manifest.outputs {
        let path = dir.join(name);
        if !path.is_file() || &sha256_file(&path)? != hash {
            changed.push(name.clone());
        }
    }
    Ok(changed)
}

fn source_hashes(input: &Path) -> Result<BTreeMap<String, String>> {
    let missing: Vec<&str> = SPLIT_FILES
        .iter()
        .map(|&(_, f)| f)
        .filter(|f| !input.join(f).is_file())
        .collect();
    if !missing.is_empty() {
        bail!(Invalid(format!(
            "{} is missing {}; expected files: {}",
            input.display(),
            missing.join(", "),
            SPLIT_FILES.map(|(_, f)| f).join(", ")
        )));
    }
    SPLIT_FILES
        .iter()
        .map(|&(_, f)| Ok((f.to_string(), sha256_file(&input.join(f))?)))
        .collect()
}

fn write_names(path: &Path, names: &[String]) -> Result<()> {
    let mut out = Vec::new();
    for (i, name) in names.iter().enumerate() {
        writeln!(out, "{i}\t{name}")?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Parses the raw splits in `input` into caches under `output`, or reuses
/// them when the raw files and options are unchanged.
pub fn prepare(input: &Path, output: &Path, allow_unseen: bool) -> Result<(Manifest, bool)> {
    let sources = source_hashes(input)?;
    if let Ok(existing) = read_manifest(output) {
        if existing.sources == sources
            && existing.allow_unseen == allow_unseen
            && changed_outputs(output, &existing)?.is_empty()
        {
            return Ok((existing, true));
        }
    }

    let data = Dataset::load_dir(input, allow_unseen)?;
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    // Drop a stale manifest first so an interrupted run is never mistaken for a complete one.
    let manifest_path = output.join(MANIFEST);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path)?;
    }

    let mut outputs = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for (split, _) in SPLIT_FILES {
        let name = cache_name(split);
        let path = output.join(&name);
        let store = data.split(split);
        write_cache(store, &path)?;
        outputs.insert(name, sha256_file(&path)?);
        counts.insert(split.name().to_string(), store.len());
    }
    for (name, names) in [(ENTITIES, data.vocab.entities.names()), (PREDICATES, data.vocab.predicates.names())] {
        let path = output.join(name);
        write_names(&path, names)?;
        outputs.insert(name.to_string(), sha256_file(&path)?);
    }

    let manifest = Manifest {
        sources,
        allow_unseen,
        num_entities: data.train.num_entities(),
        num_predicates: data.train.num_predicates(),
        counts,
        outputs,
    };
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing {}", manifest_path.display()))?;
    Ok((manifest, false))
}

pub fn cmd_prepare_data(input: &Path, output: &Path, allow_unseen: bool) -> Result<()> {
    let (m, reused) = prepare(input, output, allow_unseen)?;
    if reused {
        info!("inputs unchanged, reusing {}", output.display());
    }
    println!(
        "N={} P={} train={} valid={} test={} -> {}",
        m.num_entities,
        m.num_predicates,
        m.counts["train"],
        m.counts["valid"],
        m.counts["test"],
        output.display()
    );
    Ok(())
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_owned()
    } else {
        base.join(path)
    }
}
