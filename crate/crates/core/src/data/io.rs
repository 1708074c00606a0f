use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Split, Triple, TripleStore, VocabPair};
use crate::error::{KbcError, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"KBC1";

enum Resolve<'a> {
    Fixed(&'a VocabPair),
    Grow(&'a mut VocabPair),
}

/// Reads a `subject<TAB>predicate<TAB>object` file.
///
/// Without `vocab`, entity and predicate vocabularies are built in order of
/// first appearance. With `vocab`, every symbol must already be known.
/// Blank lines are skipped; repeated triples are dropped with a warning.
pub fn load_triples(
    path: &Path,
    vocab: Option<&VocabPair>,
    split: Split,
) -> Result<(TripleStore, VocabPair)> {
    match vocab {
        Some(v) => {
            let store = read_tsv(path, Resolve::Fixed(v), split)?;
            Ok((store, v.clone()))
        }
        None => {
            let mut v = VocabPair::default();
            let store = read_tsv(path, Resolve::Grow(&mut v), split)?;
            Ok((store, v))
        }
    }
}

/// Like [`load_triples`] with a vocabulary, but unseen symbols are appended
/// to `vocab` instead of rejected. Store dimensions reflect the grown vocab.
pub fn load_triples_extending(
    path: &Path,
    vocab: &mut VocabPair,
    split: Split,
) -> Result<TripleStore> {
    read_tsv(path, Resolve::Grow(vocab), split)
}

fn read_tsv(path: &Path, mut resolve: Resolve<'_>, split: Split) -> Result<TripleStore> {
    let file = File::open(path).map_err(|e| KbcError::io(path, e))?;
    let reader = BufReader::new(file);
    let mut triples = Vec::new();
    let mut seen = HashSet::new();
    let mut dropped = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| KbcError::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(KbcError::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                found: fields.len(),
            });
        }
        let lookup = |kind: &'static str, name: &str, found: Option<u32>| {
            found.ok_or_else(|| KbcError::UnknownSymbol {
                path: path.to_owned(),
                line: lineno + 1,
                kind,
                name: name.to_owned(),
            })
        };
        let triple = match &mut resolve {
            Resolve::Fixed(v) => Triple::new(
                lookup("entity", fields[0], v.entities.get(fields[0]))?,
                lookup("predicate", fields[1], v.predicates.get(fields[1]))?,
                lookup("entity", fields[2], v.entities.get(fields[2]))?,
            ),
            Resolve::Grow(v) => {
                let s = v.entities.get_or_insert(fields[0]);
                let p = v.predicates.get_or_insert(fields[1]);
                let o = v.entities.get_or_insert(fields[2]);
                Triple::new(s, p, o)
            }
        };
        if seen.insert(triple) {
            triples.push(triple);
        } else {
            dropped += 1;
        }
    }
    if dropped > 0 {
        log::warn!("{}: dropped {dropped} repeated triples", path.display());
    }

    let (n, p) = match &resolve {
        Resolve::Fixed(v) => (v.entities.len(), v.predicates.len()),
        Resolve::Grow(v) => (v.entities.len(), v.predicates.len()),
    };
    TripleStore::new(triples, n, p, split)
}

/// Writes the compact binary form: `KBC1`, u32 N, u32 P, u64 count, then
/// `count` little-endian `(u32, u32, u32)` triples.
pub fn write_cache(store: &TripleStore, path: &Path) -> Result<()> {
    if store.is_augmented() {
        return Err(KbcError::Config(
            "cache files hold raw stores; augment after loading".into(),
        ));
    }
    let file = File::create(path).map_err(|e| KbcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = |bytes: &[u8]| w.write_all(bytes).map_err(|e| KbcError::io(path, e));
    write(CACHE_MAGIC)?;
    write(&(store.num_entities() as u32).to_le_bytes())?;
    write(&(store.num_predicates() as u32).to_le_bytes())?;
    write(&(store.len() as u64).to_le_bytes())?;
    for t in store.triples() {
        write(&t.subject.to_le_bytes())?;
        write(&t.predicate.to_le_bytes())?;
        write(&t.object.to_le_bytes())?;
    }
    w.flush().map_err(|e| KbcError::io(path, e))
}

pub fn read_cache(path: &Path, split: Split) -> Result<TripleStore> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| KbcError::io(path, e))?;
    let bad = |reason: &str| KbcError::BadCache {
        path: path.to_owned(),
        reason: reason.to_owned(),
    };
    if bytes.len() < 20 || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("missing KBC1 header"));
    }
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let n = u32_at(4) as usize;
    let p = u32_at(8) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if bytes.len() != 20 + 12 * count {
        return Err(bad("length does not match triple count"));
    }
    let triples = (0..count)
        .map(|c| {
            let at = 20 + 12 * c;
            Triple::new(u32_at(at), u32_at(at + 4), u32_at(at + 8))
        })
        .collect();
    TripleStore::new(triples, n, p, split)
}
