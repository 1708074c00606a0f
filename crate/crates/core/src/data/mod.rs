//! Triple datasets and the index structures derived from them.

mod dataset;
mod filter;
mod io;
mod stats;
mod vocab;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};

pub use dataset::{Dataset, SPLIT_FILES};
pub use filter::FilterIndex;
pub use io::{load_triples, load_triples_extending, read_cache, write_cache, CACHE_MAGIC};
pub use stats::{
    compute_marginals, relation_type_table, ModeMarginals, RelationCategory, RelationStats,
    RelationTypeTable, DEFAULT_DEGREE_CUTOFF,
};
pub use vocab::{VocabPair, Vocabulary};

/// A fact `(subject, predicate, object)` as dense indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: u32,
    pub predicate: u32,
    pub object: u32,
}

impl Triple {
    pub const fn new(subject: u32, predicate: u32, object: u32) -> Self {
        Triple {
            subject,
            predicate,
            object,
        }
    }

    /// The reciprocal fact `(object, predicate + offset, subject)`.
    pub fn reciprocal(self, offset: u32) -> Self {
        Triple::new(self.object, self.predicate + offset, self.subject)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = KbcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(KbcError::Config(format!("unknown split '{other}'"))),
        }
    }
}

/// Indexed list of known-true triples over `num_entities` entities and
/// `num_predicates` predicates. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleStore {
    triples: Vec<Triple>,
    num_entities: usize,
    num_predicates: usize,
    split: Split,
    augmented: bool,
}

impl TripleStore {
    /// Builds a store, checking index ranges and rejecting duplicate triples.
    pub fn new(
        triples: Vec<Triple>,
        num_entities: usize,
        num_predicates: usize,
        split: Split,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(triples.len());
        for t in &triples {
            check_range("subject", t.subject as usize, num_entities)?;
            check_range("object", t.object as usize, num_entities)?;
            check_range("predicate", t.predicate as usize, num_predicates)?;
            if !seen.insert(*t) {
                return Err(KbcError::DimensionMismatch(format!(
                    "duplicate triple ({}, {}, {})",
                    t.subject, t.predicate, t.object
                )));
            }
        }
        Ok(TripleStore {
            triples,
            num_entities,
            num_predicates,
            split,
            augmented: false,
        })
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    /// Predicate count, including reciprocals when augmented.
    pub fn num_predicates(&self) -> usize {
        self.num_predicates
    }

    /// Predicate count of the original (non-reciprocal) relation set.
    pub fn base_predicates(&self) -> usize {
        if self.augmented {
            self.num_predicates / 2
        } else {
            self.num_predicates
        }
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    /// Appends the reciprocal `(k, j + P, i)` of every triple, doubling the
    /// predicate mode. Original triples keep their positions; reciprocals
    /// follow in the same order.
    pub fn augment_reciprocal(&self) -> Result<TripleStore> {
        if self.augmented {
            return Err(KbcError::AlreadyAugmented);
        }
        let offset = self.num_predicates as u32;
        let mut triples = Vec::with_capacity(2 * self.triples.len());
        triples.extend_from_slice(&self.triples);
        triples.extend(self.triples.iter().map(|t| t.reciprocal(offset)));
        Ok(TripleStore {
            triples,
            num_entities: self.num_entities,
            num_predicates: 2 * self.num_predicates,
            split: self.split,
            augmented: true,
        })
    }
}

impl TripleStore {
    /// The same triples over at least as many entities and predicates, for
    /// splits read before the vocabulary stopped growing.
    pub fn widened(&self, num_entities: usize, num_predicates: usize) -> Result<TripleStore> {
        if self.augmented {
            return Err(KbcError::AlreadyAugmented);
        }
        if num_entities < self.num_entities || num_predicates < self.num_predicates {
            return Err(KbcError::DimensionMismatch(format!(
                "cannot shrink N={}, P={} to N={num_entities}, P={num_predicates}",
                self.num_entities, self.num_predicates
            )));
        }
        Ok(TripleStore {
            num_entities,
            num_predicates,
            ..self.clone()
        })
    }
}

/// Free-function form of [`TripleStore::augment_reciprocal`].
pub fn augment_reciprocal(store: &TripleStore) -> Result<TripleStore> {
    store.augment_reciprocal()
}

fn check_range(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index >= limit {
        return Err(KbcError::IndexOutOfRange { what, index, limit });
    }
    Ok(())
}
