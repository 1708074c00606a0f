use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::TripleStore;
use crate::error::{KbcError, Result};

pub const DEFAULT_DEGREE_CUTOFF: f64 = 1.5;

/// Per-mode probability that an index appears in a uniformly drawn triple.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeMarginals {
    pub subject: Vec<f64>,
    pub predicate: Vec<f64>,
    pub object: Vec<f64>,
}

impl ModeMarginals {
    pub fn mode(&self, d: usize) -> &[f64] {
        match d {
            0 => &self.subject,
            1 => &self.predicate,
            2 => &self.object,
            _ => panic!("mode {d} out of range"),
        }
    }
}

pub fn compute_marginals(store: &TripleStore) -> Result<ModeMarginals> {
    if store.is_empty() {
        return Err(KbcError::Empty("marginals of an empty store"));
    }
    let n = store.num_entities();
    let mut subject = vec![0usize; n];
    let mut predicate = vec![0usize; store.num_predicates()];
    let mut object = vec![0usize; n];
    for t in store.triples() {
        subject[t.subject as usize] += 1;
        predicate[t.predicate as usize] += 1;
        object[t.object as usize] += 1;
    }
    let total = store.len() as f64;
    let norm = |counts: Vec<usize>| counts.into_iter().map(|c| c as f64 / total).collect();
    Ok(ModeMarginals {
        subject: norm(subject),
        predicate: norm(predicate),
        object: norm(object),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationCategory {
    #[serde(rename = "1-1")]
    OneToOne,
    #[serde(rename = "1-m")]
    OneToMany,
    #[serde(rename = "m-1")]
    ManyToOne,
    #[serde(rename = "m-m")]
    ManyToMany,
}

impl RelationCategory {
    pub const ALL: [RelationCategory; 4] = [
        RelationCategory::OneToOne,
        RelationCategory::ManyToOne,
        RelationCategory::OneToMany,
        RelationCategory::ManyToMany,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RelationCategory::OneToOne => "1-1",
            RelationCategory::OneToMany => "1-m",
            RelationCategory::ManyToOne => "m-1",
            RelationCategory::ManyToMany => "m-m",
        }
    }

    /// Left side from the average in-degree (subjects per object), right
    /// side from the average out-degree (objects per subject).
    pub fn classify(avg_in: f64, avg_out: f64, cutoff: f64) -> Self {
        match (avg_in <= cutoff, avg_out <= cutoff) {
            (true, true) => RelationCategory::OneToOne,
            (true, false) => RelationCategory::OneToMany,
            (false, true) => RelationCategory::ManyToOne,
            (false, false) => RelationCategory::ManyToMany,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationStats {
    pub triples: usize,
    pub avg_in_degree: f64,
    pub avg_out_degree: f64,
    pub category: RelationCategory,
}

/// Degree statistics per directed predicate of an augmented train store.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationTypeTable {
    pub cutoff: f64,
    pub base_predicates: usize,
    pub stats: BTreeMap<u32, RelationStats>,
    /// Directed predicates with no training triple.
    pub absent: Vec<u32>,
}

impl RelationTypeTable {
    pub fn category(&self, predicate: u32) -> Option<RelationCategory> {
        self.stats.get(&predicate).map(|s| s.category)
    }

    /// Category of the right-hand query `(i, j, ?)` for a base predicate `j`.
    pub fn rhs_category(&self, predicate: u32) -> Option<RelationCategory> {
        self.category(predicate)
    }

    /// Category of the left-hand query `(?, j, k)`, read off the reciprocal.
    pub fn lhs_category(&self, predicate: u32) -> Option<RelationCategory> {
        self.category(predicate + self.base_predicates as u32)
    }
}

pub fn relation_type_table(store: &TripleStore, cutoff: f64) -> Result<RelationTypeTable> {
    if !store.is_augmented() {
        return Err(KbcError::NotAugmented);
    }
    let p = store.num_predicates();
    let mut count = vec![0usize; p];
    let mut subjects: Vec<HashSet<u32>> = vec![HashSet::new(); p];
    let mut objects: Vec<HashSet<u32>> = vec![HashSet::new(); p];
    for t in store.triples() {
        let j = t.predicate as usize;
        count[j] += 1;
        subjects[j].insert(t.subject);
        objects[j].insert(t.object);
    }
    let mut stats = BTreeMap::new();
    let mut absent = Vec::new();
    for j in 0..p {
        if count[j] == 0 {
            absent.push(j as u32);
            continue;
        }
        let avg_out = count[j] as f64 / subjects[j].len() as f64;
        let avg_in = count[j] as f64 / objects[j].len() as f64;
        stats.insert(
            j as u32,
            RelationStats {
                triples: count[j],
                avg_in_degree: avg_in,
                avg_out_degree: avg_out,
                category: RelationCategory::classify(avg_in, avg_out, cutoff),
            },
        );
    }
    Ok(RelationTypeTable {
        cutoff,
        base_predicates: store.base_predicates(),
        stats,
        absent,
    })
}
