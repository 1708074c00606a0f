use std::collections::HashMap;

use super::TripleStore;
use crate::error::{KbcError, Result};

/// Known-true completions used to filter candidates during ranking.
///
/// `objects(i, j)` lists every `k` with `(i, j, k)` in one of the indexed
/// stores; `subjects(j, k)` every such `i`. In reciprocal mode the object map
/// also holds `(k, j + P) -> i`, so left-hand queries rewritten as
/// reciprocal right-hand queries find their filter sets. The two
/// orientations are kept in separate keys and never merged.
#[derive(Clone, Debug, Default)]
pub struct FilterIndex {
    objects: HashMap<(u32, u32), Vec<u32>>,
    subjects: HashMap<(u32, u32), Vec<u32>>,
    num_entities: usize,
    base_predicates: usize,
    reciprocal: bool,
}

impl FilterIndex {
    pub fn build(stores: &[&TripleStore], reciprocal: bool) -> Result<Self> {
        let first = stores
            .first()
            .ok_or(KbcError::Empty("filter index needs at least one store"))?;
        let (n, p) = (first.num_entities(), first.num_predicates());
        let mut objects: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        let mut subjects: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for store in stores {
            if store.is_augmented() {
                return Err(KbcError::AlreadyAugmented);
            }
            if store.num_entities() != n || store.num_predicates() != p {
                return Err(KbcError::DimensionMismatch(format!(
                    "{} store has N={}, P={}; expected N={n}, P={p}",
                    store.split().name(),
                    store.num_entities(),
                    store.num_predicates()
                )));
            }
            for t in store.triples() {
                objects
                    .entry((t.subject, t.predicate))
                    .or_default()
                    .push(t.object);
                subjects
                    .entry((t.predicate, t.object))
                    .or_default()
                    .push(t.subject);
                if reciprocal {
                    objects
                        .entry((t.object, t.predicate + p as u32))
                        .or_default()
                        .push(t.subject);
                }
            }
        }
        for list in objects.values_mut().chain(subjects.values_mut()) {
            list.sort_unstable();
            list.dedup();
        }
        Ok(FilterIndex {
            objects,
            subjects,
            num_entities: n,
            base_predicates: p,
            reciprocal,
        })
    }

    /// Sorted true objects of `(subject, predicate, ?)`.
    pub fn objects(&self, subject: u32, predicate: u32) -> &[u32] {
        self.objects
            .get(&(subject, predicate))
            .map_or(&[], Vec::as_slice)
    }

    /// Sorted true subjects of `(?, predicate, object)`.
    pub fn subjects(&self, predicate: u32, object: u32) -> &[u32] {
        self.subjects
            .get(&(predicate, object))
            .map_or(&[], Vec::as_slice)
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn base_predicates(&self) -> usize {
        self.base_predicates
    }

    pub fn is_reciprocal(&self) -> bool {
        self.reciprocal
    }
}
