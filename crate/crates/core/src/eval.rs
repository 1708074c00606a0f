//! Filtered ranking evaluation.
//!
//! Every test triple `(i, j, k)` yields a right-hand query `(i, j, ?)` and a
//! left-hand query `(?, j, k)`. A target's rank is one plus the number of
//! candidates that are not known-true completions and score strictly higher,
//! so ties never hurt the target. Queries sharing an anchor are scored once.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{FilterIndex, RelationCategory, RelationTypeTable, Triple, TripleStore};
use crate::error::{KbcError, Result};
use crate::model::{candidate_planes, score_batch_with_planes, Formulation, ModelParams, Side};
use crate::par::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(i, j, ?)`
    Rhs,
    /// `(?, j, k)`
    Lhs,
}

/// A ranking query on a base predicate: `anchor` is the known entity and
/// `target` the held-out one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Query {
    pub direction: Direction,
    pub anchor: u32,
    pub predicate: u32,
    pub target: u32,
}

impl Query {
    pub fn rhs(t: Triple) -> Self {
        Query {
            direction: Direction::Rhs,
            anchor: t.subject,
            predicate: t.predicate,
            target: t.object,
        }
    }

    pub fn lhs(t: Triple) -> Self {
        Query {
            direction: Direction::Lhs,
            anchor: t.object,
            predicate: t.predicate,
            target: t.subject,
        }
    }
}

/// `1 + #{c : c != target, c not in filtered, scores[c] > scores[target]}`.
///
/// `filtered` must be sorted. A non-finite target score ranks last.
pub fn rank_from_scores(scores: &[f64], target: usize, filtered: &[u32]) -> usize {
    let st = scores[target];
    if !st.is_finite() {
        return scores.len();
    }
    let above = scores.iter().filter(|&&s| s > st).count();
    let filtered_above = filtered
        .iter()
        .filter(|&&c| c as usize != target && scores[c as usize] > st)
        .count();
    1 + above - filtered_above
}

/// Fiber to score and filter set of one query.
struct Resolved<'a> {
    side: Side,
    pair: (usize, usize),
    target: usize,
    filtered: &'a [u32],
}

fn resolve<'a>(
    query: &Query,
    formulation: Formulation,
    filter: Option<&'a FilterIndex>,
    base_predicates: usize,
) -> Resolved<'a> {
    let (a, j, t) = (query.anchor, query.predicate, query.target as usize);
    match (query.direction, formulation) {
        (Direction::Rhs, _) => Resolved {
            side: Side::Rhs,
            pair: (a as usize, j as usize),
            target: t,
            filtered: filter.map_or(&[], |f| f.objects(a, j)),
        },
        (Direction::Lhs, Formulation::Standard) => Resolved {
            side: Side::Lhs,
            pair: (j as usize, a as usize),
            target: t,
            filtered: filter.map_or(&[], |f| f.subjects(j, a)),
        },
        (Direction::Lhs, Formulation::Reciprocal) => {
            let jr = j + base_predicates as u32;
            Resolved {
                side: Side::Rhs,
                pair: (a as usize, jr as usize),
                target: t,
                filtered: filter.map_or(&[], |f| f.objects(a, jr)),
            }
        }
    }
}

fn check_model(model: &ModelParams, formulation: Formulation, filter: &FilterIndex) -> Result<()> {
    let p = filter.base_predicates();
    if model.num_entities() != filter.num_entities() {
        return Err(KbcError::DimensionMismatch(format!(
            "model has {} entities, data has {}",
            model.num_entities(),
            filter.num_entities()
        )));
    }
    if model.num_predicates() != formulation.model_predicates(p) {
        return Err(KbcError::DimensionMismatch(format!(
            "{} model over {p} predicates needs {} predicate rows, has {}",
            formulation.name(),
            formulation.model_predicates(p),
            model.num_predicates()
        )));
    }
    if formulation == Formulation::Reciprocal && !filter.is_reciprocal() {
        return Err(KbcError::Config(
            "reciprocal evaluation needs a filter index built with reciprocal keys".into(),
        ));
    }
    Ok(())
}

/// Filtered rank of a single query.
pub fn filtered_rank(
    model: &ModelParams,
    query: &Query,
    filter: &FilterIndex,
    formulation: Formulation,
) -> Result<usize> {
    check_model(model, formulation, filter)?;
    let n = model.num_entities();
    for (what, x) in [("anchor", query.anchor), ("target", query.target)] {
        if x as usize >= n {
            return Err(KbcError::IndexOutOfRange { what, index: x as usize, limit: n });
        }
    }
    if query.predicate as usize >= filter.base_predicates() {
        return Err(KbcError::IndexOutOfRange {
            what: "predicate",
            index: query.predicate as usize,
            limit: filter.base_predicates(),
        });
    }
    let r = resolve(query, formulation, Some(filter), filter.base_predicates());
    let planes = candidate_planes(model, r.side);
    let scores = score_batch_with_planes(model, &planes, r.side, &[r.pair], Exec::Sequential);
    Ok(rank_from_scores(scores.row(0), r.target, r.filtered))
}

/// MRR and Hits@{1,3,10} over a set of queries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

/// Counts of each rank; aggregates do not depend on query order.
#[derive(Clone, Debug, Default)]
struct RankHistogram {
    counts: Vec<u64>,
}

impl RankHistogram {
    fn add(&mut self, rank: usize) {
        if self.counts.len() <= rank {
            self.counts.resize(rank + 1, 0);
        }
        self.counts[rank] += 1;
    }

    fn metrics(&self) -> Metrics {
        let n: u64 = self.counts.iter().sum();
        if n == 0 {
            return Metrics { mrr: 0.0, hits1: 0.0, hits3: 0.0, hits10: 0.0, n_queries: 0 };
        }
        let mut reciprocal = 0.0;
        for (rank, &c) in self.counts.iter().enumerate().skip(1) {
            reciprocal += c as f64 / rank as f64;
        }
        let hits = |h: usize| self.counts.iter().take(h + 1).sum::<u64>() as f64 / n as f64;
        Metrics {
            mrr: reciprocal / n as f64,
            hits1: hits(1),
            hits3: hits(3),
            hits10: hits(10),
            n_queries: n as usize,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
    /// False for raw (unfiltered) ranks.
    pub filtered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BTreeMap<RelationCategory, Metrics>>,
    /// Queries on predicates the type table has no statistics for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncategorized: Option<usize>,
}

impl EvalResult {
    pub fn metrics(&self) -> Metrics {
        Metrics {
            mrr: self.mrr,
            hits1: self.hits1,
            hits3: self.hits3,
            hits10: self.hits10,
            n_queries: self.n_queries,
        }
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let kind = if self.filtered { "filtered" } else { "raw" };
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8} {:>8} {:>9}", kind, "MRR", "H@1", "H@3", "H@10", "queries");
        let mut line = |name: &str, m: &Metrics| {
            let _ = writeln!(
                out,
                "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>9}",
                name, m.mrr, m.hits1, m.hits3, m.hits10, m.n_queries
            );
        };
        line("all", &self.metrics());
        if let Some(b) = &self.breakdown {
            for (cat, m) in b {
                line(cat.label(), m);
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Filter known-true completions (otherwise raw ranks).
    pub filtered: bool,
    /// Evaluate a seeded random subset of at most this many triples.
    pub max_triples: Option<usize>,
    pub seed: u64,
    /// Anchors scored per block.
    pub batch_size: usize,
    pub exec: Exec,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            filtered: true,
            max_triples: None,
            seed: 0,
            batch_size: 256,
            exec: Exec::default(),
        }
    }
}

/// Filtered MRR and Hits@k over both query directions of every test triple.
pub fn evaluate(
    model: &ModelParams,
    test: &TripleStore,
    filter: &FilterIndex,
    formulation: Formulation,
) -> Result<EvalResult> {
    evaluate_with(model, test, filter, formulation, &EvalOptions::default(), None)
}

/// Like [`evaluate`], optionally on a subset, raw, or with a per-category
/// breakdown: right-hand queries take the category of `j`, left-hand ones
/// that of `j + P`.
pub fn evaluate_with(
    model: &ModelParams,
    test: &TripleStore,
    filter: &FilterIndex,
    formulation: Formulation,
    options: &EvalOptions,
    table: Option<&RelationTypeTable>,
) -> Result<EvalResult> {
    if test.is_augmented() {
        return Err(KbcError::Config("evaluation expects an unaugmented split".into()));
    }
    if test.num_entities() != filter.num_entities() || test.num_predicates() != filter.base_predicates() {
        return Err(KbcError::DimensionMismatch(format!(
            "{} split has N={}, P={}; filter index has N={}, P={}",
            test.split().name(),
            test.num_entities(),
            test.num_predicates(),
            filter.num_entities(),
            filter.base_predicates()
        )));
    }
    check_model(model, formulation, filter)?;
    if let Some(t) = table {
        if t.base_predicates != test.num_predicates() {
            return Err(KbcError::DimensionMismatch(format!(
                "type table covers {} predicates, data has {}",
                t.base_predicates,
                test.num_predicates()
            )));
        }
    }

    let triples = select(test.triples(), options.max_triples, options.seed);
    let p = test.num_predicates();
    let filt = options.filtered.then_some(filter);

    // (side, anchor pair) -> [(target, filtered, category slot)]
    type Group<'a> = Vec<(usize, &'a [u32], usize)>;
    let mut groups: [BTreeMap<(usize, usize), Group>; 2] = [BTreeMap::new(), BTreeMap::new()];
    let mut uncategorized = 0usize;
    for t in &triples {
        for q in [Query::rhs(*t), Query::lhs(*t)] {
            let slot = match table {
                None => 0,
                Some(tab) => {
                    let cat = match q.direction {
                        Direction::Rhs => tab.rhs_category(q.predicate),
                        Direction::Lhs => tab.lhs_category(q.predicate),
                    };
                    match cat {
                        Some(c) => 1 + RelationCategory::ALL.iter().position(|&x| x == c).unwrap(),
                        None => {
                            uncategorized += 1;
                            0
                        }
                    }
                }
            };
            let r = resolve(&q, formulation, filt, p);
            let side = usize::from(r.side == Side::Lhs);
            groups[side].entry(r.pair).or_default().push((r.target, r.filtered, slot));
        }
    }

    // slot 0 collects everything; slots 1..=4 follow RelationCategory::ALL
    let mut hist = vec![RankHistogram::default(); 1 + RelationCategory::ALL.len()];
    for (s, side) in [Side::Rhs, Side::Lhs].into_iter().enumerate() {
        if groups[s].is_empty() {
            continue;
        }
        let planes = candidate_planes(model, side);
        let entries: Vec<(&(usize, usize), &Group)> = groups[s].iter().collect();
        for chunk in entries.chunks(options.batch_size.max(1)) {
            let pairs: Vec<(usize, usize)> = chunk.iter().map(|(pair, _)| **pair).collect();
            let scores = score_batch_with_planes(model, &planes, side, &pairs, options.exec);
            let ranks = options.exec.map(chunk.len(), |b| {
                chunk[b]
                    .1
                    .iter()
                    .map(|&(target, filtered, slot)| (rank_from_scores(scores.row(b), target, filtered), slot))
                    .collect::<Vec<_>>()
            });
            for (rank, slot) in ranks.into_iter().flatten() {
                hist[0].add(rank);
                if slot > 0 {
                    hist[slot].add(rank);
                }
            }
        }
    }

    let all = hist[0].metrics();
    let breakdown = table.map(|_| {
        RelationCategory::ALL
            .iter()
            .enumerate()
            .map(|(c, &cat)| (cat, hist[c + 1].metrics()))
            .collect()
    });
    Ok(EvalResult {
        mrr: all.mrr,
        hits1: all.hits1,
        hits3: all.hits3,
        hits10: all.hits10,
        n_queries: all.n_queries,
        filtered: options.filtered,
        breakdown,
        uncategorized: table.map(|_| uncategorized),
    })
}

/// Filtered MRR per relation category.
pub fn per_type_breakdown(
    model: &ModelParams,
    test: &TripleStore,
    filter: &FilterIndex,
    formulation: Formulation,
    table: &RelationTypeTable,
) -> Result<BTreeMap<RelationCategory, Metrics>> {
    let r = evaluate_with(model, test, filter, formulation, &EvalOptions::default(), Some(table))?;
    Ok(r.breakdown.unwrap_or_default())
}

fn select(triples: &[Triple], cap: Option<usize>, seed: u64) -> Vec<Triple> {
    match cap {
        Some(c) if c < triples.len() => {
            let mut idx: Vec<usize> = (0..triples.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx.truncate(c);
            idx.sort_unstable();
            idx.into_iter().map(|i| triples[i]).collect()
        }
        _ => triples.to_vec(),
    }
}
