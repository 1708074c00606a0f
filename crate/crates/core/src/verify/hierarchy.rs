//! Filtered MRR of an idealized symmetric (DistMult-like) scorer on a
//! single-relation `n`-ary tree of depth `d`, with edges stored parent to
//! child.
//!
//! A symmetric scorer cannot tell a node's parent from its children. Asked
//! for the parent of an internal node it ranks the `n` children first, and
//! those are not filtered because they are objects, not subjects, of the
//! node. Every other query is answered at rank 1.

use serde::{Deserialize, Serialize};

use crate::data::{FilterIndex, Split, Triple, TripleStore};
use crate::error::{KbcError, Result};
use crate::eval::rank_from_scores;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyParams {
    pub branching: usize,
    pub depth: usize,
}

impl HierarchyParams {
    pub fn new(branching: usize, depth: usize) -> Result<Self> {
        if branching <= 2 {
            return Err(KbcError::Config(format!("branching factor must be > 2, got {branching}")));
        }
        if depth == 0 {
            return Err(KbcError::Config("depth must be >= 1".into()));
        }
        Ok(HierarchyParams { branching, depth })
    }

    /// Internal nodes other than the root: `(n^d - n) / (n - 1)`.
    pub fn internal_nodes(&self) -> f64 {
        let n = self.branching as f64;
        (n.powi(self.depth as i32) - n) / (n - 1.0)
    }
}

/// `(n^d + n + K/(n+1) + K n) / (n^d + n + (n+1) K)`.
pub fn hierarchy_mrr_closed_form(h: &HierarchyParams) -> f64 {
    let n = h.branching as f64;
    let nd = n.powi(h.depth as i32);
    let k = h.internal_nodes();
    (nd + n + k / (n + 1.0) + k * n) / (nd + n + (n + 1.0) * k)
}

/// Builds the tree, scores every candidate with `s(x, y) = depth of the
/// deeper endpoint` on edges and 0 elsewhere, and averages filtered
/// reciprocal ranks over both query directions of every edge.
pub fn hierarchy_mrr_simulated(h: &HierarchyParams) -> Result<f64> {
    let h = HierarchyParams::new(h.branching, h.depth)?;
    let n = h.branching;
    // breadth-first numbering: children of v are n*v + 1 ..= n*v + n
    let total = (0..=h.depth).map(|l| n.pow(l as u32)).sum::<usize>();
    let mut depth = vec![0usize; total];
    let mut parent = vec![None; total];
    let mut triples = Vec::with_capacity(total - 1);
    for v in 1..total {
        let p = (v - 1) / n;
        parent[v] = Some(p);
        depth[v] = depth[p] + 1;
        triples.push(Triple::new(p as u32, 0, v as u32));
    }
    let store = TripleStore::new(triples, total, 1, Split::Test)?;
    let filter = FilterIndex::build(&[&store], false)?;

    let neighbours = |x: usize| {
        let children = (n * x + 1..=n * x + n).filter(|&c| c < total);
        parent[x].into_iter().chain(children)
    };
    let mut scores = vec![0.0; total];
    let mut rr = 0.0;
    let mut queries = 0usize;
    for t in store.triples() {
        let (p, c) = (t.subject as usize, t.object as usize);
        // (p, r, ?) -> c and (?, r, c) -> p
        for (anchor, target, filtered) in [
            (p, c, filter.objects(t.subject, 0)),
            (c, p, filter.subjects(0, t.object)),
        ] {
            scores.fill(0.0);
            for y in neighbours(anchor) {
                scores[y] = depth[anchor].max(depth[y]) as f64;
            }
            let rank = rank_from_scores(&scores, target, filtered);
            rr += 1.0 / rank as f64;
            queries += 1;
        }
    }
    Ok(rr / queries as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_examples() {
        let h = HierarchyParams::new(3, 2).unwrap();
        assert_eq!(h.internal_nodes(), 3.0);
        assert!((hierarchy_mrr_closed_form(&h) - 0.90625).abs() < 1e-15);
        assert_eq!(hierarchy_mrr_closed_form(&HierarchyParams::new(7, 1).unwrap()), 1.0);
        let deficit = 1.0 - hierarchy_mrr_closed_form(&HierarchyParams::new(10, 4).unwrap());
        assert!((deficit - 0.05).abs() <= 0.2 * 0.05, "{deficit}");
    }

    #[test]
    fn simulation_matches_closed_form() {
        for n in 3..=5 {
            for d in 1..=3 {
                let h = HierarchyParams::new(n, d).unwrap();
                let sim = hierarchy_mrr_simulated(&h).unwrap();
                assert!((sim - hierarchy_mrr_closed_form(&h)).abs() < 1e-12, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn rejects_small_branching() {
        assert!(HierarchyParams::new(2, 3).is_err());
        assert!(HierarchyParams::new(3, 0).is_err());
        assert!(hierarchy_mrr_simulated(&HierarchyParams { branching: 2, depth: 2 }).is_err());
    }
}
