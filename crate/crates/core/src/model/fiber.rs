//! Whole-fiber scoring.
//!
//! A batch of anchors is scored against every candidate entity with the
//! candidate factor stored transposed (rank-major), so the innermost loop
//! runs over contiguous candidates while each output entry still sums its
//! rank terms in order `r = 0..R`. Output rows are tiled over candidates
//! so a tile of the transposed factor is reused across a block of rows.

use super::{complex_term, Matrix, ModelParams, Variant};
use crate::error::Result;
use crate::par::Exec;

const ROW_BLOCK: usize = 8;
const COL_TILE: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Side {
    /// `(i, j, ?)`: candidates fill the object mode.
    Rhs,
    /// `(?, j, k)`: candidates fill the subject mode.
    Lhs,
}

/// Transposed entity planes scored against in the given direction.
pub(crate) fn candidate_planes(model: &ModelParams, side: Side) -> Vec<Matrix> {
    let b = model.blocks();
    match (model.variant(), side) {
        (Variant::Cp, Side::Rhs) => vec![b[2].transpose()],
        (Variant::Cp, Side::Lhs) => vec![b[0].transpose()],
        (Variant::DistMult, _) => vec![b[0].transpose()],
        (Variant::ComplEx, _) => vec![b[0].transpose(), b[1].transpose()],
    }
}

/// Adds the rank terms of one anchor against candidates `k0..k0 + out.len()`.
fn accumulate_tile(
    model: &ModelParams,
    planes: &[Matrix],
    side: Side,
    anchor: (usize, usize),
    k0: usize,
    out: &mut [f64],
) {
    let b = model.blocks();
    let rank = model.rank();
    let k1 = k0 + out.len();
    let (x, y) = anchor;
    match (model.variant(), side) {
        (Variant::Cp, Side::Rhs) => {
            let (u1, u2) = (b[0].row(x), b[1].row(y));
            for r in 0..rank {
                let q = u1[r] * u2[r];
                for (o, &c) in out.iter_mut().zip(&planes[0].row(r)[k0..k1]) {
                    *o += q * c;
                }
            }
        }
        (Variant::Cp, Side::Lhs) => {
            let (u2, u3) = (b[1].row(x), b[2].row(y));
            for r in 0..rank {
                let (p, c) = (u2[r], u3[r]);
                for (o, &a) in out.iter_mut().zip(&planes[0].row(r)[k0..k1]) {
                    *o += (a * p) * c;
                }
            }
        }
        (Variant::DistMult, Side::Rhs) => {
            let (e, w) = (b[0].row(x), b[1].row(y));
            for r in 0..rank {
                let (a, p) = (e[r], w[r]);
                for (o, &c) in out.iter_mut().zip(&planes[0].row(r)[k0..k1]) {
                    *o += (a * c) * p;
                }
            }
        }
        (Variant::DistMult, Side::Lhs) => {
            let (w, e) = (b[1].row(x), b[0].row(y));
            for r in 0..rank {
                let (p, c) = (w[r], e[r]);
                for (o, &a) in out.iter_mut().zip(&planes[0].row(r)[k0..k1]) {
                    *o += (a * c) * p;
                }
            }
        }
        (Variant::ComplEx, Side::Rhs) => {
            let (ar, ai) = (b[0].row(x), b[1].row(x));
            let (wr, wi) = (b[2].row(y), b[3].row(y));
            for r in 0..rank {
                let (a, bb, c, d) = (ar[r], ai[r], wr[r], wi[r]);
                let re = &planes[0].row(r)[k0..k1];
                let im = &planes[1].row(r)[k0..k1];
                for ((o, &xr), &xi) in out.iter_mut().zip(re).zip(im) {
                    *o += complex_term(a, bb, c, d, xr, xi);
                }
            }
        }
        (Variant::ComplEx, Side::Lhs) => {
            let (wr, wi) = (b[2].row(x), b[3].row(x));
            let (er, ei) = (b[0].row(y), b[1].row(y));
            for r in 0..rank {
                let (c, d, xr, xi) = (wr[r], wi[r], er[r], ei[r]);
                let re = &planes[0].row(r)[k0..k1];
                let im = &planes[1].row(r)[k0..k1];
                for ((o, &a), &bb) in out.iter_mut().zip(re).zip(im) {
                    *o += complex_term(a, bb, c, d, xr, xi);
                }
            }
        }
    }
}

/// Scores `anchors` against all entities into a `anchors.len() x N` matrix,
/// reusing precomputed `planes` from [`candidate_planes`].
pub(crate) fn score_batch_with_planes(
    model: &ModelParams,
    planes: &[Matrix],
    side: Side,
    anchors: &[(usize, usize)],
    exec: Exec,
) -> Matrix {
    let n = model.num_entities();
    let mut out = Matrix::zeros(anchors.len(), n);
    if n == 0 {
        return out;
    }
    exec.for_each_chunk_mut(out.data_mut(), ROW_BLOCK * n, |block, rows| {
        let first = block * ROW_BLOCK;
        let mut k0 = 0;
        while k0 < n {
            let k1 = (k0 + COL_TILE).min(n);
            for (offset, row) in rows.chunks_mut(n).enumerate() {
                accumulate_tile(model, planes, side, anchors[first + offset], k0, &mut row[k0..k1]);
            }
            k0 = k1;
        }
    });
    out
}

fn check_rhs(model: &ModelParams, pairs: &[(usize, usize)]) -> Result<()> {
    for &(i, j) in pairs {
        model.check_entity("subject", i)?;
        model.check_predicate(j)?;
    }
    Ok(())
}

fn check_lhs(model: &ModelParams, pairs: &[(usize, usize)]) -> Result<()> {
    for &(j, k) in pairs {
        model.check_predicate(j)?;
        model.check_entity("object", k)?;
    }
    Ok(())
}

/// Scores of `(i, j, k)` for every object `k`.
pub fn score_rhs_fiber(model: &ModelParams, i: usize, j: usize) -> Result<Vec<f64>> {
    Ok(batch_score_rhs_with(model, &[(i, j)], Exec::Sequential)?.into_vec())
}

/// Scores of `(i, j, k)` for every subject `i`.
pub fn score_lhs_fiber(model: &ModelParams, j: usize, k: usize) -> Result<Vec<f64>> {
    Ok(batch_score_lhs_with(model, &[(j, k)], Exec::Sequential)?.into_vec())
}

/// Row `b` holds the object fiber of `pairs[b] = (i, j)`.
pub fn batch_score_rhs(model: &ModelParams, pairs: &[(usize, usize)]) -> Result<Matrix> {
    batch_score_rhs_with(model, pairs, Exec::default())
}

pub fn batch_score_rhs_with(model: &ModelParams, pairs: &[(usize, usize)], exec: Exec) -> Result<Matrix> {
    check_rhs(model, pairs)?;
    let planes = candidate_planes(model, Side::Rhs);
    Ok(score_batch_with_planes(model, &planes, Side::Rhs, pairs, exec))
}

/// Row `b` holds the subject fiber of `pairs[b] = (j, k)`.
pub fn batch_score_lhs(model: &ModelParams, pairs: &[(usize, usize)]) -> Result<Matrix> {
    batch_score_lhs_with(model, pairs, Exec::default())
}

pub fn batch_score_lhs_with(model: &ModelParams, pairs: &[(usize, usize)], exec: Exec) -> Result<Matrix> {
    check_lhs(model, pairs)?;
    let planes = candidate_planes(model, Side::Lhs);
    Ok(score_batch_with_planes(model, &planes, Side::Lhs, pairs, exec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const VARIANTS: [Variant; 3] = [Variant::Cp, Variant::ComplEx, Variant::DistMult];

    fn random(variant: Variant, n: usize, p: usize, r: usize, seed: u64) -> ModelParams {
        let c = ModelConfig {
            variant,
            rank: r,
            init_scale: 0.5,
            seed,
        };
        init_model(&c, n, p).unwrap()
    }

    #[test]
    fn fibers_match_triple_scores_exactly() {
        for v in VARIANTS {
            let m = random(v, 50, 3, 7, 11);
            for i in [0, 13, 49] {
                for j in 0..3 {
                    let rhs = score_rhs_fiber(&m, i, j).unwrap();
                    let lhs = score_lhs_fiber(&m, j, i).unwrap();
                    for e in 0..50 {
                        assert_eq!(rhs[e], m.score_triple(i, j, e).unwrap(), "{v} rhs");
                        assert_eq!(lhs[e], m.score_triple(e, j, i).unwrap(), "{v} lhs");
                    }
                }
            }
        }
    }

    #[test]
    fn tiles_and_blocks_do_not_change_values() {
        // N larger than one column tile, batch larger than one row block
        for v in VARIANTS {
            let m = random(v, COL_TILE + 37, 2, 5, 3);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let pairs: Vec<(usize, usize)> = (0..ROW_BLOCK * 2 + 3)
                .map(|_| (rng.random_range(0..m.num_entities()), rng.random_range(0..2)))
                .collect();
            let seq = batch_score_rhs_with(&m, &pairs, Exec::Sequential).unwrap();
            let par = batch_score_rhs_with(&m, &pairs, Exec::Parallel).unwrap();
            assert_eq!(seq, par);
            for (b, &(i, j)) in pairs.iter().enumerate() {
                for k in (0..m.num_entities()).step_by(97) {
                    assert_eq!(seq.get(b, k), m.score_triple(i, j, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn batch_rows_equal_single_fibers() {
        for v in VARIANTS {
            let m = random(v, 100, 4, 6, 21);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut pairs: Vec<(usize, usize)> = (0..32)
                .map(|_| (rng.random_range(0..100), rng.random_range(0..4)))
                .collect();
            pairs.push(pairs[3]);
            let batch = batch_score_rhs(&m, &pairs).unwrap();
            for (b, &(i, j)) in pairs.iter().enumerate() {
                assert_eq!(batch.row(b), score_rhs_fiber(&m, i, j).unwrap().as_slice());
            }
            assert_eq!(batch.row(3), batch.row(32));
            let one = batch_score_rhs(&m, &pairs[..1]).unwrap();
            assert_eq!(one.row(0), batch.row(0));
        }
    }

    #[test]
    fn zero_model_gives_zero_fibers() {
        for v in VARIANTS {
            let m = ModelParams::zeros(v, 10, 2, 3);
            assert!(score_rhs_fiber(&m, 1, 1).unwrap().iter().all(|&x| x == 0.0));
            assert!(score_lhs_fiber(&m, 1, 1).unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn cp_rank_one_fiber_is_scaled_object_column() {
        let mut m = random(Variant::Cp, 8, 2, 1, 4);
        m.blocks_mut()[0].row_mut(3)[0] = 2.0;
        m.blocks_mut()[1].row_mut(1)[0] = 3.0;
        let fiber = score_rhs_fiber(&m, 3, 1).unwrap();
        for (k, &f) in fiber.iter().enumerate() {
            assert_eq!(f, 6.0 * m.blocks()[2].get(k, 0));
        }
    }

    #[test]
    fn distmult_lhs_equals_rhs_of_swapped_anchor() {
        let m = random(Variant::DistMult, 40, 3, 8, 8);
        for j in 0..3 {
            for k in [0, 7, 39] {
                assert_eq!(score_lhs_fiber(&m, j, k).unwrap(), score_rhs_fiber(&m, k, j).unwrap());
            }
        }
    }

    #[test]
    fn out_of_range_anchor() {
        let m = random(Variant::Cp, 5, 2, 3, 1);
        assert!(score_rhs_fiber(&m, 5, 0).is_err());
        assert!(score_lhs_fiber(&m, 2, 0).is_err());
        assert!(batch_score_rhs(&m, &[(0, 0), (0, 9)]).is_err());
    }
}
