//! Full-softmax fiber losses and their gradients.
//!
//! For a batch of anchors the scores of every candidate entity are formed,
//! turned into `softmax - onehot(target)` in place, and pushed back through
//! the factorization with two contractions: `G^T P` into the candidate
//! block and `G C` towards the anchor rows.

use super::grad::Gradients;
use crate::data::Triple;
use crate::error::{KbcError, Result};
use crate::model::{
    candidate_planes, score_batch_with_planes, Formulation, Matrix, ModelParams, Side, Variant,
};
use crate::par::Exec;

/// Rows of the `G^T P` accumulation handled per parallel work item.
const GT_ROW_CHUNK: usize = 64;

/// Row-wise `log-sum-exp(s) - s[target]`, leaving `softmax(s) - onehot` in `scores`.
fn softmax_residual(scores: &mut Matrix, targets: &[usize], exec: Exec) -> Vec<f64> {
    let n = scores.cols();
    let lse = {
        let s = &*scores;
        exec.map(s.rows(), |b| {
            let row = s.row(b);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&x| (x - m).exp()).sum();
            m + sum.ln()
        })
    };
    let losses = targets
        .iter()
        .enumerate()
        .map(|(b, &t)| lse[b] - scores.get(b, t))
        .collect();
    exec.for_each_chunk_mut(scores.data_mut(), n, |b, row| {
        for x in row.iter_mut() {
            *x = (*x - lse[b]).exp();
        }
        row[targets[b]] -= 1.0;
    });
    losses
}

/// `G C` for `G` of shape `B x N` and `C` of shape `N x R`.
fn g_times(g: &Matrix, c: &Matrix, exec: Exec) -> Matrix {
    let rank = c.cols();
    let mut out = Matrix::zeros(g.rows(), rank);
    exec.for_each_chunk_mut(out.data_mut(), rank.max(1), |b, acc| {
        for (k, &w) in g.row(b).iter().enumerate() {
            for (a, &x) in acc.iter_mut().zip(c.row(k)) {
                *a += w * x;
            }
        }
    });
    out
}

/// `into += G^T P` for `G` of shape `B x N`, `P` of shape `B x R` and `into` of shape `N x R`.
fn add_gt_times(g: &Matrix, p: &Matrix, into: &mut [f64], exec: Exec) {
    let rank = p.cols();
    if rank == 0 {
        return;
    }
    exec.for_each_chunk_mut(into, GT_ROW_CHUNK * rank, |chunk, rows| {
        let k0 = chunk * GT_ROW_CHUNK;
        for b in 0..g.rows() {
            let pb = p.row(b);
            let gb = g.row(b);
            for (offset, acc) in rows.chunks_mut(rank).enumerate() {
                let w = gb[k0 + offset];
                for (a, &x) in acc.iter_mut().zip(pb) {
                    *a += w * x;
                }
            }
        }
    });
}

fn build(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for b in 0..rows {
        for (r, x) in m.row_mut(b).iter_mut().enumerate() {
            *x = f(b, r);
        }
    }
    m
}

fn add_row(grads: &mut Gradients, block: usize, row: usize, f: impl Fn(usize) -> f64) {
    for (r, g) in grads.block_mut(block).row_mut(row).iter_mut().enumerate() {
        *g += f(r);
    }
}

fn backprop(
    model: &ModelParams,
    side: Side,
    batch: &[Triple],
    g: &Matrix,
    exec: Exec,
    grads: &mut Gradients,
) {
    let bl = model.blocks();
    let rank = model.rank();
    let nb = batch.len();
    let idx = |e: usize| {
        let t = batch[e];
        (t.subject as usize, t.predicate as usize, t.object as usize)
    };
    match (model.variant(), side) {
        (Variant::Cp, Side::Rhs) => {
            let (u1, u2, u3) = (&bl[0], &bl[1], &bl[2]);
            let q = build(nb, rank, |e, r| {
                let (i, j, _) = idx(e);
                u1.get(i, r) * u2.get(j, r)
            });
            add_gt_times(g, &q, grads.block_mut(2).dense_mut(), exec);
            let h = g_times(g, u3, exec);
            for e in 0..nb {
                let (i, j, _) = idx(e);
                add_row(grads, 0, i, |r| h.get(e, r) * u2.get(j, r));
                add_row(grads, 1, j, |r| h.get(e, r) * u1.get(i, r));
            }
        }
        (Variant::Cp, Side::Lhs) => {
            let (u1, u2, u3) = (&bl[0], &bl[1], &bl[2]);
            let q = build(nb, rank, |e, r| {
                let (_, j, k) = idx(e);
                u2.get(j, r) * u3.get(k, r)
            });
            add_gt_times(g, &q, grads.block_mut(0).dense_mut(), exec);
            let h = g_times(g, u1, exec);
            for e in 0..nb {
                let (_, j, k) = idx(e);
                add_row(grads, 1, j, |r| h.get(e, r) * u3.get(k, r));
                add_row(grads, 2, k, |r| h.get(e, r) * u2.get(j, r));
            }
        }
        (Variant::DistMult, side) => {
            let (ent, w) = (&bl[0], &bl[1]);
            let anchor = |e: usize| {
                let (i, j, k) = idx(e);
                (if side == Side::Rhs { i } else { k }, j)
            };
            let q = build(nb, rank, |e, r| {
                let (a, j) = anchor(e);
                ent.get(a, r) * w.get(j, r)
            });
            add_gt_times(g, &q, grads.block_mut(0).dense_mut(), exec);
            let h = g_times(g, ent, exec);
            for e in 0..nb {
                let (a, j) = anchor(e);
                add_row(grads, 0, a, |r| h.get(e, r) * w.get(j, r));
                add_row(grads, 1, j, |r| h.get(e, r) * ent.get(a, r));
            }
        }
        (Variant::ComplEx, Side::Rhs) => {
            let (er, ei, wr, wi) = (&bl[0], &bl[1], &bl[2], &bl[3]);
            let p_re = build(nb, rank, |e, r| {
                let (i, j, _) = idx(e);
                er.get(i, r) * wr.get(j, r) - ei.get(i, r) * wi.get(j, r)
            });
            let p_im = build(nb, rank, |e, r| {
                let (i, j, _) = idx(e);
                er.get(i, r) * wi.get(j, r) + ei.get(i, r) * wr.get(j, r)
            });
            add_gt_times(g, &p_re, grads.block_mut(0).dense_mut(), exec);
            add_gt_times(g, &p_im, grads.block_mut(1).dense_mut(), exec);
            let h_re = g_times(g, er, exec);
            let h_im = g_times(g, ei, exec);
            for e in 0..nb {
                let (i, j, _) = idx(e);
                let (hr, hi) = (h_re.row(e), h_im.row(e));
                let (a, b) = (er.row(i), ei.row(i));
                let (c, d) = (wr.row(j), wi.row(j));
                add_row(grads, 0, i, |r| hr[r] * c[r] + hi[r] * d[r]);
                add_row(grads, 1, i, |r| -hr[r] * d[r] + hi[r] * c[r]);
                add_row(grads, 2, j, |r| hr[r] * a[r] + hi[r] * b[r]);
                add_row(grads, 3, j, |r| -hr[r] * b[r] + hi[r] * a[r]);
            }
        }
        (Variant::ComplEx, Side::Lhs) => {
            let (er, ei, wr, wi) = (&bl[0], &bl[1], &bl[2], &bl[3]);
            let q_re = build(nb, rank, |e, r| {
                let (_, j, k) = idx(e);
                wr.get(j, r) * er.get(k, r) + wi.get(j, r) * ei.get(k, r)
            });
            let q_im = build(nb, rank, |e, r| {
                let (_, j, k) = idx(e);
                wr.get(j, r) * ei.get(k, r) - wi.get(j, r) * er.get(k, r)
            });
            add_gt_times(g, &q_re, grads.block_mut(0).dense_mut(), exec);
            add_gt_times(g, &q_im, grads.block_mut(1).dense_mut(), exec);
            let h_re = g_times(g, er, exec);
            let h_im = g_times(g, ei, exec);
            for e in 0..nb {
                let (_, j, k) = idx(e);
                let (hr, hi) = (h_re.row(e), h_im.row(e));
                let (c, d) = (wr.row(j), wi.row(j));
                let (x, y) = (er.row(k), ei.row(k));
                add_row(grads, 2, j, |r| hr[r] * x[r] + hi[r] * y[r]);
                add_row(grads, 3, j, |r| hr[r] * y[r] - hi[r] * x[r]);
                add_row(grads, 0, k, |r| hr[r] * c[r] - hi[r] * d[r]);
                add_row(grads, 1, k, |r| hr[r] * d[r] + hi[r] * c[r]);
            }
        }
    }
}

fn check_batch(model: &ModelParams, batch: &[Triple]) -> Result<()> {
    for t in batch {
        model.check_entity("subject", t.subject as usize)?;
        model.check_predicate(t.predicate as usize)?;
        model.check_entity("object", t.object as usize)?;
    }
    Ok(())
}

/// Summed cross-entropy over one side's fibers; gradients when `grads` is given.
pub(crate) fn fiber_loss(
    model: &ModelParams,
    batch: &[Triple],
    side: Side,
    grads: Option<&mut Gradients>,
    exec: Exec,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let (anchors, targets): (Vec<(usize, usize)>, Vec<usize>) = batch
        .iter()
        .map(|t| {
            let (i, j, k) = (t.subject as usize, t.predicate as usize, t.object as usize);
            match side {
                Side::Rhs => ((i, j), k),
                Side::Lhs => ((j, k), i),
            }
        })
        .unzip();
    let planes = candidate_planes(model, side);
    let mut g = score_batch_with_planes(model, &planes, side, &anchors, exec);
    drop(planes);
    let losses = softmax_residual(&mut g, &targets, exec);
    if let Some(grads) = grads {
        backprop(model, side, batch, &g, exec, grads);
    }
    losses.iter().sum()
}

pub(crate) fn loss_with(
    model: &ModelParams,
    formulation: Formulation,
    batch: &[Triple],
    grads: Option<&mut Gradients>,
    exec: Exec,
) -> Result<f64> {
    check_batch(model, batch)?;
    match formulation {
        Formulation::Reciprocal => Ok(fiber_loss(model, batch, Side::Rhs, grads, exec)),
        Formulation::Standard => match grads {
            Some(grads) => {
                let rhs = fiber_loss(model, batch, Side::Rhs, Some(&mut *grads), exec);
                let lhs = fiber_loss(model, batch, Side::Lhs, Some(grads), exec);
                Ok(rhs + lhs)
            }
            None => {
                let rhs = fiber_loss(model, batch, Side::Rhs, None, exec);
                let lhs = fiber_loss(model, batch, Side::Lhs, None, exec);
                Ok(rhs + lhs)
            }
        },
    }
}

fn side_loss(model: &ModelParams, batch: &[Triple], side: Side) -> Result<(f64, Gradients)> {
    check_batch(model, batch)?;
    let mut grads = Gradients::zeros_like(model);
    let loss = fiber_loss(model, batch, side, Some(&mut grads), Exec::default());
    Ok((loss, grads))
}

/// Object-fiber cross-entropy `sum_b [logsumexp_k s(i,j,k) - s(i,j,k_b)]`.
pub fn rhs_fiber_loss_and_grad(model: &ModelParams, batch: &[Triple]) -> Result<(f64, Gradients)> {
    side_loss(model, batch, Side::Rhs)
}

/// Subject-fiber cross-entropy `sum_b [logsumexp_i s(i,j,k) - s(i_b,j,k)]`.
pub fn lhs_fiber_loss_and_grad(model: &ModelParams, batch: &[Triple]) -> Result<(f64, Gradients)> {
    side_loss(model, batch, Side::Lhs)
}

/// Sum of the object- and subject-fiber losses of every triple.
pub fn standard_loss(model: &ModelParams, batch: &[Triple]) -> Result<(f64, Gradients)> {
    formulation_loss(model, Formulation::Standard, batch)
}

/// Object-fiber loss over a reciprocal-augmented batch. The model must hold
/// `2 * base_predicates` predicate rows.
pub fn reciprocal_loss(
    model: &ModelParams,
    batch: &[Triple],
    base_predicates: usize,
) -> Result<(f64, Gradients)> {
    if model.num_predicates() != 2 * base_predicates {
        return Err(KbcError::DimensionMismatch(format!(
            "reciprocal model needs {} predicate rows, has {}",
            2 * base_predicates,
            model.num_predicates()
        )));
    }
    formulation_loss(model, Formulation::Reciprocal, batch)
}

pub fn formulation_loss(
    model: &ModelParams,
    formulation: Formulation,
    batch: &[Triple],
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(model);
    let loss = loss_with(model, formulation, batch, Some(&mut grads), Exec::default())?;
    Ok((loss, grads))
}

/// Loss value only.
pub fn fiber_loss_value(model: &ModelParams, formulation: Formulation, batch: &[Triple]) -> Result<f64> {
    loss_with(model, formulation, batch, None, Exec::default())
}
