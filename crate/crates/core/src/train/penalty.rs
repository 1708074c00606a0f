//! Regularizers and their gradients.
//!
//! Sampled penalties charge the rows touched by each example once per
//! occurrence, so frequent entities are penalized more. ComplEx rows are
//! measured by complex modulus; for shared entity embeddings the subject and
//! object rows of a triple are charged separately.

use super::grad::Gradients;
use super::{RegularizerConfig, RegularizerVariant};
use crate::data::{ModeMarginals, Triple};
use crate::error::{KbcError, Result};
use crate::model::ModelParams;

fn check(model: &ModelParams, batch: &[Triple], lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(KbcError::Config(format!("regularization weight {lambda} must be finite and >= 0")));
    }
    for t in batch {
        model.check_entity("subject", t.subject as usize)?;
        model.check_predicate(t.predicate as usize)?;
        model.check_entity("object", t.object as usize)?;
    }
    Ok(())
}

fn rows_of(t: &Triple) -> [usize; 3] {
    [t.subject as usize, t.predicate as usize, t.object as usize]
}

/// `per_entry(re, im) -> (value, d/dre, d/dim)`; the example term is
/// `sum_r (v_0r + v_1r + v_2r)` and the result `value_scale * sum_b term_b`.
fn sampled(
    model: &ModelParams,
    batch: &[Triple],
    value_scale: f64,
    grad_scale: f64,
    per_entry: impl Fn(f64, f64) -> (f64, f64, f64),
) -> (f64, Gradients) {
    let mut grads = Gradients::zeros_like(model);
    let blocks = model.blocks();
    let modes = [model.mode_blocks(0), model.mode_blocks(1), model.mode_blocks(2)];
    let mut total = 0.0;
    for t in batch {
        let rows = rows_of(t);
        let mut term = 0.0;
        for r in 0..model.rank() {
            let mut across = 0.0;
            for d in 0..3 {
                let mb = modes[d];
                let re = blocks[mb.re].get(rows[d], r);
                let im = mb.im.map_or(0.0, |b| blocks[b].get(rows[d], r));
                let (v, gre, gim) = per_entry(re, im);
                across += v;
                grads.block_mut(mb.re).row_mut(rows[d])[r] += grad_scale * gre;
                if let Some(b) = mb.im {
                    grads.block_mut(b).row_mut(rows[d])[r] += grad_scale * gim;
                }
            }
            term += across;
        }
        total += term;
    }
    (value_scale * total, grads)
}

/// `lambda * sum_b sum_d ||row_d(b)||^2`.
pub fn fro_penalty_sampled(model: &ModelParams, batch: &[Triple], lambda: f64) -> Result<(f64, Gradients)> {
    check(model, batch, lambda)?;
    Ok(sampled(model, batch, lambda, lambda, |re, im| {
        (re * re + im * im, 2.0 * re, 2.0 * im)
    }))
}

/// `(lambda / 3) * sum_b sum_d sum_r |row_d(b)_r|^3`.
pub fn n3_penalty_sampled(model: &ModelParams, batch: &[Triple], lambda: f64) -> Result<(f64, Gradients)> {
    check(model, batch, lambda)?;
    Ok(sampled(model, batch, lambda / 3.0, lambda, |re, im| {
        let m = (re * re + im * im).sqrt();
        (m * m * m, m * re, m * im)
    }))
}

/// `(lambda / 3) * sum_d sum_r (sum_i q_i^(d) |u_ir|^2)^(3/2)` with `q^(d)` the
/// empirical marginal of mode `d`. Dense in every block.
pub fn n2_weighted_penalty(
    model: &ModelParams,
    marginals: &ModeMarginals,
    lambda: f64,
) -> Result<(f64, Gradients)> {
    check(model, &[], lambda)?;
    let n = model.num_entities();
    let p = model.num_predicates();
    for (d, want) in [(0, n), (1, p), (2, n)] {
        let got = marginals.mode(d).len();
        if got != want {
            return Err(KbcError::DimensionMismatch(format!(
                "marginal of mode {d} has {got} entries, model has {want}"
            )));
        }
    }
    let blocks = model.blocks();
    let mut grads = Gradients::zeros_like(model);
    let mut total = 0.0;
    for d in 0..3 {
        let mb = model.mode_blocks(d);
        let q = marginals.mode(d);
        let re = &blocks[mb.re];
        let im = mb.im.map(|b| &blocks[b]);
        for r in 0..model.rank() {
            let mut s = 0.0;
            for (i, &qi) in q.iter().enumerate() {
                let x = re.get(i, r);
                let y = im.map_or(0.0, |m| m.get(i, r));
                s += qi * (x * x + y * y);
            }
            total += s * s.sqrt();
            let root = lambda * s.sqrt();
            let g = grads.block_mut(mb.re).dense_mut();
            for (i, &qi) in q.iter().enumerate() {
                g[i * model.rank() + r] += root * qi * re.get(i, r);
            }
            if let (Some(b), Some(im)) = (mb.im, im) {
                let g = grads.block_mut(b).dense_mut();
                for (i, &qi) in q.iter().enumerate() {
                    g[i * model.rank() + r] += root * qi * im.get(i, r);
                }
            }
        }
    }
    // untouched blocks still count as dense so every row is stepped
    for b in 0..blocks.len() {
        grads.block_mut(b).dense_mut();
    }
    Ok((lambda / 3.0 * total, grads))
}

/// Penalty of one training batch. The weighted N2 term is global, so it is
/// scaled by the batch length to weigh like a sum of per-example terms.
pub fn penalty_for_batch(
    model: &ModelParams,
    config: &RegularizerConfig,
    batch: &[Triple],
    marginals: Option<&ModeMarginals>,
) -> Result<(f64, Gradients)> {
    match config.variant {
        RegularizerVariant::None => Ok((0.0, Gradients::zeros_like(model))),
        RegularizerVariant::FroSampled => fro_penalty_sampled(model, batch, config.lambda),
        RegularizerVariant::N3Sampled => n3_penalty_sampled(model, batch, config.lambda),
        RegularizerVariant::N2Weighted => {
            let q = marginals.ok_or_else(|| {
                KbcError::Config("the weighted N2 penalty needs mode marginals".into())
            })?;
            n2_weighted_penalty(model, q, config.lambda * batch.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{compute_marginals, Split, TripleStore};
    use crate::model::{init_model, ModelConfig, Variant};
    use crate::train::test_support::{assert_grad_matches_fd, random_batch};

    const VARIANTS: [Variant; 3] = [Variant::Cp, Variant::ComplEx, Variant::DistMult];

    fn random(variant: Variant, n: usize, p: usize, r: usize, seed: u64) -> ModelParams {
        let mut c = ModelConfig::new(variant, r);
        c.init_scale = 0.4;
        c.seed = seed;
        init_model(&c, n, p).unwrap()
    }

    fn marginals(n: usize, p: usize, batch: &[Triple]) -> ModeMarginals {
        let mut triples = batch.to_vec();
        triples.sort();
        triples.dedup();
        compute_marginals(&TripleStore::new(triples, n, p, Split::Train).unwrap()).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        for v in VARIANTS {
            let m = random(v, 6, 3, 4, 7);
            let batch = random_batch(6, 3, 8, 2);
            let (_, g) = fro_penalty_sampled(&m, &batch, 0.3).unwrap();
            assert_grad_matches_fd(&m, &g, |x| fro_penalty_sampled(x, &batch, 0.3).unwrap().0);
            let (_, g) = n3_penalty_sampled(&m, &batch, 0.3).unwrap();
            assert_grad_matches_fd(&m, &g, |x| n3_penalty_sampled(x, &batch, 0.3).unwrap().0);
            let q = marginals(6, 3, &batch);
            let (_, g) = n2_weighted_penalty(&m, &q, 0.3).unwrap();
            assert_grad_matches_fd(&m, &g, |x| n2_weighted_penalty(x, &q, 0.3).unwrap().0);
        }
    }

    #[test]
    fn cp_hand_values() {
        let mut m = ModelParams::zeros(Variant::Cp, 2, 1, 1);
        m.blocks_mut()[0].row_mut(0)[0] = -2.0;
        m.blocks_mut()[1].row_mut(0)[0] = 1.0;
        m.blocks_mut()[2].row_mut(1)[0] = 3.0;
        let batch = [Triple::new(0, 0, 1)];
        let (fro, _) = fro_penalty_sampled(&m, &batch, 1.0).unwrap();
        assert_eq!(fro, 4.0 + 1.0 + 9.0);
        let (n3, g) = n3_penalty_sampled(&m, &batch, 1.0).unwrap();
        assert_eq!(n3, (8.0 + 1.0 + 27.0) / 3.0);
        assert_eq!(g.block(0).row(0), &[-4.0]);
        assert_eq!(g.block(2).row(1), &[9.0]);
        assert_eq!(g.block(0).touched_rows(), vec![0]);
    }

    #[test]
    fn complex_uses_modulus() {
        let mut m = ModelParams::zeros(Variant::ComplEx, 1, 1, 1);
        m.blocks_mut()[0].row_mut(0)[0] = 3.0;
        m.blocks_mut()[1].row_mut(0)[0] = 4.0;
        let batch = [Triple::new(0, 0, 0)];
        // subject and object rows are the same entity, charged twice
        let (n3, _) = n3_penalty_sampled(&m, &batch, 3.0).unwrap();
        assert_eq!(n3, 2.0 * 125.0);
        let (fro, _) = fro_penalty_sampled(&m, &batch, 1.0).unwrap();
        assert_eq!(fro, 50.0);
    }

    #[test]
    fn sampled_penalties_are_additive_over_batches() {
        let m = random(Variant::Cp, 10, 2, 3, 1);
        let batch = random_batch(10, 2, 20, 5);
        let (whole, _) = n3_penalty_sampled(&m, &batch, 0.1).unwrap();
        let (a, _) = n3_penalty_sampled(&m, &batch[..7], 0.1).unwrap();
        let (b, _) = n3_penalty_sampled(&m, &batch[7..], 0.1).unwrap();
        assert!((whole - (a + b)).abs() <= 1e-12 * whole);
    }

    #[test]
    fn n2_is_dense_and_checks_marginals() {
        let m = random(Variant::DistMult, 5, 2, 2, 1);
        let batch = random_batch(5, 2, 6, 1);
        let q = marginals(5, 2, &batch);
        let (_, g) = n2_weighted_penalty(&m, &q, 1.0).unwrap();
        assert!(g.blocks().iter().all(|b| b.is_dense()));
        let wrong = marginals(6, 2, &[Triple::new(0, 0, 5)]);
        assert!(n2_weighted_penalty(&m, &wrong, 1.0).is_err());
        assert!(n3_penalty_sampled(&m, &batch, -1.0).is_err());
    }
}
