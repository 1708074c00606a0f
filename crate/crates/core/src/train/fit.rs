use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adagrad::AdagradState;
use super::grad::Gradients;
use super::loss::loss_with;
use super::penalty::penalty_for_batch;
use super::{RegularizerConfig, RegularizerVariant};
use crate::data::{compute_marginals, FilterIndex, ModeMarginals, Triple, TripleStore};
use crate::error::{KbcError, Result};
use crate::eval::{evaluate_with, EvalOptions};
use crate::model::{init_model, Formulation, ModelConfig, ModelParams};
use crate::par::Exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub formulation: Formulation,
    pub regularizer: RegularizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "one")]
    pub eval_every: usize,
    /// Seed for the per-epoch shuffle and validation subsampling.
    #[serde(default)]
    pub seed: u64,
    /// Rank at most this many validation triples per evaluation.
    #[serde(default)]
    pub valid_cap: Option<usize>,
    #[serde(skip)]
    pub exec: Exec,
}

fn one() -> usize {
    1
}

impl TrainConfig {
    pub fn new(model: ModelConfig, formulation: Formulation, regularizer: RegularizerConfig) -> Self {
        TrainConfig {
            model,
            formulation,
            regularizer,
            batch_size: 100,
            epochs: 10,
            learning_rate: 0.1,
            eval_every: 1,
            seed: 0,
            valid_cap: None,
            exec: Exec::default(),
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Err(KbcError::Config(m)) = self.model.validate() {
            problems.push(m);
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be > 0".to_string());
        }
        if self.epochs == 0 {
            problems.push("epochs must be > 0".to_string());
        }
        if self.eval_every == 0 {
            problems.push("eval_every must be > 0".to_string());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be finite and > 0, got {}", self.learning_rate));
        }
        let lambda = self.regularizer.lambda;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            problems.push(format!("regularizer lambda must be finite and >= 0, got {lambda}"));
        }
        if self.valid_cap == Some(0) {
            problems.push("valid_cap must be > 0 when set".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(KbcError::Config(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed data loss plus penalty over the epoch's batches.
    pub objective: f64,
    pub penalty: f64,
    pub valid_mrr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_valid_mrr: Option<f64>,
}

/// Initializes a model from `config.model` and trains it. See [`fit_from`].
pub fn fit(
    config: &TrainConfig,
    train: &TripleStore,
    valid: Option<&TripleStore>,
    filter: Option<&FilterIndex>,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    let init = init_model(&config.model, train.num_entities(), train.num_predicates())?;
    fit_from(config, init, train, valid, filter)
}

/// Trains `init` with Adagrad on shuffled mini-batches of `train`.
///
/// Reciprocal training needs an augmented store whose predicate mode matches
/// the model. With a validation split, filtered MRR is measured every
/// `eval_every` epochs and after the last one, and the best snapshot is
/// returned; otherwise the final parameters are.
pub fn fit_from(
    config: &TrainConfig,
    init: ModelParams,
    train: &TripleStore,
    valid: Option<&TripleStore>,
    filter: Option<&FilterIndex>,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    check_inputs(config, &init, train, valid, filter)?;

    let marginals: Option<ModeMarginals> = match config.regularizer.variant {
        RegularizerVariant::N2Weighted => Some(compute_marginals(train)?),
        _ => None,
    };
    let mut model = init;
    let mut opt = AdagradState::new(&model, config.learning_rate)?;
    let mut order = canonical_order(train);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = TrainHistory::default();
    let mut best: Option<ModelParams> = None;
    let start = Instant::now();
    let mut batch = Vec::with_capacity(config.batch_size);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut objective = 0.0;
        let mut penalty_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train.triples()[i]));
            let (value, penalty, grads) = batch_objective_with(&model, config, &batch, marginals.as_ref())?;
            if !value.is_finite() {
                return Err(KbcError::Diverged { epoch, batch: b });
            }
            opt.step(&mut model, &grads)?;
            objective += value;
            penalty_sum += penalty;
        }
        if !model.is_finite() {
            return Err(KbcError::Diverged { epoch, batch: order.len().div_ceil(config.batch_size) });
        }

        let mut valid_mrr = None;
        if let (Some(valid), Some(filter)) = (valid, filter) {
            if epoch % config.eval_every == 0 || epoch == config.epochs {
                let options = EvalOptions {
                    max_triples: config.valid_cap,
                    seed: config.seed,
                    exec: config.exec,
                    ..EvalOptions::default()
                };
                let mrr = evaluate_with(&model, valid, filter, config.formulation, &options, None)?.mrr;
                if history.best_valid_mrr.is_none_or(|b| mrr > b) {
                    history.best_valid_mrr = Some(mrr);
                    history.best_epoch = Some(epoch);
                    best = Some(model.clone());
                }
                valid_mrr = Some(mrr);
            }
        }
        info!(
            "epoch {epoch}/{}: objective {objective:.6}, penalty {penalty_sum:.6}{} ({:.1}s)",
            config.epochs,
            valid_mrr.map_or(String::new(), |m| format!(", valid MRR {m:.4}")),
            start.elapsed().as_secs_f64()
        );
        history.epochs.push(EpochRecord {
            epoch,
            objective,
            penalty: penalty_sum,
            valid_mrr,
        });
    }
    debug!("training finished after {:.1}s", start.elapsed().as_secs_f64());
    Ok((best.unwrap_or(model), history))
}

/// Objective of one batch: formulation loss plus penalty, with gradients.
/// Returns `(objective, penalty, gradients)`.
pub fn batch_objective(
    model: &ModelParams,
    config: &TrainConfig,
    batch: &[Triple],
    marginals: Option<&ModeMarginals>,
) -> Result<(f64, f64, Gradients)> {
    batch_objective_with(model, config, batch, marginals)
}

fn batch_objective_with(
    model: &ModelParams,
    config: &TrainConfig,
    batch: &[Triple],
    marginals: Option<&ModeMarginals>,
) -> Result<(f64, f64, Gradients)> {
    let mut grads = Gradients::zeros_like(model);
    let loss = loss_with(model, config.formulation, batch, Some(&mut grads), config.exec)?;
    let (penalty, pg) = penalty_for_batch(model, &config.regularizer, batch, marginals)?;
    if config.regularizer.variant != RegularizerVariant::None {
        grads.merge(&pg);
    }
    Ok((loss + penalty, penalty, grads))
}

fn check_inputs(
    config: &TrainConfig,
    init: &ModelParams,
    train: &TripleStore,
    valid: Option<&TripleStore>,
    filter: Option<&FilterIndex>,
) -> Result<()> {
    if train.is_empty() {
        return Err(KbcError::Empty("training split"));
    }
    match (config.formulation, train.is_augmented()) {
        (Formulation::Reciprocal, false) => return Err(KbcError::NotAugmented),
        (Formulation::Standard, true) => {
            return Err(KbcError::Config(
                "standard training expects an unaugmented store".into(),
            ))
        }
        _ => {}
    }
    if init.variant() != config.model.variant || init.rank() != config.model.rank {
        return Err(KbcError::Config(format!(
            "initial model is {} rank {}, config asks for {} rank {}",
            init.variant(),
            init.rank(),
            config.model.variant,
            config.model.rank
        )));
    }
    if init.num_entities() != train.num_entities() || init.num_predicates() != train.num_predicates() {
        return Err(KbcError::DimensionMismatch(format!(
            "model is {}x{}, training data has N={}, P={}",
            init.num_entities(),
            init.num_predicates(),
            train.num_entities(),
            train.num_predicates()
        )));
    }
    if valid.is_some() && filter.is_none() {
        return Err(KbcError::Config("validation needs a filter index".into()));
    }
    if let Some(v) = valid {
        if v.num_entities() != train.num_entities() || v.num_predicates() != train.base_predicates() {
            return Err(KbcError::DimensionMismatch(format!(
                "validation split has N={}, P={}; training has N={}, P={}",
                v.num_entities(),
                v.num_predicates(),
                train.num_entities(),
                train.base_predicates()
            )));
        }
    }
    Ok(())
}

/// Training examples sorted by `(subject, predicate mod P, object, predicate)`.
/// Relabelling every predicate `j` as its reciprocal leaves this order
/// unchanged whenever a triple and its own reciprocal image are not both
/// present under the same subject and object.
fn canonical_order(train: &TripleStore) -> Vec<usize> {
    let p = train.base_predicates() as u32;
    let key = |t: &Triple| (t.subject, t.predicate % p, t.object, t.predicate);
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.sort_by_key(|&i| key(&train.triples()[i]));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::model::Variant;
    use crate::train::n3_penalty_sampled;
    use crate::train::test_support::{assert_grad_matches_fd, random_batch};

    fn store(n: usize, p: usize, len: usize, seed: u64) -> TripleStore {
        let mut t = random_batch(n, p, len, seed);
        t.sort();
        t.dedup();
        TripleStore::new(t, n, p, Split::Train).unwrap()
    }

    fn config(variant: Variant, formulation: Formulation, reg: RegularizerConfig) -> TrainConfig {
        let mut m = ModelConfig::new(variant, 4);
        m.init_scale = 0.1;
        m.seed = 3;
        let mut c = TrainConfig::new(m, formulation, reg);
        c.batch_size = 16;
        c.epochs = 3;
        c
    }

    #[test]
    fn batch_objective_gradient_matches_finite_differences() {
        let train = store(8, 2, 30, 1);
        let q = compute_marginals(&train).unwrap();
        for reg in [
            RegularizerConfig::new(RegularizerVariant::FroSampled, 0.05),
            RegularizerConfig::new(RegularizerVariant::N3Sampled, 0.05),
            RegularizerConfig::new(RegularizerVariant::N2Weighted, 0.05),
        ] {
            for v in [Variant::Cp, Variant::ComplEx, Variant::DistMult] {
                let mut c = config(v, Formulation::Standard, reg);
                c.model.init_scale = 0.5;
                let m = init_model(&c.model, 8, 2).unwrap();
                let batch = &train.triples()[..6];
                let (_, _, g) = batch_objective(&m, &c, batch, Some(&q)).unwrap();
                assert_grad_matches_fd(&m, &g, |x| batch_objective(x, &c, batch, Some(&q)).unwrap().0);
            }
        }
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let train = store(20, 2, 80, 2).augment_reciprocal().unwrap();
        let mut c = config(Variant::ComplEx, Formulation::Reciprocal, RegularizerConfig::new(RegularizerVariant::N3Sampled, 1e-3));
        c.epochs = 15;
        c.learning_rate = 0.5;
        let (m1, h1) = fit(&c, &train, None, None).unwrap();
        let (m2, h2) = fit(&c, &train, None, None).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
        assert!(h1.epochs.last().unwrap().objective < h1.epochs[0].objective);
        c.exec = Exec::Sequential;
        let (m3, _) = fit(&c, &train, None, None).unwrap();
        assert_eq!(m1, m3);
    }

    #[test]
    fn tracks_best_validation_snapshot() {
        let train = store(20, 2, 80, 3);
        let valid = store(20, 2, 10, 4);
        let filter = FilterIndex::build(&[&train, &valid], false).unwrap();
        let mut c = config(Variant::Cp, Formulation::Standard, RegularizerConfig::none());
        c.epochs = 5;
        c.eval_every = 2;
        let (_, h) = fit(&c, &train, Some(&valid), Some(&filter)).unwrap();
        let evaluated: Vec<usize> = h.epochs.iter().filter(|r| r.valid_mrr.is_some()).map(|r| r.epoch).collect();
        assert_eq!(evaluated, vec![2, 4, 5]);
        let best = h.epochs.iter().filter_map(|r| r.valid_mrr).fold(f64::MIN, f64::max);
        assert_eq!(h.best_valid_mrr, Some(best));
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let train = store(10, 2, 30, 5);
        let c = config(Variant::Cp, Formulation::Reciprocal, RegularizerConfig::none());
        assert!(matches!(fit(&c, &train, None, None), Err(KbcError::NotAugmented)));
        let c = config(Variant::Cp, Formulation::Standard, RegularizerConfig::none());
        let aug = train.augment_reciprocal().unwrap();
        assert!(fit(&c, &aug, None, None).is_err());
        assert!(fit(&c, &train, Some(&train), None).is_err());

        let mut bad = c.clone();
        bad.batch_size = 0;
        bad.learning_rate = -1.0;
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("batch_size") && err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn divergence_is_reported() {
        let train = store(10, 2, 30, 6);
        let mut c = config(Variant::Cp, Formulation::Standard, RegularizerConfig::none());
        c.model.init_scale = 1e110;
        let err = fit(&c, &train, None, None).unwrap_err();
        assert!(matches!(err, KbcError::Diverged { epoch: 1, batch: 0 }), "{err}");
    }

    #[test]
    fn huge_penalty_collapses_parameters() {
        let train = store(20, 2, 100, 7);
        let valid = store(20, 2, 20, 8);
        let filter = FilterIndex::build(&[&train, &valid], false).unwrap();
        let rms = |m: &ModelParams| {
            let v: Vec<f64> = m.blocks().iter().flat_map(|b| b.data().iter().copied()).collect();
            (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
        };
        let mut c = config(Variant::Cp, Formulation::Standard, RegularizerConfig::new(RegularizerVariant::N3Sampled, 1e4));
        c.epochs = 50;
        c.learning_rate = 0.05;
        let init = init_model(&c.model, 20, 2).unwrap();
        let (m, _) = fit(&c, &train, None, None).unwrap();
        assert!(rms(&m) < 0.5 * rms(&init), "{} vs {}", rms(&m), rms(&init));
        let r = crate::eval::evaluate(&m, &valid, &filter, Formulation::Standard).unwrap();
        assert!(r.mrr < 0.5);
    }

    #[test]
    fn full_pass_penalty_matches_closed_form() {
        let train = store(15, 3, 60, 9);
        let m = init_model(&ModelConfig { init_scale: 0.7, ..ModelConfig::new(Variant::Cp, 5) }, 15, 3).unwrap();
        let lambda = 0.2;
        let (got, _) = n3_penalty_sampled(&m, train.triples(), lambda).unwrap();
        let b = m.blocks();
        let mut total = 0.0;
        for t in train.triples() {
            let mut term = 0.0;
            for r in 0..5 {
                term += b[0].get(t.subject as usize, r).abs().powi(3)
                    + b[1].get(t.predicate as usize, r).abs().powi(3)
                    + b[2].get(t.object as usize, r).abs().powi(3);
            }
            total += term;
        }
        assert_eq!(got, lambda / 3.0 * total);
    }

    #[test]
    fn flipped_data_with_swapped_predicates_trains_identically() {
        let (n, p) = (12, 2);
        // drop triples whose reverse is also present so the canonical order maps exactly
        let base: Vec<Triple> = store(n, p, 40, 10).triples().to_vec();
        let kept: Vec<Triple> = base
            .iter()
            .copied()
            .filter(|t| !base.contains(&Triple::new(t.object, t.predicate, t.subject)))
            .collect();
        let flipped: Vec<Triple> = kept.iter().map(|t| Triple::new(t.object, t.predicate, t.subject)).collect();
        let a = TripleStore::new(kept, n, p, Split::Train).unwrap().augment_reciprocal().unwrap();
        let b = TripleStore::new(flipped, n, p, Split::Train).unwrap().augment_reciprocal().unwrap();
        let c = config(Variant::ComplEx, Formulation::Reciprocal, RegularizerConfig::new(RegularizerVariant::N3Sampled, 0.01));
        let init = init_model(&c.model, n, 2 * p).unwrap();
        let mut swapped = init.clone();
        for j in 0..p {
            swapped.swap_predicate_rows(j, j + p);
        }
        let (ma, _) = fit_from(&c, init, &a, None, None).unwrap();
        let (mut mb, _) = fit_from(&c, swapped, &b, None, None).unwrap();
        for j in 0..p {
            mb.swap_predicate_rows(j, j + p);
        }
        assert_eq!(ma, mb);
    }
}
