//! Factorization models and their scoring functions.
//!
//! Every score is accumulated sequentially over the rank index, starting
//! from zero, with the same per-term expression in [`ModelParams::score_triple`]
//! and in the fiber kernels, so fibers reproduce triple scores bit for bit:
//!
//! - CP: `(u1[i,r] * u2[j,r]) * u3[k,r]`
//! - DistMult: `(e[i,r] * e[k,r]) * w[j,r]`, symmetric in `i` and `k`
//! - ComplEx: `Re(e_i w_j conj(e_k))` written as `zr * c - zi * d` with
//!   `z = e_i conj(e_k)`, so that zero imaginary parts give the DistMult term
//!   exactly.

mod checkpoint;
mod fiber;
mod matrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{KbcError, Result};

pub use checkpoint::{read_checkpoint, sidecar_path, write_checkpoint, CHECKPOINT_MAGIC};
pub use fiber::{
    batch_score_lhs, batch_score_lhs_with, batch_score_rhs, batch_score_rhs_with,
    score_lhs_fiber, score_rhs_fiber,
};
pub use matrix::Matrix;

pub(crate) use fiber::{candidate_planes, score_batch_with_planes, Side};

pub const DEFAULT_INIT_SCALE: f64 = 1e-3;

/// How the predicate mode is laid out and which fibers are modelled.
///
/// `Standard` fits both the object and subject fibers of the original
/// tensor. `Reciprocal` doubles the predicate mode with `j + P` holding the
/// transposed slice of `j` and fits object fibers only; left-hand queries
/// `(?, j, k)` are answered as `(k, j + P, ?)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Standard,
    Reciprocal,
}

impl Formulation {
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Standard => "standard",
            Formulation::Reciprocal => "reciprocal",
        }
    }

    /// Predicate rows a model needs for `base_predicates` relations.
    pub fn model_predicates(self, base_predicates: usize) -> usize {
        match self {
            Formulation::Standard => base_predicates,
            Formulation::Reciprocal => 2 * base_predicates,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "cp", alias = "CP")]
    Cp,
    #[serde(rename = "complex", alias = "ComplEx")]
    ComplEx,
    #[serde(rename = "distmult", alias = "DistMult")]
    DistMult,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Cp => 0,
            Variant::ComplEx => 1,
            Variant::DistMult => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::Cp),
            1 => Some(Variant::ComplEx),
            2 => Some(Variant::DistMult),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cp => "cp",
            Variant::ComplEx => "complex",
            Variant::DistMult => "distmult",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub rank: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_init_scale() -> f64 {
    DEFAULT_INIT_SCALE
}

impl ModelConfig {
    pub fn new(variant: Variant, rank: usize) -> Self {
        ModelConfig {
            variant,
            rank,
            init_scale: DEFAULT_INIT_SCALE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(KbcError::Config("rank must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(KbcError::Config(format!(
                "init_scale must be positive and finite, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// Factor matrices of one model.
///
/// Block layout by variant (all row-major, `R` columns):
///
/// | variant  | blocks |
/// |----------|--------|
/// | CP       | `U1` (N), `U2` (P), `U3` (N) |
/// | DistMult | `E` (N), `W` (P) |
/// | ComplEx  | `Re E` (N), `Im E` (N), `Re W` (P), `Im W` (P) |
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    variant: Variant,
    rank: usize,
    num_entities: usize,
    num_predicates: usize,
    blocks: Vec<Matrix>,
}

/// Where a parameter block sits in the `(subject, predicate, object)` modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ModeBlocks {
    /// Real (or only) block.
    pub re: usize,
    /// Imaginary block for ComplEx.
    pub im: Option<usize>,
}

impl ModelParams {
    pub fn zeros(variant: Variant, num_entities: usize, num_predicates: usize, rank: usize) -> Self {
        let (n, p, r) = (num_entities, num_predicates, rank);
        let blocks = match variant {
            Variant::Cp => vec![Matrix::zeros(n, r), Matrix::zeros(p, r), Matrix::zeros(n, r)],
            Variant::DistMult => vec![Matrix::zeros(n, r), Matrix::zeros(p, r)],
            Variant::ComplEx => vec![
                Matrix::zeros(n, r),
                Matrix::zeros(n, r),
                Matrix::zeros(p, r),
                Matrix::zeros(p, r),
            ],
        };
        ModelParams {
            variant,
            rank,
            num_entities,
            num_predicates,
            blocks,
        }
    }

    /// Assembles a model from explicit blocks laid out as documented on the type.
    pub fn from_blocks(variant: Variant, blocks: Vec<Matrix>) -> Result<Self> {
        let expected = match variant {
            Variant::Cp => 3,
            Variant::DistMult => 2,
            Variant::ComplEx => 4,
        };
        if blocks.len() != expected {
            return Err(KbcError::DimensionMismatch(format!(
                "{variant} needs {expected} blocks, got {}",
                blocks.len()
            )));
        }
        let rank = blocks[0].cols();
        let n = blocks[0].rows();
        let p = match variant {
            Variant::Cp | Variant::DistMult => blocks[1].rows(),
            Variant::ComplEx => blocks[2].rows(),
        };
        let model = ModelParams {
            variant,
            rank,
            num_entities: n,
            num_predicates: p,
            blocks,
        };
        let template = ModelParams::zeros(variant, n, p, rank);
        for (b, t) in model.blocks.iter().zip(&template.blocks) {
            if (b.rows(), b.cols()) != (t.rows(), t.cols()) {
                return Err(KbcError::DimensionMismatch(format!(
                    "block of shape {}x{}, expected {}x{}",
                    b.rows(),
                    b.cols(),
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(model)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    pub fn num_predicates(&self) -> usize {
        self.num_predicates
    }

    pub fn blocks(&self) -> &[Matrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Matrix] {
        &mut self.blocks
    }

    pub fn num_parameters(&self) -> usize {
        self.blocks.iter().map(|b| b.data().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.data().iter().all(|x| x.is_finite()))
    }

    /// Parameter blocks of mode `d` (0 subject, 1 predicate, 2 object).
    pub(crate) fn mode_blocks(&self, d: usize) -> ModeBlocks {
        match (self.variant, d) {
            (Variant::Cp, d) => ModeBlocks { re: d, im: None },
            (Variant::DistMult, 1) => ModeBlocks { re: 1, im: None },
            (Variant::DistMult, _) => ModeBlocks { re: 0, im: None },
            (Variant::ComplEx, 1) => ModeBlocks { re: 2, im: Some(3) },
            (Variant::ComplEx, _) => ModeBlocks { re: 0, im: Some(1) },
        }
    }

    /// Exchanges the parameter rows of predicates `a` and `b`.
    pub fn swap_predicate_rows(&mut self, a: usize, b: usize) {
        let mb = self.mode_blocks(1);
        self.blocks[mb.re].swap_rows(a, b);
        if let Some(im) = mb.im {
            self.blocks[im].swap_rows(a, b);
        }
    }

    pub fn score_triple(&self, i: usize, j: usize, k: usize) -> Result<f64> {
        self.check_entity("subject", i)?;
        self.check_predicate(j)?;
        self.check_entity("object", k)?;
        Ok(self.score_unchecked(i, j, k))
    }

    pub(crate) fn score_unchecked(&self, i: usize, j: usize, k: usize) -> f64 {
        let b = &self.blocks;
        let mut acc = 0.0;
        match self.variant {
            Variant::Cp => {
                let (u1, u2, u3) = (b[0].row(i), b[1].row(j), b[2].row(k));
                for r in 0..self.rank {
                    acc += (u1[r] * u2[r]) * u3[r];
                }
            }
            Variant::DistMult => {
                let (ei, w, ek) = (b[0].row(i), b[1].row(j), b[0].row(k));
                for r in 0..self.rank {
                    acc += (ei[r] * ek[r]) * w[r];
                }
            }
            Variant::ComplEx => {
                let (ar, ai) = (b[0].row(i), b[1].row(i));
                let (cr, ci) = (b[2].row(j), b[3].row(j));
                let (xr, xi) = (b[0].row(k), b[1].row(k));
                for r in 0..self.rank {
                    acc += complex_term(ar[r], ai[r], cr[r], ci[r], xr[r], xi[r]);
                }
            }
        }
        acc
    }

    pub(crate) fn check_entity(&self, what: &'static str, index: usize) -> Result<()> {
        if index >= self.num_entities {
            return Err(KbcError::IndexOutOfRange {
                what,
                index,
                limit: self.num_entities,
            });
        }
        Ok(())
    }

    pub(crate) fn check_predicate(&self, index: usize) -> Result<()> {
        if index >= self.num_predicates {
            return Err(KbcError::IndexOutOfRange {
                what: "predicate",
                index,
                limit: self.num_predicates,
            });
        }
        Ok(())
    }
}

/// `Re((a + ib)(c + id)(x - iy))` for one rank component.
#[inline(always)]
pub(crate) fn complex_term(a: f64, b: f64, c: f64, d: f64, x: f64, y: f64) -> f64 {
    let zr = a * x + b * y;
    let zi = b * x - a * y;
    zr * c - zi * d
}

/// Draws every parameter i.i.d. from `N(0, init_scale^2)`, block by block.
pub fn init_model(config: &ModelConfig, num_entities: usize, num_predicates: usize) -> Result<ModelParams> {
    config.validate()?;
    let mut model = ModelParams::zeros(config.variant, num_entities, num_predicates, config.rank);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_scale)
        .map_err(|e| KbcError::Config(format!("init distribution: {e}")))?;
    for block in model.blocks_mut() {
        for x in block.data_mut() {
            *x = normal.sample(&mut rng);
        }
    }
    Ok(model)
}
