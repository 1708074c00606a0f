//! Objectives, regularizers, Adagrad and the training loop.

mod adagrad;
mod fit;
mod grad;
mod loss;
mod penalty;
#[cfg(test)]
mod test_support;

use serde::{Deserialize, Serialize};

pub use adagrad::{AdagradState, ADAGRAD_EPSILON};
pub use fit::{batch_objective, fit, fit_from, EpochRecord, TrainConfig, TrainHistory};
pub use grad::{BlockGrad, Gradients};
pub use loss::{
    fiber_loss_value, formulation_loss, lhs_fiber_loss_and_grad, reciprocal_loss,
    rhs_fiber_loss_and_grad, standard_loss,
};
pub use penalty::{
    fro_penalty_sampled, n2_weighted_penalty, n3_penalty_sampled, penalty_for_batch,
};

pub use crate::model::Formulation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RegularizerVariant {
    #[serde(rename = "none", alias = "NONE")]
    None,
    /// Squared 2-norm of the rows touched by each example.
    #[serde(rename = "fro", alias = "FRO_SAMPLED", alias = "FRO")]
    FroSampled,
    /// Cubed moduli of the entries touched by each example.
    #[serde(rename = "n3", alias = "N3_SAMPLED", alias = "N3")]
    N3Sampled,
    /// Dense weighted nuclear-2 surrogate over full factor columns.
    #[serde(rename = "n2", alias = "N2_WEIGHTED", alias = "N2")]
    N2Weighted,
}

impl RegularizerVariant {
    pub fn name(self) -> &'static str {
        match self {
            RegularizerVariant::None => "none",
            RegularizerVariant::FroSampled => "fro",
            RegularizerVariant::N3Sampled => "n3",
            RegularizerVariant::N2Weighted => "n2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    pub variant: RegularizerVariant,
    #[serde(default)]
    pub lambda: f64,
}

impl RegularizerConfig {
    pub fn new(variant: RegularizerVariant, lambda: f64) -> Self {
        RegularizerConfig { variant, lambda }
    }

    pub fn none() -> Self {
        RegularizerConfig::new(RegularizerVariant::None, 0.0)
    }
}
