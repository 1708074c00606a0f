use super::grad::Gradients;
use crate::error::{KbcError, Result};
use crate::model::ModelParams;

pub const ADAGRAD_EPSILON: f64 = 1e-10;

/// Per-parameter accumulated squared gradients, laid out like the model blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct AdagradState {
    learning_rate: f64,
    epsilon: f64,
    accum: Vec<Vec<f64>>,
}

impl AdagradState {
    pub fn new(model: &ModelParams, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(KbcError::Config(format!("learning rate {learning_rate} must be finite and > 0")));
        }
        Ok(AdagradState {
            learning_rate,
            epsilon: ADAGRAD_EPSILON,
            accum: model.blocks().iter().map(|b| vec![0.0; b.data().len()]).collect(),
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn accumulator(&self, block: usize) -> &[f64] {
        &self.accum[block]
    }

    /// `acc += g^2; x -= lr * g / (sqrt(acc) + eps)` on every touched row.
    /// Rows without a gradient contribution keep both parameters and state.
    pub fn step(&mut self, model: &mut ModelParams, grads: &Gradients) -> Result<()> {
        if grads.blocks().len() != model.blocks().len()
            || grads
                .blocks()
                .iter()
                .zip(model.blocks())
                .any(|(g, b)| g.data().len() != b.data().len())
        {
            return Err(KbcError::DimensionMismatch("gradient and model shapes differ".into()));
        }
        let (lr, eps) = (self.learning_rate, self.epsilon);
        for (b, g) in grads.blocks().iter().enumerate() {
            let cols = g.cols();
            let params = model.blocks_mut()[b].data_mut();
            let acc = &mut self.accum[b];
            for row in g.touched_rows() {
                let span = row * cols..(row + 1) * cols;
                for ((x, a), &gv) in params[span.clone()]
                    .iter_mut()
                    .zip(&mut acc[span.clone()])
                    .zip(g.row(row))
                {
                    *a += gv * gv;
                    *x -= lr * gv / (a.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}
