use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grad::Gradients;
use crate::data::Triple;
use crate::model::ModelParams;

pub(crate) fn random_batch(n: usize, p: usize, len: usize, seed: u64) -> Vec<Triple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            Triple::new(
                rng.random_range(0..n as u32),
                rng.random_range(0..p as u32),
                rng.random_range(0..n as u32),
            )
        })
        .collect()
}

/// Central differences over every parameter, compared with relative error
/// `|a - f| / max(|a|, |f|, 1e-4)`.
pub(crate) fn assert_grad_matches_fd(
    model: &ModelParams,
    grads: &Gradients,
    f: impl Fn(&ModelParams) -> f64,
) {
    let h = 1e-5;
    let mut probe = model.clone();
    for (b, g) in grads.blocks().iter().enumerate() {
        for idx in 0..g.data().len() {
            let x0 = probe.blocks()[b].data()[idx];
            probe.blocks_mut()[b].data_mut()[idx] = x0 + h;
            let up = f(&probe);
            probe.blocks_mut()[b].data_mut()[idx] = x0 - h;
            let down = f(&probe);
            probe.blocks_mut()[b].data_mut()[idx] = x0;
            let fd = (up - down) / (2.0 * h);
            let a = g.data()[idx];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-4);
            assert!(rel < 1e-4, "block {b} entry {idx}: analytic {a}, numeric {fd}");
        }
    }
}
