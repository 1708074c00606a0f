use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::decomposition::{spectrum_qnorm, NormalizedDecomposition, SmallDecomposition, Tensor3};
use super::nuclear::{estimate_min_spectrum, EstimatorOptions};
use crate::error::{KbcError, Result};

/// The midpoint value must clear this for the convexity violation to count.
pub const MIDPOINT_LOWER_LIMIT: f64 = 1.2;
/// Slightly above `sqrt(2)`, the value of the diagonal witness.
pub const MIDPOINT_UPPER_LIMIT: f64 = 1.4143;
const SEARCH_RANK: usize = 4;
const EXPECTED_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    /// `||sigma||_(2/3)` of the explicit rank-one witnesses of `diag(1,0)` and `diag(0,1)`.
    pub endpoint_values: [f64; 2],
    /// The same tensors through the numeric search, as a cross-check.
    pub endpoint_estimates: [f64; 2],
    /// Best `||sigma||_(2/3)` found for `I/2`.
    pub midpoint_value: f64,
    pub midpoint_seed: u64,
    pub midpoint_fitted_restarts: usize,
    /// `sqrt(2)`, attained by the diagonal decomposition.
    pub expected_midpoint: f64,
    /// `||sigma||_(2/3) >= ||sigma||_1 >= trace = 1` for any exact decomposition.
    pub trace_lower_bound: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Midpoint value above the average of the endpoint values.
    pub violation: bool,
    pub passed: bool,
    pub runtime_seconds: f64,
}

fn slab(a: f64, b: f64) -> Tensor3 {
    Tensor3::from_vec([2, 2, 1], vec![a, 0.0, 0.0, b]).expect("2x2x1 shape")
}

fn unit_witness(e: usize) -> Result<NormalizedDecomposition> {
    let mut v = vec![0.0, 0.0];
    v[e] = 1.0;
    let u = SmallDecomposition::new([2, 2, 1], vec![[v.clone(), v, vec![1.0]]])?;
    NormalizedDecomposition::from_decomposition(&u, 2.0)
}

/// Checks that `X -> min ||sigma||_(2/3)` is not convex on `2 x 2 x 1` tensors:
/// both `diag(1,0)` and `diag(0,1)` have value 1 while their midpoint `I/2`
/// needs `sqrt(2)`.
pub fn nonconvexity_certificate(restarts: usize, seed: u64) -> Result<CertificateReport> {
    let start = Instant::now();
    let q = 2.0 / 3.0;
    let mut endpoint_values = [0.0; 2];
    for (e, v) in endpoint_values.iter_mut().enumerate() {
        *v = spectrum_qnorm(&unit_witness(e)?.sigma, q)?;
    }
    let opts = EstimatorOptions {
        restarts,
        seed,
        ..EstimatorOptions::new(SEARCH_RANK, 2.0, 2.0)
    };
    let mut endpoint_estimates = [0.0; 2];
    for (e, v) in endpoint_estimates.iter_mut().enumerate() {
        let t = if e == 0 { slab(1.0, 0.0) } else { slab(0.0, 1.0) };
        *v = estimate_min_spectrum(&t, &opts)?.value;
    }
    let mid = match estimate_min_spectrum(&slab(0.5, 0.5), &opts) {
        Ok(m) => m,
        Err(KbcError::RankTooSmall { .. }) => return Err(KbcError::SearchExhausted { restarts }),
        Err(e) => return Err(e),
    };
    let expected = 2f64.sqrt();
    let average = 0.5 * (endpoint_values[0] + endpoint_values[1]);
    let violation = mid.value > average;
    let passed = endpoint_values == [1.0, 1.0]
        && endpoint_estimates.iter().all(|v| (v - 1.0).abs() < 1e-6)
        && violation
        && (MIDPOINT_LOWER_LIMIT..=MIDPOINT_UPPER_LIMIT).contains(&mid.value)
        && (mid.value - expected).abs() <= EXPECTED_TOLERANCE;
    Ok(CertificateReport {
        endpoint_values,
        endpoint_estimates,
        midpoint_value: mid.value,
        midpoint_seed: mid.seed,
        midpoint_fitted_restarts: mid.fitted,
        expected_midpoint: expected,
        trace_lower_bound: 1.0,
        restarts,
        seed,
        violation,
        passed,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
