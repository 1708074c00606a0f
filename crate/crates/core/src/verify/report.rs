use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::certificate::{nonconvexity_certificate, CertificateReport};
use super::decomposition::{balance, balanced_value, omega, SmallDecomposition};
use super::hierarchy::{hierarchy_mrr_closed_form, hierarchy_mrr_simulated, HierarchyParams};
use super::nuclear::nuclear_pnorm_estimate;
use crate::error::Result;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub seed: u64,
    pub restarts: usize,
    /// Random decompositions per balancing check.
    pub balance_trials: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 0,
            restarts: 50,
            balance_trials: 20,
        }
    }
}

/// One oracle: the observed quantity, what it is compared against, and the
/// allowed deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl OracleCheck {
    fn within(name: &str, value: f64, expected: f64, tolerance: f64, detail: String) -> Self {
        OracleCheck {
            name: name.to_string(),
            passed: (value - expected).abs() <= tolerance,
            value,
            expected,
            tolerance,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub checks: Vec<OracleCheck>,
    pub certificate: CertificateReport,
    pub passed: bool,
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "[{}] {:<28} value {:<22.15} expected {:<22.15} tol {:.0e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.expected,
                c.tolerance,
                c.detail
            );
        }
        let cert = &self.certificate;
        let _ = writeln!(
            out,
            "[{}] nonconvexity certificate      endpoints {:?}, midpoint {:.8} (seed {}, expected {:.8}, trace bound {}), violation {}, {:.2}s",
            if cert.passed { "PASS" } else { "FAIL" },
            cert.endpoint_values,
            cert.midpoint_value,
            cert.midpoint_seed,
            cert.expected_midpoint,
            cert.trace_lower_bound,
            cert.violation,
            cert.runtime_seconds
        );
        let _ = writeln!(out, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        out
    }
}

fn random_decomposition(dims: [usize; 3], rank: usize, rng: &mut ChaCha8Rng) -> Result<SmallDecomposition> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let components = (0..rank)
        .map(|_| std::array::from_fn(|d| (0..dims[d]).map(|_| normal.sample(&mut *rng)).collect()))
        .collect();
    SmallDecomposition::new(dims, components)
}

/// Runs every oracle with the given seed.
pub fn run_oracles(opts: &VerifyOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();

    let u = SmallDecomposition::new([1, 1, 1], vec![[vec![2.0], vec![4.0], vec![0.5]]])?;
    checks.push(OracleCheck::within(
        "omega example",
        omega(&u, 2.0, 3.0)?,
        (8.0 + 64.0 + 0.125) / 3.0,
        1e-12,
        "norms (2, 4, 0.5), alpha 3".into(),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for p in [2.0, 3.0] {
        let (mut spread, mut recon, mut value) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..opts.balance_trials {
            let u = random_decomposition([4, 3, 5], 3, &mut rng)?;
            let b = balance(&u, p)?;
            for r in 0..u.rank() {
                let [a1, a2, a3] = u.mode_norms(r, p);
                let g = (a1 * a2 * a3).cbrt();
                for a in b.mode_norms(r, p) {
                    spread = spread.max((a - g).abs());
                }
            }
            recon = recon.max(u.reconstruct().max_abs_diff(&b.reconstruct()));
            value = value.max((omega(&b, p, 3.0)? - balanced_value(&u, p, 3.0)?).abs());
        }
        let detail = format!("{} random 4x3x5 decompositions", opts.balance_trials);
        checks.push(OracleCheck::within(&format!("balance norms p={p}"), spread, 0.0, 1e-10, detail.clone()));
        checks.push(OracleCheck::within(&format!("balance tensor p={p}"), recon, 0.0, 1e-12, detail.clone()));
        checks.push(OracleCheck::within(&format!("balance omega p={p}"), value, 0.0, 1e-10, detail));
    }

    let rank_one = SmallDecomposition::new([3, 2, 2], vec![[vec![1.0, -2.0, 0.5], vec![0.3, 1.0], vec![2.0, 1.0]]])?;
    let (est, _) = nuclear_pnorm_estimate(&rank_one.reconstruct(), 2, 2.0, 5, opts.seed)?;
    checks.push(OracleCheck::within(
        "nuclear norm rank one",
        est,
        rank_one.mode_norms(0, 2.0).iter().product(),
        1e-6,
        "product of mode 2-norms".into(),
    ));

    let mut worst = 0.0f64;
    for n in 3..=5 {
        for d in 1..=3 {
            let h = HierarchyParams::new(n, d)?;
            worst = worst.max((hierarchy_mrr_simulated(&h)? - hierarchy_mrr_closed_form(&h)).abs());
        }
    }
    checks.push(OracleCheck::within(
        "hierarchy simulation",
        worst,
        0.0,
        1e-12,
        "max |simulated - closed form|, n in 3..=5, d in 1..=3".into(),
    ));
    let h = HierarchyParams::new(10, 4)?;
    checks.push(OracleCheck::within(
        "hierarchy deficit n=10 d=4",
        1.0 - hierarchy_mrr_closed_form(&h),
        0.05,
        0.2 * 0.05,
        "1 - mrr against 1/(2n)".into(),
    ));

    let certificate = nonconvexity_certificate(opts.restarts, opts.seed)?;
    let passed = checks.iter().all(|c| c.passed) && certificate.passed;
    Ok(VerifyReport {
        seed: opts.seed,
        checks,
        certificate,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_oracles_pass() {
        let r = run_oracles(&VerifyOptions::default()).unwrap();
        assert!(r.passed, "{}", r.to_text());
        let json = serde_json::to_string(&r).unwrap();
        let back: VerifyReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
