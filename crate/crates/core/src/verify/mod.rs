//! Numerical oracles for the norm-theoretic side of CP regularization and
//! for the DistMult hierarchy analysis.
//!
//! Everything here works on tiny dense tensors in double precision and is
//! fast enough to run in the default test suite.

mod certificate;
mod decomposition;
mod hierarchy;
mod nuclear;
mod report;

pub use certificate::{nonconvexity_certificate, CertificateReport, MIDPOINT_LOWER_LIMIT, MIDPOINT_UPPER_LIMIT};
pub use decomposition::{
    balance, balanced_value, omega, pnorm, spectrum_qnorm, NormalizedDecomposition, SmallDecomposition,
    Tensor3,
};
pub use hierarchy::{hierarchy_mrr_closed_form, hierarchy_mrr_simulated, HierarchyParams};
pub use nuclear::{estimate_min_spectrum, nuclear_pnorm_estimate, EstimatorOptions, SpectrumEstimate};
pub use report::{run_oracles, OracleCheck, VerifyOptions, VerifyReport};
