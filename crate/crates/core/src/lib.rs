//! Knowledge base completion by low-rank tensor factorization.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`data`]: triple stores, vocabularies, reciprocal augmentation, filter
//!   indices, sampling marginals and relation-type statistics.
//! - [`model`]: CP, ComplEx and DistMult parameters, triple and fiber scoring,
//!   checkpoints.
//! - [`train`]: full-softmax fiber losses, sampled and weighted regularizers,
//!   Adagrad and the epoch loop with validation early stopping.
//! - [`eval`]: filtered ranking, MRR / Hits@k and the relation-type breakdown.
//! - [`verify`]: numerical oracles for the norm-theoretic results (balancing,
//!   nuclear p-norm estimates, the non-convexity certificate) and the DistMult
//!   hierarchy analysis.
//!
//! Data-parallel loops go through [`par::Exec`]; with the default `parallel`
//! feature they run on rayon, otherwise sequentially. Every parallel loop
//! writes disjoint outputs or reduces in a fixed order, so results do not
//! depend on the schedule.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod train;
pub mod verify;

pub use error::{KbcError, Result};
