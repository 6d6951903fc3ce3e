//! Ratio-free off-policy policy optimization on finite outcome sets.
//!
//! The crate evaluates the regularized weighted log-likelihood family of
//! objectives (and its squared log-ratio regression form) on tabular softmax
//! policies, solves for the Lambert-tempered target policy those objectives
//! induce, and classifies the target as pessimistic, exponential, or
//! unstable from the normalization of the exponential tilt.
//!
//! Everything here is pure computation and builds without `std`; file
//! formats, configuration parsing and the command line live in the
//! companion `lambertpo` crate.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod advantage;
pub mod dist;
mod error;
pub mod lambertw;
pub(crate) mod math;
pub mod objective;
pub mod tabular;
pub mod target;
pub mod trainer;
pub mod verify;

pub use advantage::{AdvantageMethod, AdvantageVec, Group};
pub use dist::Dist;
pub use error::{Error, Result};
pub use objective::{ObjectiveEval, ObjectiveKind, PolicyParams};
pub use tabular::{BanditInstance, Snapshot, StreamKey};
pub use target::{LambertTarget, Regime};
pub use trainer::{MetricsRecord, OptimizerKind, TrainConfig};
pub use verify::CheckReport;
