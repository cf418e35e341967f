//! Blockage-aware hierarchical beam training for a movable-antenna base station serving users
//! through a reconfigurable intelligent surface.
//!
//! The crate covers array geometry and angular sets, obstacle detection, channel synthesis,
//! statistical RIS phase design, Gerchberg-Saxton codebook synthesis, beam training, energy
//! accounting and seeded experiment sweeps.

// Validation uses `!(x > 0.0)` style checks on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod blockage;
pub mod channel;
pub mod codebook;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod stage1;
pub mod training;

pub use error::{Error, Result};
