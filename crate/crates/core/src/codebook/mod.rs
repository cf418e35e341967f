//! Blockage-aware hierarchical codebooks synthesised with a Gerchberg-Saxton loop.
//!
//! Every codeword fits a flat-top gain over its sector, hard nulls over the blocked set and a
//! capped sidelobe floor elsewhere, subject to a constant-modulus (or fixed-power) array
//! constraint. The loop alternates a masked angular target, a Tikhonov least-squares
//! back-projection, the blocked-direction null-space projector and the amplitude projection.

mod gs;
mod hierarchy;
mod ls;
mod projector;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gs::{apply_amplitude, gs_iterate, masked_target, GsOutcome, GsTrace, SectorSpec, SynthesisContext};
pub use hierarchy::{
    build_hierarchy, rotate_weights, BuildReport, Codeword, HierarchicalCodebook, NodeId, NodeTrace,
};
pub use ls::{gs_basis, solve_hard_ls, solve_reduced, solve_soft_ls, LsProblem};
pub use projector::NullSpaceProjector;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// Every element has magnitude `sqrt(P / M)`.
    #[default]
    ConstantModulus,
    /// Only the total power `‖w‖^2 = P` is fixed.
    PowerNormalized,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    /// Zero target on blocked samples plus the null-space projector in every iteration.
    #[default]
    Hard,
    /// Blocked samples capped at the blocked leakage level, no projector.
    Soft,
    /// Blocked samples follow the current pattern and do not enter the fit.
    Exclude,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Uniform random element phases.
    #[default]
    RandomPhase,
    /// One-shot projector least-squares solution.
    ProjectorLs,
}

/// Synthesis parameters shared by every node of a hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GsConfig {
    pub max_iter: usize,
    /// Stop once the relative residual decrease falls below this.
    pub rel_tol: f64,
    pub early_stop: bool,
    /// Tikhonov weight; `None` uses `1e-6 tr(A A^H) / N_u`.
    pub tikhonov: Option<f64>,
    /// Sidelobe penalty of the one-shot least-squares solvers.
    pub sidelobe_weight: f64,
    /// Blocked-direction penalty of the soft-null least-squares solver.
    pub blocked_weight: f64,
    /// Sidelobe power cap relative to the in-sector level.
    pub sidelobe_cap_db: f64,
    /// Blocked-direction power cap relative to the in-sector level.
    pub blocked_cap_db: f64,
    /// Codeword power `‖w‖^2`.
    pub power: f64,
    pub amplitude: AmplitudeMode,
    pub null_mode: NullMode,
    pub init: InitMode,
    /// Grid samples per unit of spatial frequency; `None` uses `4 M`.
    pub samples_per_u: Option<f64>,
    /// Relative column-norm threshold of the rank-revealing orthonormalisation.
    pub rank_tol: f64,
    /// Coverage threshold relative to the in-sector level.
    pub coverage_db: f64,
    /// Start child nodes from their parent's weights rotated onto the child sector.
    pub warm_start: bool,
    /// Record half-step residuals and pre-amplitude null leakage.
    pub detailed_trace: bool,
    pub seed: u64,
}

impl Default for GsConfig {
    fn default() -> Self {
        Self {
            max_iter: 40,
            rel_tol: 1e-4,
            early_stop: true,
            tikhonov: None,
            sidelobe_weight: 1.0,
            blocked_weight: 1e3,
            sidelobe_cap_db: -20.0,
            blocked_cap_db: -40.0,
            power: 1.0,
            amplitude: AmplitudeMode::ConstantModulus,
            null_mode: NullMode::Hard,
            init: InitMode::RandomPhase,
            samples_per_u: None,
            rank_tol: 1e-10,
            coverage_db: -3.0,
            warm_start: true,
            detailed_trace: false,
            seed: 0,
        }
    }
}

impl GsConfig {
    pub fn grid_density(&self, elements: usize) -> f64 {
        self.samples_per_u.unwrap_or(4.0 * elements as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(m.to_string()));
        if !(self.power > 0.0) {
            return bad("codeword power must be positive");
        }
        if !(self.rel_tol >= 0.0) {
            return bad("relative tolerance must be non-negative");
        }
        if self.tikhonov.is_some_and(|mu| !(mu >= 0.0)) {
            return bad("Tikhonov weight must be non-negative");
        }
        if !(self.sidelobe_weight >= 0.0 && self.blocked_weight >= 0.0) {
            return bad("penalty weights must be non-negative");
        }
        if self.samples_per_u.is_some_and(|d| !(d > 0.0)) {
            return bad("grid density must be positive");
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return bad("rank tolerance must lie in (0, 1)");
        }
        Ok(())
    }
}
