//! Energy efficiency with mechanical antenna motion, and the amortised complexity calculator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power and timing constants of the energy model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyModel {
    pub motion_power_w: f64,
    pub dynamic_power_per_antenna_w: f64,
    pub static_power_w: f64,
    pub amp_efficiency: f64,
    pub move_time_s: f64,
    pub slot_s: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            motion_power_w: 5.0,
            dynamic_power_per_antenna_w: 0.3,
            static_power_w: 0.1,
            amp_efficiency: 0.2,
            move_time_s: 0.5e-3,
            slot_s: 0.2,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.amp_efficiency > 0.0 && self.amp_efficiency <= 1.0) {
            return Err(Error::invalid("amplifier efficiency must lie in (0, 1]"));
        }
        if !(self.move_time_s >= 0.0 && self.move_time_s < self.slot_s) {
            return Err(Error::invalid("move time must lie in [0, slot)"));
        }
        let powers = [self.motion_power_w, self.dynamic_power_per_antenna_w, self.static_power_w];
        if powers.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("powers must be non-negative"));
        }
        Ok(())
    }
}

/// Circuit power `M P_c + P_s` of the data phase.
pub fn data_power(model: &EnergyModel, elements: usize) -> f64 {
    elements as f64 * model.dynamic_power_per_antenna_w + model.static_power_w
}

/// Bits per joule over one slot: `(T - t_mv) C / (t_mv P_M + (T - t_mv) P_D / eta)` with
/// `t_mv = moves * tau`.
pub fn energy_efficiency(model: &EnergyModel, capacity_bps: f64, moves: usize, data_power_w: f64) -> Result<f64> {
    model.validate()?;
    if !(capacity_bps >= 0.0) {
        return Err(Error::invalid("capacity must be non-negative"));
    }
    let moving_s = moves as f64 * model.move_time_s;
    if moving_s >= model.slot_s {
        return Err(Error::NoDataTime { moving_s, slot_s: model.slot_s });
    }
    let data_s = model.slot_s - moving_s;
    let energy = moving_s * model.motion_power_w + data_s * data_power_w / model.amp_efficiency;
    if energy <= 0.0 {
        return Err(Error::invalid("slot energy must be positive"));
    }
    Ok(data_s * capacity_bps / energy)
}

/// Sizes and refresh periods entering the per-slot cost model. A refresh period of `None` never
/// refreshes, so its design term vanishes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexityModel {
    pub i_ris: u64,
    pub i_max: u64,
    pub refresh_cb_slots: Option<u64>,
    pub refresh_ris_slots: Option<u64>,
    pub refresh_blk_slots: Option<u64>,
    pub obstacles: u64,
    pub pilot_length: u64,
    pub users: u64,
    pub array: u64,
    pub ris: u64,
    pub evaluations: u64,
}

impl ComplexityModel {
    pub fn validate(&self) -> Result<()> {
        let sizes = [self.i_ris, self.i_max, self.obstacles, self.pilot_length, self.users, self.array, self.ris];
        if sizes.contains(&0) || [self.refresh_cb_slots, self.refresh_ris_slots, self.refresh_blk_slots].contains(&Some(0)) {
            return Err(Error::invalid("complexity model entries must be positive"));
        }
        Ok(())
    }
}

/// Instrumented operation counts reported next to the analytic terms.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasuredOps {
    pub gs_multiplies: Option<u64>,
    pub blockage_predicates: Option<u64>,
}

/// Per-slot operation counts, in scaled operations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    /// `B K L_p`.
    pub runtime_ops: f64,
    /// `(I_max M^3 + M^4) / R_cb`.
    pub gs_ops: f64,
    /// `(M N O + M O log2 O) / R_blk`.
    pub blockage_ops: f64,
    /// `I_RIS N^3 / R_RIS`.
    pub ris_ops: f64,
    /// `M^2` per evaluated beam.
    pub beam_ops: f64,
    pub total_ops: f64,
    /// Run-time term of the proposed search with `B = 2 log2 M`.
    pub proposed_runtime_ops: f64,
    /// Full-hierarchy synthesis envelope `I_max M^3 + M^4` before amortisation.
    pub gs_envelope_ops: f64,
    pub measured: MeasuredOps,
}

fn amortised(ops: f64, refresh: Option<u64>) -> f64 {
    refresh.map_or(0.0, |r| ops / r as f64)
}

pub fn complexity_report(cm: &ComplexityModel, measured: MeasuredOps) -> Result<ComplexityReport> {
    cm.validate()?;
    let f = |x: u64| x as f64;
    let (m, n, o) = (f(cm.array), f(cm.ris), f(cm.obstacles));
    let runtime_ops = f(cm.evaluations) * f(cm.users) * f(cm.pilot_length);
    let gs_envelope_ops = f(cm.i_max) * m.powi(3) + m.powi(4);
    let gs_ops = amortised(gs_envelope_ops, cm.refresh_cb_slots);
    let blockage_ops = amortised(m * n * o + m * o * o.log2(), cm.refresh_blk_slots);
    let ris_ops = amortised(f(cm.i_ris) * n.powi(3), cm.refresh_ris_slots);
    let beam_ops = m * m;
    let proposed_runtime_ops = 2.0 * m.log2() * f(cm.users) * f(cm.pilot_length);
    Ok(ComplexityReport {
        runtime_ops,
        gs_ops,
        blockage_ops,
        ris_ops,
        beam_ops,
        total_ops: runtime_ops + gs_ops + blockage_ops + ris_ops + beam_ops,
        proposed_runtime_ops,
        gs_envelope_ops,
        measured,
    })
}

impl ComplexityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("run-time sensing (B K L_p)", self.runtime_ops),
            ("codebook synthesis / R_cb", self.gs_ops),
            ("blockage geometry / R_blk", self.blockage_ops),
            ("RIS phases / R_RIS", self.ris_ops),
            ("beam application (M^2)", self.beam_ops),
            ("total per slot", self.total_ops),
            ("proposed run-time (2 log2 M K L_p)", self.proposed_runtime_ops),
            ("synthesis envelope (I_max M^3 + M^4)", self.gs_envelope_ops),
        ];
        writeln!(f, "{:<40} {:>16}", "term", "ops")?;
        for (name, v) in rows {
            writeln!(f, "{name:<40} {v:>16.1}")?;
        }
        if let Some(g) = self.measured.gs_multiplies {
            writeln!(f, "{:<40} {:>16}", "measured synthesis multiplies", g)?;
        }
        if let Some(b) = self.measured.blockage_predicates {
            writeln!(f, "{:<40} {:>16}", "measured blockage predicates", b)?;
        }
        Ok(())
    }
}
