//! Scenario configuration and the seeded Monte-Carlo harness behind every experiment.

mod convergence;
mod figures;
mod sweep;

use serde::{Deserialize, Serialize};

use crate::angular::{ArrayLayout, SpatialConvention};
use crate::blockage::{BlockageScene, PlacementSpec};
use crate::channel::{self, PathLossModel};
use crate::codebook::GsConfig;
use crate::energy::{ComplexityModel, EnergyModel};
use crate::error::{Error, Result};

pub use convergence::{
    convergence_experiment, iterations_to_threshold, ConvergenceReport, LayerIterations, ResidualRow, ITERATION_THRESHOLD,
};
pub use figures::{emit_figure_data, FigureId};
pub use sweep::{
    read_rows, run_scenario, summarize, sweep, trial_blockage, trial_stage1, write_rows, write_summary, Axis, Method,
    SummaryRow, SweepSpec, TrialBlockage, TrialRow, TrialStage1, TRIAL_HEADER,
};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Array sizes, path counts and the radio link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub bs_elements: usize,
    pub ris_elements: usize,
    pub users: usize,
    pub bs_paths: usize,
    pub ue_paths: usize,
    pub carrier_ghz: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bs_elements: 64,
            ris_elements: 256,
            users: 2,
            bs_paths: 9,
            ue_paths: 5,
            carrier_ghz: 60.0,
            bandwidth_hz: 1e9,
            noise_dbm: -90.0,
        }
    }
}

impl SystemConfig {
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_ghz * 1e9)
    }
}

/// Placement of the base-station array, the RIS and the users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub bs_origin_m: [f64; 3],
    /// RIS reference element, on the field-of-view side of the array.
    pub ris_origin_m: [f64; 3],
    /// RIS-to-user distance of each user.
    pub ue_distances_m: Vec<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { bs_origin_m: [0.0; 3], ris_origin_m: [0.0, 20.0, 0.0], ue_distances_m: vec![3.0, 4.0] }
    }
}

impl GeometryConfig {
    pub fn bs_ris_distance_m(&self) -> f64 {
        let d: Vec<f64> = (0..3).map(|i| self.ris_origin_m[i] - self.bs_origin_m[i]).collect();
        d.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Either a target blocked fraction with a random placement law, or an explicit scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlockageConfig {
    /// Blocked fraction of the field of view in spatial frequency.
    pub density: f64,
    pub tolerance: f64,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub max_chunk: f64,
    /// Fixed obstacles; overrides `density` when present.
    pub scene: Option<BlockageScene>,
}

impl Default for BlockageConfig {
    fn default() -> Self {
        let p = PlacementSpec::default();
        Self {
            density: p.density,
            tolerance: p.tolerance,
            min_distance_m: p.min_distance_m,
            max_distance_m: p.max_distance_m,
            max_chunk: p.max_chunk,
            scene: None,
        }
    }
}

impl BlockageConfig {
    pub fn placement(&self, density: f64) -> PlacementSpec {
        PlacementSpec {
            density,
            tolerance: self.tolerance,
            min_distance_m: self.min_distance_m,
            max_distance_m: self.max_distance_m,
            max_chunk: self.max_chunk,
        }
    }
}

/// Pilot budget and motion charge of the training phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub pilot_length: usize,
    /// Antenna moves charged per slot to reach the trained layout.
    pub positioning_moves: usize,
    /// Fraction of the exhaustive optimum defining the overhead target.
    pub target_fraction: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { pilot_length: 16, positioning_moves: 1, target_fraction: 0.8 }
    }
}

/// Snapshot window and optimiser settings of the RIS phase design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub snapshots: usize,
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self { snapshots: 16, restarts: 8, max_iter: 100 }
    }
}

/// Slots between design-time refreshes; `None` never refreshes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefreshConfig {
    pub codebook_slots: Option<u64>,
    pub ris_slots: Option<u64>,
    pub blockage_slots: Option<u64>,
}

impl Default for RefreshConfig {
    /// One minute of 200 ms slots for every design stage.
    fn default() -> Self {
        Self { codebook_slots: Some(300), ris_slots: Some(300), blockage_slots: Some(300) }
    }
}

/// Operating point of the link. Exactly one of the two keys is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    /// Transmit power times the reference aligned gain over noise.
    pub snr_db: Option<f64>,
    pub tx_power_dbm: Option<f64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self { snr_db: Some(30.0), tx_power_dbm: None }
    }
}

/// Complete description of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub system: SystemConfig,
    pub geometry: GeometryConfig,
    pub blockage: BlockageConfig,
    /// `None` uses free-space LOS with NLOS 20 dB below.
    pub pathloss: Option<PathLossModel>,
    pub gs: GsConfig,
    pub energy: EnergyModel,
    pub training: TrainingConfig,
    pub stage1: Stage1Config,
    pub link: LinkConfig,
    pub refresh: RefreshConfig,
    pub trials: usize,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            geometry: GeometryConfig::default(),
            blockage: BlockageConfig::default(),
            pathloss: None,
            gs: GsConfig::default(),
            energy: EnergyModel::default(),
            training: TrainingConfig::default(),
            stage1: Stage1Config::default(),
            link: LinkConfig::default(),
            refresh: RefreshConfig::default(),
            trials: 100,
            seed: 0,
        }
    }
}

fn field_error(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {e}"))
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let sys = &self.system;
        if sys.bs_elements < 2 || !sys.bs_elements.is_power_of_two() {
            return Err(field_error("system.bs_elements", "must be a power of two >= 2"));
        }
        if sys.ris_elements == 0 {
            return Err(field_error("system.ris_elements", "must be positive"));
        }
        if sys.bs_paths == 0 || sys.ue_paths == 0 {
            return Err(field_error("system.bs_paths", "path counts must be positive"));
        }
        if !(sys.carrier_ghz > 0.0) || !(sys.bandwidth_hz > 0.0) {
            return Err(field_error("system.carrier_ghz", "carrier and bandwidth must be positive"));
        }
        if sys.users == 0 || self.geometry.ue_distances_m.len() != sys.users {
            return Err(field_error("geometry.ue_distances_m", format!("needs one distance per user ({})", sys.users)));
        }
        if self.geometry.ue_distances_m.iter().any(|d| !(*d > 0.0)) || !(self.geometry.bs_ris_distance_m() > 0.0) {
            return Err(field_error("geometry", "distances must be positive"));
        }
        if self.geometry.ris_origin_m[1] <= self.geometry.bs_origin_m[1] {
            return Err(field_error("geometry.ris_origin_m", "RIS must lie on the field-of-view side of the array"));
        }
        let b = &self.blockage;
        if !(0.0..=1.0).contains(&b.density) {
            return Err(field_error("blockage.density", "must lie in [0, 1]"));
        }
        if !(b.tolerance > 0.0 && b.max_chunk > 0.0) {
            return Err(field_error("blockage.tolerance", "tolerance and max_chunk must be positive"));
        }
        if let Some(scene) = &b.scene {
            if scene.obstacles.iter().any(|o| !(o.radius > 0.0)) {
                return Err(field_error("blockage.scene.obstacles", "radii must be positive"));
            }
        }
        self.gs.validate().map_err(|e| field_error("gs", e))?;
        self.energy.validate().map_err(|e| field_error("energy", e))?;
        if self.training.pilot_length == 0 {
            return Err(field_error("training.pilot_length", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.training.target_fraction) {
            return Err(field_error("training.target_fraction", "must lie in [0, 1]"));
        }
        if self.stage1.snapshots == 0 || self.stage1.restarts == 0 {
            return Err(field_error("stage1", "snapshots and restarts must be positive"));
        }
        match (self.link.snr_db, self.link.tx_power_dbm) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(field_error("link", "set exactly one of snr_db and tx_power_dbm")),
        }
        if [self.refresh.codebook_slots, self.refresh.ris_slots, self.refresh.blockage_slots].contains(&Some(0)) {
            return Err(field_error("refresh", "refresh periods must be positive"));
        }
        if self.trials == 0 {
            return Err(field_error("trials", "must be at least 1"));
        }
        Ok(())
    }

    pub fn pathloss_model(&self) -> PathLossModel {
        self.pathloss.unwrap_or_else(|| PathLossModel::for_wavelength(self.system.wavelength_m()))
    }

    pub fn bs_layout(&self) -> Result<ArrayLayout> {
        ArrayLayout::ula(self.system.bs_elements, self.system.wavelength_m(), self.geometry.bs_origin_m, SpatialConvention::Cos)
    }

    pub fn ris_layout(&self) -> Result<ArrayLayout> {
        ArrayLayout::ula(self.system.ris_elements, self.system.wavelength_m(), self.geometry.ris_origin_m, SpatialConvention::Cos)
    }

    pub fn noise_power_w(&self) -> f64 {
        channel::dbm_to_watts(self.system.noise_dbm)
    }

    /// Per-slot cost model of this scenario with `evaluations` beam probes per slot.
    pub fn complexity_model(&self, obstacles: usize, evaluations: usize) -> ComplexityModel {
        ComplexityModel {
            i_ris: self.stage1.max_iter as u64,
            i_max: self.gs.max_iter as u64,
            refresh_cb_slots: self.refresh.codebook_slots,
            refresh_ris_slots: self.refresh.ris_slots,
            refresh_blk_slots: self.refresh.blockage_slots,
            obstacles: obstacles.max(1) as u64,
            pilot_length: self.training.pilot_length as u64,
            users: self.system.users as u64,
            array: self.system.bs_elements as u64,
            ris: self.system.ris_elements as u64,
            evaluations: evaluations as u64,
        }
    }
}

/// SplitMix64 finaliser; decorrelates consecutive seeds.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator seed of trial `trial` under master seed `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix(splitmix(seed) ^ trial)
}

/// Independent sub-stream `stream` of a trial seed.
pub fn stream_seed(trial_seed: u64, stream: u64) -> u64 {
    splitmix(trial_seed.rotate_left(17) ^ splitmix(stream))
}
