use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream_seed, trial_seed, Scenario};
use crate::angular::{dft_codebook, AngularInterval, AngularSet};
use crate::blockage::{detect_blockage, place_for_density, BlockageScene};
use crate::channel::{self, ChannelRealization, ChannelSpec, LargeScale, LinkBudget, RisPhase};
use crate::codebook::{build_hierarchy, HierarchicalCodebook};
use crate::energy::{data_power, energy_efficiency};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::stage1::{build_q, estimate_covariances, optimize_phases, PhaseOptions, PhaseSolution};
use crate::training::{
    codebook_optimum, exhaustive_search, hierarchical_search, overhead_to_target, Evaluation, Probe, TrainingResult,
};

/// Training method compared in a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Blockage-aware hierarchy with pruned search.
    Proposed,
    /// Hierarchy built without blockage knowledge and searched in full.
    Traditional,
    /// Every DFT beam probed in index order.
    DftExhaustive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Proposed, Method::Traditional, Method::DftExhaustive];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Traditional => "traditional",
            Method::DftExhaustive => "dft_exhaustive",
        }
    }
}

/// Swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrDb,
    TxPowerDbm,
    BlockageDensity,
    /// Beam evaluations allowed before the best-so-far beam is used.
    OverheadBudget,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_db",
            Axis::TxPowerDbm => "tx_power_dbm",
            Axis::BlockageDensity => "blockage_density",
            Axis::OverheadBudget => "overhead_budget",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("sweep.values: must be non-empty and strictly increasing".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep.values: must be finite".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("sweep.methods: at least one method is required".into()));
        }
        match self.axis {
            Axis::BlockageDensity if self.values.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                Err(Error::Config("sweep.values: densities must lie in [0, 1]".into()))
            }
            Axis::OverheadBudget if self.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) => {
                Err(Error::Config("sweep.values: budgets must be non-negative integers".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Column order of the per-trial CSV.
pub const TRIAL_HEADER: [&str; 18] = [
    "seed",
    "method",
    "density",
    "snr_db",
    "evaluations",
    "rate_bps_hz",
    "outage",
    "moves",
    "trial",
    "axis",
    "axis_value",
    "blocked_fraction",
    "tx_power_dbm",
    "capacity_bps",
    "ee_bits_per_joule",
    "optimum_bps_hz",
    "overhead_to_target",
    "bandwidth_hz",
];

/// One (axis value, method, trial) outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    /// Generator seed of the trial.
    pub seed: u64,
    pub method: Method,
    /// Target blocked fraction.
    pub density: f64,
    pub snr_db: f64,
    pub evaluations: usize,
    /// Mean per-user spectral efficiency of the selected beam.
    pub rate_bps_hz: f64,
    pub outage: bool,
    pub moves: usize,
    pub trial: usize,
    pub axis: Axis,
    pub axis_value: f64,
    /// Realised blocked fraction in spatial frequency.
    pub blocked_fraction: f64,
    pub tx_power_dbm: f64,
    /// Sum over users of `B log2(1 + SNR)`.
    pub capacity_bps: f64,
    pub ee_bits_per_joule: f64,
    /// Best mean rate over the DFT beams under perfect channel knowledge.
    pub optimum_bps_hz: f64,
    /// Evaluations until the best-measured beam reaches the target fraction of the optimum;
    /// one past the evaluation count when never reached.
    pub overhead_to_target: usize,
    pub bandwidth_hz: f64,
}

/// Everything about one trial that does not depend on the operating point.
struct TrialSetup {
    seed: u64,
    density: f64,
    blocked_fraction: f64,
    /// No departure direction is available.
    link_outage: bool,
    channel: ChannelRealization,
    phase: RisPhase,
    proposed: HierarchicalCodebook,
    reference_gain: f64,
}

fn spatial_fov() -> AngularInterval {
    AngularInterval { lo: -1.0, hi: 1.0 }
}

/// Obstacle scene of one trial and the direction sets it induces at the array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialBlockage {
    pub seed: u64,
    /// Target blocked fraction.
    pub density: f64,
    pub scene: BlockageScene,
    /// Blocked azimuths in radians.
    pub blocked_azimuth: AngularSet,
    /// Blocked spatial frequencies within `[-1, 1]`.
    pub blocked: AngularSet,
    pub available: AngularSet,
    /// Blocked share of the spatial-frequency range.
    pub blocked_fraction: f64,
    pub blocked_links: usize,
    pub outage: bool,
}

/// Stage-I phase design of one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialStage1 {
    pub seed: u64,
    /// RIS phase angles in radians.
    pub phase_rad: Vec<f64>,
    /// Surrogate value of the returned phases.
    pub objective: f64,
    /// Fixed-point steps of the winning start.
    pub iterations: usize,
    /// Diagonal loading added to an indefinite surrogate.
    pub loading: f64,
    /// Fewer snapshots than RIS elements.
    pub rank_deficient: bool,
}

/// Scene and direction sets of trial `trial` at blocked fraction `density`.
pub fn trial_blockage(scn: &Scenario, trial: usize, density: f64) -> Result<TrialBlockage> {
    let seed = trial_seed(scn.seed, trial as u64);
    let bs = scn.bs_layout()?;
    let ris = scn.ris_layout()?;
    let conv = bs.convention();
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
    let scene = match &scn.blockage.scene {
        Some(scene) => scene.clone(),
        None => place_for_density(&mut rng, &bs, &scn.blockage.placement(density))?,
    };
    let map = detect_blockage(&bs, &ris, &scene, conv.fov())?;
    let blocked = conv.spatial_set(&map.blocked).intersection(&spatial_fov().into());
    let available = AngularSet::from(spatial_fov()).subtract(&blocked);
    Ok(TrialBlockage {
        seed,
        density,
        scene,
        blocked_fraction: blocked.measure() / 2.0,
        outage: available.is_empty(),
        blocked_azimuth: map.blocked,
        blocked,
        available,
        blocked_links: map.blocked_links,
    })
}

struct Stage1Run {
    spec: ChannelSpec,
    large: LargeScale,
    /// Channel stream, positioned after the statistics window.
    rng: ChaCha8Rng,
    solution: PhaseSolution,
    rank_deficient: bool,
}

fn run_stage1(scn: &Scenario, blockage: &TrialBlockage) -> Result<Stage1Run> {
    let bs = scn.bs_layout()?;
    let ris = scn.ris_layout()?;
    let model = scn.pathloss_model();
    let spec = ChannelSpec {
        bs_paths: scn.system.bs_paths,
        ue_paths: scn.system.ue_paths,
        bs_ris_m: scn.geometry.bs_ris_distance_m(),
        ris_ue_m: scn.geometry.ue_distances_m.clone(),
        departure_range: spatial_fov(),
        blocked: blockage.blocked.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(blockage.seed, 1));
    let large = LargeScale::draw(&spec, &model, &mut rng)?;
    let snapshots = (0..scn.stage1.snapshots)
        .map(|_| large.realize(&bs, &ris, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let estimate = estimate_covariances(&snapshots, None)?;
    let q = build_q(&estimate.csi, &vec![1.0; scn.system.users])?;
    let opts = PhaseOptions {
        restarts: scn.stage1.restarts,
        max_iter: scn.stage1.max_iter,
        seed: stream_seed(blockage.seed, 2),
        ..PhaseOptions::default()
    };
    let solution = optimize_phases(&q, &opts)?;
    Ok(Stage1Run { spec, large, rng, solution, rank_deficient: estimate.rank_deficient })
}

/// Stage-I phases of trial `trial` designed from the statistics window.
pub fn trial_stage1(scn: &Scenario, trial: usize) -> Result<TrialStage1> {
    scn.validate()?;
    let blockage = trial_blockage(scn, trial, scn.blockage.density)?;
    let run = run_stage1(scn, &blockage)?;
    Ok(TrialStage1 {
        seed: blockage.seed,
        phase_rad: run.solution.phase.as_vector().iter().map(|z| z.arg()).collect(),
        objective: run.solution.value,
        iterations: run.solution.trace.len(),
        loading: run.solution.loading,
        rank_deficient: run.rank_deficient,
    })
}

fn prepare(scn: &Scenario, trial: usize, density: f64) -> Result<TrialSetup> {
    let blockage = trial_blockage(scn, trial, density)?;
    let Stage1Run { spec, large, mut rng, solution, .. } = run_stage1(scn, &blockage)?;
    let bs = scn.bs_layout()?;
    let channel = large.realize(&bs, &scn.ris_layout()?, &mut rng)?;
    let (proposed, _) = build_hierarchy(&bs, &blockage.available, &scn.gs)?;
    Ok(TrialSetup {
        seed: blockage.seed,
        density,
        blocked_fraction: blockage.blocked_fraction,
        link_outage: blockage.outage,
        channel,
        phase: solution.phase,
        proposed,
        reference_gain: spec.reference_gain(&scn.pathloss_model(), scn.system.bs_elements, scn.system.ris_elements),
    })
}

/// Transmit power and SNR-axis value of an operating point.
struct OperatingPoint {
    tx_power_w: f64,
    snr_db: f64,
    budget: Option<usize>,
}

impl OperatingPoint {
    fn new(scn: &Scenario, setup: &TrialSetup, axis: Axis, value: f64) -> Self {
        let noise = scn.noise_power_w();
        let from_snr = |snr_db: f64| channel::db_to_linear(snr_db) * noise / setup.reference_gain;
        let to_snr = |p: f64| 10.0 * (p * setup.reference_gain / noise).log10();
        let base = match (scn.link.snr_db, scn.link.tx_power_dbm) {
            (Some(s), _) => from_snr(s),
            (None, Some(dbm)) => channel::dbm_to_watts(dbm),
            (None, None) => unreachable!("validated link"),
        };
        let (tx_power_w, budget) = match axis {
            Axis::SnrDb => (from_snr(value), None),
            Axis::TxPowerDbm => (channel::dbm_to_watts(value), None),
            Axis::BlockageDensity => (base, None),
            Axis::OverheadBudget => (base, Some(value as usize)),
        };
        Self { tx_power_w, snr_db: to_snr(tx_power_w), budget }
    }
}

/// True mean rate of the best-measured beam among the first `budget` evaluations.
fn rate_within(history: &[Evaluation], budget: usize) -> f64 {
    let mut best: Option<&Evaluation> = None;
    for e in history.iter().take(budget) {
        if best.is_none_or(|b| e.measured > b.measured) {
            best = Some(e);
        }
    }
    best.map_or(0.0, |b| b.rate)
}

struct PointContext<'a> {
    scn: &'a Scenario,
    traditional: &'a HierarchicalCodebook,
    dft: &'a CMat,
}

fn run_point(
    ctx: &PointContext,
    setup: &TrialSetup,
    trial: usize,
    axis: Axis,
    index: usize,
    value: f64,
    methods: &[Method],
) -> Result<Vec<TrialRow>> {
    let scn = ctx.scn;
    let point = OperatingPoint::new(scn, setup, axis, value);
    let link = LinkBudget {
        tx_power_w: point.tx_power_w,
        noise_power_w: scn.noise_power_w(),
        bandwidth_hz: scn.system.bandwidth_hz,
        pilots: scn.training.pilot_length,
    };
    let probe = Probe::new(&setup.channel, &setup.phase, link)?;
    let optimum = codebook_optimum(ctx.dft, &probe);
    let p_data = point.tx_power_w + data_power(&scn.energy, scn.system.bs_elements);
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        // Every method sees the same noise stream, so matched comparisons differ only by codebook.
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(setup.seed, 1000 + index as u64));
        let result: TrainingResult = match method {
            Method::Proposed => hierarchical_search(&setup.proposed, &probe, true, &mut rng)?,
            Method::Traditional => hierarchical_search(ctx.traditional, &probe, false, &mut rng)?,
            Method::DftExhaustive => exhaustive_search(ctx.dft, &probe, &mut rng)?,
        };
        let overhead = overhead_to_target(&result.history, optimum, scn.training.target_fraction)?;
        let (evaluations, rate, rates) = match point.budget {
            Some(b) => {
                let used = b.min(result.evaluations);
                let r = rate_within(&result.history, used);
                (used, r, vec![r; scn.system.users])
            }
            None => (result.evaluations, result.mean_rate(), result.rates.clone()),
        };
        let capacity_bps = scn.system.bandwidth_hz * rates.iter().sum::<f64>();
        let moves = result.moves + scn.training.positioning_moves;
        rows.push(TrialRow {
            seed: setup.seed,
            method,
            density: setup.density,
            snr_db: point.snr_db,
            evaluations,
            rate_bps_hz: rate,
            outage: result.outage || setup.link_outage,
            moves,
            trial,
            axis,
            axis_value: value,
            blocked_fraction: setup.blocked_fraction,
            tx_power_dbm: channel::watts_to_dbm(point.tx_power_w),
            capacity_bps,
            ee_bits_per_joule: energy_efficiency(&scn.energy, capacity_bps, moves, p_data)?,
            optimum_bps_hz: optimum,
            overhead_to_target: overhead.evaluations,
            bandwidth_hz: scn.system.bandwidth_hz,
        });
    }
    Ok(rows)
}

/// Runs every trial of `scn` over the points of `spec`.
///
/// Trials run in parallel on the current rayon pool; rows are ordered by trial, then axis value,
/// then method, whatever the completion order.
pub fn sweep(scn: &Scenario, spec: &SweepSpec) -> Result<Vec<TrialRow>> {
    scn.validate()?;
    spec.validate()?;
    let bs = scn.bs_layout()?;
    let (traditional, _) = build_hierarchy(&bs, &spatial_fov().into(), &scn.gs)?;
    let dft = dft_codebook(scn.system.bs_elements)?;
    let ctx = PointContext { scn, traditional: &traditional, dft: &dft };
    let per_trial: Vec<Result<Vec<TrialRow>>> = (0..scn.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rows = Vec::new();
            let mut shared: Option<TrialSetup> = None;
            for (index, &value) in spec.values.iter().enumerate() {
                let setup = if spec.axis == Axis::BlockageDensity {
                    prepare(scn, trial, value)?
                } else {
                    match shared.take() {
                        Some(s) => s,
                        None => prepare(scn, trial, scn.blockage.density)?,
                    }
                };
                rows.extend(run_point(&ctx, &setup, trial, spec.axis, index, value, &spec.methods)?);
                if spec.axis != Axis::BlockageDensity {
                    shared = Some(setup);
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_trial {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Every method at the scenario's own operating point.
pub fn run_scenario(scn: &Scenario) -> Result<Vec<TrialRow>> {
    scn.validate()?;
    let spec = match (scn.link.snr_db, scn.link.tx_power_dbm) {
        (Some(s), _) => SweepSpec { axis: Axis::SnrDb, values: vec![s], methods: all_methods() },
        (None, Some(p)) => SweepSpec { axis: Axis::TxPowerDbm, values: vec![p], methods: all_methods() },
        (None, None) => unreachable!("validated link"),
    };
    sweep(scn, &spec)
}

pub fn write_rows<W: Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_HEADER)?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.method.as_str().to_string(),
            r.density.to_string(),
            r.snr_db.to_string(),
            r.evaluations.to_string(),
            r.rate_bps_hz.to_string(),
            r.outage.to_string(),
            r.moves.to_string(),
            r.trial.to_string(),
            r.axis.as_str().to_string(),
            r.axis_value.to_string(),
            r.blocked_fraction.to_string(),
            r.tx_power_dbm.to_string(),
            r.capacity_bps.to_string(),
            r.ee_bits_per_joule.to_string(),
            r.optimum_bps_hz.to_string(),
            r.overhead_to_target.to_string(),
            r.bandwidth_hz.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a per-trial CSV written by [`write_rows`].
pub fn read_rows<R: Read>(input: R) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(TRIAL_HEADER) {
        return Err(Error::Config("trial CSV: unexpected header".into()));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<TrialRow>, _>>()?)
}

/// Aggregate of all trials at one (axis value, method).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: Axis,
    pub axis_value: f64,
    pub method: Method,
    pub trials: usize,
    pub snr_db_mean: f64,
    pub tx_power_dbm_mean: f64,
    pub rate_mean: f64,
    pub rate_median: f64,
    pub rate_q25: f64,
    pub rate_q75: f64,
    /// Half-width of the normal 95% interval of the mean rate.
    pub rate_ci95: f64,
    pub rate_gbps_mean: f64,
    pub rate_gbps_ci95: f64,
    pub evaluations_mean: f64,
    pub overhead_mean: f64,
    pub ee_mean: f64,
    pub outage_fraction: f64,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { s / n as f64 }
}

/// Groups rows by (axis value, method) in ascending order.
pub fn summarize(rows: &[TrialRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, Method), Vec<&TrialRow>> = BTreeMap::new();
    let mut order: Vec<f64> = rows.iter().map(|r| r.axis_value).collect();
    order.sort_by(f64::total_cmp);
    order.dedup();
    for r in rows {
        let rank = order.iter().position(|v| *v == r.axis_value).expect("value present");
        groups.entry((rank, r.method)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| {
            let n = g.len();
            let bandwidth = g[0].bandwidth_hz;
            let mut rates: Vec<f64> = g.iter().map(|r| r.rate_bps_hz).collect();
            rates.sort_by(f64::total_cmp);
            let m = mean(rates.iter().copied());
            let var = if n > 1 { rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
            SummaryRow {
                axis: g[0].axis,
                axis_value: g[0].axis_value,
                method: g[0].method,
                trials: n,
                snr_db_mean: mean(g.iter().map(|r| r.snr_db)),
                tx_power_dbm_mean: mean(g.iter().map(|r| r.tx_power_dbm)),
                rate_mean: m,
                rate_median: quantile(&rates, 0.5),
                rate_q25: quantile(&rates, 0.25),
                rate_q75: quantile(&rates, 0.75),
                rate_ci95: 1.96 * (var / n as f64).sqrt(),
                rate_gbps_mean: m * bandwidth / 1e9,
                rate_gbps_ci95: 1.96 * (var / n as f64).sqrt() * bandwidth / 1e9,
                evaluations_mean: mean(g.iter().map(|r| r.evaluations as f64)),
                overhead_mean: mean(g.iter().map(|r| r.overhead_to_target as f64)),
                ee_mean: mean(g.iter().map(|r| r.ee_bits_per_joule)),
                outage_fraction: g.iter().filter(|r| r.outage).count() as f64 / n as f64,
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "axis",
        "axis_value",
        "method",
        "trials",
        "snr_db_mean",
        "tx_power_dbm_mean",
        "rate_mean",
        "rate_median",
        "rate_q25",
        "rate_q75",
        "rate_ci95",
        "rate_gbps_mean",
        "rate_gbps_ci95",
        "evaluations_mean",
        "overhead_mean",
        "ee_mean",
        "outage_fraction",
    ])?;
    for r in rows {
        w.write_record([
            r.axis.as_str().to_string(),
            r.axis_value.to_string(),
            r.method.as_str().to_string(),
            r.trials.to_string(),
            r.snr_db_mean.to_string(),
            r.tx_power_dbm_mean.to_string(),
            r.rate_mean.to_string(),
            r.rate_median.to_string(),
            r.rate_q25.to_string(),
            r.rate_q75.to_string(),
            r.rate_ci95.to_string(),
            r.rate_gbps_mean.to_string(),
            r.rate_gbps_ci95.to_string(),
            r.evaluations_mean.to_string(),
            r.overhead_mean.to_string(),
            r.ee_mean.to_string(),
            r.outage_fraction.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
