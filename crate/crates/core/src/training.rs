//! Run-time beam training: pilot measurements, hierarchical descent and exhaustive DFT scans.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::angular::ArrayLayout;
use crate::channel::{self, ChannelRealization, LinkBudget, RisPhase};
use crate::codebook::{HierarchicalCodebook, NodeId};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

/// Timing and candidate array layouts of one training slot.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingBudget {
    pub pilot_length: usize,
    pub slot_s: f64,
    pub move_time_s: f64,
    pub layouts: Vec<ArrayLayout>,
}

impl TrainingBudget {
    pub fn validate(&self) -> Result<()> {
        if self.pilot_length == 0 {
            return Err(Error::invalid("pilot length must be at least 1"));
        }
        if !(self.move_time_s >= 0.0 && self.move_time_s < self.slot_s) {
            return Err(Error::invalid("move time must lie in [0, slot)"));
        }
        if self.layouts.is_empty() {
            return Err(Error::invalid("at least one array layout is required"));
        }
        Ok(())
    }
}

/// Effective channels of every user under fixed RIS phases, plus the link budget.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    effective: Vec<CVec>,
    link: LinkBudget,
}

impl Probe {
    pub fn new(channel: &ChannelRealization, phase: &RisPhase, link: LinkBudget) -> Result<Self> {
        if link.pilots == 0 {
            return Err(Error::invalid("pilot length must be at least 1"));
        }
        Ok(Self { effective: channel.effective(phase)?, link })
    }

    pub fn from_effective(effective: Vec<CVec>, link: LinkBudget) -> Self {
        Self { effective, link }
    }

    pub fn effective(&self) -> &[CVec] {
        &self.effective
    }

    pub fn link(&self) -> &LinkBudget {
        &self.link
    }

    /// True per-user SNR of beam `w`.
    pub fn snr(&self, w: &CVec) -> Vec<f64> {
        self.effective
            .iter()
            .map(|g| channel::snr(g, w, self.link.tx_power_w, self.link.noise_power_w))
            .collect()
    }

    /// Mean per-user spectral efficiency of beam `w`, bit/s/Hz.
    pub fn mean_rate(&self, w: &CVec) -> f64 {
        let snr = self.snr(w);
        snr.iter().map(|&s| channel::rate(s)).sum::<f64>() / snr.len().max(1) as f64
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Received pilot power per user, `|sqrt(p) H_k w + n|^2` averaged over the pilot symbols.
pub fn evaluate_beam<R: Rng + ?Sized>(probe: &Probe, w: &CVec, rng: &mut R) -> Vec<f64> {
    let LinkBudget { tx_power_w, noise_power_w, pilots, .. } = probe.link;
    probe
        .effective
        .iter()
        .map(|g| {
            let signal = g.dot(w) * tx_power_w.sqrt();
            if noise_power_w == 0.0 {
                return signal.norm_sqr();
            }
            let total: f64 =
                (0..pilots).map(|_| (signal + complex_gaussian(rng, noise_power_w)).norm_sqr()).sum();
            total / pilots as f64
        })
        .collect()
}

/// One probed beam in training order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Measured power summed over users; the selection statistic.
    pub measured: f64,
    /// True mean per-user rate of the probed beam, bit/s/Hz.
    pub rate: f64,
}

/// Outcome of one search.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingResult {
    /// Weights of the selected beam; empty on outage.
    pub selected: CVec,
    /// Selected hierarchy node, for hierarchical searches.
    pub node: Option<NodeId>,
    /// Selected DFT index, for exhaustive searches.
    pub beam_index: Option<usize>,
    pub evaluations: usize,
    /// Per-user measured pilot power of the selected beam.
    pub measured: Vec<f64>,
    /// Per-user true rate of the selected beam, bit/s/Hz.
    pub rates: Vec<f64>,
    pub outage: bool,
    pub layout_index: usize,
    /// Layout changes after the initial placement.
    pub moves: usize,
    /// Pilot airtime plus mechanical move time.
    pub model_time_s: f64,
    pub history: Vec<Evaluation>,
}

impl TrainingResult {
    fn outage(users: usize) -> Self {
        Self {
            selected: CVec::zeros(0),
            node: None,
            beam_index: None,
            evaluations: 0,
            measured: vec![0.0; users],
            rates: vec![0.0; users],
            outage: true,
            layout_index: 0,
            moves: 0,
            model_time_s: 0.0,
            history: Vec::new(),
        }
    }

    pub fn mean_rate(&self) -> f64 {
        self.rates.iter().sum::<f64>() / self.rates.len().max(1) as f64
    }
}

fn pilot_time(probe: &Probe, evaluations: usize) -> f64 {
    let symbol = if probe.link.bandwidth_hz > 0.0 { 1.0 / probe.link.bandwidth_hz } else { 0.0 };
    (evaluations * probe.link.pilots) as f64 * symbol
}

struct Scan<'a, R: ?Sized> {
    probe: &'a Probe,
    rng: &'a mut R,
    history: Vec<Evaluation>,
}

impl<R: Rng + ?Sized> Scan<'_, R> {
    fn measure(&mut self, w: &CVec) -> Vec<f64> {
        let measured = evaluate_beam(self.probe, w, self.rng);
        self.history.push(Evaluation { measured: measured.iter().sum(), rate: self.probe.mean_rate(w) });
        measured
    }

    /// Index of the largest summed measurement; ties go to the earlier candidate.
    fn pick(&mut self, candidates: &[&CVec]) -> (usize, Vec<f64>) {
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for (i, w) in candidates.iter().enumerate() {
            let m = self.measure(w);
            let sum: f64 = m.iter().sum();
            if best.as_ref().is_none_or(|(_, b, _)| sum > *b) {
                best = Some((i, sum, m));
            }
        }
        let (i, _, m) = best.expect("at least one candidate");
        (i, m)
    }
}

/// Top-down descent through the tree, probing the children of the current node at each layer.
///
/// With `aware` set, pruned nodes are skipped without a probe; otherwise every child is probed.
/// When every first-layer node is pruned the result is an outage with no evaluations.
pub fn hierarchical_search<R: Rng + ?Sized>(
    book: &HierarchicalCodebook,
    probe: &Probe,
    aware: bool,
    rng: &mut R,
) -> Result<TrainingResult> {
    let users = probe.effective.len();
    if aware && book.outage() {
        return Ok(TrainingResult::outage(users));
    }
    let mut scan = Scan { probe, rng, history: Vec::new() };
    let mut candidates = vec![NodeId { layer: 1, index: 0 }, NodeId { layer: 1, index: 1 }];
    let mut chosen: Option<(NodeId, Vec<f64>)> = None;
    for _ in 0..book.depth() {
        let live: Vec<NodeId> = candidates
            .iter()
            .copied()
            .filter(|&id| !aware || book.node(id).is_some_and(|c| !c.pruned))
            .collect();
        if live.is_empty() {
            break;
        }
        let weights: Vec<&CVec> = live
            .iter()
            .map(|&id| book.node(id).map(|c| &c.weights).ok_or(Error::invalid("node outside the codebook")))
            .collect::<Result<_>>()?;
        let (i, measured) = scan.pick(&weights);
        chosen = Some((live[i], measured));
        candidates = live[i].children().to_vec();
    }
    let Some((node, measured)) = chosen else {
        return Ok(TrainingResult::outage(users));
    };
    let selected = book.node(node).expect("selected node exists").weights.clone();
    let evaluations = scan.history.len();
    Ok(TrainingResult {
        rates: probe.snr(&selected).into_iter().map(channel::rate).collect(),
        selected,
        node: Some(node),
        beam_index: None,
        evaluations,
        measured,
        outage: false,
        layout_index: 0,
        moves: 0,
        model_time_s: pilot_time(probe, evaluations),
        history: scan.history,
    })
}

/// Probes every column of `codebook` in index order and keeps the strongest.
pub fn exhaustive_search<R: Rng + ?Sized>(codebook: &CMat, probe: &Probe, rng: &mut R) -> Result<TrainingResult> {
    if codebook.ncols() == 0 {
        return Err(Error::invalid("exhaustive search needs a non-empty codebook"));
    }
    let beams: Vec<CVec> = codebook.column_iter().map(|c| c.into_owned()).collect();
    let refs: Vec<&CVec> = beams.iter().collect();
    let mut scan = Scan { probe, rng, history: Vec::new() };
    let (i, measured) = scan.pick(&refs);
    let selected = beams[i].clone();
    let evaluations = scan.history.len();
    Ok(TrainingResult {
        rates: probe.snr(&selected).into_iter().map(channel::rate).collect(),
        selected,
        node: None,
        beam_index: Some(i),
        evaluations,
        measured,
        outage: false,
        layout_index: 0,
        moves: 0,
        model_time_s: pilot_time(probe, evaluations),
        history: scan.history,
    })
}

/// Subspace-codebook baseline; its construction is not available.
pub fn subspace_codebook_search() -> Result<TrainingResult> {
    Err(Error::Unimplemented("subspace codebook baseline"))
}

/// Evaluations needed before the best-so-far beam reaches a target rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overhead {
    /// Evaluation count, or the budget plus one when the target is never reached.
    pub evaluations: usize,
    pub reached: bool,
}

/// Smallest evaluation count at which the beam with the largest measurement so far has true mean
/// rate at least `fraction * optimum`.
pub fn overhead_to_target(history: &[Evaluation], optimum: f64, fraction: f64) -> Result<Overhead> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("target fraction {fraction} outside [0, 1]")));
    }
    let target = fraction * optimum;
    let mut best: Option<&Evaluation> = None;
    for (k, e) in history.iter().enumerate() {
        if best.is_none_or(|b| e.measured > b.measured) {
            best = Some(e);
        }
        if best.is_some_and(|b| b.rate >= target) {
            return Ok(Overhead { evaluations: k + 1, reached: true });
        }
    }
    Ok(Overhead { evaluations: history.len() + 1, reached: false })
}

/// Best true mean rate over the columns of `codebook` under perfect channel knowledge.
pub fn codebook_optimum(codebook: &CMat, probe: &Probe) -> f64 {
    codebook.column_iter().map(|c| probe.mean_rate(&c.into_owned())).fold(0.0, f64::max)
}

/// Runs `search` on every candidate layout in order and keeps the strongest measured result.
///
/// Each layout after the first costs one mechanical move.
pub fn layout_sweep(
    budget: &TrainingBudget,
    mut search: impl FnMut(usize, &ArrayLayout) -> Result<TrainingResult>,
) -> Result<TrainingResult> {
    budget.validate()?;
    let mut best: Option<TrainingResult> = None;
    let mut evaluations = 0;
    let mut pilot_s = 0.0;
    let mut history = Vec::new();
    for (i, layout) in budget.layouts.iter().enumerate() {
        let mut r = search(i, layout)?;
        evaluations += r.evaluations;
        pilot_s += r.model_time_s;
        history.append(&mut r.history);
        r.layout_index = i;
        let better = match &best {
            None => true,
            Some(b) => b.outage && !r.outage || !r.outage && r.measured.iter().sum::<f64>() > b.measured.iter().sum::<f64>(),
        };
        if better {
            best = Some(r);
        }
    }
    let mut out = best.expect("layouts are non-empty");
    out.moves = budget.layouts.len() - 1;
    out.evaluations = evaluations;
    out.history = history;
    out.model_time_s = pilot_s + out.moves as f64 * budget.move_time_s;
    Ok(out)
}
