use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gs::{apply_amplitude, gs_iterate, spatial_fov, GsTrace, SectorSpec, SynthesisContext};
use super::ls::solve_hard_ls;
use super::{GsConfig, InitMode};
use crate::angular::{AngularInterval, AngularSet, ArrayLayout};
use crate::error::{Error, Result};
use crate::linalg::{phasor, CVec};

/// Position of a node: layer `s >= 1` holds `2^s` nodes indexed from the low edge of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId {
    pub layer: usize,
    pub index: usize,
}

impl NodeId {
    pub fn children(self) -> [NodeId; 2] {
        let layer = self.layer + 1;
        [NodeId { layer, index: 2 * self.index }, NodeId { layer, index: 2 * self.index + 1 }]
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.layer > 1).then(|| NodeId { layer: self.layer - 1, index: self.index / 2 })
    }
}

/// One node of the hierarchy. Pruned nodes carry zero weights and are never probed.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword {
    pub id: NodeId,
    /// Nominal sector in spatial frequency.
    pub sector: AngularInterval,
    /// Sector restricted to the available directions.
    pub target: AngularSet,
    pub pruned: bool,
    pub weights: CVec,
    /// Flat-top gain level the codeword was fitted to.
    pub in_level: f64,
    /// Grid cells whose gain is within the coverage threshold of `in_level`.
    pub coverage: AngularSet,
    /// Running minimum of the synthesis residual.
    pub residual_trace: Vec<f64>,
    pub iterations: usize,
}

impl Codeword {
    /// Same codeword steered by `shift` in spatial frequency; its sets move by `+shift`.
    pub fn rotated(&self, layout: &ArrayLayout, shift: f64) -> Result<Codeword> {
        Ok(Codeword {
            weights: rotate_weights(layout, &self.weights, shift)?,
            target: self.target.shift(shift),
            coverage: self.coverage.shift(shift),
            sector: AngularInterval { lo: self.sector.lo + shift, hi: self.sector.hi + shift },
            ..self.clone()
        })
    }
}

/// `w ⊙ sqrt(M) a(shift)`: the pattern at `u + shift` equals the original pattern at `u`.
pub fn rotate_weights(layout: &ArrayLayout, weights: &CVec, shift: f64) -> Result<CVec> {
    let m = layout.len();
    if weights.len() != m {
        return Err(Error::Dimension { expected: m, found: weights.len() });
    }
    let a = layout.steering_u(shift)?;
    let scale = Complex64::new((m as f64).sqrt(), 0.0);
    Ok(weights.component_mul(&a) * scale)
}

/// Binary-tree codebook over spatial frequency `[-1, 1)`; the deepest layer has `M` leaves.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalCodebook {
    elements: usize,
    available: AngularSet,
    config: GsConfig,
    layers: Vec<Vec<Codeword>>,
}

/// Trace of one synthesised node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub id: NodeId,
    pub trace: GsTrace,
}

/// Cost and convergence record of [`build_hierarchy`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    /// Complex multiplies including setup.
    pub multiplies: u64,
    pub setup_multiplies: u64,
    pub synthesized: usize,
    pub pruned: usize,
    pub traces: Vec<NodeTrace>,
}

impl BuildReport {
    pub fn mean_iterations(&self) -> f64 {
        if self.traces.is_empty() {
            return 0.0;
        }
        self.traces.iter().map(|t| t.trace.iterations as f64).sum::<f64>() / self.traces.len() as f64
    }
}

fn center(set: &AngularSet) -> f64 {
    set.hull().map_or(0.0, |h| h.midpoint())
}

/// Synthesises every node of the hierarchy for an array whose available directions are
/// `available` (spatial frequency).
pub fn build_hierarchy(
    layout: &ArrayLayout,
    available: &AngularSet,
    cfg: &GsConfig,
) -> Result<(HierarchicalCodebook, BuildReport)> {
    let m = layout.len();
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::invalid(format!("hierarchy needs a power-of-two array size, got {m}")));
    }
    let fov = spatial_fov();
    let available = available.intersection(&fov.into());
    let blocked = AngularSet::from(fov).subtract(&available);
    let ctx = SynthesisContext::new(layout, &blocked, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = BuildReport { setup_multiplies: ctx.setup_multiplies(), ..Default::default() };
    let coverage_ratio = 10f64.powf(cfg.coverage_db / 10.0);
    let depth = m.trailing_zeros() as usize;
    let mut layers: Vec<Vec<Codeword>> = Vec::with_capacity(depth);
    for layer in 1..=depth {
        let count = 1usize << layer;
        let width = fov.width() / count as f64;
        let mut nodes = Vec::with_capacity(count);
        for index in 0..count {
            let id = NodeId { layer, index };
            let sector = AngularInterval { lo: fov.lo + index as f64 * width, hi: fov.lo + (index + 1) as f64 * width };
            let target = available.intersection(&sector.into());
            let parent = id.parent().map(|p| &layers[p.layer - 1][p.index]);
            let spec = if parent.is_some_and(|p: &Codeword| p.pruned) || target.measure() == 0.0 {
                None
            } else {
                SectorSpec::new(&ctx, &target, cfg).ok()
            };
            let Some(spec) = spec else {
                report.pruned += 1;
                nodes.push(Codeword {
                    id,
                    sector,
                    target,
                    pruned: true,
                    weights: CVec::zeros(m),
                    in_level: 0.0,
                    coverage: AngularSet::empty(),
                    residual_trace: Vec::new(),
                    iterations: 0,
                });
                continue;
            };
            let init = match parent {
                Some(p) if cfg.warm_start => rotate_weights(layout, &p.weights, center(&target) - center(&p.target))?,
                _ => match cfg.init {
                    InitMode::RandomPhase => {
                        let amp = (cfg.power / m as f64).sqrt();
                        CVec::from_fn(m, |_, _| phasor(rng.gen_range(0.0..std::f64::consts::TAU)) * amp)
                    }
                    InitMode::ProjectorLs => {
                        let problem = spec.ls_problem(&ctx, cfg);
                        let w = solve_hard_ls(&problem, ctx.projector(), ctx.tikhonov())?;
                        apply_amplitude(&w, cfg.amplitude, cfg.power)
                    }
                },
            };
            let outcome = gs_iterate(&ctx, &spec, &init, cfg)?;
            let threshold = spec.in_level() * coverage_ratio;
            let gains = ctx.pattern(&outcome.weights);
            let coverage = ctx.grid().cells_where(|i| gains[i] >= threshold);
            report.multiplies += outcome.trace.multiplies;
            report.synthesized += 1;
            nodes.push(Codeword {
                id,
                sector,
                target,
                pruned: false,
                weights: outcome.weights,
                in_level: spec.in_level(),
                coverage,
                residual_trace: outcome.trace.best.clone(),
                iterations: outcome.trace.iterations,
            });
            report.traces.push(NodeTrace { id, trace: outcome.trace });
        }
        layers.push(nodes);
    }
    report.multiplies += report.setup_multiplies;
    let codebook = HierarchicalCodebook { elements: m, available, config: cfg.clone(), layers };
    Ok((codebook, report))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookRecord {
    elements: usize,
    available: AngularSet,
    config: GsConfig,
    nodes: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    layer: usize,
    index: usize,
    sector_lo: f64,
    sector_hi: f64,
    pruned: bool,
    in_level: f64,
    /// `[re, im]` per element.
    weights: Vec<[f64; 2]>,
    target: AngularSet,
    coverage: AngularSet,
    residual_trace: Vec<f64>,
    iterations: usize,
}

impl HierarchicalCodebook {
    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn available(&self) -> &AngularSet {
        &self.available
    }

    pub fn config(&self) -> &GsConfig {
        &self.config
    }

    /// Nodes of layer `layer` (1-based).
    pub fn layer(&self, layer: usize) -> &[Codeword] {
        &self.layers[layer - 1]
    }

    pub fn node(&self, id: NodeId) -> Option<&Codeword> {
        self.layers.get(id.layer.checked_sub(1)?)?.get(id.index)
    }

    /// Children of `id`, or `None` at the deepest layer.
    pub fn children(&self, id: NodeId) -> Option<[&Codeword; 2]> {
        let [a, b] = id.children();
        Some([self.node(a)?, self.node(b)?])
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Codeword> {
        self.layers.iter().flatten()
    }

    /// Number of unpruned codewords.
    pub fn active_count(&self) -> usize {
        self.nodes().filter(|c| !c.pruned).count()
    }

    /// No direction is available: every first-layer node is pruned.
    pub fn outage(&self) -> bool {
        self.layers.first().is_none_or(|l| l.iter().all(|c| c.pruned))
    }

    pub fn to_json(&self) -> Result<String> {
        let nodes = self
            .nodes()
            .map(|c| NodeRecord {
                layer: c.id.layer,
                index: c.id.index,
                sector_lo: c.sector.lo,
                sector_hi: c.sector.hi,
                pruned: c.pruned,
                in_level: c.in_level,
                weights: c.weights.iter().map(|z| [z.re, z.im]).collect(),
                target: c.target.clone(),
                coverage: c.coverage.clone(),
                residual_trace: c.residual_trace.clone(),
                iterations: c.iterations,
            })
            .collect();
        let record = CodebookRecord {
            elements: self.elements,
            available: self.available.clone(),
            config: self.config.clone(),
            nodes,
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let record: CodebookRecord = serde_json::from_str(text)?;
        let m = record.elements;
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::Config(format!("invalid element count {m}")));
        }
        let depth = m.trailing_zeros() as usize;
        let mut layers: Vec<Vec<Codeword>> = (1..=depth).map(|s| Vec::with_capacity(1 << s)).collect();
        for n in record.nodes {
            if n.layer == 0 || n.layer > depth || n.index != layers[n.layer - 1].len() {
                return Err(Error::Config(format!("unexpected node ({}, {})", n.layer, n.index)));
            }
            if n.weights.len() != m {
                return Err(Error::Dimension { expected: m, found: n.weights.len() });
            }
            layers[n.layer - 1].push(Codeword {
                id: NodeId { layer: n.layer, index: n.index },
                sector: AngularInterval::new(n.sector_lo, n.sector_hi)?,
                target: n.target,
                pruned: n.pruned,
                weights: CVec::from_iterator(m, n.weights.iter().map(|&[re, im]| Complex64::new(re, im))),
                in_level: n.in_level,
                coverage: n.coverage,
                residual_trace: n.residual_trace,
                iterations: n.iterations,
            });
        }
        if layers.iter().enumerate().any(|(i, l)| l.len() != 1 << (i + 1)) {
            return Err(Error::Config("incomplete codebook".into()));
        }
        Ok(Self { elements: m, available: record.available, config: record.config, layers })
    }
}
