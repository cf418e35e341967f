use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream_seed, trial_seed, Scenario};
use crate::angular::{AngularInterval, AngularSet};
use crate::blockage::{detect_blockage, place_for_density};
use crate::codebook::{gs_iterate, rotate_weights, GsConfig, SectorSpec, SynthesisContext};
use crate::error::{Error, Result};
use crate::linalg::{phasor, CVec};

/// Normalised residual `r_t = E_t / E_0` of one node at one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub density: f64,
    pub realization: usize,
    pub layer: usize,
    pub index: usize,
    pub t: usize,
    pub residual: f64,
}

/// Iterations until the relative residual decrease first drops below the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerIterations {
    pub density: f64,
    pub realization: usize,
    pub layer: usize,
    /// `None` when the threshold is never met within the iteration budget.
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub residuals: Vec<ResidualRow>,
    pub iterations: Vec<LayerIterations>,
}

/// Relative-decrease threshold of the iterations-to-threshold statistic.
pub const ITERATION_THRESHOLD: f64 = 1e-3;

/// First `t >= 1` with `(E_{t-1} - E_t) / E_{t-1} < threshold`.
pub fn iterations_to_threshold(residuals: &[f64], threshold: f64) -> Option<usize> {
    residuals.windows(2).position(|w| w[0] <= 0.0 || (w[0] - w[1]) / w[0] < threshold).map(|i| i + 1)
}

fn sector(layer: usize, index: usize) -> AngularInterval {
    let width = 2.0 / (1usize << layer) as f64;
    AngularInterval { lo: -1.0 + index as f64 * width, hi: -1.0 + (index + 1) as f64 * width }
}

fn center(set: &AngularSet) -> f64 {
    set.hull().map_or(0.0, |h| h.midpoint())
}

/// One realisation: a random obstacle scene at `density` and one node drawn uniformly from the
/// unpruned nodes of the hierarchy. The node is synthesised the way the hierarchy builder does it:
/// its ancestors run first, layer one from random phases and every child from its parent rotated
/// onto the child sector (when warm starts are enabled). Residuals are reported for the drawn
/// node; iteration counts for every node on the chain.
fn realization(scn: &Scenario, cfg: &GsConfig, density: f64, seed: u64, k: usize) -> Result<ConvergenceReport> {
    let bs = scn.bs_layout()?;
    let ris = scn.ris_layout()?;
    let conv = bs.convention();
    let m = bs.len();
    let depth = m.trailing_zeros() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, 0));
    let scene = place_for_density(&mut rng, &bs, &scn.blockage.placement(density))?;
    let map = detect_blockage(&bs, &ris, &scene, conv.fov())?;
    let fov = AngularInterval { lo: -1.0, hi: 1.0 };
    let blocked = conv.spatial_set(&map.blocked).intersection(&fov.into());
    let available = AngularSet::from(fov).subtract(&blocked);
    let ctx = SynthesisContext::new(&bs, &blocked, cfg)?;
    let active: Vec<(usize, usize)> = (1..=depth)
        .flat_map(|layer| (0..1usize << layer).map(move |i| (layer, i)))
        .filter(|&(layer, i)| {
            let target = available.intersection(&sector(layer, i).into());
            target.measure() > 0.0 && SectorSpec::new(&ctx, &target, cfg).is_ok()
        })
        .collect();
    let mut report = ConvergenceReport::default();
    if active.is_empty() {
        return Ok(report);
    }
    let (drawn_layer, drawn_index) = active[rng.gen_range(0..active.len())];
    let amp = (cfg.power / m as f64).sqrt();
    let mut parent: Option<(CVec, AngularSet)> = None;
    for layer in 1..=drawn_layer {
        let index = drawn_index >> (drawn_layer - layer);
        let target = available.intersection(&sector(layer, index).into());
        let spec = SectorSpec::new(&ctx, &target, cfg)?;
        let init = match &parent {
            Some((w, t)) if cfg.warm_start => rotate_weights(&bs, w, center(&target) - center(t))?,
            _ => CVec::from_fn(m, |_, _| phasor(rng.gen_range(0.0..std::f64::consts::TAU)) * amp),
        };
        let outcome = gs_iterate(&ctx, &spec, &init, cfg)?;
        let e = &outcome.trace.residuals;
        if layer == drawn_layer {
            let e0 = e[0];
            report.residuals.extend(e.iter().enumerate().map(|(t, &v)| ResidualRow {
                density,
                realization: k,
                layer,
                index,
                t,
                residual: if e0 > 0.0 { v / e0 } else { 0.0 },
            }));
        }
        report.iterations.push(LayerIterations {
            density,
            realization: k,
            layer,
            iterations: iterations_to_threshold(e, ITERATION_THRESHOLD),
        });
        parent = Some((outcome.weights, target));
    }
    Ok(report)
}

/// Residual traces of `sectors_per_density` realisations at each density, run for
/// `gs.max_iter` iterations without early stopping.
pub fn convergence_experiment(scn: &Scenario, densities: &[f64], sectors_per_density: usize) -> Result<ConvergenceReport> {
    scn.validate()?;
    if densities.iter().any(|d| !(0.0..1.0).contains(d)) {
        return Err(Error::Config("densities: must lie in [0, 1)".into()));
    }
    let cfg = GsConfig { early_stop: false, ..scn.gs.clone() };
    let jobs: Vec<(usize, f64, usize)> = densities
        .iter()
        .enumerate()
        .flat_map(|(di, &d)| (0..sectors_per_density).map(move |k| (di, d, k)))
        .collect();
    let parts: Vec<Result<ConvergenceReport>> = jobs
        .par_iter()
        .map(|&(di, d, k)| {
            let seed = trial_seed(scn.seed, (di * sectors_per_density + k) as u64);
            realization(scn, &cfg, d, seed, k)
        })
        .collect();
    let mut report = ConvergenceReport::default();
    for p in parts {
        let mut p = p?;
        report.residuals.append(&mut p.residuals);
        report.iterations.append(&mut p.iterations);
    }
    Ok(report)
}

impl ConvergenceReport {
    /// Normalised residuals at iteration `t`, optionally restricted to one layer.
    pub fn residuals_at(&self, t: usize, layer: Option<usize>) -> Vec<f64> {
        self.residuals.iter().filter(|r| r.t == t && layer.is_none_or(|l| r.layer == l)).map(|r| r.residual).collect()
    }

    pub fn write_residuals<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["density", "realization", "layer", "index", "t", "residual"])?;
        for r in &self.residuals {
            w.write_record([
                r.density.to_string(),
                r.realization.to_string(),
                r.layer.to_string(),
                r.index.to_string(),
                r.t.to_string(),
                r.residual.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the two CSVs written by [`Self::write_residuals`] and [`Self::write_iterations`].
    pub fn read<R1: Read, R2: Read>(residuals: R1, iterations: R2) -> Result<Self> {
        let residuals = csv::Reader::from_reader(residuals).deserialize().collect::<std::result::Result<_, _>>()?;
        let iterations = csv::Reader::from_reader(iterations).deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { residuals, iterations })
    }

    pub fn write_iterations<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["density", "realization", "layer", "iterations"])?;
        for r in &self.iterations {
            w.write_record([
                r.density.to_string(),
                r.realization.to_string(),
                r.layer.to_string(),
                r.iterations.map_or(String::new(), |i| i.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
