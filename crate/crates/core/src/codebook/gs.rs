use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::ls::LsProblem;
use super::projector::NullSpaceProjector;
use super::{AmplitudeMode, GsConfig, NullMode};
use crate::angular::{AngularGrid, AngularInterval, AngularSet, ArrayLayout, SampleTag};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Field of view in spatial frequency.
pub(crate) fn spatial_fov() -> AngularInterval {
    AngularInterval { lo: -1.0, hi: 1.0 }
}

/// `A^H w` and `A t` for a half-wavelength ULA on a uniform grid of `N_u` cell centres: after a
/// per-element phase ramp both are length-`N_u` DFTs of the zero-padded (aliased) vectors.
#[derive(Clone)]
struct GridFft {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    ramp: Vec<Complex64>,
}

impl fmt::Debug for GridFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFft").field("len", &self.forward.len()).finish()
    }
}

impl GridFft {
    fn new(m: usize, grid: &AngularGrid) -> Self {
        let n = grid.len();
        let mut planner = FftPlanner::new();
        let u0 = grid.samples()[0];
        let amp = 1.0 / (m as f64).sqrt();
        let ramp = (0..m).map(|k| Complex64::from_polar(amp, -PI * k as f64 * u0)).collect();
        Self { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n), ramp }
    }

    fn len(&self) -> usize {
        self.forward.len()
    }

    /// Nominal radix-2 butterfly count of one transform.
    fn transform_cost(&self) -> u64 {
        let n = self.len();
        (n / 2) as u64 * (n as f64).log2().ceil() as u64
    }

    fn field(&self, w: &CVec) -> CVec {
        let n = self.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, (wk, rk)) in w.iter().zip(&self.ramp).enumerate() {
            buf[k % n] += wk * rk;
        }
        self.forward.process(&mut buf);
        CVec::from_vec(buf)
    }

    fn adjoint(&self, target: &CVec) -> CVec {
        let n = self.len();
        let mut buf: Vec<Complex64> = target.iter().copied().collect();
        self.inverse.process(&mut buf);
        CVec::from_iterator(self.ramp.len(), self.ramp.iter().enumerate().map(|(k, rk)| rk.conj() * buf[k % n]))
    }
}

/// How the loop maps between array weights and grid samples.
#[derive(Clone, Debug)]
enum GridOperator {
    /// Dense `A^H w` and precomputed `(A A^H + mu I)^{-1} A`.
    Dense { back_projection: CMat },
    /// Transforms plus `(A A^H + mu I)^{-1}`.
    Fft { transform: GridFft, inverse_gram: CMat },
}

/// Everything shared by the codewords of one hierarchy: the sampled dictionary, the regularised
/// back-projection operator and the blocked-direction projector.
#[derive(Clone, Debug)]
pub struct SynthesisContext {
    grid: AngularGrid,
    dictionary: CMat,
    operator: GridOperator,
    projector: NullSpaceProjector,
    blocked: AngularSet,
    blocked_samples: Vec<usize>,
    mu: f64,
    setup_multiplies: u64,
}

/// The transform reproduces the dense dictionary on a deterministic probe; false for layouts that
/// are not half-wavelength ULAs.
fn transform_matches(transform: &GridFft, dictionary: &CMat) -> bool {
    let (m, n) = dictionary.shape();
    let w = CVec::from_fn(m, |k, _| Complex64::from_polar(1.0 + k as f64 / m as f64, 0.7 * (k * k) as f64));
    let t = CVec::from_fn(n, |i, _| Complex64::from_polar(1.0 + (i % 7) as f64, 0.3 * (i * i) as f64));
    let close = |a: &CVec, b: &CVec| (a - b).norm() <= 1e-9 * b.norm().max(1.0);
    close(&transform.field(&w), &dictionary.ad_mul(&w)) && close(&transform.adjoint(&t), &(dictionary * &t))
}

impl SynthesisContext {
    /// `blocked` is in spatial frequency over `[-1, 1)`.
    pub fn new(layout: &ArrayLayout, blocked: &AngularSet, cfg: &GsConfig) -> Result<Self> {
        cfg.validate()?;
        let m = layout.len();
        let grid = AngularGrid::uniform(spatial_fov(), cfg.grid_density(m))?;
        let n_u = grid.len();
        let dictionary = layout.steering_matrix(grid.samples())?;
        let gram = &dictionary * dictionary.adjoint();
        let trace: f64 = gram.diagonal().iter().map(|z| z.re).sum();
        let mu = cfg.tikhonov.unwrap_or(1e-6 * trace / n_u as f64);
        let mut reg = gram;
        for i in 0..m {
            reg[(i, i)] += mu;
        }
        let (m64, n64) = (m as u64, n_u as u64);
        // Gram and Cholesky, then either the inverse or the triangular solves against `A`.
        let mut setup_multiplies = m64 * m64 * n64 + m64.pow(3) / 3;
        let transform = GridFft::new(m, &grid);
        let operator = if transform_matches(&transform, &dictionary) {
            setup_multiplies += m64.pow(3);
            GridOperator::Fft { transform, inverse_gram: linalg::solve_hpd(reg, &CMat::identity(m, m))? }
        } else {
            setup_multiplies += 2 * m64 * m64 * n64;
            GridOperator::Dense { back_projection: linalg::solve_hpd(reg, &dictionary)? }
        };

        let blocked = blocked.intersection(&spatial_fov().into());
        let blocked_samples: Vec<usize> =
            (0..n_u).filter(|&i| blocked.contains(grid.samples()[i])).collect();
        let projector = if blocked_samples.is_empty() {
            NullSpaceProjector::identity(m)
        } else {
            let cols: Vec<CVec> =
                blocked_samples.iter().map(|&i| dictionary.column(i).into_owned()).collect();
            NullSpaceProjector::new(&CMat::from_columns(&cols), cfg.rank_tol)
        };
        // Two-pass orthonormalisation of the blocked columns.
        setup_multiplies += 4 * blocked_samples.len() as u64 * m64 * projector.rank() as u64;
        Ok(Self { grid, dictionary, operator, projector, blocked, blocked_samples, mu, setup_multiplies })
    }

    pub fn elements(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    /// Steering vectors of every grid sample, one per column.
    pub fn dictionary(&self) -> &CMat {
        &self.dictionary
    }

    /// `(A A^H + mu I)^{-1} A target`.
    pub fn back_project(&self, target: &CVec) -> CVec {
        match &self.operator {
            GridOperator::Dense { back_projection } => back_projection * target,
            GridOperator::Fft { transform, inverse_gram } => inverse_gram * transform.adjoint(target),
        }
    }

    /// Complex multiplies of one [`SynthesisContext::field`].
    pub fn field_cost(&self) -> u64 {
        let (m, n) = (self.elements() as u64, self.grid.len() as u64);
        match &self.operator {
            GridOperator::Dense { .. } => m * n,
            GridOperator::Fft { transform, .. } => m + transform.transform_cost(),
        }
    }

    /// Complex multiplies of one [`SynthesisContext::back_project`].
    pub fn back_project_cost(&self) -> u64 {
        let (m, n) = (self.elements() as u64, self.grid.len() as u64);
        match &self.operator {
            GridOperator::Dense { .. } => m * n,
            GridOperator::Fft { transform, .. } => transform.transform_cost() + m + m * m,
        }
    }

    /// Whether the transform path is in use.
    pub fn uses_fft(&self) -> bool {
        matches!(self.operator, GridOperator::Fft { .. })
    }

    pub fn projector(&self) -> &NullSpaceProjector {
        &self.projector
    }

    pub fn blocked(&self) -> &AngularSet {
        &self.blocked
    }

    pub fn blocked_samples(&self) -> &[usize] {
        &self.blocked_samples
    }

    pub fn tikhonov(&self) -> f64 {
        self.mu
    }

    pub fn setup_multiplies(&self) -> u64 {
        self.setup_multiplies
    }

    /// `A^H w` on the grid.
    pub fn field(&self, w: &CVec) -> CVec {
        match &self.operator {
            GridOperator::Dense { .. } => self.dictionary.ad_mul(w),
            GridOperator::Fft { transform, .. } => transform.field(w),
        }
    }

    /// Beam gain `|a(u)^H w|^2` on every grid sample.
    pub fn pattern(&self, w: &CVec) -> Vec<f64> {
        self.field(w).iter().map(|z| z.norm_sqr()).collect()
    }

    /// Largest gain over the blocked samples.
    pub fn blocked_peak(&self, w: &CVec) -> f64 {
        let f = self.field(w);
        self.blocked_samples.iter().map(|&i| f[i].norm_sqr()).fold(0.0, f64::max)
    }
}

/// Tagged target of one codeword.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorSpec {
    target: AngularSet,
    tags: Vec<SampleTag>,
    in_count: usize,
    in_level: f64,
    sidelobe_cap: f64,
    blocked_cap: f64,
}

impl SectorSpec {
    /// Flat-top level `g0 = P N_u / (M N_in)` conserves the total sampled energy `P N_u / M`.
    pub fn new(ctx: &SynthesisContext, target: &AngularSet, cfg: &GsConfig) -> Result<Self> {
        let mut grid = ctx.grid.clone();
        grid.retag(target, &ctx.blocked);
        let in_count = grid.count(SampleTag::InSector);
        if in_count == 0 {
            return Err(Error::invalid("sector contains no unblocked grid samples"));
        }
        let in_level = cfg.power * grid.len() as f64 / (ctx.elements() as f64 * in_count as f64);
        Ok(Self {
            target: target.clone(),
            tags: grid.tags().to_vec(),
            in_count,
            in_level,
            sidelobe_cap: in_level * 10f64.powf(cfg.sidelobe_cap_db / 10.0),
            blocked_cap: in_level * 10f64.powf(cfg.blocked_cap_db / 10.0),
        })
    }

    pub fn target(&self) -> &AngularSet {
        &self.target
    }

    pub fn tags(&self) -> &[SampleTag] {
        &self.tags
    }

    pub fn in_count(&self) -> usize {
        self.in_count
    }

    /// In-sector power level `g0`.
    pub fn in_level(&self) -> f64 {
        self.in_level
    }

    pub fn sidelobe_cap(&self) -> f64 {
        self.sidelobe_cap
    }

    pub fn blocked_cap(&self) -> f64 {
        self.blocked_cap
    }

    /// One-shot least-squares fit of the flat top with zero phase over the in-sector samples.
    pub fn ls_problem(&self, ctx: &SynthesisContext, cfg: &GsConfig) -> LsProblem {
        let pick = |tag: SampleTag| -> CMat {
            let cols: Vec<CVec> = (0..self.tags.len())
                .filter(|&i| self.tags[i] == tag)
                .map(|i| ctx.dictionary.column(i).into_owned())
                .collect();
            if cols.is_empty() {
                CMat::zeros(ctx.elements(), 0)
            } else {
                CMat::from_columns(&cols)
            }
        };
        let a_in = pick(SampleTag::InSector);
        let a_sl = pick(SampleTag::Sidelobe);
        let desired = CVec::from_element(a_in.ncols(), Complex64::new(self.in_level.sqrt(), 0.0));
        let sl_weights = vec![1.0; a_sl.ncols()];
        LsProblem { a_in, desired, a_sl, sl_weights, sidelobe_weight: cfg.sidelobe_weight }
    }
}

fn clamp(z: Complex64, cap: f64) -> Complex64 {
    let mag = z.norm();
    if mag > cap {
        z * (cap / mag)
    } else {
        z
    }
}

/// Target field `F~` for the current field `F = A^H w`.
///
/// In-sector samples keep their phase at amplitude `sqrt(g0)`; sidelobe samples are clamped to the
/// sidelobe cap; blocked samples are zeroed, clamped or passed through depending on `mode`.
pub fn masked_target(field: &CVec, spec: &SectorSpec, mode: NullMode) -> CVec {
    let (g, sl, blk) = (spec.in_level.sqrt(), spec.sidelobe_cap.sqrt(), spec.blocked_cap.sqrt());
    CVec::from_iterator(
        field.len(),
        field.iter().zip(&spec.tags).map(|(&f, tag)| match tag {
            SampleTag::InSector => {
                if f.norm() > 0.0 {
                    f * (g / f.norm())
                } else {
                    Complex64::new(g, 0.0)
                }
            }
            SampleTag::Sidelobe => clamp(f, sl),
            SampleTag::Blocked => match mode {
                NullMode::Hard => Complex64::new(0.0, 0.0),
                NullMode::Soft => clamp(f, blk),
                NullMode::Exclude => f,
            },
        }),
    )
}

/// Projection onto the amplitude constraint with total power `power`.
pub fn apply_amplitude(w: &CVec, mode: AmplitudeMode, power: f64) -> CVec {
    match mode {
        AmplitudeMode::ConstantModulus => {
            let amp = (power / w.len() as f64).sqrt();
            w.map(|z| if z.norm() > 0.0 { z * (amp / z.norm()) } else { Complex64::new(amp, 0.0) })
        }
        AmplitudeMode::PowerNormalized => {
            let n = w.norm();
            if n > 0.0 {
                w * Complex64::new(power.sqrt() / n, 0.0)
            } else {
                CVec::from_element(w.len(), Complex64::new((power / w.len() as f64).sqrt(), 0.0))
            }
        }
    }
}

/// Per-run diagnostics of [`gs_iterate`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GsTrace {
    /// Residual `‖A^H w_t - F~_t‖^2` of every evaluated iterate.
    pub residuals: Vec<f64>,
    /// Running minimum of `residuals`; the returned iterate attains the last entry.
    pub best: Vec<f64>,
    /// Regularised residual before and after each back-projection, same target.
    pub half_steps: Vec<(f64, f64)>,
    /// `max |a(v)^H w| / ‖w‖` over blocked samples after the projector, before the amplitude step.
    pub pre_amplitude_leakage: Vec<f64>,
    /// Back-projection steps performed.
    pub iterations: usize,
    /// First iterate whose relative decrease fell below the tolerance.
    pub converged_at: Option<usize>,
    /// Complex multiplies spent inside the loop.
    pub multiplies: u64,
}

/// Synthesis result: the best iterate and its trace.
#[derive(Clone, Debug, PartialEq)]
pub struct GsOutcome {
    pub weights: CVec,
    pub trace: GsTrace,
}

/// Runs the alternating projection from `init`, returning the iterate with least residual.
pub fn gs_iterate(ctx: &SynthesisContext, spec: &SectorSpec, init: &CVec, cfg: &GsConfig) -> Result<GsOutcome> {
    let m = ctx.elements();
    if init.len() != m {
        return Err(Error::Dimension { expected: m, found: init.len() });
    }
    if spec.tags.len() != ctx.grid.len() {
        return Err(Error::Dimension { expected: ctx.grid.len(), found: spec.tags.len() });
    }
    let hard = cfg.null_mode == NullMode::Hard;
    let mut trace = GsTrace::default();
    let mut w = init.clone();
    let mut best = w.clone();
    let mut best_res = f64::INFINITY;
    for t in 0..=cfg.max_iter {
        let field = ctx.field(&w);
        let target = masked_target(&field, spec, cfg.null_mode);
        let res = (&field - &target).norm_squared();
        trace.multiplies += ctx.field_cost();
        trace.residuals.push(res);
        if res < best_res {
            best_res = res;
            best = w.clone();
        }
        trace.best.push(best_res);
        if t > 0 {
            let prev = trace.residuals[t - 1];
            let decrease = if prev > 0.0 { (prev - res) / prev } else { 0.0 };
            if decrease < cfg.rel_tol && trace.converged_at.is_none() {
                trace.converged_at = Some(t);
                if cfg.early_stop {
                    break;
                }
            }
        }
        if t == cfg.max_iter {
            break;
        }
        let w_hat = ctx.back_project(&target);
        trace.multiplies += ctx.back_project_cost();
        trace.iterations += 1;
        if cfg.detailed_trace {
            let before = res + ctx.mu * w.norm_squared();
            let after = (ctx.field(&w_hat) - &target).norm_squared() + ctx.mu * w_hat.norm_squared();
            trace.half_steps.push((before, after));
        }
        let w_half = if hard {
            trace.multiplies += ctx.projector.apply_cost();
            ctx.projector.apply(&w_hat)
        } else {
            w_hat
        };
        if cfg.detailed_trace && hard {
            let norm = w_half.norm();
            let leak = if norm > 0.0 { ctx.blocked_peak(&w_half).sqrt() / norm } else { 0.0 };
            trace.pre_amplitude_leakage.push(leak);
        }
        w = apply_amplitude(&w_half, cfg.amplitude, cfg.power);
    }
    Ok(GsOutcome { weights: best, trace })
}
