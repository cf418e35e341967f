//! RIS phase design from statistical CSI.
//!
//! The expected effective gain is approximated by the quadratic `phi^H Q phi` with
//! `Q = sum_k w_k beta_BR beta_RU,k (R_RU,k ⊙ R_BR^T)`, maximised over unit-modulus `phi`. This is
//! the form matching the cascade `h_RU^H diag(phi) H_BR` under an isotropic transmit covariance;
//! `R_BR ⊙ R_RU,k^T` is its complex conjugate and is maximised by `conj(phi)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angular::{AngularInterval, ArrayLayout};
use crate::channel::{ChannelRealization, RisPhase};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec};

/// Trace-normalised covariances with their large-scale gains.
#[derive(Clone, Debug, PartialEq)]
pub struct StatCsi {
    pub r_br: CMat,
    pub beta_br: f64,
    pub r_ru: Vec<CMat>,
    pub beta_ru: Vec<f64>,
}

fn normalise(c: CMat) -> Result<(CMat, f64)> {
    if c.nrows() != c.ncols() || c.nrows() == 0 {
        return Err(Error::invalid("covariance must be square and non-empty"));
    }
    let beta = c.trace().re / c.nrows() as f64;
    if beta <= 0.0 {
        return Ok((c, 0.0));
    }
    Ok((c.unscale(beta), beta))
}

impl StatCsi {
    /// Splits raw covariances into `beta R` with `tr(R) = N`.
    pub fn from_raw(c_br: CMat, c_ru: Vec<CMat>) -> Result<Self> {
        let n = c_br.nrows();
        if let Some(bad) = c_ru.iter().find(|c| c.nrows() != n || c.ncols() != n) {
            return Err(Error::Dimension { expected: n, found: bad.nrows() });
        }
        let (r_br, beta_br) = normalise(c_br)?;
        let (r_ru, beta_ru) = c_ru.into_iter().map(normalise).collect::<Result<Vec<_>>>()?.into_iter().unzip();
        Ok(Self { r_br, beta_br, r_ru, beta_ru })
    }

    pub fn raw_br(&self) -> CMat {
        self.r_br.scale(self.beta_br)
    }

    pub fn raw_ru(&self, k: usize) -> CMat {
        self.r_ru[k].scale(self.beta_ru[k])
    }

    pub fn elements(&self) -> usize {
        self.r_br.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceEstimate {
    pub csi: StatCsi,
    /// Fewer snapshots than RIS elements: the sample covariances are rank deficient.
    pub rank_deficient: bool,
}

/// Sample covariances `(1/S) sum H T H^H` and `(1/S) sum h h^H`.
///
/// `transmit` is the BS-side transmit covariance `T`; `None` means isotropic (`T = I`).
pub fn estimate_covariances(
    snapshots: &[ChannelRealization],
    transmit: Option<&CMat>,
) -> Result<CovarianceEstimate> {
    let first = snapshots.first().ok_or_else(|| Error::invalid("no snapshots"))?;
    let (n, m, k) = (first.h_br.nrows(), first.h_br.ncols(), first.users());
    if let Some(t) = transmit {
        if t.nrows() != m || t.ncols() != m {
            return Err(Error::Dimension { expected: m, found: t.nrows() });
        }
    }
    let mut c_br = CMat::zeros(n, n);
    let mut c_ru = vec![CMat::zeros(n, n); k];
    for s in snapshots {
        if s.h_br.nrows() != n || s.h_br.ncols() != m || s.users() != k {
            return Err(Error::Dimension { expected: n, found: s.h_br.nrows() });
        }
        match transmit {
            Some(t) => c_br += &s.h_br * t * s.h_br.adjoint(),
            None => c_br.gemm(Complex64::new(1.0, 0.0), &s.h_br, &s.h_br.adjoint(), Complex64::new(1.0, 0.0)),
        }
        for (c, h) in c_ru.iter_mut().zip(&s.h_ru) {
            c.ger(Complex64::new(1.0, 0.0), h, &h.conjugate(), Complex64::new(1.0, 0.0));
        }
    }
    let inv = 1.0 / snapshots.len() as f64;
    c_br.scale_mut(inv);
    c_ru.iter_mut().for_each(|c| c.scale_mut(inv));
    Ok(CovarianceEstimate {
        csi: StatCsi::from_raw(c_br, c_ru)?,
        rank_deficient: snapshots.len() < n,
    })
}

fn sector_probes(range: AngularInterval, sectors: usize, j: usize, per_sector: usize) -> impl Iterator<Item = f64> {
    let w = range.width() / sectors as f64;
    let lo = range.lo + j as f64 * w;
    (0..per_sector).map(move |i| lo + (i as f64 + 0.5) * w / per_sector as f64)
}

/// Fraction of snapshots in which each BS-side sector's energy drops below 10% of its median.
pub fn estimate_blockage_probability(
    snapshots: &[ChannelRealization],
    layout: &ArrayLayout,
    range: AngularInterval,
    sectors: usize,
) -> Result<Vec<f64>> {
    if snapshots.is_empty() || sectors == 0 {
        return Err(Error::invalid("need snapshots and at least one sector"));
    }
    let probes: Vec<Vec<CVec>> = (0..sectors)
        .map(|j| sector_probes(range, sectors, j, 4).map(|u| layout.steering_u(u)).collect())
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(sectors);
    for sector in &probes {
        let energy: Vec<f64> = snapshots
            .iter()
            .map(|s| sector.iter().map(|a| (&s.h_br * a).norm_squared()).sum())
            .collect();
        let mut sorted = energy.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        let drops = energy.iter().filter(|&&e| e < 0.1 * median).count();
        out.push(drops as f64 / snapshots.len() as f64);
    }
    Ok(out)
}

/// Orthogonal projector onto the steering vectors of the sectors not flagged in `masked`.
///
/// Used as the transmit covariance in [`estimate_covariances`] so that masked sectors do not
/// contribute to `Q`.
pub fn sector_weighting(layout: &ArrayLayout, range: AngularInterval, masked: &[bool]) -> Result<CMat> {
    let sectors = masked.len();
    let per_sector = (2 * layout.len()).div_ceil(sectors.max(1)).max(2);
    let cols: Vec<CVec> = (0..sectors)
        .filter(|&j| !masked[j])
        .flat_map(|j| sector_probes(range, sectors, j, per_sector).collect::<Vec<_>>())
        .map(|u| layout.steering_u(u))
        .collect::<Result<_>>()?;
    let m = layout.len();
    if cols.is_empty() {
        return Ok(CMat::zeros(m, m));
    }
    let q = linalg::orthonormal_basis(&CMat::from_columns(&cols), 1e-10);
    Ok(&q * q.adjoint())
}

/// Hermitian PSD surrogate matrix of the statistical objective.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadSurrogate(CMat);

impl QuadSurrogate {
    pub fn new(q: CMat) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::Dimension { expected: q.nrows(), found: q.ncols() });
        }
        Ok(Self(linalg::hermitize(&q)))
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

pub fn build_q(csi: &StatCsi, weights: &[f64]) -> Result<QuadSurrogate> {
    if weights.len() != csi.r_ru.len() {
        return Err(Error::Dimension { expected: csi.r_ru.len(), found: weights.len() });
    }
    let n = csi.elements();
    let mut q = CMat::zeros(n, n);
    for (k, &w) in weights.iter().enumerate() {
        let scale = w * csi.beta_br * csi.beta_ru[k];
        q += csi.r_ru[k].component_mul(&csi.r_br.transpose()).scale(scale);
    }
    QuadSurrogate::new(q)
}

/// `phi^H Q phi`.
pub fn jstat(phase: &RisPhase, q: &QuadSurrogate) -> f64 {
    linalg::quadratic_form(q.matrix(), phase.as_vector())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOptions {
    pub restarts: usize,
    pub max_iter: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        Self { restarts: 8, max_iter: 500, rel_tol: 1e-10, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSolution {
    pub phase: RisPhase,
    pub value: f64,
    /// Objective after each fixed-point step of the winning start.
    pub trace: Vec<f64>,
    /// Diagonal loading added because `Q` was indefinite (0 for PSD input).
    pub loading: f64,
}

/// Whether `q` is positive semidefinite up to a tiny relative tolerance.
pub fn is_psd(q: &CMat) -> bool {
    let n = q.nrows().max(1) as f64;
    let jitter = 1e-10 * (q.trace().re.abs() / n).max(f64::MIN_POSITIVE);
    linalg::hermitian_cholesky(q + CMat::identity(q.nrows(), q.ncols()).scale(jitter)).is_some()
}

fn fixed_point(q: &CMat, mut phi: CVec, opts: &PhaseOptions) -> (CVec, Vec<f64>) {
    let mut trace = vec![linalg::quadratic_form(q, &phi)];
    for _ in 0..opts.max_iter {
        phi = RisPhase::project(&(q * &phi)).as_vector().clone();
        let v = linalg::quadratic_form(q, &phi);
        let prev = *trace.last().unwrap();
        trace.push(v);
        if (v - prev).abs() <= opts.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (phi, trace)
}

fn leading_eigenvector(q: &CMat, iters: usize) -> CVec {
    let n = q.nrows();
    let mut v = CVec::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.1));
    for _ in 0..iters {
        let next = q * &v;
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        v = next.unscale(norm);
    }
    v
}

/// Multi-start fixed-point ascent `phi <- exp(j arg(Q phi))`.
///
/// The first start uses the phases of the leading eigenvector, the rest are random. Each step is
/// monotone for PSD `Q`; an indefinite `Q` is diagonally loaded, which leaves the maximiser on the
/// unit-modulus torus unchanged.
pub fn optimize_phases(q: &QuadSurrogate, opts: &PhaseOptions) -> Result<PhaseSolution> {
    let n = q.dim();
    if n == 0 || opts.restarts == 0 {
        return Err(Error::invalid("need a non-empty Q and at least one start"));
    }
    let mut loading = 0.0;
    let mut mat = q.matrix().clone();
    if !is_psd(&mat) {
        let min_ev = linalg::hermitian_eigenvalues(&mat)[0];
        loading = -min_ev * (1.0 + 1e-9) + 1e-12;
        for i in 0..n {
            mat[(i, i)] += loading;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(CVec, Vec<f64>)> = None;
    for start in 0..opts.restarts {
        let init = if start == 0 {
            RisPhase::project(&leading_eigenvector(&mat, 50)).as_vector().clone()
        } else {
            RisPhase::from_angles(&(0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect::<Vec<_>>())
                .as_vector()
                .clone()
        };
        let (phi, trace) = fixed_point(&mat, init, opts);
        if best.as_ref().is_none_or(|(_, t)| trace.last() > t.last()) {
            best = Some((phi, trace));
        }
    }
    let (phi, trace) = best.expect("at least one start");
    let shift = loading * n as f64;
    let phase = RisPhase::project(&phi);
    Ok(PhaseSolution {
        value: jstat(&phase, q),
        trace: trace.into_iter().map(|v| v - shift).collect(),
        phase,
        loading,
    })
}

/// Stage-I optimality gap of `phase_hat` under `q_true` against its perturbation bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapBound {
    pub gap: f64,
    /// `N ‖ΔQ‖_2`.
    pub lipschitz: f64,
    /// `(N + 1) ‖ΔQ‖_2`.
    pub bound: f64,
    pub holds: bool,
}

pub fn gap_bound_check(
    q_true: &QuadSurrogate,
    q_hat: &QuadSurrogate,
    phase_star: &RisPhase,
    phase_hat: &RisPhase,
) -> Result<GapBound> {
    let n = q_true.dim();
    if q_hat.dim() != n || phase_star.len() != n || phase_hat.len() != n {
        return Err(Error::Dimension { expected: n, found: q_hat.dim() });
    }
    let delta = linalg::hermitian_spectral_norm(&(q_hat.matrix() - q_true.matrix()));
    let gap = jstat(phase_star, q_true) - jstat(phase_hat, q_true);
    let bound = (n as f64 + 1.0) * delta;
    let slack = 1e-9 * jstat(phase_star, q_true).abs();
    Ok(GapBound { gap, lipschitz: n as f64 * delta, bound, holds: gap <= bound + slack })
}

/// Upper bound on `‖Q_hat - Q‖_2` from covariance errors, including the second-order term.
pub fn delta_q_bound(truth: &StatCsi, estimate: &StatCsi, weights: &[f64]) -> Result<f64> {
    if weights.len() != truth.r_ru.len() || estimate.r_ru.len() != truth.r_ru.len() {
        return Err(Error::Dimension { expected: truth.r_ru.len(), found: weights.len() });
    }
    let c_br = truth.raw_br();
    let d_br = linalg::hermitian_spectral_norm(&(estimate.raw_br() - &c_br));
    let n_br = linalg::hermitian_spectral_norm(&c_br);
    Ok(weights
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let c_ru = truth.raw_ru(k);
            let d_ru = linalg::hermitian_spectral_norm(&(estimate.raw_ru(k) - &c_ru));
            let n_ru = linalg::hermitian_spectral_norm(&c_ru);
            w.abs() * (d_br * n_ru + n_br * d_ru + d_br * d_ru)
        })
        .sum())
}
