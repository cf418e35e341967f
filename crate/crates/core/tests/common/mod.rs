//! Brute-force oracles shared by the integration tests. None of them call the library routine
//! they check.
#![allow(dead_code)]

use mabeam::blockage::BlockageScene;
use mabeam::linalg::{CMat, CVec};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

/// Segment from `a` to `b` (horizontal plane) intersects the open disc of `radius` at `c`.
pub fn segment_hits_disc(a: [f64; 2], b: [f64; 2], c: [f64; 2], radius: f64) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (fx, fy) = (a[0] - c[0], a[1] - c[1]);
    let qa = dx * dx + dy * dy;
    let qb = 2.0 * (fx * dx + fy * dy);
    let qc = fx * fx + fy * fy - radius * radius;
    if qc < 0.0 {
        return true;
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return false;
    }
    let s = disc.sqrt();
    let t1 = (-qb - s) / (2.0 * qa);
    let t2 = (-qb + s) / (2.0 * qa);
    (0.0..=1.0).contains(&t1) || (0.0..=1.0).contains(&t2) || (t1 < 0.0 && t2 > 1.0)
}

/// Ray from `origin` at `azimuth`, cast as a long segment, hits any obstacle of the scene.
pub fn ray_blocked(origin: [f64; 3], azimuth: f64, scene: &BlockageScene) -> bool {
    const REACH: f64 = 1e6;
    let a = [origin[0], origin[1]];
    let b = [a[0] + REACH * azimuth.cos(), a[1] + REACH * azimuth.sin()];
    scene.obstacles.iter().any(|o| segment_hits_disc(a, b, [o.center[0], o.center[1]], o.radius))
}

/// Point-to-line distance via the 2D cross product `|(o - a) x (b - a)| / |b - a|`.
pub fn cross_product_distance(a: [f64; 3], b: [f64; 3], o: [f64; 3]) -> f64 {
    let (ux, uy) = (b[0] - a[0], b[1] - a[1]);
    let (vx, vy) = (o[0] - a[0], o[1] - a[1]);
    (ux * vy - uy * vx).abs() / (ux * ux + uy * uy).sqrt()
}

/// `g_m = sum_n conj(h_ru[n]) phi[n] h_br[n, m]` by explicit loops.
pub fn cascade_loops(h_ru: &CVec, phi: &CVec, h_br: &CMat) -> Vec<Complex64> {
    let (n, m) = h_br.shape();
    (0..m)
        .map(|col| {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in 0..n {
                acc += h_ru[row].conj() * phi[row] * h_br[(row, col)];
            }
            acc
        })
        .collect()
}

/// `phi^H Q phi` as an explicit double sum.
pub fn quad_form(q: &CMat, phi: &CVec) -> f64 {
    let n = phi.len();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += phi[i].conj() * q[(i, j)] * phi[j];
        }
    }
    acc.re
}

/// Best `phi^H Q phi` over phases quantised to `levels` points per element, with element 0
/// fixed to 1 (the objective is invariant to a common phase). Odometer enumeration with
/// incremental updates of `y = Q phi`.
pub fn quantized_exhaustive(q: &CMat, levels: usize) -> f64 {
    let n = q.nrows();
    let alphabet: Vec<Complex64> =
        (0..levels).map(|l| Complex64::from_polar(1.0, std::f64::consts::TAU * l as f64 / levels as f64)).collect();
    let mut digits = vec![0usize; n];
    let mut phi = vec![Complex64::new(1.0, 0.0); n];
    let mut y: Vec<Complex64> = (0..n).map(|i| (0..n).map(|j| q[(i, j)]).sum()).collect();
    let mut value: f64 = (0..n).map(|i| (phi[i].conj() * y[i]).re).sum();
    let mut best = value;
    loop {
        let mut pos = 1;
        while pos < n && digits[pos] + 1 == levels {
            digits[pos] = 0;
            update(q, &mut phi, &mut y, &mut value, pos, alphabet[0]);
            pos += 1;
        }
        if pos >= n {
            return best;
        }
        digits[pos] += 1;
        update(q, &mut phi, &mut y, &mut value, pos, alphabet[digits[pos]]);
        best = best.max(value);
    }
}

fn update(q: &CMat, phi: &mut [Complex64], y: &mut [Complex64], value: &mut f64, i: usize, next: Complex64) {
    let delta = next - phi[i];
    *value += 2.0 * (delta.conj() * y[i]).re + delta.norm_sqr() * q[(i, i)].re;
    for (r, yr) in y.iter_mut().enumerate() {
        *yr += q[(r, i)] * delta;
    }
    phi[i] = next;
}

/// Minimiser of `‖A_in^H w - d‖^2 + lambda ‖diag(s) A_sl^H w‖^2` over `w` in the null space of
/// `A_blk^H`, via an SVD null-space basis and the Moore-Penrose pseudo-inverse.
pub fn hard_ls_pinv(a_in: &CMat, d: &CVec, a_sl: &CMat, s: &[f64], lambda: f64, a_blk: &CMat) -> CVec {
    let m = a_in.nrows();
    let null = null_basis(a_blk, m);
    let rows_in = a_in.ncols();
    let rows_sl = a_sl.ncols();
    let mut stacked = CMat::zeros(rows_in + rows_sl, m);
    for j in 0..rows_in {
        for i in 0..m {
            stacked[(j, i)] = a_in[(i, j)].conj();
        }
    }
    for j in 0..rows_sl {
        for i in 0..m {
            stacked[(rows_in + j, i)] = a_sl[(i, j)].conj() * s[j] * lambda.sqrt();
        }
    }
    let mut rhs = CVec::zeros(rows_in + rows_sl);
    rhs.rows_mut(0, rows_in).copy_from(d);
    let reduced = &stacked * &null;
    let pinv = reduced.pseudo_inverse(1e-12).expect("pseudo-inverse");
    &null * (pinv * rhs)
}

/// Orthonormal basis of the orthogonal complement of the column span of `a`, from a full SVD of
/// `a^H` padded to square.
pub fn null_basis(a: &CMat, m: usize) -> CMat {
    if a.ncols() == 0 {
        return CMat::identity(m, m);
    }
    let mut padded = CMat::zeros(m.max(a.ncols()), m);
    for j in 0..a.ncols() {
        for i in 0..m {
            padded[(j, i)] = a[(i, j)].conj();
        }
    }
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<CVec> = (0..m)
        .filter(|&k| svd.singular_values.get(k).is_none_or(|&sv| sv <= 1e-10 * smax))
        .map(|k| v_t.row(k).adjoint())
        .collect();
    if cols.is_empty() {
        return CMat::zeros(m, 0);
    }
    CMat::from_columns(&cols)
}

pub fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

pub fn random_cmat<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// `B B^H` for a random `n x rank` factor.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> CMat {
    let b = random_cmat(rng, n, rank);
    &b * b.adjoint()
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    a.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn max_abs(a: &DMatrix<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Least-squares slope of `log(y)` against `log(x)`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

/// Mean Frobenius errors of the sample BS-RIS and first-user RIS-UE covariances against the exact
/// ones, for each snapshot count, averaged over `reps` independent windows.
pub fn covariance_errors(n: usize, snapshot_counts: &[usize], reps: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    use mabeam::angular::{AngularInterval, AngularSet, ArrayLayout, SpatialConvention};
    use mabeam::channel::{ChannelSpec, LargeScale, PathLossModel};
    use rand::SeedableRng;

    let bs = ArrayLayout::ula(8, 0.005, [0.0; 3], SpatialConvention::Cos).unwrap();
    let ris = ArrayLayout::ula(n, 0.005, [0.0, 20.0, 0.0], SpatialConvention::Cos).unwrap();
    let spec = ChannelSpec {
        bs_paths: 9,
        ue_paths: 5,
        bs_ris_m: 20.0,
        ris_ue_m: vec![3.0],
        departure_range: AngularInterval::new(-1.0, 1.0).unwrap(),
        blocked: AngularSet::empty(),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let large = LargeScale::draw(&spec, &PathLossModel::for_wavelength(0.005), &mut rng).unwrap();
    let (r_br, r_ru) = large.covariances(&bs, &ris).unwrap();
    let mut err_br = vec![0.0; snapshot_counts.len()];
    let mut err_ru = vec![0.0; snapshot_counts.len()];
    for (i, &s) in snapshot_counts.iter().enumerate() {
        for _ in 0..reps {
            let snaps: Vec<_> = (0..s).map(|_| large.realize(&bs, &ris, &mut rng).unwrap()).collect();
            let est = mabeam::stage1::estimate_covariances(&snaps, None).unwrap().csi;
            err_br[i] += (est.raw_br() - &r_br).norm() / reps as f64;
            err_ru[i] += (est.raw_ru(0) - &r_ru[0]).norm() / reps as f64;
        }
    }
    (err_br, err_ru)
}

/// One perturbation-bound trial at size `n`: random PSD `Q`, Hermitian perturbation of random
/// size, incumbent from `restarts` starts on `Q`, estimate optimised on `Q_hat`.
pub fn gap_bound_trial(n: usize, restarts: usize, seed: u64) -> mabeam::stage1::GapBound {
    use mabeam::stage1::{gap_bound_check, optimize_phases, PhaseOptions, QuadSurrogate};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let q = random_psd(&mut rng, n, n);
    let e = random_cmat(&mut rng, n, n);
    let scale = 10f64.powf(rng.gen_range(-3.0..0.0)) * q.norm() / n as f64;
    let q_hat = &q + (&e + e.adjoint()).scale(0.5 * scale);
    let (q, q_hat) = (QuadSurrogate::new(q).unwrap(), QuadSurrogate::new(q_hat).unwrap());
    let star = optimize_phases(&q, &PhaseOptions { restarts, seed, ..Default::default() }).unwrap();
    let hat = optimize_phases(&q_hat, &PhaseOptions { seed: seed + 1, ..Default::default() }).unwrap();
    gap_bound_check(&q, &q_hat, &star.phase, &hat.phase).unwrap()
}
