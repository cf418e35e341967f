mod common;

use mabeam::angular::{AngularInterval, AngularSet, ArrayLayout, SpatialConvention};
use mabeam::channel::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{cascade_loops, random_cmat, random_cvec};

const WAVELENGTH: f64 = 0.005;

fn arrays(m: usize, n: usize) -> (ArrayLayout, ArrayLayout) {
    let bs = ArrayLayout::ula(m, WAVELENGTH, [0.0; 3], SpatialConvention::Cos).unwrap();
    let ris = ArrayLayout::ula(n, WAVELENGTH, [0.0, 20.0, 0.0], SpatialConvention::Cos).unwrap();
    (bs, ris)
}

fn spec(bs_paths: usize) -> ChannelSpec {
    ChannelSpec {
        bs_paths,
        ue_paths: 5,
        bs_ris_m: 20.0,
        ris_ue_m: vec![3.0, 4.0],
        departure_range: AngularInterval::new(-1.0, 1.0).unwrap(),
        blocked: AngularSet::empty(),
    }
}

fn random_phase(rng: &mut ChaCha8Rng, n: usize) -> RisPhase {
    RisPhase::from_angles(&(0..n).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect::<Vec<_>>())
}

#[test]
fn los_probability_is_strictly_decreasing() {
    let model = PathLossModel::for_wavelength(WAVELENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut d: Vec<f64> = (0..100).map(|_| rng.gen_range(0.0..200.0)).collect();
    d.sort_by(f64::total_cmp);
    d.dedup();
    let p: Vec<f64> = d.iter().map(|&x| model.los_probability(x)).collect();
    assert!(p.windows(2).all(|w| w[1] < w[0]));
    assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
}

#[test]
fn infinite_los_scale_always_draws_los() {
    let model = PathLossModel { los_scale_m: f64::INFINITY, ..PathLossModel::for_wavelength(WAVELENGTH) };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    assert!((0..1000).all(|_| model.sample_path_gain(30.0, &mut rng).los));
}

#[test]
fn unit_distance_gain_is_a_reference_constant() {
    let model = PathLossModel::for_wavelength(WAVELENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let g = model.sample_path_gain(1.0, &mut rng);
        assert_eq!(g.power, if g.los { model.los_gain } else { model.nlos_gain });
    }
}

#[test]
fn empirical_los_fraction_matches_probability() {
    let model = PathLossModel::for_wavelength(WAVELENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 40.0;
    let los = (0..100_000).filter(|_| model.sample_path_gain(d, &mut rng).los).count();
    assert!((los as f64 / 1e5 - model.los_probability(d)).abs() < 0.01);
}

fn rank(h: &mabeam::linalg::CMat) -> usize {
    let sv = h.singular_values();
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top).count()
}

#[test]
fn single_path_channel_has_rank_one() {
    let (bs, ris) = arrays(8, 16);
    let h = synthesize_channels(&bs, &ris, &spec(1), &PathLossModel::for_wavelength(WAVELENGTH), 7).unwrap();
    assert_eq!(rank(&h.h_br), 1);
}

#[test]
fn rank_is_bounded_by_path_count() {
    let (bs, ris) = arrays(16, 32);
    for seed in 0..20 {
        let h = synthesize_channels(&bs, &ris, &spec(9), &PathLossModel::for_wavelength(WAVELENGTH), seed).unwrap();
        assert!(rank(&h.h_br) <= 9);
    }
}

#[test]
fn synthesis_is_deterministic() {
    let (bs, ris) = arrays(8, 16);
    let model = PathLossModel::for_wavelength(WAVELENGTH);
    let a = synthesize_channels(&bs, &ris, &spec(9), &model, 99).unwrap();
    let b = synthesize_channels(&bs, &ris, &spec(9), &model, 99).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, synthesize_channels(&bs, &ris, &spec(9), &model, 100).unwrap());
}

#[test]
fn frobenius_energy_matches_normalisation() {
    let (bs, ris) = arrays(16, 32);
    let model = PathLossModel::for_wavelength(WAVELENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let large = LargeScale::draw(&spec(9), &model, &mut rng).unwrap();
    let expected = (16.0 * 32.0 / 9.0) * large.bs_ris.iter().map(|p| p.power).sum::<f64>();
    let mean = (0..100).map(|_| large.realize(&bs, &ris, &mut rng).unwrap().h_br.norm_squared()).sum::<f64>() / 100.0;
    assert!((mean / expected - 1.0).abs() < 0.05, "{mean} vs {expected}");
}

#[test]
fn cascade_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for &(n, m) in &[(1, 1), (4, 3), (64, 16), (256, 64)] {
        let h_br = random_cmat(&mut rng, n, m);
        let h_ru = random_cvec(&mut rng, n);
        let phase = random_phase(&mut rng, n);
        let lib = cascade(&h_ru, &phase, &h_br).unwrap();
        let oracle = cascade_loops(&h_ru, phase.as_vector(), &h_br);
        for (a, b) in lib.iter().zip(&oracle) {
            assert!((a - b).norm() < 1e-12, "N = {n}: {a} vs {b}");
        }
    }
}

#[test]
fn scalar_ris_cascade() {
    let h_br = mabeam::linalg::CMat::from_row_slice(1, 2, &[Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.0)]);
    let h_ru = mabeam::linalg::CVec::from_element(1, Complex64::new(0.0, 1.0));
    let g = cascade(&h_ru, &RisPhase::identity(1), &h_br).unwrap();
    assert_eq!(g[0], Complex64::new(0.0, -1.0) * Complex64::new(1.0, 2.0));
    assert_eq!(g[1], Complex64::new(0.0, -1.0) * Complex64::new(-0.5, 0.0));
}

#[test]
fn cascade_is_linear_and_global_phase_blind() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, m) = (32, 8);
    let h_br = random_cmat(&mut rng, n, m);
    let h_ru = random_cvec(&mut rng, n);
    let phase = random_phase(&mut rng, n);
    let g = cascade(&h_ru, &phase, &h_br).unwrap();
    let rotated = RisPhase::new(phase.as_vector() * Complex64::from_polar(1.0, 1.234)).unwrap();
    let g_rot = cascade(&h_ru, &rotated, &h_br).unwrap();
    for _ in 0..20 {
        let (w1, w2) = (random_cvec(&mut rng, m), random_cvec(&mut rng, m));
        let alpha = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let lhs = g.dot(&(&w1 * alpha + &w2));
        let rhs = g.dot(&w1) * alpha + g.dot(&w2);
        assert!((lhs - rhs).norm() < 1e-12 * (1.0 + lhs.norm()));
        assert!((g.dot(&w1).norm() - g_rot.dot(&w1).norm()).abs() < 1e-12 * (1.0 + g.dot(&w1).norm()));
    }
}

#[test]
fn snr_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = random_cvec(&mut rng, 8);
    let (p, noise) = (0.5, 1e-3);
    let mut orth = random_cvec(&mut rng, 8);
    let proj = h.conjugate().dotc(&orth) / h.norm_squared();
    orth -= h.conjugate() * proj;
    assert!(snr(&h, &orth, p, noise) < 1e-20);
    let mf = h.conjugate().unscale(h.norm());
    assert!((snr(&h, &mf, p, noise) - p * h.norm_squared() / noise).abs() < 1e-9 * p * h.norm_squared() / noise);
    assert!((matched_filter_snr(&h, 1.0, p, noise) - snr(&h, &mf, p, noise)).abs() < 1e-9 * snr(&h, &mf, p, noise));
    let w = random_cvec(&mut rng, 8);
    let direct: Complex64 = (0..8).map(|i| h[i] * w[i]).sum();
    assert!((snr(&h, &w, p, noise) - p * direct.norm_sqr() / noise).abs() < 1e-9 * snr(&h, &w, p, noise));
    assert!((snr(&h, &w, 2.0 * p, noise) - 2.0 * snr(&h, &w, p, noise)).abs() < 1e-9 * snr(&h, &w, p, noise));
}

#[test]
fn rate_closed_forms_and_monotonicity() {
    assert_eq!(rate(0.0), 0.0);
    assert_eq!(rate(1.0), 1.0);
    assert_eq!(rate(255.0), 8.0);
    assert_eq!(capacity(255.0, 1e9), 8e9);
    let grid: Vec<f64> = (0..100).map(|i| rate(i as f64 * 0.37)).collect();
    assert!(grid.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn exact_covariance_matches_sample_average() {
    let (bs, ris) = arrays(8, 16);
    let model = PathLossModel::for_wavelength(WAVELENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let large = LargeScale::draw(&spec(3), &model, &mut rng).unwrap();
    let (r_br, r_ru) = large.covariances(&bs, &ris).unwrap();
    let trials = 20_000;
    let mut acc_br = mabeam::linalg::CMat::zeros(16, 16);
    let mut acc_ru = mabeam::linalg::CMat::zeros(16, 16);
    for _ in 0..trials {
        let h = large.realize(&bs, &ris, &mut rng).unwrap();
        acc_br += &h.h_br * h.h_br.adjoint();
        acc_ru += &h.h_ru[0] * h.h_ru[0].adjoint();
    }
    let scale = 1.0 / trials as f64;
    let err_br = (acc_br * Complex64::new(scale, 0.0) - &r_br).norm() / r_br.norm();
    let err_ru = (acc_ru * Complex64::new(scale, 0.0) - &r_ru[0]).norm() / r_ru[0].norm();
    assert!(err_br < 0.05 && err_ru < 0.05, "{err_br} {err_ru}");
}
