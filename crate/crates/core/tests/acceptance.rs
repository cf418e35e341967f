//! Acceptance suite: one test per criterion, each printing a single PASS/FAIL line with the
//! measured quantities. Tolerances are pinned here.

mod common;

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;
use std::sync::OnceLock;

use mabeam::angular::{AngularInterval, AngularSet, ArrayLayout, SpatialConvention};
use mabeam::blockage::{blocked_interval, Blockage, BlockageScene};
use mabeam::channel::{cascade, RisPhase};
use mabeam::codebook::*;
use mabeam::energy::{complexity_report, ComplexityModel, MeasuredOps};
use mabeam::experiments::*;
use mabeam::linalg::{phasor, CMat, CVec};
use mabeam::stage1::{optimize_phases, PhaseOptions, QuadSurrogate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const DENSITIES: [f64; 4] = [0.0, 0.1, 0.3, 0.5];

// Written to the raw stream because the test harness captures `eprintln!`.
#[allow(clippy::explicit_write)]
fn verdict(criterion: &str, pass: bool, detail: String) {
    let line = format!("[acceptance] criterion {criterion}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    writeln!(std::io::stderr(), "{line}").unwrap();
    assert!(pass, "{line}");
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn ula(m: usize) -> ArrayLayout {
    ArrayLayout::ula(m, 0.005, [0.0; 3], SpatialConvention::Cos).unwrap()
}

fn sector(layer: usize, index: usize) -> AngularSet {
    let width = 2.0 / (1usize << layer) as f64;
    AngularInterval::new(-1.0 + index as f64 * width, -1.0 + (index + 1) as f64 * width).unwrap().into()
}

/// A synthesis problem at a random active hierarchy node of a randomly placed scene.
struct Node {
    ctx: SynthesisContext,
    spec: SectorSpec,
    init: CVec,
}

fn random_node(scn: &Scenario, trial: usize, density: f64, cfg: &GsConfig, rng: &mut ChaCha8Rng) -> Node {
    let blockage = trial_blockage(scn, trial, density).unwrap();
    let layout = scn.bs_layout().unwrap();
    let m = layout.len();
    let ctx = SynthesisContext::new(&layout, &blockage.blocked, cfg).unwrap();
    let depth = m.trailing_zeros() as usize;
    let mut active = Vec::new();
    for layer in 1..=depth {
        for index in 0..1usize << layer {
            let target = blockage.available.intersection(&sector(layer, index));
            if target.measure() > 0.0 {
                if let Ok(spec) = SectorSpec::new(&ctx, &target, cfg) {
                    active.push(spec);
                }
            }
        }
    }
    assert!(!active.is_empty(), "density {density} left no active node");
    let spec = active.swap_remove(rng.gen_range(0..active.len()));
    let amp = (cfg.power / m as f64).sqrt();
    let init = CVec::from_fn(m, |_, _| phasor(rng.gen_range(0.0..TAU)) * amp);
    Node { ctx, spec, init }
}

#[test]
fn criterion_01_gs_monotonicity_and_cap() {
    let scn = Scenario::default();
    let cfg = GsConfig { detailed_trace: true, early_stop: false, max_iter: 40, ..scn.gs.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut half_steps, mut violations, mut converged) = (0usize, 0usize, 0usize);
    let mut per_density = Vec::new();
    for (di, &density) in DENSITIES.iter().enumerate() {
        let mut hits = 0;
        for k in 0..100 {
            let node = random_node(&scn, di * 100 + k, density, &cfg, &mut rng);
            let out = gs_iterate(&node.ctx, &node.spec, &node.init, &cfg).unwrap();
            for &(before, after) in &out.trace.half_steps {
                half_steps += 1;
                if after > before * (1.0 + 1e-9) {
                    violations += 1;
                }
            }
            if out.trace.converged_at.is_some_and(|t| t <= 40) {
                hits += 1;
            }
        }
        converged += hits;
        per_density.push(format!("{:.0}%: {hits}/100", density * 100.0));
    }
    let share = converged as f64 / 400.0;
    verdict(
        "1",
        violations == 0 && share >= 0.95,
        format!(
            "{violations} of {half_steps} half-steps increase; {:.1}% reach 1e-4 by t=40 (need 95%) [{}]",
            100.0 * share,
            per_density.join(", ")
        ),
    );
}

fn convergence() -> &'static ConvergenceReport {
    static REPORT: OnceLock<ConvergenceReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let mut scn = Scenario::default();
        scn.gs.max_iter = 100;
        convergence_experiment(&scn, &DENSITIES, 60).unwrap()
    })
}

#[test]
fn criterion_02_convergence_level_and_plateau() {
    let report = convergence();
    let realizations = report.residuals_at(0, None).len();
    let (r20, r100) = (median(&report.residuals_at(20, None)), median(&report.residuals_at(100, None)));
    verdict(
        "2",
        realizations == 240 && (0.5..=0.8).contains(&r20) && (r100 - r20).abs() < 0.05,
        format!("{realizations} realizations; median r20 {r20:.4} (band [0.5, 0.8]); median r100 {r100:.4}, drift {:.4} (< 0.05)", (r100 - r20).abs()),
    );
}

#[test]
fn criterion_03_density_accelerates_convergence() {
    let report = convergence();
    let cap = 101.0;
    let layers = report.iterations.iter().map(|r| r.layer).max().unwrap();
    let mut ok = true;
    let mut table = Vec::new();
    for layer in 1..=layers {
        let medians: Vec<f64> = DENSITIES
            .iter()
            .map(|&d| {
                let its: Vec<f64> = report
                    .iterations
                    .iter()
                    .filter(|r| r.layer == layer && r.density == d)
                    .map(|r| r.iterations.map_or(cap, |i| i as f64))
                    .collect();
                if its.is_empty() { f64::NAN } else { median(&its) }
            })
            .filter(|v| !v.is_nan())
            .collect();
        ok &= medians.windows(2).all(|w| w[1] <= w[0]);
        table.push(format!("L{layer} {:?}", medians));
    }
    verdict("3", ok, format!("median iterations per density 0/10/30/50%: {}", table.join("; ")));
}

#[test]
fn criterion_04_null_depth() {
    let scn = Scenario::default();
    let cfg = GsConfig { detailed_trace: true, ..scn.gs.clone() };
    let eps = 10f64.powf(cfg.blocked_cap_db / 10.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_pre, mut within, mut worst_post_db, mut best_post_db) = (0.0f64, 0usize, f64::MIN, f64::MAX);
    for k in 0..100 {
        let density = DENSITIES[1 + k % 3];
        let node = random_node(&scn, k, density, &cfg, &mut rng);
        let out = gs_iterate(&node.ctx, &node.spec, &node.init, &cfg).unwrap();
        worst_pre = out.trace.pre_amplitude_leakage.iter().copied().fold(worst_pre, f64::max);
        let post = node.ctx.blocked_peak(&out.weights) / node.spec.in_level();
        let post_db = 10.0 * post.max(1e-300).log10();
        worst_post_db = worst_post_db.max(post_db);
        best_post_db = best_post_db.min(post_db);
        if post <= eps {
            within += 1;
        }
    }
    verdict(
        "4",
        worst_pre <= 1e-8 && within >= 90,
        format!(
            "max pre-amplitude leakage {worst_pre:.2e} (<= 1e-8); post-CM leakage <= {:.0} dB on {within}/100 (need 90), range [{best_post_db:.1}, {worst_post_db:.1}] dB",
            cfg.blocked_cap_db
        ),
    );
}

/// Blocked runs of a uniform ray scan over the half plane.
fn scan(scene: &BlockageScene, rays: usize) -> Vec<(f64, f64)> {
    let step = PI / rays as f64;
    let mut runs = Vec::new();
    let mut start: Option<f64> = None;
    for i in 0..rays {
        let az = -FRAC_PI_2 + (i as f64 + 0.5) * step;
        match (ray_blocked([0.0; 3], az, scene), start) {
            (true, None) => start = Some(az),
            (false, Some(s)) => {
                runs.push((s, az - step));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, FRAC_PI_2 - 0.5 * step));
    }
    runs
}

#[test]
fn criterion_05_oracle_equivalences() {
    let deg = PI / 180.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rays = 10_000;
    let slack = 0.1 * deg + 0.5 * PI / rays as f64;
    let fov = AngularInterval { lo: -FRAC_PI_2, hi: FRAC_PI_2 };
    let mut interval_worst = 0.0f64;
    let mut interval_ok = true;
    for _ in 0..500 {
        let az = rng.gen_range(-PI..PI);
        let dist = rng.gen_range(2.0..30.0);
        let radius = dist * rng.gen_range(0.01..0.9);
        let obstacle = Blockage { center: [dist * az.cos(), dist * az.sin(), 0.0], radius };
        let scene = BlockageScene { obstacles: vec![obstacle], ..Default::default() };
        let lib = blocked_interval([0.0; 3], &obstacle, fov);
        let oracle = scan(&scene, rays);
        if lib.intervals().len() != oracle.len() {
            interval_ok = false;
            continue;
        }
        for (iv, (lo, hi)) in lib.intervals().iter().zip(&oracle) {
            interval_worst = interval_worst.max((iv.lo - lo).abs()).max((iv.hi - hi).abs());
        }
    }
    interval_ok &= interval_worst <= slack;

    let layout = ula(32);
    let mut ls_worst = 0.0f64;
    for _ in 0..50 {
        let lo = rng.gen_range(-1.0..0.5);
        let us: Vec<f64> = (0..20).map(|i| lo + (i as f64 + 0.5) * 0.02).collect();
        let blk: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let problem = LsProblem {
            a_in: layout.steering_matrix(&us).unwrap(),
            desired: CVec::from_fn(20, |_, _| phasor(rng.gen_range(0.0..TAU))),
            a_sl: CMat::zeros(32, 0),
            sl_weights: vec![],
            sidelobe_weight: 0.0,
        };
        let mu = 1e-6;
        let proj = NullSpaceProjector::new(&layout.steering_matrix(&blk).unwrap(), 1e-12);
        let basis = gs_basis(&proj, &problem.a_in, 1e-10).unwrap();
        let hard = problem.objective(&solve_hard_ls(&problem, &proj, mu).unwrap(), mu);
        let reduced = problem.objective(&solve_reduced(&basis, &problem, mu).unwrap(), mu);
        ls_worst = ls_worst.max((hard - reduced).abs() / hard.max(1.0));
    }

    let mut cascade_worst = 0.0f64;
    for &(n, m) in &[(1, 1), (4, 3), (64, 16), (256, 64)] {
        let h_br = random_cmat(&mut rng, n, m);
        let h_ru = random_cvec(&mut rng, n);
        let phase = RisPhase::from_angles(&(0..n).map(|_| rng.gen_range(0.0..TAU)).collect::<Vec<_>>());
        let lib = cascade(&h_ru, &phase, &h_br).unwrap();
        let oracle = cascade_loops(&h_ru, phase.as_vector(), &h_br);
        for (a, b) in lib.iter().zip(&oracle) {
            cascade_worst = cascade_worst.max((a - b).norm());
        }
    }
    verdict(
        "5",
        interval_ok && ls_worst <= 1e-8 && cascade_worst < 1e-12,
        format!(
            "(a) worst endpoint error {:.4} deg over 500 scenes (<= 0.1 deg + half step); (b) reduced vs hard relative gap {ls_worst:.2e} (<= 1e-8); (c) cascade error {cascade_worst:.2e} (< 1e-12)",
            interval_worst / deg
        ),
    );
}

fn high_snr_sweep() -> &'static (Scenario, Vec<TrialRow>) {
    static SWEEP: OnceLock<(Scenario, Vec<TrialRow>)> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let scn = Scenario { trials: 12, ..Scenario::default() };
        let spec = SweepSpec { axis: Axis::SnrDb, values: vec![30.0, 40.0], methods: Method::ALL.to_vec() };
        let rows = sweep(&scn, &spec).unwrap();
        (scn, rows)
    })
}

fn summary_of(rows: &[SummaryRow], value: f64, method: Method) -> &SummaryRow {
    rows.iter().find(|s| s.axis_value == value && s.method == method).unwrap()
}

#[test]
fn criterion_06_overhead_bound_and_reduction() {
    let (scn, rows) = high_snr_sweep();
    let depth = scn.system.bs_elements.trailing_zeros() as usize;
    let aware: Vec<&TrialRow> = rows.iter().filter(|r| r.method == Method::Proposed && !r.outage).collect();
    let out_of_bound = aware.iter().filter(|r| !(depth..=2 * depth).contains(&r.evaluations)).count();
    let mean_overhead = |m: Method| {
        let v: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.overhead_to_target as f64).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (proposed, exhaustive) = (mean_overhead(Method::Proposed), mean_overhead(Method::DftExhaustive));
    let ratio = proposed / exhaustive;
    verdict(
        "6",
        out_of_bound == 0 && !aware.is_empty() && ratio <= 0.4,
        format!(
            "{out_of_bound} of {} aware trials outside [{depth}, {}] evaluations; mean overhead to {:.0}% target: proposed {proposed:.2} vs exhaustive {exhaustive:.2}, ratio {ratio:.3} (<= 0.4)",
            aware.len(),
            2 * depth,
            100.0 * scn.training.target_fraction
        ),
    );
}

#[test]
fn criterion_07_rate_ordering() {
    let (_, rows) = high_snr_sweep();
    let summary = summarize(rows);
    let mut ok = true;
    let mut detail = Vec::new();
    let mut peak_gbps = 0.0f64;
    for snr in [30.0, 40.0] {
        let ex = summary_of(&summary, snr, Method::DftExhaustive);
        let prop = summary_of(&summary, snr, Method::Proposed);
        let trad = summary_of(&summary, snr, Method::Traditional);
        let gap = (ex.rate_mean - prop.rate_mean) / ex.rate_mean;
        ok &= ex.rate_mean >= prop.rate_mean && gap <= 0.10;
        peak_gbps = peak_gbps.max(ex.rate_gbps_mean);
        detail.push(format!(
            "{snr} dB: exhaustive {:.3}, proposed {:.3}, traditional {:.3} bit/s/Hz, gap {:.1}%",
            ex.rate_mean,
            prop.rate_mean,
            trad.rate_mean,
            100.0 * gap
        ));
    }
    ok &= (5.0..=12.0).contains(&peak_gbps);
    verdict("7", ok, format!("{}; peak exhaustive {peak_gbps:.2} Gbps (band [5, 12])", detail.join("; ")));
}

#[test]
fn criterion_08_energy_efficiency_shape_and_ordering() {
    let powers = [30.0, 35.0, 40.0, 45.0, 50.0, 60.0, 70.0];
    let scn = Scenario { trials: 24, ..Scenario::default() };
    let spec = SweepSpec { axis: Axis::TxPowerDbm, values: powers.to_vec(), methods: vec![Method::Proposed, Method::Traditional] };
    let summary = summarize(&sweep(&scn, &spec).unwrap());
    let ee = |m: Method| -> Vec<f64> { powers.iter().map(|&p| summary_of(&summary, p, m).ee_mean).collect() };
    let (proposed, traditional) = (ee(Method::Proposed), ee(Method::Traditional));
    let argmax = (0..powers.len()).fold(0, |b, i| if proposed[i] > proposed[b] { i } else { b });
    let interior = argmax > 0 && argmax + 1 < powers.len();
    let dominated: Vec<String> = powers
        .iter()
        .zip(proposed.iter().zip(&traditional))
        .filter(|(_, (p, t))| p < t)
        .map(|(dbm, _)| format!("{dbm}"))
        .collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{:.3}", x / 1e6)).collect::<Vec<_>>().join(" ");
    verdict(
        "8",
        interior && dominated.is_empty(),
        format!(
            "proposed EE peak at {} dBm (interior: {interior}); traditional ahead at [{}] dBm; Mbit/J proposed [{}] traditional [{}]",
            powers[argmax],
            dominated.join(", "),
            fmt(&proposed),
            fmt(&traditional)
        ),
    );
}

#[test]
fn criterion_09_stage1_statistics() {
    let counts = [8usize, 16, 32, 64, 128, 256, 512, 1024];
    let s: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let (br, ru) = covariance_errors(32, &counts, 8, 909);
    let slopes = [loglog_slope(&s, &br), loglog_slope(&s, &ru)];
    let slopes_ok = slopes.iter().all(|v| (-0.65..=-0.35).contains(v));
    let holds = (0..100).filter(|&seed| gap_bound_trial(8, 64, 9000 + seed).holds).count();
    verdict(
        "9",
        slopes_ok && holds == 100,
        format!("log-log error slopes BS-RIS {:.3}, RIS-UE {:.3} (band [-0.65, -0.35]); gap bound held on {holds}/100", slopes[0], slopes[1]),
    );
}

#[test]
fn criterion_10_stage1_optimizer_quality() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_rank_one = f64::MAX;
    for n in [4usize, 16, 64, 256] {
        let v = random_cvec(&mut rng, n);
        let q = QuadSurrogate::new(&v * v.adjoint()).unwrap();
        let sol = optimize_phases(&q, &PhaseOptions::default()).unwrap();
        let optimum = v.iter().map(|z| z.norm()).sum::<f64>().powi(2);
        worst_rank_one = worst_rank_one.min(sol.value / optimum);
    }
    let mut worst_quantized = f64::MAX;
    for _ in 0..3 {
        let q = random_psd(&mut rng, 8, 8);
        let oracle = quantized_exhaustive(&q, 16);
        let sol = optimize_phases(&QuadSurrogate::new(q).unwrap(), &PhaseOptions::default()).unwrap();
        worst_quantized = worst_quantized.min(sol.value / oracle);
    }
    verdict(
        "10",
        worst_rank_one >= 0.999 && worst_quantized >= 0.98,
        format!("worst rank-1 ratio {worst_rank_one:.6} (>= 0.999); worst ratio to 16-level exhaustive at N=8 {worst_quantized:.4} (>= 0.98)"),
    );
}

#[test]
fn criterion_11_complexity_calculator() {
    let model = |array: u64, refresh: Option<u64>| ComplexityModel {
        i_ris: 50,
        i_max: 40,
        refresh_cb_slots: refresh,
        refresh_ris_slots: refresh,
        refresh_blk_slots: refresh,
        obstacles: 4,
        pilot_length: 16,
        users: 2,
        array,
        ris: 256,
        evaluations: 12,
    };
    let big = complexity_report(&model(64, None), MeasuredOps::default()).unwrap();
    let small = complexity_report(&model(32, None), MeasuredOps::default()).unwrap();
    let runtime_ratio = big.proposed_runtime_ops / small.proposed_runtime_ops;
    let envelope_exact = small.gs_envelope_ops == 40.0 * 32f64.powi(3) + 32f64.powi(4);

    let layout = ula(32);
    let fov: AngularSet = AngularInterval::new(-1.0, 1.0).unwrap().into();
    let (_, build) = build_hierarchy(&layout, &fov, &GsConfig::default()).unwrap();
    let measured = MeasuredOps { gs_multiplies: Some(build.multiplies), blockage_predicates: None };
    let report = complexity_report(&model(32, Some(1)), measured).unwrap();
    let ratio = build.multiplies as f64 / report.gs_envelope_ops;
    verdict(
        "11",
        runtime_ratio == 1.2 && envelope_exact && (0.1..=10.0).contains(&ratio),
        format!("runtime ratio M=64/M=32 {runtime_ratio} (exactly 1.2); measured GS multiplies {} = {ratio:.3} x envelope (within 10x)", build.multiplies),
    );
}

#[test]
fn criterion_helpers_are_consistent() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    assert!(sector(2, 3).contains(0.75));
}
