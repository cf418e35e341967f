use mabeam::angular::{AngularInterval, ArrayLayout, SpatialConvention};
use mabeam::codebook::{build_hierarchy, GsConfig};
use mabeam::energy::*;
use mabeam::Error;

fn model() -> EnergyModel {
    EnergyModel::default()
}

/// Slot energy bookkeeping written out term by term.
fn ee_oracle(m: &EnergyModel, capacity: f64, moves: usize, p_d: f64) -> f64 {
    let moving = moves as f64 * m.move_time_s;
    let data = m.slot_s - moving;
    let bits = data * capacity;
    let joules = moving * m.motion_power_w + data * (p_d / m.amp_efficiency);
    bits / joules
}

#[test]
fn data_power_examples() {
    assert!((data_power(&model(), 64) - 19.3).abs() < 1e-12);
    let no_dynamic = EnergyModel { dynamic_power_per_antenna_w: 0.0, ..model() };
    assert_eq!(data_power(&no_dynamic, 64), no_dynamic.static_power_w);
    let no_static = EnergyModel { static_power_w: 0.0, ..model() };
    assert!((data_power(&no_static, 128) - 2.0 * data_power(&no_static, 64)).abs() < 1e-12);
}

#[test]
fn efficiency_matches_slot_bookkeeping() {
    let m = model();
    for moves in [0usize, 1, 3, 50] {
        for capacity in [0.0, 1e6, 8.7e9] {
            let lib = energy_efficiency(&m, capacity, moves, 19.3).unwrap();
            let oracle = ee_oracle(&m, capacity, moves, 19.3);
            assert!((lib - oracle).abs() <= 1e-12 * oracle.max(1.0), "{moves} {capacity}: {lib} vs {oracle}");
        }
    }
    assert_eq!(energy_efficiency(&m, 0.0, 2, 19.3).unwrap(), 0.0);
    assert!((energy_efficiency(&m, 1e9, 0, 19.3).unwrap() - 1e9 * 0.2 / 19.3).abs() < 1e-3);
}

#[test]
fn efficiency_decreases_with_moves() {
    let m = model();
    let ee: Vec<f64> = (0..399).map(|k| energy_efficiency(&m, 5e9, k, 19.3).unwrap()).collect();
    assert!(ee.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn efficiency_increases_with_amplifier_efficiency() {
    let ee: Vec<f64> = (1..=20)
        .map(|i| {
            let m = EnergyModel { amp_efficiency: i as f64 / 20.0, ..model() };
            energy_efficiency(&m, 5e9, 1, 19.3).unwrap()
        })
        .collect();
    assert!(ee.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn efficiency_errors() {
    let m = model();
    assert!(matches!(energy_efficiency(&m, 1e9, 400, 19.3), Err(Error::NoDataTime { .. })));
    assert!(energy_efficiency(&m, -1.0, 0, 19.3).is_err());
    assert!(energy_efficiency(&EnergyModel { amp_efficiency: 0.0, ..model() }, 1e9, 0, 19.3).is_err());
}

fn complexity(array: u64, refresh: Option<u64>) -> ComplexityModel {
    ComplexityModel {
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
    }
}

#[test]
fn runtime_term_example() {
    let report = complexity_report(&complexity(64, Some(300)), MeasuredOps::default()).unwrap();
    assert_eq!(report.runtime_ops, 384.0);
    assert_eq!(report.proposed_runtime_ops, 384.0);
    assert_eq!(report.beam_ops, 64.0 * 64.0);
}

#[test]
fn never_refreshing_leaves_only_runtime_terms() {
    let report = complexity_report(&complexity(64, None), MeasuredOps::default()).unwrap();
    assert_eq!((report.gs_ops, report.blockage_ops, report.ris_ops), (0.0, 0.0, 0.0));
    assert_eq!(report.total_ops, report.runtime_ops + report.beam_ops);
}

#[test]
fn amortised_terms_match_closed_forms() {
    let report = complexity_report(&complexity(32, Some(10)), MeasuredOps::default()).unwrap();
    let (m, n, o) = (32f64, 256f64, 4f64);
    assert_eq!(report.gs_envelope_ops, 40.0 * m.powi(3) + m.powi(4));
    assert!((report.gs_ops - report.gs_envelope_ops / 10.0).abs() < 1e-9);
    assert!((report.blockage_ops - (m * n * o + m * o * 2.0) / 10.0).abs() < 1e-9);
    assert!((report.ris_ops - 50.0 * n.powi(3) / 10.0).abs() < 1e-6);
    let sum = report.runtime_ops + report.gs_ops + report.blockage_ops + report.ris_ops + report.beam_ops;
    assert!((report.total_ops - sum).abs() < 1e-9 * sum);
}

#[test]
fn proposed_runtime_scales_logarithmically() {
    let big = complexity_report(&complexity(64, None), MeasuredOps::default()).unwrap();
    let small = complexity_report(&complexity(32, None), MeasuredOps::default()).unwrap();
    assert_eq!(big.proposed_runtime_ops / small.proposed_runtime_ops, 1.2);
}

#[test]
fn zero_sizes_are_rejected() {
    assert!(complexity_report(&ComplexityModel { users: 0, ..complexity(64, None) }, MeasuredOps::default()).is_err());
    assert!(complexity_report(&complexity(64, Some(0)), MeasuredOps::default()).is_err());
}

#[test]
fn measured_synthesis_work_is_within_the_envelope() {
    let layout = ArrayLayout::ula(32, 0.005, [0.0; 3], SpatialConvention::Cos).unwrap();
    let fov = AngularInterval::new(-1.0, 1.0).unwrap().into();
    let (_, build) = build_hierarchy(&layout, &fov, &GsConfig::default()).unwrap();
    let measured = MeasuredOps { gs_multiplies: Some(build.multiplies), blockage_predicates: None };
    let report = complexity_report(&complexity(32, Some(1)), measured).unwrap();
    let ratio = build.multiplies as f64 / report.gs_envelope_ops;
    assert!((0.1..=10.0).contains(&ratio), "{ratio}");
    let text = report.to_string();
    assert!(text.contains("measured synthesis multiplies"));
    assert!(report.to_json().unwrap().contains("gs_envelope_ops"));
}
