mod common;

use std::f64::consts::PI;

use common::*;
use plain_core::crb::{crb_evaluate, fisher_information, model_jacobian, PARAMS_PER_PATH};
use plain_core::scenario::{synthesize_channel, GridSpec, PathParams, Scenario};
use plain_core::C64;
use proptest::prelude::*;

fn grid() -> GridSpec {
    GridSpec { n_a: 6, n_f: 12, n_t: 10, ..GridSpec::default() }
}

fn path() -> impl Strategy<Value = PathParams> {
    (20.0f64..160.0, 20.0f64..400.0, -25.0f64..25.0, 0.2f64..2.0, -PI..PI).prop_map(|(a, d, v, m, p)| {
        PathParams::from_physical(a, d, v, C64::from_polar(m, p), &grid())
    })
}

fn perturbed(p: &PathParams, k: usize, h: f64) -> PathParams {
    let mut q = p.clone();
    match k {
        0 => q.angle_deg = (p.angle_deg.to_radians() + h).to_degrees(),
        1 => q.delay_s += h,
        2 => q.doppler_hz += h,
        3 => q.gain += C64::new(h, 0.0),
        _ => q.gain += C64::new(0.0, h),
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn fim_is_symmetric_psd_and_bounds_positive(paths in prop::collection::vec(path(), 1..4), log_var in -4.0f64..1.0) {
        let sc = Scenario::new(grid(), paths).unwrap();
        let var = 10f64.powf(log_var);
        let fim = fisher_information(&sc, var).unwrap();
        prop_assert!((&fim - fim.transpose()).norm() <= 1e-12 * fim.norm());
        let eig = fim.clone().symmetric_eigen();
        let top = eig.eigenvalues.max();
        prop_assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-9 * top));
        let r = crb_evaluate(&sc, var).unwrap();
        if !r.singular {
            for b in &r.paths {
                prop_assert!(b.angle_deg > 0.0 && b.distance_m > 0.0 && b.velocity_kmh > 0.0);
                prop_assert!(b.gain_re > 0.0 && b.gain_im > 0.0);
            }
        }
    }

    #[test]
    fn single_path_angle_bound_ignores_velocity(p in path(), v in -25.0f64..25.0) {
        let g = grid();
        let q = PathParams::from_physical(p.angle_deg, p.physical(plain_core::scenario::DimKind::Delay, &g), v, p.gain, &g);
        let a = crb_evaluate(&Scenario::new(g.clone(), vec![p]).unwrap(), 0.1).unwrap();
        let b = crb_evaluate(&Scenario::new(g, vec![q]).unwrap(), 0.1).unwrap();
        let (x, y) = (a.paths[0].angle_deg, b.paths[0].angle_deg);
        prop_assert!((x - y).abs() <= 1e-8 * x, "{} vs {}", x, y);
    }

    #[test]
    fn more_antennas_tighten_the_angle_bound(p in path()) {
        let small = grid();
        let big = GridSpec { n_a: 2 * small.n_a, ..small.clone() };
        let a = crb_evaluate(&Scenario::new(small, vec![p.clone()]).unwrap(), 0.1).unwrap();
        let b = crb_evaluate(&Scenario::new(big, vec![p]).unwrap(), 0.1).unwrap();
        prop_assert!(b.paths[0].angle_deg < a.paths[0].angle_deg);
    }

    #[test]
    fn jacobian_matches_central_differences(paths in prop::collection::vec(path(), 1..3)) {
        let g = grid();
        let sc = Scenario::new(g.clone(), paths.clone()).unwrap();
        let j = model_jacobian(&sc);
        // Step sizes relative to each parameter's natural scale.
        let steps = [1e-5, 1e-12, 1e-1, 1e-6, 1e-6];
        for p in 0..paths.len() {
            for (k, &h) in steps.iter().enumerate() {
                let col = p * PARAMS_PER_PATH + k;
                let mut plus = paths.clone();
                let mut minus = paths.clone();
                plus[p] = perturbed(&paths[p], k, h);
                minus[p] = perturbed(&paths[p], k, -h);
                let hp = synthesize_channel::<f64>(&Scenario::new(g.clone(), plus).unwrap());
                let hm = synthesize_channel::<f64>(&Scenario::new(g.clone(), minus).unwrap());
                let fd: Vec<C64> = hp.data().iter().zip(hm.data()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
                let an: Vec<C64> = j.column(col).iter().copied().collect();
                let err = max_abs_diff(&fd, &an) / max_abs(&an);
                prop_assert!(err < 1e-6, "path {} param {}: relative error {}", p, k, err);
            }
        }
    }
}

/// Monte-Carlo MSE of PLAIN may not undercut the bound by more than three
/// standard errors.
#[test]
fn plain_does_not_beat_the_bound() {
    use plain_core::evaluation::{run_sweep, PlainConfig, ScenarioSpec, SchemeSpec, SweepConfig};
    use plain_core::scenario::{DimKind, PowerReference};
    let scheme = SchemeSpec::from_label("plain", &PlainConfig::default(), 4, &Default::default()).unwrap();
    let trials = 60;
    let cfg = SweepConfig {
        grid: GridSpec::default(),
        scenario: ScenarioSpec::default(),
        schemes: vec![scheme],
        snr_db: vec![25.0],
        trials,
        seed: 11,
        power: PowerReference::Thermal,
        sort_by: DimKind::Angle,
        true_np_override: true,
        timing: false,
        threads: None,
    };
    let out = run_sweep::<f64>(&cfg).unwrap();
    assert!(out.rows.iter().all(|r| !r.failed));
    for m in 0..3 {
        let e: Vec<f64> = out.rows.iter().map(|r| r.rmse()[m].powi(2)).collect();
        let mse = e.iter().sum::<f64>() / trials as f64;
        let sd = (e.iter().map(|x| (x - mse).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt();
        let bound = out.rows.iter().map(|r| r.crb()[m].powi(2)).sum::<f64>() / trials as f64;
        println!("dim {m}: mse {mse:.3e}, bound {bound:.3e}, se {:.3e}", sd / (trials as f64).sqrt());
        assert!(mse >= bound - 3.0 * sd / (trials as f64).sqrt(), "dim {m}: mse {mse} below bound {bound}");
    }
}

/// Every property of this file, for the acceptance run.
#[allow(dead_code)]
pub fn properties() -> Vec<(&'static str, fn())> {
    vec![
        ("fim_is_symmetric_psd_and_bounds_positive", fim_is_symmetric_psd_and_bounds_positive as fn()),
        ("single_path_angle_bound_ignores_velocity", single_path_angle_bound_ignores_velocity as fn()),
        ("more_antennas_tighten_the_angle_bound", more_antennas_tighten_the_angle_bound as fn()),
        ("jacobian_matches_central_differences", jacobian_matches_central_differences as fn()),
        ("plain_does_not_beat_the_bound", plain_does_not_beat_the_bound as fn()),
    ]
}
