//! Acceptance criteria C1-C10. Each criterion prints one `PASS`/`FAIL` line
//! to stderr (outside the harness's capture) and then asserts.

#[path = "prop_baselines.rs"]
mod prop_baselines;
#[path = "prop_crb.rs"]
mod prop_crb;

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use plain_core::baselines::EspritConfig;
use plain_core::compression::{compress, CompressionPlan, Scheme};
use plain_core::crb::{crb_evaluate, model_jacobian, PARAMS_PER_PATH};
use plain_core::estimation::{estimate_dimension, DimensionSpec, EstimatorConfig};
use plain_core::evaluation::{
    measure_runtime, run_plain, run_sweep, scenario_seed, truth_params, PlainConfig, RmseReport, ScenarioSpec,
    SchemeKind, SchemeSpec, SweepConfig, SweepOutput,
};
use plain_core::fusion::{rank_paths, select_objects, selection_count, CoreEstimate, FusionMethod, Selection};
use plain_core::scenario::{
    add_noise, free_space_path_loss, generate_equidistant_scenario, generate_random_scenario, synthesize_channel,
    DimKind, GridSpec, PathParams, PowerReference, Ranges, Scenario,
};
use plain_core::{Tensor, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{id} {verdict}: {detail}");
    assert!(pass, "{id} failed: {detail}");
}

fn labelled(label: &str, kind: SchemeKind) -> SchemeSpec {
    SchemeSpec { label: label.into(), kind }
}

fn scheme(label: &str) -> SchemeSpec {
    SchemeSpec::from_label(label, &PlainConfig::default(), 4, &EspritConfig::default()).unwrap()
}

fn sweep(scenario: ScenarioSpec, schemes: Vec<SchemeSpec>, snr_db: Vec<f64>, trials: usize, seed: u64, sort_by: DimKind) -> SweepOutput {
    let cfg = SweepConfig {
        grid: GridSpec::default(),
        scenario,
        schemes,
        snr_db,
        trials,
        seed,
        power: PowerReference::Thermal,
        sort_by,
        true_np_override: true,
        timing: false,
        threads: None,
    };
    run_sweep::<f64>(&cfg).unwrap()
}

fn find<'a>(out: &'a SweepOutput, scheme: &str, snr: f64) -> &'a RmseReport {
    out.reports.iter().find(|r| r.scheme == scheme && r.snr_db == snr).expect("report present")
}

fn base_scenario() -> ScenarioSpec {
    ScenarioSpec::default()
}

#[test]
fn c01_compression_bookkeeping() {
    let _g = serial();
    let grid = GridSpec::default();
    let sc = generate_equidistant_scenario(6, &Ranges::default(), &grid, 1, &free_space_path_loss).unwrap();
    let h = synthesize_channel::<f64>(&sc);
    let factors = [1, 4, 14];
    let start = Instant::now();
    let avg = compress(&h, &CompressionPlan::uniform(Scheme::Average, &factors)).unwrap();
    let dec = compress(&h, &CompressionPlan::uniform(Scheme::DecimateSnapshots, &factors)).unwrap();
    let smooth = compress(&h, &CompressionPlan::uniform(Scheme::Smooth, &factors).with_max_snapshots(100)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let before = h.len();
    let after = avg.tensor.len();
    let reduction = 1.0 - after as f64 / before as f64;
    let pass = avg.tensor.shape() == [16, 45, 40]
        && before == 1_612_800
        && after == 28_800
        && reduction >= 0.98
        && dec.snapshots == 56
        && dec.tensor.shape() == [16, 45, 40, 56]
        && smooth.snapshots == 100
        && smooth.tensor.shape() == [16, 45, 40, 100]
        && elapsed < 1.0;
    report(
        "C1",
        pass,
        &format!(
            "shape {:?}, {before} -> {after} elements ({:.2}% reduction), decimate_snapshots S={}, smoothing S={}, {elapsed:.3} s",
            avg.tensor.shape(),
            100.0 * reduction,
            dec.snapshots,
            smooth.snapshots
        ),
    );
}

#[test]
fn c02_noiseless_exactness() {
    let _g = serial();
    let grid = GridSpec::default();
    let start = Instant::now();
    let mut exact = 0;
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let sc = generate_equidistant_scenario(3, &Ranges::default(), &grid, seed, &free_space_path_loss).unwrap();
        let h = synthesize_channel::<f64>(&sc);
        let set = run_plain(&h, &grid, &PlainConfig::default()).unwrap();
        let truth = truth_params(&sc);
        let mut used = vec![false; set.len()];
        let mut paired = set.len() == truth.len();
        for t in &truth {
            let hit = set.objects.iter().enumerate().position(|(i, o)| {
                !used[i]
                    && (0..3).all(|m| {
                        let err = (o.params[m] - t[m]).abs() / t[m].abs().max(1.0);
                        err <= 1e-5
                    })
            });
            match hit {
                Some(i) => {
                    used[i] = true;
                    for m in 0..3 {
                        worst = worst.max((set.objects[i].params[m] - t[m]).abs() / t[m].abs().max(1.0));
                    }
                }
                None => paired = false,
            }
        }
        exact += paired as usize;
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "C2",
        exact == 50 && elapsed < 30.0,
        &format!("{exact}/50 seeds exact and correctly paired, worst relative error {worst:.2e}, {elapsed:.1} s"),
    );
}

#[test]
fn c03_model_order_shared_angle() {
    let _g = serial();
    let grid = GridSpec::default();
    let plan = CompressionPlan::uniform(Scheme::Average, &[1, 4, 14]);
    let mut lines = Vec::new();
    let mut pass = true;
    for snr in [20.0, 30.0] {
        let (mut orders_ok, mut count_ok) = (0, 0);
        for trial in 0..50u64 {
            let mut r = ChaCha8Rng::seed_from_u64(trial);
            let paths = [(100.0, 4.0), (200.0, 12.0), (300.0, 20.0)]
                .iter()
                .map(|&(d, v)| PathParams::from_physical(70.0, d, v, C64::from_polar(1.0, r.random_range(0.0..6.28)), &grid))
                .collect();
            let sc = Scenario::new(grid.clone(), paths).unwrap();
            let obs = add_noise(&synthesize_channel::<f64>(&sc), &sc, snr, PowerReference::Thermal, 1000 + trial).unwrap();
            let input = compress(&obs.tensor, &plan).unwrap();
            let specs = DimensionSpec::for_input(&grid, &input);
            let est: Vec<_> = (0..3).map(|m| estimate_dimension(&input, m, &specs[m], &EstimatorConfig::default()).unwrap()).collect();
            let orders: Vec<usize> = est.iter().map(|e| e.model_order).collect();
            if orders[0] == 1 && orders[1] == 3 {
                orders_ok += 1;
            }
            // Max-rule selection on any core of the estimated sizes.
            let core = CoreEstimate::<f64> {
                core: Tensor::zeros(&[orders[0].max(1), orders[1].max(1), orders[2].max(1), 1]),
                method: FusionMethod::Ls,
                truncated: false,
            };
            let n = selection_count(&orders, Selection::MaxRule, Some(&core));
            if select_objects(&orders, &rank_paths(&core), n).len() == 3 {
                count_ok += 1;
            }
        }
        pass &= orders_ok >= 45 && count_ok >= 45;
        lines.push(format!("{snr} dB: orders (1,3) in {orders_ok}/50, N_P=3 selected in {count_ok}/50"));
    }
    report("C3", pass, &lines.join("; "));
}

#[test]
fn c04_omp_beats_ls_in_close_scenario() {
    let _g = serial();
    let close = ScenarioSpec { ranges: Ranges::close(), ..base_scenario() };
    let out = sweep(close, vec![scheme("plain-ls"), scheme("plain-omp")], vec![0.0], 200, 404, DimKind::Delay);
    let ls = find(&out, "plain-ls", 0.0);
    let omp = find(&out, "plain-omp", 0.0);
    let ratio = ls.rmse[1] / omp.rmse[1];
    report(
        "C4",
        ratio >= 2.0 && ls.failures == 0 && omp.failures == 0,
        &format!(
            "close scenario, 0 dB, 200 trials: distance RMSE LS {:.3} m vs OMP {:.3} m (ratio {ratio:.2}, need >= 2)",
            ls.rmse[1], omp.rmse[1]
        ),
    );
}

fn base_sweep() -> &'static SweepOutput {
    static OUT: std::sync::OnceLock<SweepOutput> = std::sync::OnceLock::new();
    OUT.get_or_init(|| sweep(base_scenario(), vec![scheme("plain"), scheme("sequential")], vec![10.0, 20.0], 200, 505, DimKind::Angle))
}

#[test]
fn c05_sequential_saturates() {
    let _g = serial();
    let out = base_sweep();
    let seq10 = find(out, "sequential", 10.0);
    let seq20 = find(out, "sequential", 20.0);
    let plain20 = find(out, "plain", 20.0);
    let gap = seq20.rmse[1] / plain20.rmse[1];
    let improvement = 1.0 - seq20.rmse[1] / seq10.rmse[1];
    report(
        "C5",
        gap >= 3.0 && improvement <= 0.2,
        &format!(
            "distance RMSE at 20 dB: sequential {:.3} m vs PLAIN {:.4} m (ratio {gap:.1}, need >= 3); sequential 10->20 dB improvement {:.1}% (need <= 20%)",
            seq20.rmse[1],
            plain20.rmse[1],
            100.0 * improvement
        ),
    );
}

#[test]
fn c06_crb_consistency() {
    let _g = serial();
    // Jacobian against central differences on a random 2-path scenario.
    let grid = GridSpec::default();
    let sc = generate_random_scenario(2, &Ranges::default(), &grid, 66, &free_space_path_loss).unwrap();
    let j = model_jacobian(&sc);
    let steps = [1e-6, 1e-12, 1e-2, 1e-6, 1e-6];
    let mut worst = 0.0f64;
    for p in 0..2 {
        for (k, &h) in steps.iter().enumerate() {
            let shifted = |s: f64| {
                let mut paths = sc.paths.clone();
                let q = &mut paths[p];
                // The perturbed gain no longer matches the path loss.
                q.path_loss = None;
                q.rcs = None;
                match k {
                    0 => q.angle_deg = (q.angle_deg.to_radians() + s).to_degrees(),
                    1 => q.delay_s += s,
                    2 => q.doppler_hz += s,
                    3 => q.gain += C64::new(s, 0.0),
                    _ => q.gain += C64::new(0.0, s),
                }
                synthesize_channel::<f64>(&Scenario::new(grid.clone(), paths).unwrap())
            };
            let (hp, hm) = (shifted(h), shifted(-h));
            let col = j.column(p * PARAMS_PER_PATH + k);
            let scale = col.iter().fold(0.0f64, |a, z| a.max(z.norm()));
            let err = hp
                .data()
                .iter()
                .zip(hm.data())
                .zip(col.iter())
                .map(|((a, b), d)| ((a - b) / (2.0 * h) - d).norm())
                .fold(0.0f64, f64::max);
            worst = worst.max(err / scale);
        }
    }

    // Bound standard deviations against the SNR over a 20 dB sweep.
    let base = generate_equidistant_scenario(6, &Ranges::default(), &grid, 7, &free_space_path_loss).unwrap();
    let var = |snr: f64| base.gain_power() / 10f64.powf(snr / 10.0);
    let b0 = crb_evaluate(&base, var(0.0)).unwrap();
    let mut linear_err = 0.0f64;
    for snr in [10.0, 20.0] {
        let b = crb_evaluate(&base, var(snr)).unwrap();
        for kind in DimKind::ALL {
            let ratio = b.rms(kind) / b0.rms(kind);
            linear_err = linear_err.max((ratio / 10f64.powf(-snr / 20.0) - 1.0).abs());
        }
    }

    // PLAIN near the bound at 20 dB.
    let plain20 = find(base_sweep(), "plain", 20.0);
    let closeness = plain20.rmse[0] / plain20.crb[0];
    let pass = worst < 1e-6 && linear_err < 0.01 && (0.2..=5.0).contains(&closeness);
    report(
        "C6",
        pass,
        &format!(
            "Jacobian max relative error {worst:.2e}; sigma-linearity error {:.2e}%; PLAIN angle RMSE / CRB at 20 dB = {closeness:.2}",
            100.0 * linear_err
        ),
    );
}

#[test]
fn c07_averaging_snr_gain() {
    let _g = serial();
    let grid = GridSpec::default();
    let path = PathParams::from_physical(60.0, 100.0, 5.0, C64::new(1.0, 0.0), &grid);
    let sc = Scenario::new(grid.clone(), vec![path]).unwrap();
    let h = synthesize_channel::<f64>(&sc);
    let obs = add_noise(&h, &sc, 0.0, PowerReference::Thermal, 77).unwrap();
    let signal = h.scale(C64::new(obs.tx_power.sqrt(), 0.0));
    let noise = Tensor::new(h.shape().to_vec(), obs.tensor.data().iter().zip(signal.data()).map(|(y, s)| y - s).collect()).unwrap();
    let plan = CompressionPlan::uniform(Scheme::Average, &[1, 4, 14]);
    let mean_power = |t: &Tensor<f64>| t.norm_sqr() / t.len() as f64;
    let snr_db = |s: &Tensor<f64>, n: &Tensor<f64>| 10.0 * (mean_power(s) / mean_power(n)).log10();
    let before = snr_db(&signal, &noise);
    let after = snr_db(&compress(&signal, &plan).unwrap().tensor, &compress(&noise, &plan).unwrap().tensor);
    let gain = after - before;
    let expected = 10.0 * 56f64.log10();
    report(
        "C7",
        (gain - expected).abs() <= 1.0,
        &format!("per-element SNR {before:.2} dB -> {after:.2} dB, gain {gain:.2} dB vs expected {expected:.2} +/- 1 dB"),
    );
}

#[test]
fn c08_smoothing_saturates_averaging_improves() {
    let _g = serial();
    let mut smooth = PlainConfig::default();
    smooth.plan = CompressionPlan::uniform(Scheme::Smooth, &[1, 4, 14]).with_max_snapshots(100);
    let schemes = vec![scheme("plain"), labelled("plain-smooth", SchemeKind::Plain(smooth))];
    let out = sweep(base_scenario(), schemes, vec![10.0, 30.0], 200, 808, DimKind::Angle);
    let gain = |s: &str, m: usize| 1.0 - find(&out, s, 30.0).rmse[m] / find(&out, s, 10.0).rmse[m];
    let (sd, sv) = (gain("plain-smooth", 1), gain("plain-smooth", 2));
    let (ad, av) = (gain("plain", 1), gain("plain", 2));
    let pass = sd < 0.3 && sv < 0.3 && ad > 0.7 && av > 0.7;
    report(
        "C8",
        pass,
        &format!(
            "10->30 dB RMSE improvement: smoothing distance {:.1}% velocity {:.1}% (need < 30%); averaging distance {:.1}% velocity {:.1}% (need > 70%)",
            100.0 * sd,
            100.0 * sv,
            100.0 * ad,
            100.0 * av
        ),
    );
}

#[test]
fn c09_runtime_ordering() {
    let _g = serial();
    let grid = GridSpec::default();
    let sc = base_scenario().generate(&grid, scenario_seed(909, 0)).unwrap();
    let obs = add_noise(&synthesize_channel::<f64>(&sc), &sc, 20.0, PowerReference::Thermal, 909).unwrap();
    let np = Some(sc.num_paths());
    let time = |label: &str| measure_runtime(&scheme(label).kind, &obs.tensor, &grid, np, 100).unwrap();
    let plain = time("plain");
    let seq = time("sequential");
    let esprit = time("tensor-esprit");
    let comparable = (0.1..=10.0).contains(&(seq / plain));
    let pass = comparable && plain < esprit && seq < esprit && esprit >= 10.0 * plain;
    report(
        "C9",
        pass,
        &format!(
            "mean over 100 runs: PLAIN {plain:.3} s, sequential {seq:.3} s, Tensor-ESPRIT {esprit:.3} s (ESPRIT/PLAIN {:.1}x, sequential/PLAIN {:.2}x)",
            esprit / plain,
            seq / plain
        ),
    );
}

#[test]
fn c10_property_suites() {
    let _g = serial();
    let suites = [
        ("tensor", prop_tensor::properties()),
        ("scenario", prop_scenario::properties()),
        ("compression", prop_compression::properties()),
        ("estimation", prop_estimation::properties()),
        ("fusion", prop_fusion::properties()),
        ("baselines", prop_baselines::properties()),
        ("crb", prop_crb::properties()),
        ("evaluation", prop_evaluation::properties()),
    ];
    let mut total = 0;
    let mut failed = Vec::new();
    for (suite, props) in suites {
        for (name, f) in props {
            total += 1;
            if std::panic::catch_unwind(f).is_err() {
                failed.push(format!("{suite}::{name}"));
            }
        }
    }
    let detail = if failed.is_empty() {
        format!("{total} properties passed (randomized, >= 100 cases each)")
    } else {
        format!("{} of {total} properties failed: {}", failed.len(), failed.join(", "))
    };
    report("C10", failed.is_empty(), &detail);
}
