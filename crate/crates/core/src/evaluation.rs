//! RMSE bookkeeping, scheme dispatch, Monte-Carlo sweeps and runtime
//! measurement.

use std::io;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{sequential_estimate, tensor_esprit, EspritConfig};
use crate::compression::{compress, CompressionPlan, Scheme};
use crate::crb::crb_evaluate;
use crate::error::{Error, Result};
use crate::estimation::{DimensionSpec, EstimatorConfig};
use crate::fusion::{iterative_refine, DetectedObjectSet, FusionConfig, FusionMethod, Selection};
use crate::scalar::Real;
use crate::scenario::{
    add_noise, free_space_path_loss, generate_equidistant_scenario, generate_random_scenario, synthesize_channel,
    DimKind, GridSpec, PowerReference, Ranges, Scenario,
};
use crate::tensor::Tensor;

/// Environment variable capping the sweep's worker threads.
pub const THREADS_ENV: &str = "PLAIN_THREADS";

/// Pairs truth and estimates after sorting both by `sort_dim` (the same
/// permutation then applies to every dimension) and returns the squared
/// error sum per dimension.
pub fn sorted_squared_errors(truth: &[Vec<f64>], est: &[Vec<f64>], sort_dim: usize) -> Result<Vec<f64>> {
    if truth.len() != est.len() {
        return Err(Error::DimensionMismatch(format!("{} true objects but {} estimates", truth.len(), est.len())));
    }
    let dims = truth.first().map_or(0, |t| t.len());
    if truth.iter().chain(est).any(|v| v.len() != dims) {
        return Err(Error::DimensionMismatch("objects disagree on the number of dimensions".into()));
    }
    if !truth.is_empty() && sort_dim >= dims {
        return Err(Error::InvalidArgument(format!("sort dimension {sort_dim} of {dims}")));
    }
    let order = |set: &[Vec<f64>]| {
        let mut idx: Vec<usize> = (0..set.len()).collect();
        idx.sort_by(|&a, &b| set[a][sort_dim].total_cmp(&set[b][sort_dim]));
        idx
    };
    let (ot, oe) = (order(truth), order(est));
    let mut sums = vec![0.0; dims];
    for (&i, &j) in ot.iter().zip(&oe) {
        for (m, s) in sums.iter_mut().enumerate() {
            *s += (truth[i][m] - est[j][m]).powi(2);
        }
    }
    Ok(sums)
}

/// Per-dimension RMSE of one set of estimates.
pub fn rmse(truth: &[Vec<f64>], est: &[Vec<f64>], sort_dim: usize) -> Result<Vec<f64>> {
    let n = truth.len().max(1) as f64;
    Ok(sorted_squared_errors(truth, est, sort_dim)?.into_iter().map(|s| (s / n).sqrt()).collect())
}

/// Running RMSE over paths and trials.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RmseAccumulator {
    pub sum_sq: Vec<f64>,
    pub count: usize,
}

impl RmseAccumulator {
    pub fn add(&mut self, truth: &[Vec<f64>], est: &[Vec<f64>], sort_dim: usize) -> Result<()> {
        let s = sorted_squared_errors(truth, est, sort_dim)?;
        if self.sum_sq.is_empty() {
            self.sum_sq = vec![0.0; s.len()];
        }
        for (a, b) in self.sum_sq.iter_mut().zip(s) {
            *a += b;
        }
        self.count += truth.len();
        Ok(())
    }

    pub fn merge(&mut self, other: &RmseAccumulator) {
        if self.sum_sq.is_empty() {
            self.sum_sq = vec![0.0; other.sum_sq.len()];
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn rmse(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum_sq.iter().map(|s| (s / n).sqrt()).collect()
    }
}

/// Physical parameters (deg, m, km/h) of every path.
pub fn truth_params(sc: &Scenario) -> Vec<Vec<f64>> {
    sc.paths.iter().map(|p| DimKind::ALL.iter().map(|&k| p.physical(k, &sc.grid)).collect()).collect()
}

/// PLAIN pipeline settings.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainConfig {
    pub plan: CompressionPlan,
    /// One estimator per dimension.
    pub estimators: Vec<EstimatorConfig>,
    pub fusion: FusionConfig,
}

impl Default for PlainConfig {
    /// Averaging with factors (1, 4, 14), root-MUSIC everywhere, OMP fusion.
    fn default() -> Self {
        PlainConfig {
            plan: CompressionPlan::uniform(Scheme::Average, &[1, 4, 14]),
            estimators: vec![EstimatorConfig::default(); 3],
            fusion: FusionConfig::default(),
        }
    }
}

/// Compression, decoupled estimation, fusion (and optional refinement).
pub fn run_plain<T: Real>(h: &Tensor<T>, grid: &GridSpec, cfg: &PlainConfig) -> Result<DetectedObjectSet> {
    let input = compress(h, &cfg.plan)?;
    let specs = DimensionSpec::for_input(grid, &input);
    iterative_refine(&input, &specs, &cfg.estimators, &cfg.fusion)
}

#[derive(Clone, Debug, PartialEq)]
pub enum SchemeKind {
    Plain(PlainConfig),
    Sequential { dft_oversampling: usize },
    TensorEsprit(EspritConfig),
}

/// A labelled scheme as it appears in result files.
#[derive(Clone, Debug, PartialEq)]
pub struct SchemeSpec {
    pub label: String,
    pub kind: SchemeKind,
}

impl SchemeSpec {
    /// Resolves a CLI label (`plain`, `plain-ls`, `plain-omp`, `sequential`,
    /// `tensor-esprit`) against base settings.
    pub fn from_label(label: &str, plain: &PlainConfig, dft_oversampling: usize, esprit: &EspritConfig) -> Result<Self> {
        let with_method = |m: FusionMethod| {
            let mut c = plain.clone();
            c.fusion.method = m;
            SchemeKind::Plain(c)
        };
        let kind = match label {
            "plain" => SchemeKind::Plain(plain.clone()),
            "plain-ls" => with_method(FusionMethod::Ls),
            "plain-omp" => with_method(FusionMethod::Omp),
            "sequential" => SchemeKind::Sequential { dft_oversampling },
            "tensor-esprit" => SchemeKind::TensorEsprit(esprit.clone()),
            other => {
                return Err(Error::Config(format!(
                    "unknown scheme `{other}` (expected plain, plain-ls, plain-omp, sequential, tensor-esprit)"
                )))
            }
        };
        Ok(SchemeSpec { label: label.to_string(), kind })
    }
}

/// Runs one scheme; `true_np` switches every scheme to the known object count.
pub fn run_scheme<T: Real>(kind: &SchemeKind, h: &Tensor<T>, grid: &GridSpec, true_np: Option<usize>) -> Result<DetectedObjectSet> {
    match kind {
        SchemeKind::Plain(cfg) => {
            let mut cfg = cfg.clone();
            if let Some(n) = true_np {
                cfg.fusion.selection = Selection::TrueCount(n);
            }
            run_plain(h, grid, &cfg)
        }
        SchemeKind::Sequential { dft_oversampling } => sequential_estimate(h, grid, *dft_oversampling),
        SchemeKind::TensorEsprit(cfg) => Ok(tensor_esprit(h, cfg, grid, true_np)?.set),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Equidistant,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub n_paths: usize,
    pub layout: Layout,
    pub ranges: Ranges,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec { n_paths: 6, layout: Layout::Equidistant, ranges: Ranges::default() }
    }
}

impl ScenarioSpec {
    /// Scenario with free-space path loss and unit RCS.
    pub fn generate(&self, grid: &GridSpec, seed: u64) -> Result<Scenario> {
        match self.layout {
            Layout::Equidistant => generate_equidistant_scenario(self.n_paths, &self.ranges, grid, seed, &free_space_path_loss),
            Layout::Random => generate_random_scenario(self.n_paths, &self.ranges, grid, seed, &free_space_path_loss),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub grid: GridSpec,
    pub scenario: ScenarioSpec,
    pub schemes: Vec<SchemeSpec>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub power: PowerReference,
    /// Dimension whose ascending order pairs truth and estimates.
    pub sort_by: DimKind,
    /// Select exactly the true number of objects.
    pub true_np_override: bool,
    /// Record per-trial wall-clock runtimes (otherwise 0, keeping output
    /// byte-identical across runs).
    pub timing: bool,
    /// Worker cap; `None` reads `PLAIN_THREADS`, then uses rayon's default.
    pub threads: Option<usize>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("SNR sweep is empty or contains NaN".into()));
        }
        if self.scenario.n_paths == 0 {
            return Err(Error::Config("scenario needs at least one path".into()));
        }
        Ok(())
    }
}

/// Seed of the scenario of `trial`; shared by every SNR point and scheme.
pub fn scenario_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

/// Seed of the noise of `trial` at SNR index `snr_idx`; shared by schemes.
pub fn noise_seed(master: u64, snr_idx: usize, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((snr_idx as u64 + 1) << 32) | trial as u64);
    rng.next_u64()
}

/// One result-file row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub scheme: String,
    pub snr_db: f64,
    pub trial: usize,
    pub rmse_angle_deg: f64,
    pub rmse_distance_m: f64,
    pub rmse_velocity_kmh: f64,
    pub crb_angle_deg: f64,
    pub crb_distance_m: f64,
    pub crb_velocity_kmh: f64,
    pub n_detected: usize,
    pub runtime_s: f64,
    pub failed: bool,
}

impl TrialRow {
    pub fn rmse(&self) -> [f64; 3] {
        [self.rmse_angle_deg, self.rmse_distance_m, self.rmse_velocity_kmh]
    }

    pub fn crb(&self) -> [f64; 3] {
        [self.crb_angle_deg, self.crb_distance_m, self.crb_velocity_kmh]
    }
}

/// Aggregate of one scheme at one SNR point.
#[derive(Clone, Debug, PartialEq)]
pub struct RmseReport {
    pub scheme: String,
    pub snr_db: f64,
    pub trials: usize,
    pub failures: usize,
    /// RMSE over all paths of the successful trials.
    pub rmse: [f64; 3],
    /// Root mean of the per-trial CRB values.
    pub crb: [f64; 3],
    pub runtime_mean_s: f64,
}

impl RmseReport {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.trials.max(1) as f64
    }
}

/// Aggregates rows of one scheme and SNR point. Every trial has the same
/// number of paths, so the mean of squared per-trial RMSEs is the mean over
/// the concatenated error sample.
pub fn aggregate(rows: &[TrialRow]) -> Option<RmseReport> {
    let first = rows.first()?;
    let ok: Vec<&TrialRow> = rows.iter().filter(|r| !r.failed).collect();
    let rms = |vals: Vec<f64>| {
        if vals.is_empty() {
            f64::NAN
        } else {
            (vals.iter().map(|v| v * v).sum::<f64>() / vals.len() as f64).sqrt()
        }
    };
    let per_dim = |f: &dyn Fn(&TrialRow) -> f64| rms(ok.iter().map(|r| f(r)).collect());
    let crb_dim = |f: &dyn Fn(&TrialRow) -> f64| rms(rows.iter().map(f).collect());
    Some(RmseReport {
        scheme: first.scheme.clone(),
        snr_db: first.snr_db,
        trials: rows.len(),
        failures: rows.len() - ok.len(),
        rmse: [
            per_dim(&|r| r.rmse_angle_deg),
            per_dim(&|r| r.rmse_distance_m),
            per_dim(&|r| r.rmse_velocity_kmh),
        ],
        crb: [crb_dim(&|r| r.crb_angle_deg), crb_dim(&|r| r.crb_distance_m), crb_dim(&|r| r.crb_velocity_kmh)],
        runtime_mean_s: rows.iter().map(|r| r.runtime_s).sum::<f64>() / rows.len() as f64,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    /// Ordered by scheme (configuration order), SNR, trial.
    pub rows: Vec<TrialRow>,
    /// One per scheme and SNR point, same order.
    pub reports: Vec<RmseReport>,
}

fn crb_row(sc: &Scenario, noise_var: f64) -> [f64; 3] {
    if noise_var == 0.0 {
        return [0.0; 3];
    }
    match crb_evaluate(sc, noise_var) {
        Ok(r) => DimKind::ALL.map(|k| r.rms(k)),
        Err(_) => [f64::NAN; 3],
    }
}

fn trial_rows<T: Real>(cfg: &SweepConfig, snr_idx: usize, trial: usize) -> Result<Vec<TrialRow>> {
    let snr = cfg.snr_db[snr_idx];
    let sc = cfg.scenario.generate(&cfg.grid, scenario_seed(cfg.seed, trial))?;
    let h = synthesize_channel::<T>(&sc);
    let obs = add_noise(&h, &sc, snr, cfg.power, noise_seed(cfg.seed, snr_idx, trial))?;
    drop(h);
    // Estimators see sqrt(P_tx) H + N; refer the noise to the unit-power model.
    let crb = crb_row(&sc, obs.relative_noise_variance());
    let truth = truth_params(&sc);
    let n = sc.num_paths();
    let sort_dim = DimKind::ALL.iter().position(|&k| k == cfg.sort_by).unwrap_or(0);
    let true_np = cfg.true_np_override.then_some(n);
    let mut rows = Vec::with_capacity(cfg.schemes.len());
    for scheme in &cfg.schemes {
        let start = Instant::now();
        let result = run_scheme(&scheme.kind, &obs.tensor, &cfg.grid, true_np);
        let elapsed = start.elapsed().as_secs_f64();
        let mut row = TrialRow {
            scheme: scheme.label.clone(),
            snr_db: snr,
            trial,
            rmse_angle_deg: f64::NAN,
            rmse_distance_m: f64::NAN,
            rmse_velocity_kmh: f64::NAN,
            crb_angle_deg: crb[0],
            crb_distance_m: crb[1],
            crb_velocity_kmh: crb[2],
            n_detected: 0,
            runtime_s: if cfg.timing { elapsed } else { 0.0 },
            failed: true,
        };
        if let Ok(set) = result {
            row.n_detected = set.len();
            if let Some(objs) = set.padded(n) {
                let est: Vec<Vec<f64>> = objs.iter().map(|o| o.params.clone()).collect();
                if let Ok(r) = rmse(&truth, &est, sort_dim) {
                    row.rmse_angle_deg = r[0];
                    row.rmse_distance_m = r[1];
                    row.rmse_velocity_kmh = r[2];
                    row.failed = false;
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Worker count from `PLAIN_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

/// Runs every (SNR, trial) pair in parallel. Scheme failures become failure
/// rows; scenario or noise generation errors abort the sweep.
pub fn run_sweep<T: Real>(cfg: &SweepConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.snr_db.len()).flat_map(|s| (0..cfg.trials).map(move |t| (s, t))).collect();
    let threads = cfg.threads.or_else(threads_from_env).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let per_job: Vec<Vec<TrialRow>> =
        pool.install(|| jobs.par_iter().map(|&(s, t)| trial_rows::<T>(cfg, s, t)).collect::<Result<_>>())?;

    let ns = cfg.schemes.len();
    let mut rows = Vec::with_capacity(per_job.len() * ns);
    let mut reports = Vec::with_capacity(ns * cfg.snr_db.len());
    for k in 0..ns {
        for s in 0..cfg.snr_db.len() {
            let group: Vec<TrialRow> = (0..cfg.trials).map(|t| per_job[s * cfg.trials + t][k].clone()).collect();
            reports.extend(aggregate(&group));
            rows.extend(group);
        }
    }
    Ok(SweepOutput { rows, reports })
}

/// Mean wall-clock seconds of one scheme on fixed data, over `repeats` runs.
pub fn measure_runtime<T: Real>(
    kind: &SchemeKind,
    h: &Tensor<T>,
    grid: &GridSpec,
    true_np: Option<usize>,
    repeats: usize,
) -> Result<f64> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("runtime measurement needs at least one repeat".into()));
    }
    let mut total = 0.0;
    for _ in 0..repeats {
        let start = Instant::now();
        let out = run_scheme(kind, h, grid, true_np);
        total += start.elapsed().as_secs_f64();
        out?;
    }
    Ok(total / repeats as f64)
}

pub fn write_csv<W: io::Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: io::Read>(input: R) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_example() {
        let truth = vec![vec![30.0, 100.0, 0.0], vec![90.0, 200.0, 5.0]];
        let est = vec![vec![91.0, 200.0, 5.0], vec![29.0, 100.0, 0.0]];
        let r = rmse(&truth, &est, 0).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert_eq!(r[1], 0.0);
    }

    #[test]
    fn rmse_cardinality_mismatch_errors() {
        assert!(rmse(&[vec![1.0]], &[], 0).is_err());
    }

    #[test]
    fn scheme_labels_resolve() {
        let p = PlainConfig::default();
        let e = EspritConfig::default();
        for l in ["plain", "plain-ls", "plain-omp", "sequential", "tensor-esprit"] {
            assert_eq!(SchemeSpec::from_label(l, &p, 4, &e).unwrap().label, l);
        }
        assert!(SchemeSpec::from_label("music", &p, 4, &e).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let row = TrialRow {
            scheme: "plain".into(),
            snr_db: 10.0,
            trial: 3,
            rmse_angle_deg: 0.25,
            rmse_distance_m: f64::NAN,
            rmse_velocity_kmh: 1.5,
            crb_angle_deg: 0.01,
            crb_distance_m: 0.2,
            crb_velocity_kmh: 0.03,
            n_detected: 6,
            runtime_s: 0.0,
            failed: false,
        };
        let mut buf = Vec::new();
        write_csv(std::slice::from_ref(&row), &mut buf).unwrap();
        let header = String::from_utf8(buf.clone()).unwrap();
        assert!(header.starts_with("scheme,snr_db,trial,rmse_angle_deg,rmse_distance_m,rmse_velocity_kmh,crb_angle_deg,crb_distance_m,crb_velocity_kmh,n_detected,runtime_s,failed\n"));
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].rmse_distance_m.is_nan());
        assert_eq!(back[0].rmse_angle_deg, row.rmse_angle_deg);
        assert_eq!(back[0].scheme, row.scheme);
    }
}
