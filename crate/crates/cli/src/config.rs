//! Experiment configuration: TOML with one table per stage. Every key is
//! optional; an empty file gives the base setup (16 antennas, 180
//! subcarriers at 60 kHz, 560 symbols over 10 ms at 26 GHz, averaging with
//! factors [1, 4, 14], 6 objects over [30, 150] deg, [50, 400] m,
//! [0, 25] km/h). Unknown keys and out-of-range values are errors that point
//! at the offending line.

use std::fmt;
use std::path::Path;

use plain_core::baselines::{EspritConfig, OrderCriterion};
use plain_core::compression::{CompressionPlan, Scheme, SnapshotSampling};
use plain_core::estimation::{Algorithm, EstimatorConfig};
use plain_core::evaluation::{Layout, PlainConfig, ScenarioSpec, SchemeSpec, SweepConfig};
use plain_core::fusion::{FusionConfig, FusionMethod, Selection};
use plain_core::scenario::{DimKind, GridSpec, PowerReference, Ranges, SPEED_OF_LIGHT};
use serde::Deserialize;

#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
    pub line: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub scenario: ScenarioSection,
    pub compression: CompressionSection,
    pub estimation: EstimationSection,
    pub fusion: FusionSection,
    pub sequential: SequentialSection,
    pub esprit: EspritSection,
    pub sweep: SweepSection,
    pub bench: BenchSection,
    pub demo: DemoSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub antennas: usize,
    pub subcarriers: usize,
    pub symbols: usize,
    /// Defaults to half a wavelength.
    pub antenna_spacing_m: Option<f64>,
    pub subcarrier_spacing_hz: f64,
    pub symbol_spacing_s: f64,
    pub carrier_frequency_hz: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSection {
            antennas: g.n_a,
            subcarriers: g.n_f,
            symbols: g.n_t,
            antenna_spacing_m: None,
            subcarrier_spacing_hz: g.subcarrier_spacing,
            symbol_spacing_s: g.symbol_spacing,
            carrier_frequency_hz: g.carrier_frequency,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum LayoutName {
    Equidistant,
    Random,
}

impl From<LayoutName> for Layout {
    fn from(l: LayoutName) -> Self {
        match l {
            LayoutName::Equidistant => Layout::Equidistant,
            LayoutName::Random => Layout::Random,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum DimName {
    Angle,
    Distance,
    Velocity,
}

impl From<DimName> for DimKind {
    fn from(d: DimName) -> Self {
        match d {
            DimName::Angle => DimKind::Angle,
            DimName::Distance => DimKind::Delay,
            DimName::Velocity => DimKind::Doppler,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub paths: usize,
    pub layout: LayoutName,
    /// Narrows the angles to [80, 100] deg; overrides `angle_deg`.
    pub close: bool,
    pub angle_deg: [f64; 2],
    pub distance_m: [f64; 2],
    pub velocity_kmh: [f64; 2],
    /// Dimension whose ascending order pairs estimates with truth.
    pub sort_by: DimName,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let r = Ranges::default();
        ScenarioSection {
            paths: 6,
            layout: LayoutName::Equidistant,
            close: false,
            angle_deg: r.angle_deg,
            distance_m: r.distance_m,
            velocity_kmh: r.velocity_kmh,
            sort_by: DimName::Angle,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    None,
    Decimate,
    Average,
    DecimateSnapshots,
    Smooth,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::None => Scheme::None,
            SchemeName::Decimate => Scheme::Decimate,
            SchemeName::Average => Scheme::Average,
            SchemeName::DecimateSnapshots => Scheme::DecimateSnapshots,
            SchemeName::Smooth => Scheme::Smooth,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SamplingName {
    Equidistant,
    Random,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSection {
    pub scheme: SchemeName,
    pub factors: Vec<usize>,
    pub max_snapshots: usize,
    pub sampling: SamplingName,
    /// Seed of random snapshot capping.
    pub sampling_seed: u64,
}

impl Default for CompressionSection {
    fn default() -> Self {
        CompressionSection {
            scheme: SchemeName::Average,
            factors: vec![1, 4, 14],
            max_snapshots: 100,
            sampling: SamplingName::Equidistant,
            sampling_seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum AlgoName {
    RootMusic,
    Dft,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    pub algo_per_dim: Vec<AlgoName>,
    pub fba: bool,
    pub dft_oversampling: usize,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection { algo_per_dim: vec![AlgoName::RootMusic; 3], fba: true, dft_oversampling: 4 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Ls,
    Omp,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub method: MethodName,
    /// Select exactly the true number of objects in sweeps.
    pub true_np_override: bool,
    pub clean_rounds: usize,
    /// Power threshold selection when the override is off; otherwise the
    /// largest per-dimension order is used.
    pub threshold: Option<f64>,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection { method: MethodName::Omp, true_np_override: true, clean_rounds: 1, threshold: None }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialSection {
    pub oversampling: usize,
}

impl Default for SequentialSection {
    fn default() -> Self {
        SequentialSection { oversampling: 4 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CriterionName {
    Aic,
    Bic,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EspritSection {
    pub smoothing_factors: Vec<usize>,
    pub max_snapshots: usize,
    pub criterion: CriterionName,
    pub sweep_limit: usize,
}

impl Default for EspritSection {
    fn default() -> Self {
        let e = EspritConfig::default();
        EspritSection {
            smoothing_factors: e.smoothing_factors,
            max_snapshots: e.max_snapshots,
            criterion: CriterionName::Bic,
            sweep_limit: e.sweep_limit,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub schemes: Vec<String>,
    pub snr_start: f64,
    pub snr_stop: f64,
    pub snr_step: f64,
    pub trials: usize,
    pub seed: u64,
    pub output: String,
    /// Record wall-clock runtimes (makes the CSV run-dependent).
    pub timing: bool,
    pub precision: Precision,
    /// Fixed transmit power in W; thermal noise at 296 K otherwise.
    pub tx_power_w: Option<f64>,
    /// Worker cap; `PLAIN_THREADS` applies when unset.
    pub threads: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            schemes: vec!["plain".into()],
            snr_start: -10.0,
            snr_stop: 30.0,
            snr_step: 5.0,
            trials: 200,
            seed: 7,
            output: "results.csv".into(),
            timing: false,
            precision: Precision::F64,
            tx_power_w: None,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub schemes: Vec<String>,
    pub repeats: usize,
    pub snr_db: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            schemes: vec!["plain".into(), "sequential".into(), "tensor-esprit".into()],
            repeats: 100,
            snr_db: 20.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSection {
    pub paths: usize,
    pub layout: LayoutName,
    pub snr_db: f64,
}

impl Default for DemoSection {
    fn default() -> Self {
        DemoSection { paths: 12, layout: LayoutName::Random, snr_db: 0.0 }
    }
}

/// 1-based line of `section.key`, written either under `[section]` or as a
/// dotted key.
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let dotted = format!("{section}.{key}");
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else { continue };
        let lhs: String = lhs.split('.').map(str::trim).collect::<Vec<_>>().join(".");
        let full = if current.is_empty() { lhs } else { format!("{current}.{lhs}") };
        if full == dotted {
            return Some(i + 1);
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate().map_err(|(section, key, message)| ConfigError {
        line: locate(text, section, key),
        message: format!("{section}.{key}: {message}"),
    })?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { message: format!("cannot read {}: {e}", path.display()), line: None })?;
    parse_config_str(&text).map_err(|e| {
        let at = e.line.map_or(String::new(), |l| format!(":{l}"));
        ConfigError { message: format!("{}{at}: {}", path.display(), e.message), line: None }
    })
}

type Invalid = (&'static str, &'static str, String);

fn check(ok: bool, section: &'static str, key: &'static str, msg: impl Into<String>) -> Result<(), Invalid> {
    if ok {
        Ok(())
    } else {
        Err((section, key, msg.into()))
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn range_ok(r: [f64; 2], lo: f64, hi: f64) -> bool {
    r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] && r[0] >= lo && r[1] <= hi
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), Invalid> {
        let g = &self.grid;
        check(g.antennas >= 1, "grid", "antennas", "must be at least 1")?;
        check(g.subcarriers >= 1, "grid", "subcarriers", "must be at least 1")?;
        check(g.symbols >= 1, "grid", "symbols", "must be at least 1")?;
        check(g.antenna_spacing_m.is_none_or(positive), "grid", "antenna_spacing_m", "must be positive")?;
        check(positive(g.subcarrier_spacing_hz), "grid", "subcarrier_spacing_hz", "must be positive")?;
        check(positive(g.symbol_spacing_s), "grid", "symbol_spacing_s", "must be positive")?;
        check(positive(g.carrier_frequency_hz), "grid", "carrier_frequency_hz", "must be positive")?;

        let s = &self.scenario;
        check(s.paths >= 1, "scenario", "paths", "must be at least 1")?;
        check(range_ok(s.angle_deg, 0.0, 180.0) && s.angle_deg[1] < 180.0, "scenario", "angle_deg", "needs 0 <= lo <= hi < 180")?;
        check(range_ok(s.distance_m, 0.0, f64::INFINITY) && s.distance_m[0] > 0.0, "scenario", "distance_m", "needs 0 < lo <= hi")?;
        check(range_ok(s.velocity_kmh, f64::NEG_INFINITY, f64::INFINITY), "scenario", "velocity_kmh", "needs lo <= hi")?;

        let c = &self.compression;
        check(c.factors.len() == 3, "compression", "factors", "needs one factor per dimension (3)")?;
        check(c.factors.iter().all(|&f| f >= 1), "compression", "factors", "factors must be at least 1")?;
        let lens = [g.antennas, g.subcarriers, g.symbols];
        check(c.factors.iter().zip(lens).all(|(&f, n)| f <= n), "compression", "factors", "factor exceeds dimension length")?;
        check(c.max_snapshots >= 1, "compression", "max_snapshots", "must be at least 1")?;

        let e = &self.estimation;
        check(e.algo_per_dim.len() == 3, "estimation", "algo_per_dim", "needs one algorithm per dimension (3)")?;
        check(e.dft_oversampling >= 1, "estimation", "dft_oversampling", "must be at least 1")?;

        let f = &self.fusion;
        check(f.clean_rounds >= 1, "fusion", "clean_rounds", "must be at least 1")?;
        check(f.threshold.is_none_or(|t| t.is_finite() && t >= 0.0), "fusion", "threshold", "must be non-negative")?;

        check(self.sequential.oversampling >= 1, "sequential", "oversampling", "must be at least 1")?;

        let es = &self.esprit;
        check(es.smoothing_factors.len() == 3, "esprit", "smoothing_factors", "needs one factor per dimension (3)")?;
        check(es.smoothing_factors.iter().zip(lens).all(|(&f, n)| f >= 1 && f <= n), "esprit", "smoothing_factors", "factors must lie in [1, length]")?;
        check(es.max_snapshots >= 1, "esprit", "max_snapshots", "must be at least 1")?;
        check(es.sweep_limit >= 1, "esprit", "sweep_limit", "must be at least 1")?;

        let w = &self.sweep;
        check(!w.schemes.is_empty(), "sweep", "schemes", "must not be empty")?;
        for l in &w.schemes {
            check(self.scheme(l).is_ok(), "sweep", "schemes", format!("unknown scheme `{l}`"))?;
        }
        check(w.snr_start.is_finite(), "sweep", "snr_start", "must be finite")?;
        check(w.snr_stop.is_finite() && w.snr_stop >= w.snr_start, "sweep", "snr_stop", "must be >= snr_start")?;
        check(positive(w.snr_step), "sweep", "snr_step", "must be positive")?;
        check(w.trials >= 1, "sweep", "trials", "must be at least 1")?;
        check(w.tx_power_w.is_none_or(positive), "sweep", "tx_power_w", "must be positive")?;
        check(w.threads.is_none_or(|t| t >= 1), "sweep", "threads", "must be at least 1")?;

        let b = &self.bench;
        check(b.repeats >= 1, "bench", "repeats", "must be at least 1")?;
        for l in &b.schemes {
            check(self.scheme(l).is_ok(), "bench", "schemes", format!("unknown scheme `{l}`"))?;
        }
        check(!b.snr_db.is_nan(), "bench", "snr_db", "must be a number")?;
        check(self.demo.paths >= 1, "demo", "paths", "must be at least 1")?;
        check(!self.demo.snr_db.is_nan(), "demo", "snr_db", "must be a number")?;
        Ok(())
    }

    pub fn grid_spec(&self) -> GridSpec {
        let g = &self.grid;
        GridSpec {
            n_a: g.antennas,
            n_f: g.subcarriers,
            n_t: g.symbols,
            antenna_spacing: g.antenna_spacing_m.unwrap_or(SPEED_OF_LIGHT / g.carrier_frequency_hz / 2.0),
            subcarrier_spacing: g.subcarrier_spacing_hz,
            symbol_spacing: g.symbol_spacing_s,
            carrier_frequency: g.carrier_frequency_hz,
        }
    }

    pub fn ranges(&self) -> Ranges {
        let s = &self.scenario;
        let r = Ranges { angle_deg: s.angle_deg, distance_m: s.distance_m, velocity_kmh: s.velocity_kmh };
        if s.close {
            Ranges { angle_deg: Ranges::close().angle_deg, ..r }
        } else {
            r
        }
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec { n_paths: self.scenario.paths, layout: self.scenario.layout.into(), ranges: self.ranges() }
    }

    pub fn plain_config(&self) -> PlainConfig {
        let c = &self.compression;
        let mut plan = CompressionPlan::uniform(c.scheme.into(), &c.factors).with_max_snapshots(c.max_snapshots);
        plan.sampling = match c.sampling {
            SamplingName::Equidistant => SnapshotSampling::Equidistant,
            SamplingName::Random => SnapshotSampling::Random(c.sampling_seed),
        };
        let e = &self.estimation;
        let estimators = e
            .algo_per_dim
            .iter()
            .map(|a| EstimatorConfig {
                algorithm: match a {
                    AlgoName::RootMusic => Algorithm::RootMusic,
                    AlgoName::Dft => Algorithm::Dft,
                },
                fba: e.fba,
                dft_oversampling: e.dft_oversampling,
            })
            .collect();
        let f = &self.fusion;
        let fusion = FusionConfig {
            method: match f.method {
                MethodName::Ls => FusionMethod::Ls,
                MethodName::Omp => FusionMethod::Omp,
            },
            selection: f.threshold.map_or(Selection::MaxRule, Selection::Threshold),
            rounds: f.clean_rounds,
        };
        PlainConfig { plan, estimators, fusion }
    }

    pub fn esprit_config(&self) -> EspritConfig {
        let e = &self.esprit;
        EspritConfig {
            smoothing_factors: e.smoothing_factors.clone(),
            max_snapshots: e.max_snapshots,
            criterion: match e.criterion {
                CriterionName::Aic => OrderCriterion::Aic,
                CriterionName::Bic => OrderCriterion::Bic,
            },
            sweep_limit: e.sweep_limit,
        }
    }

    pub fn scheme(&self, label: &str) -> plain_core::Result<SchemeSpec> {
        SchemeSpec::from_label(label, &self.plain_config(), self.sequential.oversampling, &self.esprit_config())
    }

    /// SNR points `start + i * step` up to `stop` (inclusive, with a small
    /// tolerance for decimal steps).
    pub fn snr_points(&self) -> Vec<f64> {
        let w = &self.sweep;
        let n = ((w.snr_stop - w.snr_start) / w.snr_step + 1e-9).floor() as usize;
        (0..=n).map(|i| w.snr_start + i as f64 * w.snr_step).collect()
    }

    pub fn power(&self) -> PowerReference {
        self.sweep.tx_power_w.map_or(PowerReference::Thermal, PowerReference::TransmitPower)
    }

    pub fn sweep_config(&self) -> plain_core::Result<SweepConfig> {
        let schemes = self.sweep.schemes.iter().map(|l| self.scheme(l)).collect::<plain_core::Result<_>>()?;
        Ok(SweepConfig {
            grid: self.grid_spec(),
            scenario: self.scenario_spec(),
            schemes,
            snr_db: self.snr_points(),
            trials: self.sweep.trials,
            seed: self.sweep.seed,
            power: self.power(),
            sort_by: self.scenario.sort_by.into(),
            true_np_override: self.fusion.true_np_override,
            timing: self.sweep.timing,
            threads: self.sweep.threads,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_base_setup() {
        let cfg = parse_config_str("").unwrap();
        let g = cfg.grid_spec();
        assert_eq!((g.n_a, g.n_f, g.n_t), (16, 180, 560));
        assert_eq!(g.subcarrier_spacing, 60e3);
        assert_eq!(cfg.compression.factors, vec![1, 4, 14]);
        let r = cfg.ranges();
        assert_eq!((r.angle_deg, r.distance_m, r.velocity_kmh), ([30.0, 150.0], [50.0, 400.0], [0.0, 25.0]));
        assert_eq!(g, GridSpec::default());
    }

    #[test]
    fn factors_round_trip() {
        let cfg = parse_config_str("[compression]\nfactors = [1,4,14]\n").unwrap();
        assert_eq!(cfg.plain_config().plan.factors, vec![1, 4, 14]);
        let dotted = parse_config_str("compression.factors = [1, 2, 7]").unwrap();
        assert_eq!(dotted.compression.factors, vec![1, 2, 7]);
    }

    #[test]
    fn unknown_key_names_the_key() {
        let err = parse_config_str("\n[sweep]\ntrials = 3\n\nfusionn.method = \"omp\"\n").unwrap_err();
        assert!(err.to_string().contains("fusionn"), "{err}");
        assert_eq!(err.line, Some(5));
        let err = parse_config_str("[fusion]\nmethodd = \"ls\"\n").unwrap_err();
        assert!(err.to_string().contains("methodd"), "{err}");
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn out_of_range_value_points_at_line() {
        let err = parse_config_str("[grid]\nantennas = 16\n\n[sweep]\nsnr_step = 0\n").unwrap_err();
        assert_eq!(err.line, Some(5));
        assert!(err.message.contains("sweep.snr_step"));
        let err = parse_config_str("scenario.angle_deg = [100, 30]").unwrap_err();
        assert_eq!(err.line, Some(1));
        let err = parse_config_str("[sweep]\nschemes = [\"music\"]").unwrap_err();
        assert!(err.message.contains("music"));
    }

    #[test]
    fn malformed_file_reports_line() {
        let err = parse_config_str("[grid]\nantennas = = 3\n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn snr_points_inclusive() {
        let cfg = parse_config_str("[sweep]\nsnr_start = 0\nsnr_stop = 1\nsnr_step = 0.1").unwrap();
        assert_eq!(cfg.snr_points().len(), 11);
        assert_eq!(parse_config_str("").unwrap().snr_points(), vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
    }

    #[test]
    fn close_overrides_angles() {
        let cfg = parse_config_str("[scenario]\nclose = true\nsort_by = \"distance\"").unwrap();
        assert_eq!(cfg.ranges().angle_deg, [80.0, 100.0]);
        assert_eq!(DimKind::from(cfg.scenario.sort_by), DimKind::Delay);
    }
}
