//! Per-dimension parameter estimation on compressed data.
//!
//! Each sensing dimension is handled on its own: the mode autocorrelation is
//! formed over all other modes (including snapshots), optionally
//! forward-backward averaged, its model order picked by AIC, and the
//! component phases found by root-MUSIC or a zero-padded DFT.

use std::f64::consts::PI;

use nalgebra::{Complex, ComplexField};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::compression::CompressedInput;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, mode_gram, poly_roots};
use crate::scalar::{c_to_f64, cis, lit, to_f64, Real};
use crate::scenario::{wrap_pi, DimKind, GridSpec};
use crate::tensor::{CMatrix, Tensor};
use crate::C64;

/// Eigenvalues below this fraction of the largest are treated as equal
/// (numerical zero) by the information criteria.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Sampling description of one compressed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionSpec {
    pub kind: DimKind,
    /// Physical spacing after compression (m, Hz, or s).
    pub spacing: f64,
    pub len: usize,
    pub wavelength: f64,
    pub carrier_frequency: f64,
}

impl DimensionSpec {
    pub fn new(grid: &GridSpec, kind: DimKind, multiplier: usize, len: usize) -> Self {
        DimensionSpec {
            kind,
            spacing: grid.spacing(kind) * multiplier as f64,
            len,
            wavelength: grid.wavelength(),
            carrier_frequency: grid.carrier_frequency,
        }
    }

    /// Specs for the angle/delay/Doppler modes of a compressed input.
    pub fn for_input<T: Real>(grid: &GridSpec, input: &CompressedInput<T>) -> Vec<Self> {
        DimKind::ALL
            .iter()
            .take(input.dims())
            .enumerate()
            .map(|(m, &k)| DimensionSpec::new(grid, k, input.spacing[m], input.reduced[m]))
            .collect()
    }

    pub fn phase_of_internal(&self, internal: f64) -> f64 {
        self.kind.phase(internal, self.spacing, self.wavelength)
    }

    pub fn phase_of_physical(&self, physical: f64) -> f64 {
        self.phase_of_internal(self.kind.to_internal(physical, self.carrier_frequency))
    }

    /// Physical value (deg, m, km/h) of a per-sample phase, and whether an
    /// angle had to be clamped.
    pub fn physical_of_phase(&self, phase: f64) -> (f64, bool) {
        let (internal, clamped) = self.kind.internal_from_phase(phase, self.spacing, self.wavelength);
        (self.kind.to_physical(internal, self.carrier_frequency), clamped)
    }
}

/// `(N'_m / prod_i N'_i) X_[m] X_[m]^H`, the product running over every mode
/// of `t` (snapshot mode included).
pub fn mode_autocorrelation<T: Real>(t: &Tensor<T>, m: usize) -> Result<CMatrix<T>> {
    if t.is_empty() {
        return Err(Error::InvalidArgument("autocorrelation of an empty tensor".into()));
    }
    let g = mode_gram(t, m)?;
    let scale: T = lit(t.shape()[m] as f64 / t.len() as f64);
    Ok(g.map(|z| z.scale(scale)))
}

/// Forward-backward average `(R + J R* J) / 2`.
pub fn fba<T: Real>(r: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !r.is_square() {
        return Err(Error::DimensionMismatch("forward-backward averaging needs a square matrix".into()));
    }
    let n = r.nrows();
    let half: T = lit(0.5);
    Ok(CMatrix::from_fn(n, n, |i, j| (r[(i, j)] + r[(n - 1 - i, n - 1 - j)].conj()).scale(half)))
}

fn information_criterion(
    eigenvalues: &[f64],
    n_samples: usize,
    max_order: usize,
    penalty: impl Fn(usize, usize) -> f64,
) -> Result<usize> {
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalues passed to order selection".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("order selection needs at least one sample".into()));
    }
    let n = eigenvalues.len();
    if n == 0 {
        return Ok(0);
    }
    let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
    if top <= 0.0 {
        return Ok(0);
    }
    let floor = top * EIGEN_FLOOR;
    let lam: Vec<f64> = eigenvalues.iter().map(|&x| x.max(floor)).collect();
    let max_order = max_order.min(n - 1);
    let mut best = (f64::INFINITY, 0);
    for k in 0..=max_order {
        let tail = &lam[k..];
        let q = tail.len() as f64;
        let mean = tail.iter().sum::<f64>() / q;
        let mean_log = tail.iter().map(|x| x.ln()).sum::<f64>() / q;
        let fit = -2.0 * n_samples as f64 * q * (mean_log - mean.ln());
        let score = fit + penalty(k, n);
        if score < best.0 {
            best = (score, k);
        }
    }
    Ok(best.1)
}

/// Order minimizing `-2 N (N'-k) ln(geo/arith) + 2 k (2N' - k)` over
/// `k in 0..=max_order`, for eigenvalues in descending order.
pub fn aic_order(eigenvalues: &[f64], n_samples: usize, max_order: usize) -> Result<usize> {
    information_criterion(eigenvalues, n_samples, max_order, |k, n| 2.0 * (k * (2 * n - k)) as f64)
}

/// Same fit term as [`aic_order`] with the MDL penalty `k (2N' - k) ln N`.
pub fn bic_order(eigenvalues: &[f64], n_samples: usize, max_order: usize) -> Result<usize> {
    let ln_n = (n_samples.max(1) as f64).ln();
    information_criterion(eigenvalues, n_samples, max_order, move |k, n| (k * (2 * n - k)) as f64 * ln_n)
}

/// Coefficients (ascending powers) of `z^(N-1) a(1/z)^T C a(z)` where
/// `C = Q Q^H` is the noise-subspace projector.
pub fn music_polynomial(noise: &CMatrix<f64>) -> Vec<C64> {
    let n = noise.nrows();
    let c = noise * noise.adjoint();
    let mut coeffs = vec![C64::new(0.0, 0.0); 2 * n - 1];
    for i in 0..n {
        for j in 0..n {
            coeffs[j + n - 1 - i] += c[(i, j)];
        }
    }
    coeffs
}

/// Root-MUSIC: per-sample phases of the `order` roots nearest the unit
/// circle, returned sorted ascending.
///
/// Roots come in conjugate-reciprocal pairs; the inner member of each pair is
/// kept by taking the `N-1` roots of smallest modulus, which also splits
/// double roots that land on the circle. Among those, the `order` roots
/// closest to the circle win, ties going to the larger modulus and then to
/// the smaller phase.
pub fn root_music_phases<T: Real>(r: &CMatrix<T>, order: usize) -> Result<Vec<f64>> {
    let n = r.nrows();
    if order >= n {
        return Err(Error::InvalidArgument(format!("root-MUSIC order {order} must be below {n}")));
    }
    if order == 0 {
        return Ok(Vec::new());
    }
    let eig = hermitian_eigen(r)?;
    let noise = CMatrix::<f64>::from_fn(n, n - order, |i, j| c_to_f64(eig.vectors[(i, order + j)]));
    let mut roots = poly_roots(&music_polynomial(&noise));
    roots.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    roots.truncate(n - 1);
    let mut cand: Vec<(f64, f64, f64)> = roots
        .iter()
        .filter(|z| z.norm() > 0.0)
        .map(|z| ((1.0 - z.norm()).abs(), z.norm(), z.arg()))
        .collect();
    if cand.len() < order {
        return Err(Error::Degenerate(format!(
            "root-MUSIC found {} usable roots for order {order}",
            cand.len()
        )));
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.total_cmp(&b.2)));
    let mut phases: Vec<f64> = cand[..order].iter().map(|c| c.2).collect();
    phases.sort_by(f64::total_cmp);
    Ok(phases)
}

/// Root-MUSIC mapped to physical units (deg, m, km/h), ascending.
pub fn root_music<T: Real>(r: &CMatrix<T>, order: usize, spec: &DimensionSpec) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = root_music_phases(r, order)?.into_iter().map(|mu| spec.physical_of_phase(mu).0).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Peaks of the incoherent zero-padded periodogram along one mode.
#[derive(Clone, Debug, PartialEq)]
pub struct DftPeaks {
    /// Per-sample phases of the selected peaks, strongest first.
    pub phases: Vec<f64>,
    /// Fewer local maxima than requested were available.
    pub short: bool,
}

/// Periodogram of mode `m` summed over every other mode, on a grid of
/// `oversampling * N'_m` bins.
pub fn periodogram<T: Real>(t: &Tensor<T>, m: usize, oversampling: usize) -> Result<Vec<f64>> {
    if m >= t.order() {
        return Err(Error::ModeOutOfRange { mode: m, order: t.order() });
    }
    if oversampling == 0 {
        return Err(Error::InvalidArgument("DFT oversampling must be at least 1".into()));
    }
    let (pre, n, post) = crate::tensor::layout(t.shape(), m);
    let l = n * oversampling;
    let fft = FftPlanner::<T>::new().plan_fft_forward(l);
    let mut power = vec![0.0; l];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); l];
    let data = t.data();
    for a in 0..pre {
        for b in 0..post {
            buf.iter_mut().for_each(|z| *z = Complex::new(T::zero(), T::zero()));
            for i in 0..n {
                buf[i] = data[(a * n + i) * post + b];
            }
            fft.process(&mut buf);
            for (p, z) in power.iter_mut().zip(&buf) {
                *p += to_f64(z.norm_sqr());
            }
        }
    }
    Ok(power)
}

/// Indices of strict circular local maxima, strongest first (ties to the
/// lower index).
pub fn local_maxima(power: &[f64]) -> Vec<usize> {
    let l = power.len();
    if l == 1 {
        return vec![0];
    }
    let mut peaks: Vec<usize> = (0..l)
        .filter(|&k| {
            let prev = power[(k + l - 1) % l];
            let next = power[(k + 1) % l];
            power[k] > prev && power[k] > next
        })
        .collect();
    peaks.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    peaks
}

pub fn dft_estimate<T: Real>(t: &Tensor<T>, m: usize, order: usize, oversampling: usize) -> Result<DftPeaks> {
    let power = periodogram(t, m, oversampling)?;
    let l = power.len();
    let peaks = local_maxima(&power);
    let short = peaks.len() < order;
    let phases = peaks.into_iter().take(order).map(|k| wrap_pi(2.0 * PI * k as f64 / l as f64)).collect();
    Ok(DftPeaks { phases, short })
}

/// Columns `exp(j mu n)`, `n = 0..len`; each has unit first element.
pub fn reconstruct_responses<T: Real>(phases: &[f64], len: usize) -> CMatrix<T> {
    CMatrix::from_fn(len, phases.len(), |n, p| cis(lit::<T>(phases[p] * n as f64)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    RootMusic,
    Dft,
}

impl Algorithm {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "root_music" => Some(Algorithm::RootMusic),
            "dft" => Some(Algorithm::Dft),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RootMusic => "root_music",
            Algorithm::Dft => "dft",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    pub fba: bool,
    pub dft_oversampling: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { algorithm: Algorithm::RootMusic, fba: true, dft_oversampling: 4 }
    }
}

/// Estimated components of one dimension, sorted by ascending parameter.
#[derive(Clone, Debug)]
pub struct DimensionEstimate<T: Real> {
    pub kind: DimKind,
    /// Physical values (deg, m, km/h).
    pub params: Vec<f64>,
    /// Per-sample phases generating `responses`.
    pub phases: Vec<f64>,
    pub model_order: usize,
    /// `N'_m x order`, columns `exp(j phase n)`.
    pub responses: CMatrix<T>,
    /// Autocorrelation eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Some angle needed clamping into the visible region.
    pub clamped: bool,
    /// The DFT estimator found fewer peaks than the model order.
    pub short: bool,
}

impl<T: Real> DimensionEstimate<T> {
    /// Builds an estimate from phases, sorting by physical value.
    pub fn from_phases(spec: &DimensionSpec, phases: &[f64], eigenvalues: Vec<f64>) -> Self {
        let mut rows: Vec<(f64, f64, bool)> = phases
            .iter()
            .map(|&mu| {
                let (p, c) = spec.physical_of_phase(mu);
                (p, mu, c)
            })
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let phases: Vec<f64> = rows.iter().map(|r| r.1).collect();
        DimensionEstimate {
            kind: spec.kind,
            params: rows.iter().map(|r| r.0).collect(),
            model_order: phases.len(),
            responses: reconstruct_responses(&phases, spec.len),
            phases,
            eigenvalues,
            clamped: rows.iter().any(|r| r.2),
            short: false,
        }
    }
}

/// Autocorrelation, optional FBA, AIC order, and rooting/DFT for mode `m`.
pub fn estimate_dimension<T: Real>(
    input: &CompressedInput<T>,
    m: usize,
    spec: &DimensionSpec,
    cfg: &EstimatorConfig,
) -> Result<DimensionEstimate<T>> {
    estimate_mode(&input.snapshot_tensor(), m, spec, cfg)
}

/// [`estimate_dimension`] on a bare tensor; every other mode acts as
/// snapshots.
pub fn estimate_mode<T: Real>(
    t: &Tensor<T>,
    m: usize,
    spec: &DimensionSpec,
    cfg: &EstimatorConfig,
) -> Result<DimensionEstimate<T>> {
    let mut r = mode_autocorrelation(t, m)?;
    if cfg.fba {
        r = fba(&r)?;
    }
    let eig = hermitian_eigen(&r)?;
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&x| to_f64(x)).collect();
    let n = r.nrows();
    let n_samples = t.len() / n;
    let order = aic_order(&eigenvalues, n_samples, n.saturating_sub(1))?;
    if order == 0 {
        return Ok(DimensionEstimate::from_phases(spec, &[], eigenvalues));
    }
    match cfg.algorithm {
        Algorithm::RootMusic => {
            let phases = root_music_phases(&r, order)?;
            Ok(DimensionEstimate::from_phases(spec, &phases, eigenvalues))
        }
        Algorithm::Dft => {
            let peaks = dft_estimate(t, m, order, cfg.dft_oversampling)?;
            let mut est = DimensionEstimate::from_phases(spec, &peaks.phases, eigenvalues);
            est.short = peaks.short;
            Ok(est)
        }
    }
}

/// Runs [`estimate_dimension`] on every mode independently.
pub fn estimate_all<T: Real>(
    input: &CompressedInput<T>,
    specs: &[DimensionSpec],
    cfgs: &[EstimatorConfig],
) -> Result<Vec<DimensionEstimate<T>>> {
    if specs.len() != input.dims() || cfgs.len() != input.dims() {
        return Err(Error::DimensionMismatch("one spec and estimator config per dimension".into()));
    }
    (0..input.dims()).into_par_iter().map(|m| estimate_dimension(input, m, &specs[m], &cfgs[m])).collect()
}
