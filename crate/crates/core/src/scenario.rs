//! Grid geometry, propagation paths, channel synthesis, and noise.
//!
//! Physical conventions used throughout the crate:
//! - distance `d` and delay `tau` are related by the one-way path length, `tau = d / c`;
//! - radial velocity `v` (km/h) maps to Doppler `v / 3.6 * f_c / c` (one-way);
//! - the steering phase per sample is `+2pi cos(theta) da / lambda` (angle),
//!   `-2pi tau df` (delay), and `+2pi nu dt` (Doppler).

use std::f64::consts::PI;

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::{cast_c, lit, Real};
use crate::tensor::Tensor;
use crate::C64;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const NOISE_TEMPERATURE_K: f64 = 296.0;

/// Sampling grid of the channel tensor (antennas x subcarriers x symbols).
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub n_a: usize,
    pub n_f: usize,
    pub n_t: usize,
    /// Antenna spacing in meters.
    pub antenna_spacing: f64,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// Symbol spacing in seconds.
    pub symbol_spacing: f64,
    pub carrier_frequency: f64,
}

impl Default for GridSpec {
    /// 16 antennas at half wavelength, 180 subcarriers at 60 kHz, 560 symbols
    /// over 10 ms, 26 GHz carrier.
    fn default() -> Self {
        let fc = 26e9;
        GridSpec {
            n_a: 16,
            n_f: 180,
            n_t: 560,
            antenna_spacing: SPEED_OF_LIGHT / fc / 2.0,
            subcarrier_spacing: 60e3,
            symbol_spacing: 10e-3 / 560.0,
            carrier_frequency: fc,
        }
    }
}

impl GridSpec {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_a, self.n_f, self.n_t]
    }

    pub fn bandwidth(&self) -> f64 {
        self.n_f as f64 * self.subcarrier_spacing
    }

    /// Native sample spacing of each dimension.
    pub fn spacing(&self, kind: DimKind) -> f64 {
        match kind {
            DimKind::Angle => self.antenna_spacing,
            DimKind::Delay => self.subcarrier_spacing,
            DimKind::Doppler => self.symbol_spacing,
        }
    }

    pub fn len(&self, kind: DimKind) -> usize {
        match kind {
            DimKind::Angle => self.n_a,
            DimKind::Delay => self.n_f,
            DimKind::Doppler => self.n_t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_a == 0 || self.n_f == 0 || self.n_t == 0 {
            return Err(Error::InvalidArgument("grid sizes must be at least 1".into()));
        }
        for (name, v) in [
            ("antenna spacing", self.antenna_spacing),
            ("subcarrier spacing", self.subcarrier_spacing),
            ("symbol spacing", self.symbol_spacing),
            ("carrier frequency", self.carrier_frequency),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// The three shipped sensing dimensions, in tensor mode order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DimKind {
    Angle,
    Delay,
    Doppler,
}

impl DimKind {
    pub const ALL: [DimKind; 3] = [DimKind::Angle, DimKind::Delay, DimKind::Doppler];

    pub fn phase_sign(self) -> f64 {
        match self {
            DimKind::Delay => -1.0,
            _ => 1.0,
        }
    }

    /// Phase advance per sample for an internal parameter value
    /// (`cos(theta)`, `tau` in s, or `nu` in Hz).
    pub fn phase(self, internal: f64, spacing: f64, wavelength: f64) -> f64 {
        let rate = match self {
            DimKind::Angle => internal / wavelength,
            _ => internal,
        };
        self.phase_sign() * 2.0 * PI * rate * spacing
    }

    /// Inverse of [`DimKind::phase`]. Delay phases are unwrapped onto
    /// `[0, 1/spacing)`, Doppler onto `(-1/(2 spacing), 1/(2 spacing)]`.
    /// Angle direction cosines outside `[-1, 1]` are clamped and flagged.
    pub fn internal_from_phase(self, phase: f64, spacing: f64, wavelength: f64) -> (f64, bool) {
        match self {
            DimKind::Angle => {
                let c = phase * wavelength / (2.0 * PI * spacing);
                if c > 1.0 {
                    (1.0, true)
                } else if c < -1.0 {
                    (-1.0, true)
                } else {
                    (c, false)
                }
            }
            DimKind::Delay => ((-phase).rem_euclid(2.0 * PI) / (2.0 * PI * spacing), false),
            DimKind::Doppler => (wrap_pi(phase) / (2.0 * PI * spacing), false),
        }
    }

    /// Physical unit used for reporting: degrees, meters, km/h.
    pub fn to_physical(self, internal: f64, carrier_frequency: f64) -> f64 {
        match self {
            DimKind::Angle => internal.clamp(-1.0, 1.0).acos().to_degrees(),
            DimKind::Delay => delay_to_distance(internal),
            DimKind::Doppler => doppler_to_velocity(internal, carrier_frequency),
        }
    }

    pub fn to_internal(self, physical: f64, carrier_frequency: f64) -> f64 {
        match self {
            DimKind::Angle => physical.to_radians().cos(),
            DimKind::Delay => distance_to_delay(physical),
            DimKind::Doppler => velocity_to_doppler(physical, carrier_frequency),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DimKind::Angle => "angle",
            DimKind::Delay => "distance",
            DimKind::Doppler => "velocity",
        }
    }
}

/// Wraps a phase onto `(-pi, pi]`.
pub fn wrap_pi(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

pub fn distance_to_delay(d: f64) -> f64 {
    d / SPEED_OF_LIGHT
}

pub fn delay_to_distance(tau: f64) -> f64 {
    tau * SPEED_OF_LIGHT
}

pub fn velocity_to_doppler(v_kmh: f64, carrier_frequency: f64) -> f64 {
    v_kmh / 3.6 * carrier_frequency / SPEED_OF_LIGHT
}

pub fn doppler_to_velocity(nu: f64, carrier_frequency: f64) -> f64 {
    nu * SPEED_OF_LIGHT / carrier_frequency * 3.6
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapDirection {
    ToInternal,
    ToPhysical,
}

/// Result of [`param_map`]; `clamped` is set when an angle inversion left
/// the valid direction-cosine range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mapped {
    pub value: f64,
    pub clamped: bool,
}

/// Converts between physical units (deg, m, km/h) and internal parameters
/// (`cos(theta)`, delay in s, Doppler in Hz).
pub fn param_map(kind: DimKind, value: f64, grid: &GridSpec, dir: MapDirection) -> Mapped {
    match dir {
        MapDirection::ToInternal => {
            Mapped { value: kind.to_internal(value, grid.carrier_frequency), clamped: false }
        }
        MapDirection::ToPhysical => {
            let clamped = kind == DimKind::Angle && !(-1.0..=1.0).contains(&value);
            Mapped { value: kind.to_physical(value, grid.carrier_frequency), clamped }
        }
    }
}

/// `exp(j * phase * n)` for `n = 0..len`.
pub fn response_vector<T: Real>(phase: f64, len: usize) -> Vec<Complex<T>> {
    (0..len)
        .map(|n| {
            let p = phase * n as f64;
            Complex::new(lit(p.cos()), lit(p.sin()))
        })
        .collect()
}

/// One propagation path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathParams {
    /// Azimuth angle of arrival in degrees, `[0, 180)`.
    pub angle_deg: f64,
    /// Delay in seconds.
    pub delay_s: f64,
    /// Doppler shift in Hz.
    pub doppler_hz: f64,
    pub gain: C64,
    /// Linear path-loss power ratio, if the gain was derived from one.
    pub path_loss: Option<f64>,
    pub rcs: Option<f64>,
}

impl PathParams {
    pub fn new(angle_deg: f64, delay_s: f64, doppler_hz: f64, gain: C64) -> Self {
        PathParams { angle_deg, delay_s, doppler_hz, gain, path_loss: None, rcs: None }
    }

    /// Builds a path from physical quantities.
    pub fn from_physical(angle_deg: f64, distance_m: f64, velocity_kmh: f64, gain: C64, grid: &GridSpec) -> Self {
        PathParams::new(
            angle_deg,
            distance_to_delay(distance_m),
            velocity_to_doppler(velocity_kmh, grid.carrier_frequency),
            gain,
        )
    }

    /// Internal parameter of one dimension.
    pub fn internal(&self, kind: DimKind) -> f64 {
        match kind {
            DimKind::Angle => self.angle_deg.to_radians().cos(),
            DimKind::Delay => self.delay_s,
            DimKind::Doppler => self.doppler_hz,
        }
    }

    /// Physical value in reporting units (deg, m, km/h).
    pub fn physical(&self, kind: DimKind, grid: &GridSpec) -> f64 {
        match kind {
            DimKind::Angle => self.angle_deg,
            _ => kind.to_physical(self.internal(kind), grid.carrier_frequency),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..180.0).contains(&self.angle_deg) {
            return Err(Error::InvalidArgument(format!("angle {} deg outside [0, 180)", self.angle_deg)));
        }
        if !(self.delay_s.is_finite() && self.delay_s >= 0.0) {
            return Err(Error::InvalidArgument(format!("delay {} s must be >= 0", self.delay_s)));
        }
        if !self.doppler_hz.is_finite() || !self.gain.re.is_finite() || !self.gain.im.is_finite() {
            return Err(Error::NonFinite("path parameters".into()));
        }
        if let (Some(pl), Some(rcs)) = (self.path_loss, self.rcs) {
            let want = (pl * rcs).sqrt();
            if (self.gain.norm() - want).abs() > 1e-9 * want.max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidArgument("gain magnitude disagrees with path loss and RCS".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub grid: GridSpec,
    pub paths: Vec<PathParams>,
}

impl Scenario {
    pub fn new(grid: GridSpec, paths: Vec<PathParams>) -> Result<Self> {
        grid.validate()?;
        if paths.is_empty() {
            return Err(Error::InvalidArgument("a scenario needs at least one path".into()));
        }
        for p in &paths {
            p.validate()?;
        }
        Ok(Scenario { grid, paths })
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// `sum_p |beta_p|^2`.
    pub fn gain_power(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }

    /// Steering vectors `(a, d, v)` of one path on this grid.
    pub fn steering_vectors<T: Real>(&self, path: &PathParams) -> [Vec<Complex<T>>; 3] {
        steering_vectors(path, &self.grid)
    }
}

pub fn steering_vectors<T: Real>(path: &PathParams, grid: &GridSpec) -> [Vec<Complex<T>>; 3] {
    let lambda = grid.wavelength();
    DimKind::ALL.map(|k| response_vector(k.phase(path.internal(k), grid.spacing(k), lambda), grid.len(k)))
}

/// Noiseless channel tensor `sum_p beta_p a_p o d_p o v_p`.
pub fn synthesize_channel<T: Real>(sc: &Scenario) -> Tensor<T> {
    let [na, nf, nt] = sc.grid.shape();
    let mut acc = vec![C64::new(0.0, 0.0); na * nf * nt];
    for path in &sc.paths {
        let [a, d, v] = steering_vectors::<f64>(path, &sc.grid);
        for r in 0..na {
            let ba = path.gain * a[r];
            for k in 0..nf {
                let w = ba * d[k];
                let row = &mut acc[(r * nf + k) * nt..(r * nf + k + 1) * nt];
                for (o, vs) in row.iter_mut().zip(&v) {
                    *o += w * vs;
                }
            }
        }
    }
    Tensor::new(vec![na, nf, nt], acc.into_iter().map(cast_c).collect()).expect("shape matches data")
}

/// How the transmit and noise powers are fixed for a target SNR.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PowerReference {
    /// Transmit power given; noise power solved from the SNR.
    TransmitPower(f64),
    /// Noise power is `k T B` at 296 K over the grid bandwidth; transmit
    /// power solved from the SNR.
    Thermal,
}

#[derive(Clone, Debug)]
pub struct NoisyObservation<T: Real> {
    pub tensor: Tensor<T>,
    pub tx_power: f64,
    pub noise_power: f64,
}

impl<T: Real> NoisyObservation<T> {
    /// Noise variance referred to a unit transmit power, `P_no / P_tx`.
    pub fn relative_noise_variance(&self) -> f64 {
        self.noise_power / self.tx_power
    }
}

pub fn thermal_noise_power(grid: &GridSpec) -> f64 {
    BOLTZMANN * NOISE_TEMPERATURE_K * grid.bandwidth()
}

/// Returns `sqrt(P_tx) H + N` with `N` circular Gaussian of per-element
/// variance `P_no`, where `P_tx / P_no * sum|beta|^2` equals the target SNR.
/// A target of `+inf` disables the noise (with `P_tx = 1` in thermal mode).
pub fn add_noise<T: Real>(
    h: &Tensor<T>,
    sc: &Scenario,
    snr_db: f64,
    power: PowerReference,
    seed: u64,
) -> Result<NoisyObservation<T>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!("invalid SNR {snr_db} dB")));
    }
    let gp = sc.gain_power();
    let snr = 10f64.powf(snr_db / 10.0);
    let (tx_power, noise_power) = match power {
        PowerReference::TransmitPower(p) => {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::InvalidArgument(format!("transmit power {p} must be positive")));
            }
            (p, if snr.is_infinite() { 0.0 } else { p * gp / snr })
        }
        PowerReference::Thermal => {
            if snr.is_infinite() {
                (1.0, 0.0)
            } else {
                let pno = thermal_noise_power(&sc.grid);
                (snr * pno / gp, pno)
            }
        }
    };
    let amp: T = lit(tx_power.sqrt());
    let mut out = h.map(|z| z * amp);
    if noise_power > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (noise_power / 2.0).sqrt()).expect("finite std");
        for z in out.data_mut() {
            let re: f64 = normal.sample(&mut rng);
            let im: f64 = normal.sample(&mut rng);
            *z += Complex::new(lit::<T>(re), lit::<T>(im));
        }
    }
    Ok(NoisyObservation { tensor: out, tx_power, noise_power })
}

/// Free-space power path loss `(lambda / (4 pi d))^2`.
pub fn free_space_path_loss(distance_m: f64, wavelength: f64) -> f64 {
    let r = wavelength / (4.0 * PI * distance_m.max(f64::MIN_POSITIVE));
    r * r
}

/// Parameter ranges for generated scenarios, in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Ranges {
    pub angle_deg: [f64; 2],
    pub distance_m: [f64; 2],
    pub velocity_kmh: [f64; 2],
}

impl Default for Ranges {
    fn default() -> Self {
        Ranges { angle_deg: [30.0, 150.0], distance_m: [50.0, 400.0], velocity_kmh: [0.0, 25.0] }
    }
}

impl Ranges {
    /// Angular sector narrowed to `[80, 100]` degrees.
    pub fn close() -> Self {
        Ranges { angle_deg: [80.0, 100.0], ..Ranges::default() }
    }
}

/// `i`-th of `n` equidistant points over `[a, b]`, endpoints included;
/// a single point sits at `a`.
pub fn equidistant(range: [f64; 2], i: usize, n: usize) -> f64 {
    if n <= 1 {
        range[0]
    } else {
        range[0] + i as f64 * (range[1] - range[0]) / (n - 1) as f64
    }
}

fn gain_for(distance_m: f64, grid: &GridSpec, phase: f64, path_loss: &dyn Fn(f64, f64) -> f64) -> (C64, f64) {
    let pl = path_loss(distance_m, grid.wavelength());
    let rcs = 1.0;
    (C64::from_polar((pl * rcs).sqrt(), phase), pl)
}

fn build(
    grid: &GridSpec,
    params: Vec<(f64, f64, f64)>,
    seed: u64,
    path_loss: &dyn Fn(f64, f64) -> f64,
) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths = params
        .into_iter()
        .map(|(ang, dist, vel)| {
            let phase = rng.random_range(0.0..2.0 * PI);
            let (gain, pl) = gain_for(dist, grid, phase, path_loss);
            let mut p = PathParams::from_physical(ang, dist, vel, gain, grid);
            p.path_loss = Some(pl);
            p.rcs = Some(1.0);
            p
        })
        .collect();
    Scenario::new(grid.clone(), paths)
}

/// Equidistant objects over the ranges; even-indexed objects are static
/// (velocity forced to 0), gain phases are uniform from `seed`.
pub fn generate_equidistant_scenario(
    n_paths: usize,
    ranges: &Ranges,
    grid: &GridSpec,
    seed: u64,
    path_loss: &dyn Fn(f64, f64) -> f64,
) -> Result<Scenario> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("at least one object is required".into()));
    }
    let params = (0..n_paths)
        .map(|i| {
            let vel = if i % 2 == 0 { 0.0 } else { equidistant(ranges.velocity_kmh, i, n_paths) };
            (
                equidistant(ranges.angle_deg, i, n_paths),
                equidistant(ranges.distance_m, i, n_paths),
                vel,
            )
        })
        .collect();
    build(grid, params, seed, path_loss)
}

/// Objects drawn uniformly over the ranges (arbitrary deployment).
pub fn generate_random_scenario(
    n_paths: usize,
    ranges: &Ranges,
    grid: &GridSpec,
    seed: u64,
    path_loss: &dyn Fn(f64, f64) -> f64,
) -> Result<Scenario> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("at least one object is required".into()));
    }
    // Separate stream so the gain phases match the equidistant generator's.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut draw = |r: [f64; 2]| if r[1] > r[0] { rng.random_range(r[0]..r[1]) } else { r[0] };
    let params = (0..n_paths)
        .map(|_| (draw(ranges.angle_deg), draw(ranges.distance_m), draw(ranges.velocity_kmh)))
        .collect();
    build(grid, params, seed, path_loss)
}
