//! Reference schemes: a sequential angle-then-delay/Doppler pipeline and
//! Tensor-ESPRIT on a smoothed input.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Complex, ComplexField};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::compression::{compress, CompressionPlan, Scheme};
use crate::error::{Error, Result};
use crate::estimation::{aic_order, bic_order, estimate_mode, Algorithm, DimensionSpec, EstimatorConfig};
use crate::fusion::{atom_responses, fit_atoms, DetectedObject, DetectedObjectSet};
use crate::linalg::{eig_general, hermitian_eigen, mode_gram, pinv, HermitianEigen, RANK_TOL};
use crate::scalar::{c_to_f64, lit, to_f64, Real};
use crate::scenario::{wrap_pi, DimKind, GridSpec};
use crate::tensor::{CMatrix, Tensor};
use crate::C64;

/// Secondary delay-Doppler peaks kept per angle as padding candidates.
const CANDIDATES_PER_ANGLE: usize = 3;

/// Extra coarse maxima refined beyond those requested, in case scalloping
/// reorders peaks between the coarse and the padded grid.
const SEED_MARGIN: usize = 4;

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// Strict local maxima of a circular 2D map (4-neighbourhood), the `count`
/// strongest first.
fn peaks_2d(power: &[f64], rows: usize, cols: usize, count: usize) -> Vec<usize> {
    let mut best: Vec<usize> = Vec::with_capacity(count + 1);
    for r in 0..rows {
        let up = ((r + rows - 1) % rows) * cols;
        let down = ((r + 1) % rows) * cols;
        let row = r * cols;
        for c in 0..cols {
            let v = power[row + c];
            if best.len() == count && v <= power[best[count - 1]] {
                continue;
            }
            let i = row + c;
            let nb = [up + c, down + c, row + (c + cols - 1) % cols, row + (c + 1) % cols];
            // Ties count: a tone halfway between bins has two equal maxima.
            if nb.iter().all(|&j| j == i || v >= power[j]) {
                let pos = best.partition_point(|&b| power[b] >= v);
                best.insert(pos, i);
                best.truncate(count);
            }
        }
    }
    best
}

/// Critically sampled 2D DFT power of a row-major `nf x nt` slice.
fn dft2_power<T: Real>(slice: &[Complex<T>], nf: usize, nt: usize) -> Vec<f64> {
    let mut planner = FftPlanner::<T>::new();
    let ft = planner.plan_fft_forward(nt);
    let ff = planner.plan_fft_forward(nf);
    let mut scratch = vec![zero::<T>(); ft.get_inplace_scratch_len().max(ff.get_inplace_scratch_len())];
    let mut grid = slice.to_vec();
    for row in grid.chunks_mut(nt) {
        ft.process_with_scratch(row, &mut scratch);
    }
    let mut col = vec![zero::<T>(); nf];
    let mut power = vec![0.0; nf * nt];
    for t in 0..nt {
        for f in 0..nf {
            col[f] = grid[f * nt + t];
        }
        ff.process_with_scratch(&mut col, &mut scratch);
        for (f, z) in col.iter().enumerate() {
            power[f * nt + t] = to_f64(z.norm_sqr());
        }
    }
    power
}

/// On-demand evaluation of the zero-padded 2D DFT on an `lf x lt` grid.
/// Time-axis partial sums are cached per column bin.
struct ZoomDft {
    x: Vec<C64>,
    nf: usize,
    nt: usize,
    lf: usize,
    lt: usize,
    root_f: Vec<C64>,
    root_t: Vec<C64>,
    partial: HashMap<usize, Vec<C64>>,
    values: HashMap<(usize, usize), f64>,
}

impl ZoomDft {
    fn new<T: Real>(slice: &[Complex<T>], nf: usize, nt: usize, lf: usize, lt: usize) -> Self {
        let roots = |l: usize| (0..l).map(|k| C64::from_polar(1.0, -2.0 * PI * k as f64 / l as f64)).collect();
        ZoomDft {
            x: slice.iter().map(|&z| c_to_f64(z)).collect(),
            nf,
            nt,
            lf,
            lt,
            root_f: roots(lf),
            root_t: roots(lt),
            partial: HashMap::new(),
            values: HashMap::new(),
        }
    }

    fn power(&mut self, kf: usize, kt: usize) -> f64 {
        if let Some(&v) = self.values.get(&(kf, kt)) {
            return v;
        }
        let (nf, nt, lt) = (self.nf, self.nt, self.lt);
        if !self.partial.contains_key(&kt) {
            let z: Vec<C64> = (0..nf)
                .map(|f| {
                    let row = &self.x[f * nt..(f + 1) * nt];
                    row.iter().enumerate().map(|(t, &v)| v * self.root_t[(t * kt) % lt]).sum()
                })
                .collect();
            self.partial.insert(kt, z);
        }
        let z = &self.partial[&kt];
        let v: C64 = z.iter().enumerate().map(|(f, &v)| v * self.root_f[(f * kf) % self.lf]).sum();
        let p = v.norm_sqr();
        self.values.insert((kf, kt), p);
        p
    }

    /// Steepest ascent over the 8-neighbourhood; ends on a bin strictly
    /// above all its neighbours.
    fn climb(&mut self, mut kf: usize, mut kt: usize) -> (usize, usize, f64) {
        let (lf, lt) = (self.lf, self.lt);
        let mut v = self.power(kf, kt);
        loop {
            let mut next = None;
            for df in [lf - 1, 0, 1] {
                for dt in [lt - 1, 0, 1] {
                    if df == 0 && dt == 0 {
                        continue;
                    }
                    let (a, b) = ((kf + df) % lf, (kt + dt) % lt);
                    let w = self.power(a, b);
                    if w > next.map_or(v, |(_, _, best)| best) {
                        next = Some((a, b, w));
                    }
                }
            }
            match next {
                Some((a, b, w)) => (kf, kt, v) = (a, b, w),
                None => return (kf, kt, v),
            }
        }
    }
}

/// The `count` strongest peaks of the `oversampling`-times zero-padded 2D DFT
/// of a slice, as `(frequency bin, time bin, power)`.
///
/// Local maxima of the critically sampled DFT seed an ascent on the padded
/// grid, so only neighbourhoods of candidate peaks are evaluated.
fn padded_dft_peaks<T: Real>(slice: &[Complex<T>], nf: usize, nt: usize, oversampling: usize, count: usize) -> Vec<(usize, usize, f64)> {
    let coarse = dft2_power(slice, nf, nt);
    let seeds = peaks_2d(&coarse, nf, nt, count + SEED_MARGIN);
    let (lf, lt) = (nf * oversampling, nt * oversampling);
    let mut zoom = ZoomDft::new(slice, nf, nt, lf, lt);
    let mut found: Vec<(usize, usize, f64)> = Vec::new();
    for s in seeds {
        let peak = zoom.climb((s / nt) * oversampling, (s % nt) * oversampling);
        if !found.iter().any(|p| p.0 == peak.0 && p.1 == peak.1) {
            found.push(peak);
        }
    }
    found.sort_by(|a, b| b.2.total_cmp(&a.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    found.truncate(count);
    found
}

/// Sequential baseline on an uncompressed `N_a x N_f x N_t` tensor.
///
/// Angles come from root-MUSIC (FBA, AIC) with the delay/Doppler samples as
/// snapshots. The data is projected onto each detected angle's response, and
/// the strongest bin of the oversampled delay-Doppler DFT of that view becomes
/// the object. Objects carry `index = [angle column]`.
pub fn sequential_estimate<T: Real>(h: &Tensor<T>, grid: &GridSpec, dft_oversampling: usize) -> Result<DetectedObjectSet> {
    if h.order() != 3 {
        return Err(Error::DimensionMismatch("sequential baseline expects an angle x delay x Doppler tensor".into()));
    }
    if dft_oversampling == 0 {
        return Err(Error::InvalidArgument("DFT oversampling must be at least 1".into()));
    }
    let [na, nf, nt] = [h.shape()[0], h.shape()[1], h.shape()[2]];
    let angle_spec = DimensionSpec::new(grid, DimKind::Angle, 1, na);
    let cfg = EstimatorConfig { algorithm: Algorithm::RootMusic, fba: true, dft_oversampling };
    let angles = estimate_mode(h, 0, &angle_spec, &cfg)?;
    if angles.model_order == 0 {
        return Ok(DetectedObjectSet::default());
    }
    let a_pinv = pinv(&angles.responses, RANK_TOL);
    let views = h.mode_product(&a_pinv.matrix, 0)?;
    let delay_spec = DimensionSpec::new(grid, DimKind::Delay, 1, nf);
    let doppler_spec = DimensionSpec::new(grid, DimKind::Doppler, 1, nt);
    let (lf, lt) = (nf * dft_oversampling, nt * dft_oversampling);
    let norm = (nf * nt) as f64;

    let per_angle: Vec<Vec<DetectedObject>> = (0..angles.model_order)
        .into_par_iter()
        .map(|p| {
            let slice = &views.data()[p * nf * nt..(p + 1) * nf * nt];
            padded_dft_peaks(slice, nf, nt, dft_oversampling, 1 + CANDIDATES_PER_ANGLE)
                .into_iter()
                .map(|(kf, kt, power)| {
                    let mu_f = wrap_pi(2.0 * PI * kf as f64 / lf as f64);
                    let mu_t = wrap_pi(2.0 * PI * kt as f64 / lt as f64);
                    DetectedObject {
                        index: vec![p],
                        params: vec![
                            angles.params[p],
                            delay_spec.physical_of_phase(mu_f).0,
                            doppler_spec.physical_of_phase(mu_t).0,
                        ],
                        phases: vec![angles.phases[p], mu_f, mu_t],
                        gain: power.sqrt() / norm,
                    }
                })
                .collect()
        })
        .collect();

    let mut objects = Vec::new();
    let mut candidates = Vec::new();
    for mut list in per_angle {
        if list.is_empty() {
            continue;
        }
        let rest = list.split_off(1);
        objects.extend(list);
        candidates.extend(rest);
    }
    objects.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    candidates.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    Ok(DetectedObjectSet { objects, candidates, stagnated: false, truncated: a_pinv.truncated })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderCriterion {
    Aic,
    Bic,
}

impl OrderCriterion {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "aic" => Some(OrderCriterion::Aic),
            "bic" => Some(OrderCriterion::Bic),
            _ => None,
        }
    }

    pub fn select(self, eigenvalues: &[f64], n_samples: usize, max_order: usize) -> Result<usize> {
        match self {
            OrderCriterion::Aic => aic_order(eigenvalues, n_samples, max_order),
            OrderCriterion::Bic => bic_order(eigenvalues, n_samples, max_order),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EspritConfig {
    /// Spatial smoothing factor per sensing dimension.
    pub smoothing_factors: Vec<usize>,
    /// Cap on the virtual snapshots kept from smoothing.
    pub max_snapshots: usize,
    pub criterion: OrderCriterion,
    pub sweep_limit: usize,
}

impl Default for EspritConfig {
    fn default() -> Self {
        EspritConfig { smoothing_factors: vec![1, 2, 2], max_snapshots: 20, criterion: OrderCriterion::Bic, sweep_limit: 20 }
    }
}

impl EspritConfig {
    pub fn validate(&self) -> Result<()> {
        if self.smoothing_factors.iter().any(|&f| f == 0) {
            return Err(Error::InvalidArgument("smoothing factors must be at least 1".into()));
        }
        if self.max_snapshots == 0 {
            return Err(Error::InvalidArgument("ESPRIT needs at least one snapshot".into()));
        }
        if self.sweep_limit == 0 {
            return Err(Error::InvalidArgument("joint diagonalization needs at least one sweep".into()));
        }
        Ok(())
    }
}

/// Eigen-decompositions of `X_[m] X_[m]^H` for the leading `modes` modes,
/// computed independently.
pub fn mode_spectra<T: Real>(t: &Tensor<T>, modes: usize) -> Result<Vec<HermitianEigen<T>>> {
    if modes > t.order() {
        return Err(Error::ModeOutOfRange { mode: modes, order: t.order() });
    }
    (0..modes).into_par_iter().map(|m| hermitian_eigen(&mode_gram(t, m)?)).collect()
}

/// Truncated HOSVD of a tensor with a trailing snapshot mode.
#[derive(Clone, Debug)]
pub struct Hosvd<T: Real> {
    /// Orthonormal `M_m x p_m` basis per sensing mode.
    pub bases: Vec<CMatrix<T>>,
    /// Squared singular values per sensing mode, descending.
    pub mode_values: Vec<Vec<f64>>,
    /// `p_1 x ... x p_M x d` coordinates of the global signal subspace in the
    /// Kronecker product of the bases.
    pub core: Tensor<T>,
    /// Sensing-mode lengths.
    pub shape: Vec<usize>,
}

impl<T: Real> Hosvd<T> {
    pub fn subspace_dim(&self) -> usize {
        *self.core.shape().last().expect("core has a subspace mode")
    }

    /// The global signal subspace as a `prod M_m x d` matrix, rows in
    /// row-major order of the sensing indices.
    pub fn subspace(&self) -> Result<CMatrix<T>> {
        let mut e = self.core.clone();
        for (m, u) in self.bases.iter().enumerate() {
            e = e.mode_product(u, m)?;
        }
        let d = self.subspace_dim();
        let rows = e.len() / d.max(1);
        Ok(CMatrix::from_fn(rows, d, |i, k| e.data()[i * d + k]))
    }
}

/// Per-mode bases truncated to `orders`, and a `d`-dimensional global
/// signal subspace projected onto their Kronecker product.
pub fn hosvd_subspaces<T: Real>(t: &Tensor<T>, orders: &[usize], d: usize) -> Result<Hosvd<T>> {
    if t.order() < 2 {
        return Err(Error::DimensionMismatch("HOSVD expects sensing modes plus a snapshot mode".into()));
    }
    let spectra = mode_spectra(t, t.order() - 1)?;
    hosvd_from_spectra(t, &spectra, orders, d)
}

pub fn hosvd_from_spectra<T: Real>(t: &Tensor<T>, spectra: &[HermitianEigen<T>], orders: &[usize], d: usize) -> Result<Hosvd<T>> {
    let dims = t.order() - 1;
    if spectra.len() != dims || orders.len() != dims {
        return Err(Error::DimensionMismatch("one order and spectrum per sensing mode".into()));
    }
    for (m, &p) in orders.iter().enumerate() {
        if p == 0 {
            return Err(Error::Degenerate(format!("mode {m} has order 0")));
        }
        if p > t.shape()[m] {
            return Err(Error::InvalidArgument(format!("order {p} exceeds mode {m} length {}", t.shape()[m])));
        }
    }
    let s = t.shape()[dims];
    if d == 0 || d > s {
        return Err(Error::InvalidArgument(format!("subspace dimension {d} outside 1..={s}")));
    }
    let bases: Vec<CMatrix<T>> =
        spectra.iter().zip(orders).map(|(e, &p)| e.vectors.columns(0, p).into_owned()).collect();

    // Dominant left singular vectors of the (prod M) x S unfolding via the
    // S x S Gram: U = X V diag(1/sigma).
    let g = mode_gram(t, dims)?.map(|z| z.conj());
    let snap = hermitian_eigen(&g)?;
    let top = to_f64(snap.values[0]).max(0.0);
    let mut inv_sigma = Vec::with_capacity(d);
    for k in 0..d {
        let v = to_f64(snap.values[k]);
        if !(v > top * RANK_TOL * RANK_TOL) {
            return Err(Error::Degenerate(format!("snapshot matrix has rank below {d}")));
        }
        inv_sigma.push(lit::<T>(1.0 / v.sqrt()));
    }
    let rows = t.len() / s;
    let v = snap.vectors.columns(0, d);
    let data = t.data();
    let mut us = vec![zero::<T>(); rows * d];
    for i in 0..rows {
        let x = &data[i * s..(i + 1) * s];
        for k in 0..d {
            let mut acc = zero::<T>();
            for (j, z) in x.iter().enumerate() {
                acc += *z * v[(j, k)];
            }
            us[i * d + k] = acc.scale(inv_sigma[k]);
        }
    }
    let mut shape: Vec<usize> = t.shape()[..dims].to_vec();
    shape.push(d);
    let mut core = Tensor::new(shape, us)?;
    // Shortest modes last keeps the intermediates small.
    let mut order: Vec<usize> = (0..dims).collect();
    order.sort_by_key(|&m| std::cmp::Reverse(t.shape()[m]));
    for m in order {
        core = core.mode_product(&bases[m].adjoint(), m)?;
    }
    Ok(Hosvd {
        mode_values: spectra.iter().map(|e| e.values.iter().map(|&x| to_f64(x)).collect()).collect(),
        bases,
        core,
        shape: t.shape()[..dims].to_vec(),
    })
}

/// Shift-invariance operator of mode `m`: the LS solution of
/// `J1 E Psi = J2 E` for the subspace `E = (U_1 x ... x U_M) C`, formed from
/// the small core via the normal equations.
pub fn shift_operator<T: Real>(hosvd: &Hosvd<T>, m: usize) -> Result<CMatrix<T>> {
    let u = &hosvd.bases[m];
    let rows = u.nrows();
    if rows < 2 {
        return Err(Error::InvalidArgument(format!("mode {m} needs at least two samples for shift invariance")));
    }
    let u1 = u.rows(0, rows - 1);
    let u2 = u.rows(1, rows - 1);
    let k11 = u1.adjoint() * u1;
    let k12 = u1.adjoint() * u2;
    let d = hosvd.subspace_dim();
    let flat = |t: &Tensor<T>| CMatrix::from_fn(t.len() / d, d, |i, k| t.data()[i * d + k]);
    let c = flat(&hosvd.core);
    let g11 = c.adjoint() * flat(&hosvd.core.mode_product(&k11, m)?);
    let g12 = c.adjoint() * flat(&hosvd.core.mode_product(&k12, m)?);
    Ok(pinv(&g11, RANK_TOL).matrix * g12)
}

/// Result of a simultaneous similarity diagonalization.
#[derive(Clone, Debug)]
pub struct JointDiagonalization<T: Real> {
    /// Common eigenvector matrix `V`, `V^-1 A_r V ~ diagonal`.
    pub transform: CMatrix<T>,
    /// Diagonal of each transformed matrix.
    pub diagonals: Vec<Vec<Complex<T>>>,
    /// Relative off-diagonal energy after initialization and after every sweep.
    pub off_energy: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn off_energy<T: Real>(mats: &[CMatrix<T>]) -> f64 {
    mats.iter()
        .map(|a| {
            let mut s = 0.0;
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    if i != j {
                        s += to_f64(a[(i, j)].norm_sqr());
                    }
                }
            }
            s
        })
        .sum()
}

/// `(I - x E_ij) A (I + x E_ij)`.
fn shear<T: Real>(a: &CMatrix<T>, i: usize, j: usize, x: Complex<T>) -> CMatrix<T> {
    let mut b = a.clone();
    let n = a.nrows();
    for k in 0..n {
        let v = b[(k, i)];
        b[(k, j)] += x * v;
    }
    for k in 0..n {
        let v = b[(j, k)];
        b[(i, k)] -= x * v;
    }
    b
}

/// Jointly diagonalizes commuting (up to noise) matrices by similarity.
///
/// Starts from the eigenvectors of a fixed generic linear combination, then
/// runs Jacobi-type sweeps of elementary shears `I + x E_ij`, each chosen to
/// cancel the `(i, j)` entries in least squares and accepted only if the
/// total off-diagonal energy does not grow (halving `x` otherwise).
pub fn joint_diagonalize<T: Real>(mats: &[CMatrix<T>], sweep_limit: usize) -> Result<JointDiagonalization<T>> {
    let first = mats.first().ok_or_else(|| Error::InvalidArgument("nothing to diagonalize".into()))?;
    let n = first.nrows();
    if mats.iter().any(|a| a.nrows() != n || a.ncols() != n) {
        return Err(Error::DimensionMismatch("joint diagonalization needs equal square matrices".into()));
    }
    let mut combo = CMatrix::<T>::zeros(n, n);
    for (r, a) in mats.iter().enumerate() {
        let w = Complex::new(lit::<T>((0.7 * r as f64 + 0.3).cos()), lit::<T>((1.3 * r as f64 + 0.5).sin()))
            .scale(lit(1.0 + 0.37 * r as f64));
        combo += a * w;
    }
    let (_, mut v) = eig_general(&combo)?;
    let vinv = v.clone().try_inverse().ok_or_else(|| Error::Degenerate("defective joint eigenbasis".into()))?;
    let mut cur: Vec<CMatrix<T>> = mats.iter().map(|a| &vinv * a * &v).collect();
    let total: f64 = cur.iter().map(|a| to_f64(a.norm_squared())).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut energy = off_energy(&cur);
    let mut history = vec![energy / total];
    let mut converged = energy <= total * 1e-28;
    let mut sweeps = 0;
    while !converged && sweeps < sweep_limit {
        sweeps += 1;
        let before = energy;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut num = zero::<T>();
                let mut den = 0.0;
                for a in &cur {
                    let dd = a[(i, i)] - a[(j, j)];
                    num += dd.conj() * a[(i, j)];
                    den += to_f64(dd.norm_sqr());
                }
                if den <= total * 1e-30 {
                    continue;
                }
                let mut x = -num.scale(lit(1.0 / den));
                for _ in 0..4 {
                    let trial: Vec<CMatrix<T>> = cur.iter().map(|a| shear(a, i, j, x)).collect();
                    let e = off_energy(&trial);
                    if e <= energy {
                        cur = trial;
                        energy = e;
                        for k in 0..n {
                            let w = v[(k, i)];
                            v[(k, j)] += x * w;
                        }
                        break;
                    }
                    x = x.scale(lit(0.5));
                }
            }
        }
        history.push(energy / total);
        if before - energy <= before * 1e-6 || energy <= total * 1e-28 {
            converged = true;
        }
    }
    let diagonals = cur.iter().map(|a| (0..n).map(|k| a[(k, k)]).collect()).collect();
    Ok(JointDiagonalization { transform: v, diagonals, off_energy: history, sweeps, converged })
}

/// Tensor-ESPRIT output with its diagnostics.
#[derive(Clone, Debug)]
pub struct EspritResult {
    pub set: DetectedObjectSet,
    /// Per-mode orders from the information criterion.
    pub mode_orders: Vec<usize>,
    pub subspace_dim: usize,
    pub sweeps: usize,
    /// False when the sweep limit was reached; the best iterate is returned.
    pub converged: bool,
}

/// Tensor-ESPRIT on an uncompressed tensor.
///
/// The input is spatially smoothed, per-mode orders come from the
/// configured criterion, the global signal subspace has `true_np_override`
/// (or the largest per-mode order) columns, and the per-mode shift-invariance
/// operators are jointly diagonalized so that parameters pair through the
/// shared eigenvectors. Gains are a joint LS fit on the original data.
pub fn tensor_esprit<T: Real>(
    h: &Tensor<T>,
    cfg: &EspritConfig,
    grid: &GridSpec,
    true_np_override: Option<usize>,
) -> Result<EspritResult> {
    cfg.validate()?;
    let dims = h.order();
    if cfg.smoothing_factors.len() != dims {
        return Err(Error::DimensionMismatch("one smoothing factor per dimension".into()));
    }
    let plan = CompressionPlan::uniform(Scheme::Smooth, &cfg.smoothing_factors).with_max_snapshots(cfg.max_snapshots);
    let smoothed = compress(h, &plan)?;
    let t = smoothed.snapshot_tensor();
    if smoothed.reduced.iter().any(|&n| n < 2) {
        return Err(Error::InvalidArgument("every mode needs at least two samples after smoothing".into()));
    }
    let spectra = mode_spectra(&t, dims)?;
    let mut mode_orders = Vec::with_capacity(dims);
    for (m, e) in spectra.iter().enumerate() {
        let values: Vec<f64> = e.values.iter().map(|&x| to_f64(x)).collect();
        let n = values.len();
        mode_orders.push(cfg.criterion.select(&values, t.len() / n, n - 1)?);
        if mode_orders[m] == 0 {
            return Err(Error::Degenerate(format!("no components detected in mode {m}")));
        }
    }
    let s = *t.shape().last().expect("snapshot mode");
    let wanted = true_np_override.unwrap_or_else(|| mode_orders.iter().copied().max().unwrap_or(0));
    let product: usize = mode_orders.iter().product();
    let d = wanted.min(s).min(product);
    let truncated = d < wanted;
    let hosvd = hosvd_from_spectra(&t, &spectra, &mode_orders, d)?;
    let ops: Vec<CMatrix<T>> = (0..dims).map(|m| shift_operator(&hosvd, m)).collect::<Result<_>>()?;
    let jd = joint_diagonalize(&ops, cfg.sweep_limit)?;

    let specs: Vec<DimensionSpec> =
        DimKind::ALL.iter().take(dims).zip(&smoothed.reduced).map(|(&k, &n)| DimensionSpec::new(grid, k, 1, n)).collect();
    let phases: Vec<Vec<f64>> =
        (0..d).map(|p| (0..dims).map(|m| to_f64(jd.diagonals[m][p].argument())).collect()).collect();
    let atoms = atom_responses::<T>(&phases, h.shape());
    let coeffs = fit_atoms(&h.with_trailing_mode(), &atoms)?;
    let mut objects: Vec<DetectedObject> = phases
        .iter()
        .enumerate()
        .map(|(p, ph)| DetectedObject {
            index: vec![p],
            params: ph.iter().zip(&specs).map(|(&mu, sp)| sp.physical_of_phase(mu).0).collect(),
            phases: ph.clone(),
            gain: to_f64(coeffs[(p, 0)].modulus()),
        })
        .collect();
    objects.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    Ok(EspritResult {
        set: DetectedObjectSet { objects, candidates: Vec::new(), stagnated: false, truncated },
        mode_orders,
        subspace_dim: d,
        sweeps: jd.sweeps,
        converged: jd.converged,
    })
}
