//! Pairing per-dimension estimates into multidimensional objects.
//!
//! The compressed data is modelled as a core tensor multiplied along every
//! sensing mode by the reconstructed response matrices. Large core entries
//! link one column per mode into an object.

use nalgebra::Complex;

use crate::compression::CompressedInput;
use crate::error::{Error, Result};
use crate::estimation::{estimate_all, DimensionEstimate, DimensionSpec, EstimatorConfig};
use crate::linalg::{pinv, RANK_TOL};
use crate::scalar::{to_f64, Real};
use crate::tensor::{CMatrix, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMethod {
    Ls,
    Omp,
}

impl FusionMethod {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "ls" => Some(FusionMethod::Ls),
            "omp" => Some(FusionMethod::Omp),
            _ => None,
        }
    }
}

/// How many ranked core entries become objects.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// The largest per-dimension model order.
    MaxRule,
    /// A known object count.
    TrueCount(usize),
    /// Entries whose mean power reaches the threshold.
    Threshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionConfig {
    pub method: FusionMethod,
    pub selection: Selection,
    /// Total CLEAN-style rounds; 1 disables refinement.
    pub rounds: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig { method: FusionMethod::Omp, selection: Selection::MaxRule, rounds: 1 }
    }
}

/// Core tensor of shape `orders x S`.
#[derive(Clone, Debug)]
pub struct CoreEstimate<T: Real> {
    pub core: Tensor<T>,
    pub method: FusionMethod,
    /// A pseudo-inverse dropped near-zero singular values.
    pub truncated: bool,
}

impl<T: Real> CoreEstimate<T> {
    pub fn snapshots(&self) -> usize {
        *self.core.shape().last().expect("core has a snapshot mode")
    }

    /// Shape without the snapshot mode.
    pub fn index_shape(&self) -> &[usize] {
        let s = self.core.shape();
        &s[..s.len() - 1]
    }

    /// `(1/S) sum_s |B[i, s]|^2` for every index in row-major order.
    pub fn mean_power(&self) -> Vec<f64> {
        let s = self.snapshots();
        self.core
            .data()
            .chunks(s.max(1))
            .map(|c| c.iter().map(|z| to_f64(z.norm_sqr())).sum::<f64>() / s as f64)
            .collect()
    }

    pub fn entry_power(&self, index: &[usize]) -> f64 {
        let flat = flat_index(index, self.index_shape());
        self.mean_power_at(flat)
    }

    fn mean_power_at(&self, flat: usize) -> f64 {
        let s = self.snapshots();
        self.core.data()[flat * s..(flat + 1) * s].iter().map(|z| to_f64(z.norm_sqr())).sum::<f64>() / s as f64
    }

    /// Per-snapshot core values at one index.
    pub fn entry(&self, index: &[usize]) -> &[Complex<T>] {
        let s = self.snapshots();
        let flat = flat_index(index, self.index_shape());
        &self.core.data()[flat * s..(flat + 1) * s]
    }
}

pub(crate) fn flat_index(index: &[usize], shape: &[usize]) -> usize {
    index.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

pub(crate) fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for m in (0..shape.len()).rev() {
        idx[m] = flat % shape[m];
        flat /= shape[m];
    }
    idx
}

fn check_estimates<T: Real>(input: &CompressedInput<T>, estimates: &[DimensionEstimate<T>]) -> Result<()> {
    if estimates.len() != input.dims() {
        return Err(Error::DimensionMismatch(format!(
            "{} estimates for {} dimensions",
            estimates.len(),
            input.dims()
        )));
    }
    for (m, e) in estimates.iter().enumerate() {
        if e.responses.nrows() != input.reduced[m] {
            return Err(Error::DimensionMismatch(format!("response rows differ from N'_{m}")));
        }
    }
    Ok(())
}

/// Core by per-mode least squares: `H' x_1 pinv(U_1) ... x_M pinv(U_M)`.
pub fn ls_fuse<T: Real>(input: &CompressedInput<T>, estimates: &[DimensionEstimate<T>]) -> Result<CoreEstimate<T>> {
    check_estimates(input, estimates)?;
    if estimates.iter().any(|e| e.model_order == 0) {
        return Err(Error::InvalidArgument("least-squares fusion needs at least one component per dimension".into()));
    }
    let mut core = input.snapshot_tensor().into_owned();
    let mut truncated = false;
    for (m, e) in estimates.iter().enumerate() {
        let p = pinv(&e.responses, RANK_TOL);
        truncated |= p.truncated;
        core = core.mode_product(&p.matrix, m)?;
    }
    Ok(CoreEstimate { core, method: FusionMethod::Ls, truncated })
}

/// All core indices by descending mean power; equal powers keep row-major
/// (lexicographic) order.
pub fn rank_paths<T: Real>(core: &CoreEstimate<T>) -> Vec<Vec<usize>> {
    let power = core.mean_power();
    let mut order: Vec<usize> = (0..power.len()).collect();
    order.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    order.into_iter().map(|f| unravel(f, core.index_shape())).collect()
}

/// Number of objects to declare.
pub fn selection_count<T: Real>(orders: &[usize], selection: Selection, core: Option<&CoreEstimate<T>>) -> usize {
    if orders.iter().all(|&o| o == 0) {
        return 0;
    }
    match selection {
        Selection::MaxRule => orders.iter().copied().max().unwrap_or(0),
        Selection::TrueCount(n) => n,
        Selection::Threshold(p) => core.map_or(0, |c| c.mean_power().iter().filter(|&&x| x >= p).count()),
    }
}

/// First `count` entries of the ranking (fewer if the core is smaller).
pub fn select_objects(orders: &[usize], ranked: &[Vec<usize>], count: usize) -> Vec<Vec<usize>> {
    if orders.iter().all(|&o| o == 0) {
        return Vec::new();
    }
    ranked.iter().take(count).cloned().collect()
}

/// `sqrt((1/S) sum_s |B[i, s]|^2)` per object.
pub fn estimate_gains<T: Real>(core: &CoreEstimate<T>, objects: &[Vec<usize>]) -> Vec<f64> {
    objects.iter().map(|i| core.entry_power(i).sqrt()).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectedObject {
    /// Column index into each dimension's estimate.
    pub index: Vec<usize>,
    /// Physical parameters (deg, m, km/h) per dimension.
    pub params: Vec<f64>,
    /// Per-sample phases per dimension.
    pub phases: Vec<f64>,
    pub gain: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectedObjectSet {
    pub objects: Vec<DetectedObject>,
    /// Ranked but unselected entries, strongest first; used to pad reports
    /// when fewer objects than requested were found.
    pub candidates: Vec<DetectedObject>,
    /// Greedy selection hit an index it had already chosen.
    pub stagnated: bool,
    /// A pseudo-inverse was rank-deficient.
    pub truncated: bool,
}

impl DetectedObjectSet {
    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Objects topped up from the candidates to exactly `n`, if possible.
    pub fn padded(&self, n: usize) -> Option<Vec<DetectedObject>> {
        let mut out: Vec<DetectedObject> = self.objects.iter().take(n).cloned().collect();
        out.extend(self.candidates.iter().take(n.saturating_sub(out.len())).cloned());
        (out.len() == n).then_some(out)
    }
}

fn make_object<T: Real>(estimates: &[DimensionEstimate<T>], index: &[usize], gain: f64) -> DetectedObject {
    DetectedObject {
        index: index.to_vec(),
        params: index.iter().zip(estimates).map(|(&i, e)| e.params[i]).collect(),
        phases: index.iter().zip(estimates).map(|(&i, e)| e.phases[i]).collect(),
        gain,
    }
}

/// Outcome of tensor OMP.
#[derive(Clone, Debug)]
pub struct OmpResult<T: Real> {
    /// Selected indices in selection order.
    pub selected: Vec<Vec<usize>>,
    /// Core over the full index space, zero outside the selected columns.
    pub core: CoreEstimate<T>,
    /// Residual Frobenius norm before the first and after each iteration.
    pub residual_norms: Vec<f64>,
    /// Remaining indices ranked by their final residual correlation.
    pub ranked_rest: Vec<Vec<usize>>,
    pub stagnated: bool,
}

fn restrict<T: Real>(u: &CMatrix<T>, cols: &[usize]) -> CMatrix<T> {
    CMatrix::from_fn(u.nrows(), cols.len(), |i, j| u[(i, cols[j])])
}

fn correlation_power<T: Real>(residual: &Tensor<T>, dicts: &[CMatrix<T>]) -> Result<Vec<f64>> {
    let mut c = residual.clone();
    for (m, u) in dicts.iter().enumerate() {
        c = c.mode_product(&u.adjoint(), m)?;
    }
    let s = *c.shape().last().expect("snapshot mode");
    Ok(c.data().chunks(s).map(|ch| ch.iter().map(|z| to_f64(z.norm_sqr())).sum()).collect())
}

fn check_omp<T: Real>(input: &CompressedInput<T>, estimates: &[DimensionEstimate<T>], max_iters: usize) -> Result<()> {
    check_estimates(input, estimates)?;
    if max_iters == 0 {
        return Err(Error::InvalidArgument("OMP needs at least one iteration".into()));
    }
    if estimates.iter().any(|e| e.model_order == 0) {
        return Err(Error::InvalidArgument("OMP fusion needs at least one component per dimension".into()));
    }
    Ok(())
}

/// Tensor orthogonal matching pursuit over the Kronecker dictionary of the
/// estimated responses.
///
/// Every atom lies in the span of the per-mode response matrices, so the
/// data is first projected onto orthonormal bases of those spans and the
/// greedy loop runs on the (much smaller) projection. Residual norms still
/// refer to the full data.
pub fn omp_fuse<T: Real>(
    input: &CompressedInput<T>,
    estimates: &[DimensionEstimate<T>],
    max_iters: usize,
) -> Result<OmpResult<T>> {
    check_omp(input, estimates, max_iters)?;
    let data = input.snapshot_tensor();
    let mut projected = data.clone().into_owned();
    let mut dicts = Vec::with_capacity(estimates.len());
    for (m, e) in estimates.iter().enumerate() {
        let q = e.responses.clone().qr().q();
        dicts.push(q.adjoint() * &e.responses);
        projected = projected.mode_product(&q.adjoint(), m)?;
    }
    let outside = (to_f64(data.norm_sqr()) - to_f64(projected.norm_sqr())).max(0.0);
    omp_loop(&projected, &dicts, max_iters, outside)
}

/// [`omp_fuse`] without the subspace projection; reference route.
pub fn omp_fuse_direct<T: Real>(
    input: &CompressedInput<T>,
    estimates: &[DimensionEstimate<T>],
    max_iters: usize,
) -> Result<OmpResult<T>> {
    check_omp(input, estimates, max_iters)?;
    let dicts: Vec<CMatrix<T>> = estimates.iter().map(|e| e.responses.clone()).collect();
    omp_loop(&input.snapshot_tensor(), &dicts, max_iters, 0.0)
}

fn omp_loop<T: Real>(data: &Tensor<T>, dicts: &[CMatrix<T>], max_iters: usize, outside: f64) -> Result<OmpResult<T>> {
    let dims = dicts.len();
    let orders: Vec<usize> = dicts.iter().map(|u| u.ncols()).collect();
    let s = *data.shape().last().expect("snapshot mode");
    let norm = |r: &Tensor<T>| (to_f64(r.norm_sqr()) + outside).sqrt();
    let mut selected: Vec<Vec<usize>> = Vec::new();
    let mut norms = vec![norm(data)];
    let mut stagnated = false;
    let mut truncated = false;
    let mut sub: Option<(Vec<Vec<usize>>, Tensor<T>)> = None;
    let mut power = correlation_power(data, dicts)?;

    for _ in 0..max_iters {
        let mut best = 0;
        for (f, &p) in power.iter().enumerate() {
            if p > power[best] {
                best = f;
            }
        }
        let idx = unravel(best, &orders);
        if selected.contains(&idx) {
            stagnated = true;
            break;
        }
        selected.push(idx);
        let sets: Vec<Vec<usize>> = (0..dims)
            .map(|m| {
                let mut v: Vec<usize> = selected.iter().map(|i| i[m]).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let mut core = data.clone();
        let mut bases = Vec::with_capacity(dims);
        for m in 0..dims {
            let u = restrict(&dicts[m], &sets[m]);
            let p = pinv(&u, RANK_TOL);
            truncated |= p.truncated;
            core = core.mode_product(&p.matrix, m)?;
            bases.push(u);
        }
        let mut recon = core.clone();
        for (m, u) in bases.iter().enumerate() {
            recon = recon.mode_product(u, m)?;
        }
        let residual = data - &recon;
        norms.push(norm(&residual));
        sub = Some((sets, core));
        power = correlation_power(&residual, dicts)?;
    }

    let mut full_shape = orders.clone();
    full_shape.push(s);
    let mut full = Tensor::zeros(&full_shape);
    if let Some((sets, core)) = &sub {
        let sub_shape: Vec<usize> = sets.iter().map(|v| v.len()).collect();
        let n_sub: usize = sub_shape.iter().product();
        for f in 0..n_sub {
            let local = unravel(f, &sub_shape);
            let global: Vec<usize> = local.iter().enumerate().map(|(m, &i)| sets[m][i]).collect();
            let g = flat_index(&global, &orders);
            full.data_mut()[g * s..(g + 1) * s].copy_from_slice(&core.data()[f * s..(f + 1) * s]);
        }
    }
    let mut rest: Vec<usize> = (0..power.len()).filter(|f| !selected.contains(&unravel(*f, &orders))).collect();
    rest.sort_by(|&a, &b| power[b].total_cmp(&power[a]));
    Ok(OmpResult {
        selected,
        core: CoreEstimate { core: full, method: FusionMethod::Omp, truncated },
        residual_norms: norms,
        ranked_rest: rest.into_iter().map(|f| unravel(f, &orders)).collect(),
        stagnated,
    })
}

/// One pass of fusion and selection on fixed per-dimension estimates.
pub fn fuse<T: Real>(
    input: &CompressedInput<T>,
    estimates: &[DimensionEstimate<T>],
    cfg: &FusionConfig,
) -> Result<DetectedObjectSet> {
    check_estimates(input, estimates)?;
    let orders: Vec<usize> = estimates.iter().map(|e| e.model_order).collect();
    if orders.iter().any(|&o| o == 0) {
        return Ok(DetectedObjectSet::default());
    }
    match cfg.method {
        FusionMethod::Ls => {
            let core = ls_fuse(input, estimates)?;
            let ranked = rank_paths(&core);
            let count = selection_count(&orders, cfg.selection, Some(&core));
            let chosen = select_objects(&orders, &ranked, count);
            let obj = |i: &Vec<usize>| make_object(estimates, i, core.entry_power(i).sqrt());
            Ok(DetectedObjectSet {
                objects: chosen.iter().map(obj).collect(),
                candidates: ranked[chosen.len()..].iter().map(obj).collect(),
                stagnated: false,
                truncated: core.truncated,
            })
        }
        FusionMethod::Omp => {
            let product: usize = orders.iter().product();
            let iters = match cfg.selection {
                Selection::MaxRule => selection_count::<T>(&orders, cfg.selection, None),
                Selection::TrueCount(n) => n,
                Selection::Threshold(_) => product,
            }
            .min(product);
            if iters == 0 {
                return Ok(DetectedObjectSet::default());
            }
            let res = omp_fuse(input, estimates, iters)?;
            let obj = |i: &Vec<usize>| make_object(estimates, i, res.core.entry_power(i).sqrt());
            let mut objects: Vec<DetectedObject> = res.selected.iter().map(obj).collect();
            let mut candidates: Vec<DetectedObject> = res.ranked_rest.iter().map(obj).collect();
            if let Selection::Threshold(p) = cfg.selection {
                let (keep, drop): (Vec<_>, Vec<_>) = objects.into_iter().partition(|o| o.gain * o.gain >= p);
                objects = keep;
                candidates.splice(0..0, drop);
            }
            Ok(DetectedObjectSet { objects, candidates, stagnated: res.stagnated, truncated: res.core.truncated })
        }
    }
}

/// Per-dimension response matrices whose column `p` is the atom of object `p`.
pub fn atom_responses<T: Real>(phases: &[Vec<f64>], lens: &[usize]) -> Vec<CMatrix<T>> {
    (0..lens.len())
        .map(|m| {
            let col: Vec<f64> = phases.iter().map(|ph| ph[m]).collect();
            crate::estimation::reconstruct_responses(&col, lens[m])
        })
        .collect()
}

/// Joint least-squares coefficients of rank-one atoms `u_1p o ... o u_Mp`
/// against data with a trailing snapshot mode; returns a `P x S` matrix.
pub fn fit_atoms<T: Real>(data: &Tensor<T>, responses: &[CMatrix<T>]) -> Result<CMatrix<T>> {
    let dims = responses.len();
    if data.order() != dims + 1 {
        return Err(Error::DimensionMismatch("atom fit expects a trailing snapshot mode".into()));
    }
    let p = responses.first().map_or(0, |u| u.ncols());
    let s = data.shape()[dims];
    if p == 0 {
        return Ok(CMatrix::zeros(0, s));
    }
    let mut gram = CMatrix::<T>::from_element(p, p, Complex::new(T::one(), T::zero()));
    for u in responses {
        if u.ncols() != p {
            return Err(Error::DimensionMismatch("atoms need one column per mode".into()));
        }
        gram.component_mul_assign(&(u.adjoint() * u));
    }
    let mut proj = data.clone();
    for (m, u) in responses.iter().enumerate() {
        proj = proj.mode_product(&u.adjoint(), m)?;
    }
    let shape: Vec<usize> = vec![p; dims];
    let rhs = CMatrix::from_fn(p, s, |i, k| {
        let f = flat_index(&vec![i; dims], &shape);
        proj.data()[f * s + k]
    });
    Ok(pinv(&gram, RANK_TOL).matrix * rhs)
}

/// Data minus the reconstruction of fitted atoms.
pub fn subtract_atoms<T: Real>(data: &Tensor<T>, responses: &[CMatrix<T>], coeffs: &CMatrix<T>) -> Result<Tensor<T>> {
    let dims = responses.len();
    let p = coeffs.nrows();
    let s = coeffs.ncols();
    let mut shape = vec![p; dims];
    shape.push(s);
    let mut core = Tensor::zeros(&shape);
    let diag_shape = vec![p; dims];
    for i in 0..p {
        let f = flat_index(&vec![i; dims], &diag_shape);
        for k in 0..s {
            core.data_mut()[f * s + k] = coeffs[(i, k)];
        }
    }
    for (m, u) in responses.iter().enumerate() {
        core = core.mode_product(u, m)?;
    }
    Ok(data - &core)
}

/// Relative residual energy treated as an exact fit by [`iterative_refine`].
pub const NUMERICAL_RESIDUAL: f64 = 1e-10;

fn rms_gain<T: Real>(row: nalgebra::RowDVector<Complex<T>>) -> f64 {
    let s = row.len().max(1);
    (row.iter().map(|z| to_f64(z.norm_sqr())).sum::<f64>() / s as f64).sqrt()
}

/// CLEAN-style refinement: after the first pass, fit and subtract the
/// declared objects, re-estimate on the residual, and add objects that are
/// not within half a compressed bin of an existing one in every dimension.
pub fn iterative_refine<T: Real>(
    input: &CompressedInput<T>,
    specs: &[DimensionSpec],
    est_cfgs: &[EstimatorConfig],
    cfg: &FusionConfig,
) -> Result<DetectedObjectSet> {
    if cfg.rounds == 0 {
        return Err(Error::InvalidArgument("refinement needs at least one round".into()));
    }
    let estimates = estimate_all(input, specs, est_cfgs)?;
    let mut set = fuse(input, &estimates, cfg)?;
    if cfg.rounds == 1 || set.objects.is_empty() {
        return Ok(set);
    }
    let data = input.snapshot_tensor().into_owned();
    let lens = input.reduced.clone();
    let start_energy = to_f64(data.norm_sqr());
    let mut prev_energy = start_energy;
    let round_cfg = FusionConfig { selection: Selection::MaxRule, rounds: 1, ..*cfg };
    let tol: Vec<f64> = lens.iter().map(|&n| std::f64::consts::PI / n as f64).collect();
    let mut grew = false;

    for _ in 1..cfg.rounds {
        let phases: Vec<Vec<f64>> = set.objects.iter().map(|o| o.phases.clone()).collect();
        let atoms = atom_responses::<T>(&phases, &lens);
        let coeffs = fit_atoms(&data, &atoms)?;
        let residual = subtract_atoms(&data, &atoms, &coeffs)?;
        let energy = to_f64(residual.norm_sqr());
        // Below this the residual is estimation round-off, not signal.
        if energy > prev_energy || energy <= start_energy * NUMERICAL_RESIDUAL {
            break;
        }
        prev_energy = energy;
        let shaped = if input.has_snapshot_mode() {
            residual
        } else {
            let shape = input.tensor.shape().to_vec();
            residual.reshape(shape)?
        };
        let res_input = input.with_tensor(shaped)?;
        let res_est = estimate_all(&res_input, specs, est_cfgs)?;
        let fresh = fuse(&res_input, &res_est, &round_cfg)?;
        let new: Vec<DetectedObject> = fresh
            .objects
            .into_iter()
            .filter(|o| {
                !set.objects.iter().any(|e| {
                    o.phases.iter().zip(&e.phases).zip(&tol).all(|((a, b), t)| crate::scenario::wrap_pi(a - b).abs() < *t)
                })
            })
            .map(|mut o| {
                o.index.clear();
                o
            })
            .collect();
        if new.is_empty() {
            break;
        }
        set.objects.extend(new);
        grew = true;
    }

    if grew {
        let phases: Vec<Vec<f64>> = set.objects.iter().map(|o| o.phases.clone()).collect();
        let atoms = atom_responses::<T>(&phases, &lens);
        let coeffs = fit_atoms(&data, &atoms)?;
        for (p, o) in set.objects.iter_mut().enumerate() {
            o.gain = rms_gain(coeffs.row(p).into_owned());
        }
        set.objects.sort_by(|a, b| b.gain.total_cmp(&a.gain));
        if let Selection::TrueCount(n) = cfg.selection {
            if set.objects.len() > n {
                let extra = set.objects.split_off(n);
                set.candidates.splice(0..0, extra);
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compression::{compress, CompressionPlan, Scheme};
    use crate::estimation::reconstruct_responses;
    use crate::C64;

    fn input_from(orders_phases: &[Vec<f64>], lens: &[usize], paths: &[(Vec<usize>, C64)]) -> (CompressedInput<f64>, Vec<DimensionEstimate<f64>>) {
        let us: Vec<CMatrix<f64>> = orders_phases.iter().zip(lens).map(|(ph, &n)| reconstruct_responses(ph, n)).collect();
        let mut h = Tensor::<f64>::zeros(lens);
        for (idx, g) in paths {
            let cols: Vec<Vec<C64>> = idx.iter().zip(&us).map(|(&i, u)| u.column(i).iter().copied().collect()).collect();
            let refs: Vec<&[C64]> = cols.iter().map(|v| v.as_slice()).collect();
            h = &h + &(&crate::tensor::outer_rank1(&refs).unwrap() * *g);
        }
        let est = orders_phases
            .iter()
            .zip(lens)
            .zip(&us)
            .map(|((ph, &n), u)| DimensionEstimate {
                kind: crate::scenario::DimKind::Angle,
                params: ph.clone(),
                phases: ph.clone(),
                model_order: ph.len(),
                responses: u.clone(),
                eigenvalues: vec![0.0; n],
                clamped: false,
                short: false,
            })
            .collect();
        (CompressedInput::uncompressed(h), est)
    }

    #[test]
    fn ls_recovers_paired_gains() {
        let (input, est) = input_from(
            &[vec![-0.9, 0.4], vec![0.2, 1.7], vec![-0.3, 0.8]],
            &[6, 7, 8],
            &[(vec![0, 1, 1], C64::new(0.6, 0.2)), (vec![1, 0, 0], C64::new(-0.3, 0.5))],
        );
        let core = ls_fuse(&input, &est).unwrap();
        let ranked = rank_paths(&core);
        let mut top: Vec<Vec<usize>> = ranked[..2].to_vec();
        top.sort();
        assert_eq!(top, vec![vec![0, 1, 1], vec![1, 0, 0]]);
        assert!((core.entry(&[0, 1, 1])[0] - C64::new(0.6, 0.2)).norm() < 1e-10);
        for i in &ranked[2..] {
            assert!(core.entry_power(i).sqrt() < 1e-10);
        }
        let gains = estimate_gains(&core, &[vec![1, 0, 0]]);
        assert!((gains[0] - C64::new(-0.3, 0.5).norm()).abs() < 1e-10);
    }

    #[test]
    fn ls_with_identity_responses_returns_data() {
        let h = Tensor::<f64>::from_fn(&[2, 3], |i| C64::new(i[0] as f64, i[1] as f64));
        let input = CompressedInput::uncompressed(h.clone());
        let est: Vec<DimensionEstimate<f64>> = [2usize, 3]
            .iter()
            .map(|&n| DimensionEstimate {
                kind: crate::scenario::DimKind::Angle,
                params: vec![0.0; n],
                phases: vec![0.0; n],
                model_order: n,
                responses: CMatrix::identity(n, n),
                eigenvalues: vec![],
                clamped: false,
                short: false,
            })
            .collect();
        let core = ls_fuse(&input, &est).unwrap();
        assert_eq!(core.core.data(), h.data());
    }

    #[test]
    fn ranking_ties_are_lexicographic() {
        let core = Tensor::new(vec![3, 1], vec![C64::new(2.0, 0.0), C64::new(1.0, 0.0), C64::new(3.0, 0.0)]).unwrap();
        let ce = CoreEstimate { core, method: FusionMethod::Ls, truncated: false };
        assert_eq!(rank_paths(&ce), vec![vec![2], vec![0], vec![1]]);
        let core = Tensor::new(vec![2, 2], vec![C64::new(1.0, 0.0), C64::new(3f64.sqrt(), 0.0), C64::new(3f64.sqrt(), 0.0), C64::new(1.0, 0.0)]).unwrap();
        let ce = CoreEstimate { core, method: FusionMethod::Ls, truncated: false };
        assert_eq!(rank_paths(&ce), vec![vec![0], vec![1]]);
    }

    #[test]
    fn selection_counts() {
        assert_eq!(selection_count::<f64>(&[3, 3, 1], Selection::MaxRule, None), 3);
        assert_eq!(selection_count::<f64>(&[1, 1, 1], Selection::MaxRule, None), 1);
        assert_eq!(selection_count::<f64>(&[4, 6, 3], Selection::TrueCount(6), None), 6);
        assert_eq!(selection_count::<f64>(&[0, 0, 0], Selection::TrueCount(6), None), 0);
        let ranked: Vec<Vec<usize>> = (0..10).map(|i| vec![i]).collect();
        assert_eq!(select_objects(&[4, 6, 3], &ranked, 6).len(), 6);
        assert!(select_objects(&[0, 0, 0], &ranked, 3).is_empty());
    }

    #[test]
    fn omp_single_object_one_iteration() {
        let (input, est) = input_from(&[vec![-0.5, 1.0], vec![0.3, 2.0]], &[8, 9], &[(vec![1, 0], C64::new(0.0, 2.0))]);
        let res = omp_fuse(&input, &est, 1).unwrap();
        assert_eq!(res.selected, vec![vec![1, 0]]);
        assert!(*res.residual_norms.last().unwrap() < 1e-10);
        assert!((res.core.entry_power(&[1, 0]).sqrt() - 2.0).abs() < 1e-10);
        assert!(omp_fuse(&input, &est, 0).is_err());
    }

    #[test]
    fn omp_three_objects_pairing() {
        let (input, est) = input_from(
            &[vec![-1.0, 0.1, 1.2], vec![-0.4, 0.9, 2.2], vec![0.0, 0.5, 1.5]],
            &[10, 11, 12],
            &[
                (vec![0, 2, 1], C64::new(1.0, 0.0)),
                (vec![1, 0, 2], C64::new(0.0, 0.8)),
                (vec![2, 1, 0], C64::new(-0.6, 0.0)),
            ],
        );
        let res = omp_fuse(&input, &est, 3).unwrap();
        let mut got = res.selected.clone();
        got.sort();
        assert_eq!(got, vec![vec![0, 2, 1], vec![1, 0, 2], vec![2, 1, 0]]);
        assert!(res.residual_norms.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(*res.residual_norms.last().unwrap() < 1e-9 * res.residual_norms[0]);
    }

    #[test]
    fn projected_omp_matches_direct_route() {
        let (input, est) = input_from(
            &[vec![-1.0, 0.1, 1.2], vec![-0.4, 0.9], vec![0.0, 0.5, 1.5]],
            &[10, 11, 12],
            &[(vec![0, 1, 1], C64::new(1.0, 0.0)), (vec![2, 0, 2], C64::new(0.0, 0.8))],
        );
        let noisy = input.tensor.map(|z| z + C64::new(0.01 * z.im.sin(), 0.02 * z.re.cos()));
        let input = input.with_tensor(noisy).unwrap();
        let a = omp_fuse(&input, &est, 3).unwrap();
        let b = omp_fuse_direct(&input, &est, 3).unwrap();
        assert_eq!(a.selected, b.selected);
        for (x, y) in a.residual_norms.iter().zip(&b.residual_norms) {
            assert!((x - y).abs() < 1e-9 * y);
        }
        assert!((&a.core.core - &b.core.core).norm() < 1e-9);
    }

    #[test]
    fn zero_core_gives_zero_gain() {
        let core = CoreEstimate { core: Tensor::<f64>::zeros(&[2, 2, 1]), method: FusionMethod::Ls, truncated: false };
        assert_eq!(estimate_gains(&core, &[vec![1, 1]]), vec![0.0]);
    }

    #[test]
    fn fit_atoms_recovers_coefficients() {
        let phases = vec![vec![0.3, -1.0], vec![1.1, 0.4]];
        let lens = [5, 6];
        let atoms = atom_responses::<f64>(&phases, &lens);
        let want = CMatrix::from_row_slice(2, 1, &[C64::new(1.0, -0.5), C64::new(0.2, 0.3)]);
        let zero = Tensor::<f64>::zeros(&[5, 6, 1]);
        let data = &zero - &subtract_atoms(&zero, &atoms, &want).unwrap();
        let got = fit_atoms(&data, &atoms).unwrap();
        assert!((got - want).norm() < 1e-12);
    }

    #[test]
    fn refine_with_one_round_matches_plain_fusion() {
        let g = crate::scenario::GridSpec::default();
        let sc = crate::scenario::generate_equidistant_scenario(3, &Default::default(), &g, 2, &crate::scenario::free_space_path_loss).unwrap();
        let h = crate::scenario::synthesize_channel::<f64>(&sc);
        let input = compress(&h, &CompressionPlan::uniform(Scheme::Average, &[1, 4, 14])).unwrap();
        let specs = DimensionSpec::for_input(&g, &input);
        let cfgs = [EstimatorConfig::default(); 3];
        let est = estimate_all(&input, &specs, &cfgs).unwrap();
        let cfg = FusionConfig::default();
        let a = fuse(&input, &est, &cfg).unwrap();
        let b = iterative_refine(&input, &specs, &cfgs, &cfg).unwrap();
        assert_eq!(a, b);
        let c = iterative_refine(&input, &specs, &cfgs, &FusionConfig { rounds: 3, ..cfg }).unwrap();
        assert_eq!(c.objects.len(), 3);
    }
}
