//! Dimensionality reduction of the channel tensor ahead of estimation.
//!
//! Decimation keeps indices `0, D, 2D, ..` (`floor(N/D)` of them), averaging
//! replaces each block of `D` samples by its mean, decimation with snapshots
//! keeps every shifted decimation as a virtual snapshot, and smoothing takes
//! overlapping windows of length `ceil(N/D)` at non-wrapping shifts.

use std::borrow::Cow;

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::tensor::{CMatrix, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    None,
    Decimate,
    Average,
    DecimateSnapshots,
    Smooth,
}

impl Scheme {
    pub fn produces_snapshots(self) -> bool {
        matches!(self, Scheme::DecimateSnapshots | Scheme::Smooth)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::None => "none",
            Scheme::Decimate => "decimate",
            Scheme::Average => "average",
            Scheme::DecimateSnapshots => "decimate_snapshots",
            Scheme::Smooth => "smooth",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "none" => Scheme::None,
            "decimate" => Scheme::Decimate,
            "average" => Scheme::Average,
            "decimate_snapshots" => Scheme::DecimateSnapshots,
            "smooth" => Scheme::Smooth,
            _ => return None,
        })
    }
}

/// How the virtual snapshot set is thinned when it exceeds the cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SnapshotSampling {
    Equidistant,
    Random(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressionPlan {
    pub schemes: Vec<Scheme>,
    pub factors: Vec<usize>,
    pub max_snapshots: usize,
    pub sampling: SnapshotSampling,
}

impl CompressionPlan {
    /// Same scheme on every dimension, snapshot cap 100, equidistant capping.
    pub fn uniform(scheme: Scheme, factors: &[usize]) -> Self {
        CompressionPlan {
            schemes: vec![scheme; factors.len()],
            factors: factors.to_vec(),
            max_snapshots: 100,
            sampling: SnapshotSampling::Equidistant,
        }
    }

    pub fn identity(dims: usize) -> Self {
        CompressionPlan::uniform(Scheme::None, &vec![1; dims])
    }

    pub fn with_max_snapshots(mut self, cap: usize) -> Self {
        self.max_snapshots = cap;
        self
    }

    fn effective(&self, m: usize) -> (Scheme, usize) {
        let s = self.schemes[m];
        if s == Scheme::None || self.factors[m] == 1 {
            (Scheme::None, 1)
        } else {
            (s, self.factors[m])
        }
    }

    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        if self.schemes.len() != shape.len() || self.factors.len() != shape.len() {
            return Err(Error::DimensionMismatch(format!(
                "plan covers {} schemes / {} factors for a {}-way tensor",
                self.schemes.len(),
                self.factors.len(),
                shape.len()
            )));
        }
        if self.max_snapshots == 0 {
            return Err(Error::InvalidArgument("max_snapshots must be at least 1".into()));
        }
        for (m, (&d, &n)) in self.factors.iter().zip(shape).enumerate() {
            if d == 0 || d > n {
                return Err(Error::InvalidArgument(format!(
                    "factor {d} on dimension {m} must lie in [1, {n}]"
                )));
            }
        }
        let active: Vec<Scheme> = (0..shape.len()).map(|m| self.effective(m).0).filter(|s| *s != Scheme::None).collect();
        let snap = active.iter().any(|s| s.produces_snapshots());
        let plain = active.iter().any(|s| !s.produces_snapshots());
        if snap && plain {
            return Err(Error::InvalidArgument(
                "snapshot-producing schemes cannot be mixed with decimate/average".into(),
            ));
        }
        Ok(())
    }

    /// Reduced length of dimension `m` with original length `n`.
    pub fn reduced_len(&self, m: usize, n: usize) -> usize {
        let (s, d) = self.effective(m);
        match s {
            Scheme::None => n,
            Scheme::Smooth => n.div_ceil(d),
            _ => n / d,
        }
    }

    /// Sample spacing after compression, in units of the original spacing.
    pub fn spacing_multiplier(&self, m: usize) -> usize {
        let (s, d) = self.effective(m);
        match s {
            Scheme::Decimate | Scheme::Average | Scheme::DecimateSnapshots => d,
            Scheme::None | Scheme::Smooth => 1,
        }
    }

    pub fn produces_snapshots(&self) -> bool {
        self.schemes.iter().any(|s| s.produces_snapshots())
    }

    /// Shifts available on dimension `m` before capping.
    fn shift_count(&self, m: usize, n: usize) -> usize {
        let (s, d) = self.effective(m);
        match s {
            Scheme::DecimateSnapshots => d,
            Scheme::Smooth => n - n.div_ceil(d) + 1,
            _ => 1,
        }
    }

    pub fn check_resolvability(&self, shape: &[usize], n_paths: usize) -> bool {
        let reduced: Vec<usize> = shape.iter().enumerate().map(|(m, &n)| self.reduced_len(m, n)).collect();
        check_resolvability(&reduced, n_paths)
    }
}

/// `min_m N'_m >= N_P`.
pub fn check_resolvability(reduced: &[usize], n_paths: usize) -> bool {
    reduced.iter().copied().min().is_some_and(|m| m >= n_paths)
}

fn check_factor(n: usize, delta: usize) -> Result<()> {
    if delta == 0 || delta > n {
        return Err(Error::InvalidArgument(format!("factor {delta} must lie in [1, {n}]")));
    }
    Ok(())
}

/// `floor(N/D) x N` matrix selecting indices `shift + i D`.
pub fn decimation_matrix<T: Real>(n: usize, delta: usize) -> Result<CMatrix<T>> {
    shifted_decimation_matrix(n, delta, 0)
}

pub fn shifted_decimation_matrix<T: Real>(n: usize, delta: usize, shift: usize) -> Result<CMatrix<T>> {
    check_factor(n, delta)?;
    if shift >= delta {
        return Err(Error::InvalidArgument(format!("shift {shift} must be below factor {delta}")));
    }
    let rows = n / delta;
    let mut j = CMatrix::zeros(rows, n);
    for i in 0..rows {
        j[(i, shift + i * delta)] = Complex::new(T::one(), T::zero());
    }
    Ok(j)
}

/// `floor(N/D) x N` block-averaging matrix.
pub fn averaging_matrix<T: Real>(n: usize, delta: usize) -> Result<CMatrix<T>> {
    check_factor(n, delta)?;
    let rows = n / delta;
    let w = Complex::new(lit::<T>(1.0 / delta as f64), T::zero());
    let mut j = CMatrix::zeros(rows, n);
    for i in 0..rows {
        for l in 0..delta {
            j[(i, i * delta + l)] = w;
        }
    }
    Ok(j)
}

/// `ceil(N/D) x N` window selecting indices `shift .. shift + ceil(N/D)`.
pub fn smoothing_matrix<T: Real>(n: usize, delta: usize, shift: usize) -> Result<CMatrix<T>> {
    check_factor(n, delta)?;
    let rows = n.div_ceil(delta);
    if shift + rows > n {
        return Err(Error::InvalidArgument(format!("window shift {shift} runs past length {n}")));
    }
    let mut j = CMatrix::zeros(rows, n);
    for i in 0..rows {
        j[(i, shift + i)] = Complex::new(T::one(), T::zero());
    }
    Ok(j)
}

/// Output of [`compress`].
#[derive(Clone, Debug)]
pub struct CompressedInput<T: Real> {
    /// M-way for decimate/average plans, (M+1)-way with a trailing snapshot
    /// mode for snapshot-producing plans.
    pub tensor: Tensor<T>,
    pub snapshots: usize,
    /// `N'_m` for the M sensing dimensions.
    pub reduced: Vec<usize>,
    /// Effective spacing multiplier per dimension.
    pub spacing: Vec<usize>,
    /// Selection matrix of the first snapshot per dimension.
    pub selections: Vec<CMatrix<T>>,
    /// Shift vector of each retained snapshot.
    pub shifts: Vec<Vec<usize>>,
    pub plan: CompressionPlan,
}

impl<T: Real> CompressedInput<T> {
    /// Number of sensing dimensions M.
    pub fn dims(&self) -> usize {
        self.reduced.len()
    }

    pub fn has_snapshot_mode(&self) -> bool {
        self.tensor.order() == self.dims() + 1
    }

    /// The data with a trailing snapshot mode, appended (size 1) if absent.
    pub fn snapshot_tensor(&self) -> Cow<'_, Tensor<T>> {
        if self.has_snapshot_mode() {
            Cow::Borrowed(&self.tensor)
        } else {
            Cow::Owned(self.tensor.with_trailing_mode())
        }
    }

    /// Same bookkeeping around different data (residuals, rescaled inputs).
    pub fn with_tensor(&self, tensor: Tensor<T>) -> Result<Self> {
        if tensor.shape() != self.tensor.shape() {
            return Err(Error::DimensionMismatch("replacement tensor shape differs".into()));
        }
        Ok(CompressedInput { tensor, ..self.clone() })
    }

    /// Wraps an already reduced tensor with identity bookkeeping.
    pub fn uncompressed(tensor: Tensor<T>) -> Self {
        let dims = tensor.order();
        let reduced = tensor.shape().to_vec();
        CompressedInput {
            selections: reduced.iter().map(|&n| CMatrix::identity(n, n)).collect(),
            spacing: vec![1; dims],
            shifts: vec![vec![0; dims]],
            snapshots: 1,
            reduced,
            plan: CompressionPlan::identity(dims),
            tensor,
        }
    }
}

/// Flat indices of `count` snapshots out of `total` candidates.
pub fn sample_snapshots(total: usize, count: usize, sampling: SnapshotSampling) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    match sampling {
        SnapshotSampling::Equidistant => {
            if count == 1 {
                vec![0]
            } else {
                (0..count).map(|k| k * (total - 1) / (count - 1)).collect()
            }
        }
        SnapshotSampling::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, total, count).into_vec();
            idx.sort_unstable();
            idx
        }
    }
}

fn select_mode<T: Real>(t: &Tensor<T>, mode: usize, idx: &[usize]) -> Tensor<T> {
    let shape = t.shape();
    let (pre, n, post) = crate::tensor::layout(shape, mode);
    let mut out_shape = shape.to_vec();
    out_shape[mode] = idx.len();
    let src = t.data();
    let mut out = Vec::with_capacity(pre * idx.len() * post);
    for a in 0..pre {
        for &i in idx {
            out.extend_from_slice(&src[(a * n + i) * post..(a * n + i + 1) * post]);
        }
    }
    Tensor::new(out_shape, out).expect("consistent shape")
}

fn average_mode<T: Real>(t: &Tensor<T>, mode: usize, delta: usize) -> Tensor<T> {
    let shape = t.shape();
    let (pre, n, post) = crate::tensor::layout(shape, mode);
    let rows = n / delta;
    let mut out_shape = shape.to_vec();
    out_shape[mode] = rows;
    let src = t.data();
    let w: T = lit(1.0 / delta as f64);
    let mut out = vec![Complex::new(T::zero(), T::zero()); pre * rows * post];
    for a in 0..pre {
        for i in 0..rows {
            let dst = &mut out[(a * rows + i) * post..(a * rows + i + 1) * post];
            for l in 0..delta {
                let s = &src[(a * n + i * delta + l) * post..(a * n + i * delta + l + 1) * post];
                for (o, z) in dst.iter_mut().zip(s) {
                    *o += z;
                }
            }
            for o in dst.iter_mut() {
                *o = o.scale(w);
            }
        }
    }
    Tensor::new(out_shape, out).expect("consistent shape")
}

/// Stacks `h[idx_1, .., idx_M]` for each index set along a trailing mode.
fn gather_snapshots<T: Real>(h: &Tensor<T>, index_sets: &[Vec<Vec<usize>>]) -> Tensor<T> {
    let shape = h.shape();
    let dims = shape.len();
    let s_count = index_sets.len();
    let out_dims: Vec<usize> = index_sets[0].iter().map(|v| v.len()).collect();
    let mut strides = vec![1; dims];
    for m in (0..dims.saturating_sub(1)).rev() {
        strides[m] = strides[m + 1] * shape[m + 1];
    }
    let inner = out_dims[dims - 1];
    let outer: usize = out_dims[..dims - 1].iter().product();
    let src = h.data();
    let mut out = vec![Complex::new(T::zero(), T::zero()); outer * inner * s_count];
    for (s, sets) in index_sets.iter().enumerate() {
        let mut idx = vec![0; dims - 1];
        for o in 0..outer {
            let base: usize = (0..dims - 1).map(|m| sets[m][idx[m]] * strides[m]).sum();
            let dst = o * inner * s_count + s;
            for (t, &j) in sets[dims - 1].iter().enumerate() {
                out[dst + t * s_count] = src[base + j];
            }
            crate::tensor::increment(&mut idx, &out_dims[..dims - 1]);
        }
    }
    let mut out_shape = out_dims;
    out_shape.push(s_count);
    Tensor::new(out_shape, out).expect("consistent shape")
}

fn window_indices(scheme: Scheme, n: usize, delta: usize, shift: usize) -> Vec<usize> {
    match scheme {
        Scheme::None => (0..n).collect(),
        Scheme::Smooth => (shift..shift + n.div_ceil(delta)).collect(),
        _ => (0..n / delta).map(|i| shift + i * delta).collect(),
    }
}

fn shift_vectors(plan: &CompressionPlan, shape: &[usize]) -> Vec<Vec<usize>> {
    let counts: Vec<usize> = (0..shape.len()).map(|m| plan.shift_count(m, shape[m])).collect();
    let total: usize = counts.iter().product();
    let cap = if plan.produces_snapshots() { plan.max_snapshots } else { 1 };
    sample_snapshots(total, cap.min(total), plan.sampling)
        .into_iter()
        .map(|mut flat| {
            let mut v = vec![0; counts.len()];
            for m in (0..counts.len()).rev() {
                v[m] = flat % counts[m];
                flat /= counts[m];
            }
            v
        })
        .collect()
}

fn base_selection<T: Real>(plan: &CompressionPlan, m: usize, n: usize) -> CMatrix<T> {
    let (s, d) = plan.effective(m);
    match s {
        Scheme::None => CMatrix::identity(n, n),
        Scheme::Average => averaging_matrix(n, d).expect("validated"),
        Scheme::Smooth => smoothing_matrix(n, d, 0).expect("validated"),
        _ => decimation_matrix(n, d).expect("validated"),
    }
}

/// Applies a compression plan.
pub fn compress<T: Real>(h: &Tensor<T>, plan: &CompressionPlan) -> Result<CompressedInput<T>> {
    plan.validate(h.shape())?;
    let shape = h.shape().to_vec();
    let dims = shape.len();
    let reduced: Vec<usize> = (0..dims).map(|m| plan.reduced_len(m, shape[m])).collect();
    let spacing: Vec<usize> = (0..dims).map(|m| plan.spacing_multiplier(m)).collect();
    let selections = (0..dims).map(|m| base_selection(plan, m, shape[m])).collect();
    let shifts = shift_vectors(plan, &shape);

    let tensor = if plan.produces_snapshots() {
        let index_sets: Vec<Vec<Vec<usize>>> = shifts
            .iter()
            .map(|sv| {
                (0..dims)
                    .map(|m| {
                        let (s, d) = plan.effective(m);
                        window_indices(s, shape[m], d, sv[m])
                    })
                    .collect()
            })
            .collect();
        gather_snapshots(h, &index_sets)
    } else {
        let mut cur: Cow<'_, Tensor<T>> = Cow::Borrowed(h);
        for m in 0..dims {
            let (s, d) = plan.effective(m);
            match s {
                Scheme::None => {}
                Scheme::Average => cur = Cow::Owned(average_mode(&cur, m, d)),
                _ => cur = Cow::Owned(select_mode(&cur, m, &window_indices(s, shape[m], d, 0))),
            }
        }
        cur.into_owned()
    };

    Ok(CompressedInput { tensor, snapshots: shifts.len(), reduced, spacing, selections, shifts, plan: plan.clone() })
}

/// Reference route: explicit selection matrices applied with mode products.
pub fn compress_dense<T: Real>(h: &Tensor<T>, plan: &CompressionPlan) -> Result<Tensor<T>> {
    plan.validate(h.shape())?;
    let shape = h.shape().to_vec();
    let dims = shape.len();
    let shifts = shift_vectors(plan, &shape);
    let snapshot_matrix = |m: usize, shift: usize| -> Result<CMatrix<T>> {
        let (s, d) = plan.effective(m);
        match s {
            Scheme::None => Ok(CMatrix::identity(shape[m], shape[m])),
            Scheme::Average => averaging_matrix(shape[m], d),
            Scheme::Smooth => smoothing_matrix(shape[m], d, shift),
            _ => shifted_decimation_matrix(shape[m], d, shift),
        }
    };
    let mut parts = Vec::with_capacity(shifts.len());
    for sv in &shifts {
        let mut cur = h.clone();
        for m in 0..dims {
            cur = cur.mode_product(&snapshot_matrix(m, sv[m])?, m)?;
        }
        parts.push(cur);
    }
    if plan.produces_snapshots() {
        crate::tensor::concat_mode(&parts, dims)
    } else {
        Ok(parts.pop().expect("one snapshot"))
    }
}

/// Maps a full-length response onto dimension `m` of the compressed data
/// (first snapshot).
pub fn downsample_response<T: Real>(u: &[Complex<T>], plan: &CompressionPlan, m: usize) -> Result<Vec<Complex<T>>> {
    if m >= plan.factors.len() {
        return Err(Error::ModeOutOfRange { mode: m, order: plan.factors.len() });
    }
    let n = u.len();
    let (s, d) = plan.effective(m);
    check_factor(n, d)?;
    Ok(match s {
        Scheme::Average => {
            let w: T = lit(1.0 / d as f64);
            (0..n / d).map(|i| u[i * d..(i + 1) * d].iter().fold(Complex::new(T::zero(), T::zero()), |a, z| a + z).scale(w)).collect()
        }
        _ => window_indices(s, n, d, 0).into_iter().map(|i| u[i]).collect(),
    })
}
