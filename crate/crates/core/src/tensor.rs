//! Dense complex multiway arrays.
//!
//! Storage is row-major over the shape with the first index slowest, so the
//! element `(i_0, .., i_{K-1})` lives at `sum_k i_k * prod_{l>k} N_l`.
//!
//! The mode-`m` unfolding is an `N_m x prod_{k != m} N_k` matrix whose column
//! index enumerates the remaining modes in increasing mode order with the
//! *first* remaining index running fastest. [`Tensor::fold`] is its inverse.
//!
//! Modes are zero-based throughout the crate.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T: Real> {
    shape: Vec<usize>,
    data: Vec<Complex<T>>,
}

/// Splits a shape around `mode` into `(prod before, N_mode, prod after)`.
#[inline]
pub(crate) fn layout(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let pre = shape[..mode].iter().product();
    let post = shape[mode + 1..].iter().product();
    (pre, shape[mode], post)
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidArgument("tensor shape must have at least one mode".into()));
    }
    if shape.contains(&0) {
        return Err(Error::InvalidArgument(format!("zero-length mode in shape {shape:?}")));
    }
    Ok(())
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<Complex<T>>) -> Result<Self> {
        check_shape(&shape)?;
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} holds {n} elements but {} were given",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![Complex::new(T::zero(), T::zero()); n] }
    }

    /// Builds a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> Complex<T>) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..n {
            data.push(f(&idx));
            increment(&mut idx, shape);
        }
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex<T>> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            debug_assert!(i < n);
            acc * n + i
        })
    }

    /// Inverse of [`Tensor::offset`].
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.shape.len()];
        for k in (0..self.shape.len()).rev() {
            idx[k] = flat % self.shape[k];
            flat /= self.shape[k];
        }
        idx
    }

    /// Same data under a different shape with equal element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange { mode, order: self.order() });
        }
        Ok(())
    }

    pub fn unfold(&self, mode: usize) -> Result<CMatrix<T>> {
        self.check_mode(mode)?;
        let rows = self.shape[mode];
        let cols = self.len() / rows;
        let mut out = CMatrix::zeros(rows, cols);
        let strides = unfold_col_strides(&self.shape, mode);
        let mut idx = vec![0usize; self.order()];
        for z in &self.data {
            let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            out[(idx[mode], col)] = *z;
            increment(&mut idx, &self.shape);
        }
        Ok(out)
    }

    /// Rebuilds a tensor of `shape` from its mode-`mode` unfolding.
    pub fn fold(mat: &CMatrix<T>, mode: usize, shape: &[usize]) -> Result<Self> {
        check_shape(shape)?;
        if mode >= shape.len() {
            return Err(Error::ModeOutOfRange { mode, order: shape.len() });
        }
        let n: usize = shape.iter().product();
        if mat.nrows() != shape[mode] || mat.nrows() * mat.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix cannot fold into {shape:?} along mode {mode}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let strides = unfold_col_strides(shape, mode);
        Ok(Self::from_fn(shape, |idx| {
            let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            mat[(idx[mode], col)]
        }))
    }

    /// `self x_mode u`: every mode-`mode` fiber is multiplied by `u`.
    pub fn mode_product(&self, u: &CMatrix<T>, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let (pre, n, post) = layout(&self.shape, mode);
        if u.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "mode-{mode} product needs {n} matrix columns, got {}",
                u.ncols()
            )));
        }
        let r = u.nrows();
        let mut shape = self.shape.clone();
        shape[mode] = r;
        let zero = Complex::new(T::zero(), T::zero());
        let mut out = vec![zero; pre * r * post];
        for a in 0..pre {
            let src = &self.data[a * n * post..(a + 1) * n * post];
            let dst = &mut out[a * r * post..(a + 1) * r * post];
            for row in 0..r {
                let d = &mut dst[row * post..(row + 1) * post];
                for k in 0..n {
                    let w = u[(row, k)];
                    if w == zero {
                        continue;
                    }
                    let s = &src[k * post..(k + 1) * post];
                    for (o, x) in d.iter_mut().zip(s) {
                        *o += w * *x;
                    }
                }
            }
        }
        Ok(Self { shape, data: out })
    }

    /// Applies one matrix per mode in order; `None` leaves a mode untouched.
    pub fn multi_mode_product(&self, mats: &[Option<&CMatrix<T>>]) -> Result<Self> {
        let mut cur: Option<Self> = None;
        for (mode, m) in mats.iter().enumerate() {
            if let Some(u) = m {
                let next = cur.as_ref().unwrap_or(self).mode_product(u, mode)?;
                cur = Some(next);
            }
        }
        Ok(cur.unwrap_or_else(|| self.clone()))
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
    }

    pub fn norm(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        self.map(|z| z * c)
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    /// Element-wise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Contiguous index range `range` along `mode`; the order is preserved.
    pub fn slice_mode(&self, mode: usize, range: std::ops::Range<usize>) -> Result<Self> {
        self.check_mode(mode)?;
        if range.start >= range.end || range.end > self.shape[mode] {
            return Err(Error::InvalidArgument(format!(
                "slice {range:?} outside mode {mode} of length {}",
                self.shape[mode]
            )));
        }
        let (pre, n, post) = layout(&self.shape, mode);
        let len = range.end - range.start;
        let mut data = Vec::with_capacity(pre * len * post);
        for a in 0..pre {
            let base = a * n * post;
            data.extend_from_slice(&self.data[base + range.start * post..base + range.end * post]);
        }
        let mut shape = self.shape.clone();
        shape[mode] = len;
        Ok(Self { shape, data })
    }

    /// Inserts a trailing mode of length one.
    pub fn with_trailing_mode(&self) -> Self {
        let mut shape = self.shape.clone();
        shape.push(1);
        Self { shape, data: self.data.clone() }
    }
}

/// Column strides of the unfolding for each mode (0 for `mode` itself).
fn unfold_col_strides(shape: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut s = 1;
    for (k, &n) in shape.iter().enumerate() {
        if k != mode {
            strides[k] = s;
            s *= n;
        }
    }
    strides
}

/// Row-major odometer step.
#[inline]
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..shape.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

impl<T: Real> Index<&[usize]> for Tensor<T> {
    type Output = Complex<T>;
    fn index(&self, idx: &[usize]) -> &Complex<T> {
        &self.data[self.offset(idx)]
    }
}

impl<T: Real> IndexMut<&[usize]> for Tensor<T> {
    fn index_mut(&mut self, idx: &[usize]) -> &mut Complex<T> {
        let o = self.offset(idx);
        &mut self.data[o]
    }
}

impl<T: Real> Add for &Tensor<T> {
    type Output = Tensor<T>;
    fn add(self, rhs: Self) -> Tensor<T> {
        self.zip_with(rhs, |a, b| a + b).expect("tensor addition requires equal shapes")
    }
}

impl<T: Real> Sub for &Tensor<T> {
    type Output = Tensor<T>;
    fn sub(self, rhs: Self) -> Tensor<T> {
        self.zip_with(rhs, |a, b| a - b).expect("tensor subtraction requires equal shapes")
    }
}

impl<T: Real> Mul<Complex<T>> for &Tensor<T> {
    type Output = Tensor<T>;
    fn mul(self, rhs: Complex<T>) -> Tensor<T> {
        self.scale(rhs)
    }
}

/// Outer product `v_1 o v_2 o ... o v_M`.
pub fn outer_rank1<T: Real>(vectors: &[&[Complex<T>]]) -> Result<Tensor<T>> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("outer product needs at least one vector".into()));
    }
    let shape: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    check_shape(&shape)?;
    let mut data = vec![Complex::new(T::one(), T::zero())];
    for v in vectors {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &p in &data {
            next.extend(v.iter().map(|&x| p * x));
        }
        data = next;
    }
    Ok(Tensor { shape, data })
}

/// Kronecker product of two vectors (first argument slowest).
pub fn kron_vec<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    a.iter().flat_map(|&x| b.iter().map(move |&y| x * y)).collect()
}

/// Column-wise Khatri-Rao product.
pub fn khatri_rao<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "Khatri-Rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let (ra, rb) = (a.nrows(), b.nrows());
    Ok(CMatrix::from_fn(ra * rb, a.ncols(), |i, p| a[(i / rb, p)] * b[(i % rb, p)]))
}

/// Concatenates `parts` along `mode`. `mode == order` appends a new trailing
/// mode, treating every part as having length one there.
pub fn concat_mode<T: Real>(parts: &[Tensor<T>], mode: usize) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("concatenation of zero tensors".into()))?;
    if mode > first.order() {
        return Err(Error::ModeOutOfRange { mode, order: first.order() });
    }
    let lifted: Vec<std::borrow::Cow<'_, Tensor<T>>> = parts
        .iter()
        .map(|p| {
            if mode == first.order() {
                std::borrow::Cow::Owned(p.with_trailing_mode())
            } else {
                std::borrow::Cow::Borrowed(p)
            }
        })
        .collect();
    let base = lifted[0].shape().to_vec();
    for p in &lifted {
        let ok = p.order() == base.len()
            && p.shape().iter().zip(&base).enumerate().all(|(k, (a, b))| k == mode || a == b);
        if !ok {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate {:?} with {:?} along mode {mode}",
                p.shape(),
                base
            )));
        }
    }
    let total: usize = lifted.iter().map(|p| p.shape()[mode]).sum();
    let mut shape = base.clone();
    shape[mode] = total;
    let (pre, _, post) = layout(&shape, mode);
    let mut data = Vec::with_capacity(shape.iter().product());
    for a in 0..pre {
        for p in &lifted {
            let n = p.shape()[mode];
            data.extend_from_slice(&p.data()[a * n * post..(a + 1) * n * post]);
        }
    }
    Ok(Tensor { shape, data })
}

/// Superdiagonal tensor of order `order` with `diag` on its diagonal.
pub fn superdiagonal<T: Real>(diag: &[Complex<T>], order: usize) -> Tensor<T> {
    let n = diag.len();
    let mut t = Tensor::zeros(&vec![n; order]);
    for (p, &b) in diag.iter().enumerate() {
        t[&vec![p; order][..]] = b;
    }
    t
}
