//! Dense complex linear algebra on top of nalgebra.

use nalgebra::{Complex, ComplexField, DMatrix, DMatrixView, Schur};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};
use crate::tensor::{layout, CMatrix, Tensor};

/// Relative singular-value floor used by [`pinv`] and rank statements.
pub const RANK_TOL: f64 = 1e-10;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues descending.
pub struct HermitianEigen<T: Real> {
    pub values: Vec<T>,
    /// Column `k` pairs with `values[k]`.
    pub vectors: CMatrix<T>,
}

pub fn hermitian_eigen<T: Real>(r: &CMatrix<T>) -> Result<HermitianEigen<T>> {
    if !r.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "Hermitian eigen-decomposition of a {}x{} matrix",
            r.nrows(),
            r.ncols()
        )));
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("matrix passed to Hermitian eigensolver".into()));
    }
    // Symmetrize to remove round-off asymmetry before the solver sees it.
    let half = lit::<T>(0.5);
    let sym = (r + r.adjoint()).map(|z| z * half);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(r.nrows(), r.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

pub struct Pinv<T: Real> {
    pub matrix: CMatrix<T>,
    pub rank: usize,
    /// Some singular values fell below the relative floor and were dropped.
    pub truncated: bool,
}

/// Moore-Penrose pseudo-inverse; singular values below `rel_tol * s_max`
/// are treated as zero.
pub fn pinv<T: Real>(a: &CMatrix<T>, rel_tol: f64) -> Pinv<T> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Pinv { matrix: CMatrix::zeros(n, m), rank: 0, truncated: false };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^H");
    let smax = svd.singular_values.iter().fold(T::zero(), |acc, &s| acc.max(s));
    let floor = smax * lit(rel_tol);
    let k = svd.singular_values.len();
    let mut out = CMatrix::zeros(n, m);
    let mut rank = 0;
    for idx in 0..k {
        let s = svd.singular_values[idx];
        if s <= floor || s == T::zero() {
            continue;
        }
        rank += 1;
        let inv = Complex::new(T::one() / s, T::zero());
        // out += v_idx * inv * u_idx^H
        for j in 0..m {
            let uc = u[(j, idx)].conj() * inv;
            for i in 0..n {
                out[(i, j)] += vt[(idx, i)].conj() * uc;
            }
        }
    }
    Pinv { matrix: out, rank, truncated: rank < k }
}

/// `X X^H` where `X` is the mode-`mode` unfolding of `t`.
///
/// Columns of the unfolding are visited in storage order, which leaves the
/// Gram matrix unchanged. The product runs as two real matrix products so
/// that f32/f64 hit nalgebra's blocked kernels.
pub fn mode_gram<T: Real>(t: &Tensor<T>, mode: usize) -> Result<CMatrix<T>> {
    if mode >= t.order() {
        return Err(Error::ModeOutOfRange { mode, order: t.order() });
    }
    let (pre, n, post) = layout(t.shape(), mode);
    let k = pre * post;
    let data = t.data();
    let mut stacked = DMatrix::<T>::zeros(2 * k, n);
    // Column i holds row i of the unfolding: real parts, then imaginary.
    let out = stacked.as_mut_slice();
    for a in 0..pre {
        for i in 0..n {
            let src = &data[(a * n + i) * post..(a * n + i + 1) * post];
            let base = i * 2 * k + a * post;
            for (b, z) in src.iter().enumerate() {
                out[base + b] = z.re;
                out[base + k + b] = z.im;
            }
        }
    }
    Ok(gram_from_stacked(&stacked))
}

/// Given the `2k x n` matrix `[Re X^T; Im X^T]`, returns `X X^H`.
pub(crate) fn gram_from_stacked<T: Real>(s: &DMatrix<T>) -> CMatrix<T> {
    let (rows, n) = s.shape();
    let k = rows / 2;
    let re = s.rows(0, k);
    let im = s.rows(k, k);
    let (sym, ir) = if n > 5 && k > 5 {
        // Transposed views share storage; the blocked kernel handles the
        // strides. nalgebra's small-matrix fallback does not, hence the guard.
        let st = DMatrixView::from_slice_with_strides(s.as_slice(), n, rows, rows, 1);
        let imt = DMatrixView::from_slice_with_strides(&s.as_slice()[k..], n, k, rows, 1);
        (st * s, imt * re)
    } else {
        (s.transpose() * s, im.transpose() * re)
    };
    CMatrix::from_fn(n, n, |i, j| Complex::new(sym[(i, j)], ir[(i, j)] - ir[(j, i)]))
}

/// `A A^H` for a general complex matrix.
pub fn gram<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    let (n, k) = a.shape();
    let s = DMatrix::from_fn(2 * k, n, |r, i| if r < k { a[(i, r)].re } else { a[(i, r - k)].im });
    gram_from_stacked(&s)
}

/// Roots of `sum_k c[k] z^k` via eigenvalues of the companion matrix.
/// Vanishing top coefficients reduce the degree.
pub fn poly_roots<T: Real>(coeffs: &[Complex<T>]) -> Vec<Complex<T>> {
    let scale = coeffs.iter().fold(T::zero(), |acc, c| acc.max(c.modulus()));
    if scale == T::zero() {
        return Vec::new();
    }
    let tiny = scale * T::default_epsilon() * lit(16.0);
    let mut deg = coeffs.len() - 1;
    while deg > 0 && coeffs[deg].modulus() <= tiny {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut comp = CMatrix::<T>::zeros(deg, deg);
    for j in 0..deg {
        comp[(0, j)] = -coeffs[deg - 1 - j] / lead;
    }
    for i in 1..deg {
        comp[(i, i - 1)] = Complex::new(T::one(), T::zero());
    }
    match comp.clone().eigenvalues() {
        Some(v) => v.iter().copied().collect(),
        None => {
            let (_, t) = Schur::new(comp).unpack();
            (0..deg).map(|i| t[(i, i)]).collect()
        }
    }
}

/// Eigenvalues and unit-norm right eigenvectors of a general complex matrix.
pub fn eig_general<T: Real>(a: &CMatrix<T>) -> Result<(Vec<Complex<T>>, CMatrix<T>)> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch("eigen-decomposition of a non-square matrix".into()));
    }
    let n = a.nrows();
    let (q, t) = Schur::new(a.clone()).unpack();
    let values: Vec<Complex<T>> = (0..n).map(|i| t[(i, i)]).collect();
    let guard = t.iter().fold(T::zero(), |acc, z| acc.max(z.modulus())) * T::default_epsilon();
    let mut y = CMatrix::<T>::zeros(n, n);
    for k in 0..n {
        y[(k, k)] = Complex::new(T::one(), T::zero());
        for i in (0..k).rev() {
            let mut s = Complex::new(T::zero(), T::zero());
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - t[(k, k)];
            if den.modulus() < guard {
                den = Complex::new(guard.max(T::min_value().unwrap_or(T::default_epsilon())), T::zero());
            }
            y[(i, k)] = -s / den;
        }
    }
    let mut v = q * y;
    for mut col in v.column_iter_mut() {
        let nrm = col.norm();
        if nrm > T::zero() {
            col /= Complex::new(nrm, T::zero());
        }
    }
    Ok((values, v))
}
