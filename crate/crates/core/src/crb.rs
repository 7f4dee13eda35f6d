//! Deterministic Cramér–Rao bounds for the uncompressed noisy channel tensor.
//!
//! Real parameters per path are `[theta (rad), tau (s), nu (Hz), Re beta,
//! Im beta]`. Every Jacobian column is a scaled Kronecker product of one
//! vector per mode, so Fisher entries reduce to products of short inner
//! products.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};

use crate::error::{Error, Result};
use crate::scenario::{steering_vectors, DimKind, GridSpec, PathParams, Scenario, SPEED_OF_LIGHT};
use crate::tensor::{kron_vec, CMatrix};
use crate::C64;

/// Real parameters per path.
pub const PARAMS_PER_PATH: usize = 5;

/// Scaled Fisher matrices above this condition number are treated as
/// singular; their inverse has no correct digits left.
pub const SINGULAR_CONDITION: f64 = 1e13;

/// Standard-deviation bounds of one path in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathBound {
    pub angle_deg: f64,
    pub distance_m: f64,
    pub velocity_kmh: f64,
    pub gain_re: f64,
    pub gain_im: f64,
}

impl PathBound {
    pub fn get(&self, kind: DimKind) -> f64 {
        match kind {
            DimKind::Angle => self.angle_deg,
            DimKind::Delay => self.distance_m,
            DimKind::Doppler => self.velocity_kmh,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrbReport {
    pub paths: Vec<PathBound>,
    pub noise_var: f64,
    /// Condition number of the Jacobi-scaled Fisher matrix.
    pub condition: f64,
    /// The Fisher matrix was not positive definite; all bounds are infinite.
    pub singular: bool,
}

impl CrbReport {
    /// Root mean of the per-path variance bounds of one dimension, the
    /// counterpart of an RMSE over all paths.
    pub fn rms(&self, kind: DimKind) -> f64 {
        let n = self.paths.len().max(1) as f64;
        (self.paths.iter().map(|b| b.get(kind).powi(2)).sum::<f64>() / n).sqrt()
    }
}

/// Derivative of the per-sample phase with respect to the path's own
/// parameter in mode `kind` (theta in rad, tau in s, nu in Hz).
fn phase_rate(kind: DimKind, path: &PathParams, grid: &GridSpec) -> f64 {
    let spacing = grid.spacing(kind);
    match kind {
        DimKind::Angle => -2.0 * PI * path.angle_deg.to_radians().sin() * spacing / grid.wavelength(),
        _ => kind.phase_sign() * 2.0 * PI * spacing,
    }
}

/// d(physical unit) / d(internal parameter) for theta, tau, nu.
pub fn physical_scale(kind: DimKind, grid: &GridSpec) -> f64 {
    match kind {
        DimKind::Angle => 180.0 / PI,
        DimKind::Delay => SPEED_OF_LIGHT,
        DimKind::Doppler => 3.6 * SPEED_OF_LIGHT / grid.carrier_frequency,
    }
}

struct Factors {
    /// `[path][mode]` steering vectors and their parameter derivatives.
    u: Vec<[Vec<C64>; 3]>,
    du: Vec<[Vec<C64>; 3]>,
}

fn factors(sc: &Scenario) -> Factors {
    let mut u = Vec::new();
    let mut du = Vec::new();
    for path in &sc.paths {
        let s = steering_vectors::<f64>(path, &sc.grid);
        let d = [0, 1, 2].map(|m| {
            let rate = phase_rate(DimKind::ALL[m], path, &sc.grid);
            s[m].iter().enumerate().map(|(n, z)| z * C64::new(0.0, rate * n as f64)).collect()
        });
        u.push(s);
        du.push(d);
    }
    Factors { u, du }
}

/// Coefficient and per-mode factor choice (derivative or not) of Jacobian
/// column `t` of a path.
fn column_spec(t: usize, gain: C64) -> (C64, [bool; 3]) {
    match t {
        0..=2 => {
            let mut d = [false; 3];
            d[t] = true;
            (gain, d)
        }
        3 => (C64::new(1.0, 0.0), [false; 3]),
        _ => (C64::new(0.0, 1.0), [false; 3]),
    }
}

/// Dense analytic Jacobian `d vec(H) / d eta`, columns grouped by path.
/// Intended for small grids.
pub fn model_jacobian(sc: &Scenario) -> CMatrix<f64> {
    let f = factors(sc);
    let rows: usize = sc.grid.shape().iter().product();
    let cols = PARAMS_PER_PATH * sc.paths.len();
    let mut j = CMatrix::zeros(rows, cols);
    for (p, path) in sc.paths.iter().enumerate() {
        for t in 0..PARAMS_PER_PATH {
            let (c, d) = column_spec(t, path.gain);
            let pick = |m: usize| if d[m] { &f.du[p][m] } else { &f.u[p][m] };
            let v = kron_vec(pick(0), &kron_vec(pick(1), pick(2)));
            for (r, z) in v.into_iter().enumerate() {
                j[(r, p * PARAMS_PER_PATH + t)] = c * z;
            }
        }
    }
    j
}

/// Fisher information `(2 / noise_var) Re(J^H J)` from factor inner products.
pub fn fisher_information(sc: &Scenario, noise_var: f64) -> Result<DMatrix<f64>> {
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise variance {noise_var} must be positive and finite")));
    }
    let f = factors(sc);
    let np = sc.paths.len();
    let inner = |x: &[C64], y: &[C64]| -> C64 { x.iter().zip(y).map(|(a, b)| a.conj() * b).sum() };
    // g[m][(p, dp)][(q, dq)]
    let idx = |p: usize, d: bool| 2 * p + d as usize;
    let mut g = vec![vec![vec![C64::new(0.0, 0.0); 2 * np]; 2 * np]; 3];
    for (m, gm) in g.iter_mut().enumerate() {
        for p in 0..np {
            for q in 0..np {
                for dp in [false, true] {
                    for dq in [false, true] {
                        let x = if dp { &f.du[p][m] } else { &f.u[p][m] };
                        let y = if dq { &f.du[q][m] } else { &f.u[q][m] };
                        gm[idx(p, dp)][idx(q, dq)] = inner(x, y);
                    }
                }
            }
        }
    }
    let n = PARAMS_PER_PATH * np;
    let mut fim = DMatrix::zeros(n, n);
    for k in 0..n {
        let (p, tk) = (k / PARAMS_PER_PATH, k % PARAMS_PER_PATH);
        let (ck, dk) = column_spec(tk, sc.paths[p].gain);
        for l in k..n {
            let (q, tl) = (l / PARAMS_PER_PATH, l % PARAMS_PER_PATH);
            let (cl, dl) = column_spec(tl, sc.paths[q].gain);
            let mut v = ck.conj() * cl;
            for m in 0..3 {
                v *= g[m][idx(p, dk[m])][idx(q, dl[m])];
            }
            let x = 2.0 / noise_var * v.re;
            fim[(k, l)] = x;
            fim[(l, k)] = x;
        }
    }
    Ok(fim)
}

/// Diagonal of the inverse Fisher matrix via a Jacobi-scaled Cholesky
/// solve, with the scaled condition number; `None` if not positive definite.
pub fn inverse_diagonal(fim: &DMatrix<f64>) -> (Option<Vec<f64>>, f64) {
    let n = fim.nrows();
    let d: Vec<f64> = (0..n).map(|i| fim[(i, i)]).collect();
    if d.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return (None, f64::INFINITY);
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| fim[(i, j)] * s[i] * s[j]);
    let eig = scaled.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if condition > SINGULAR_CONDITION {
        return (None, condition);
    }
    let Some(chol) = Cholesky::new(scaled) else {
        return (None, condition);
    };
    let inv = chol.inverse();
    (Some((0..n).map(|i| inv[(i, i)] * s[i] * s[i]).collect()), condition)
}

/// Bounds for every path of `sc` at per-element noise variance `noise_var`
/// (referred to the scenario's gains).
pub fn crb_evaluate(sc: &Scenario, noise_var: f64) -> Result<CrbReport> {
    let fim = fisher_information(sc, noise_var)?;
    let (diag, condition) = inverse_diagonal(&fim);
    let grid = &sc.grid;
    let scale = DimKind::ALL.map(|k| physical_scale(k, grid));
    let paths = (0..sc.paths.len())
        .map(|p| match &diag {
            Some(v) => {
                let sd = |t: usize| v[p * PARAMS_PER_PATH + t].max(0.0).sqrt();
                PathBound {
                    angle_deg: sd(0) * scale[0],
                    distance_m: sd(1) * scale[1],
                    velocity_kmh: sd(2) * scale[2],
                    gain_re: sd(3),
                    gain_im: sd(4),
                }
            }
            None => PathBound {
                angle_deg: f64::INFINITY,
                distance_m: f64::INFINITY,
                velocity_kmh: f64::INFINITY,
                gain_re: f64::INFINITY,
                gain_im: f64::INFINITY,
            },
        })
        .collect();
    Ok(CrbReport { paths, noise_var, condition, singular: diag.is_none() })
}
