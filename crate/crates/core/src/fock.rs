// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Truncated number-basis tools: Gauss-Hermite rules, displacement
//! operators and the phase-insensitive Gaussian channel.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Population allowed in the top Fock level after a channel application.
pub const TAIL_LIMIT: f64 = 1e-8;

/// Nodes and weights of the `n`-point rule for `int e^{-x^2} f(x) dx`
/// (Golub-Welsch).
pub fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("Gauss-Hermite rule needs n >= 1".into()));
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = (k as f64 / 2.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mu0 = std::f64::consts::PI.sqrt();
    let mut pts: Vec<(f64, f64)> = (0..n).map(|k| (eig.eigenvalues[k], mu0 * eig.eigenvectors[(0, k)].powi(2))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pts.into_iter().unzip())
}

pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Generalized Laguerre polynomial `L_n^{(k)}(x)` by recurrence.
fn laguerre(n: usize, k: usize, x: f64) -> f64 {
    let k = k as f64;
    let (mut l0, mut l1) = (1.0, 1.0 + k - x);
    if n == 0 {
        return l0;
    }
    for m in 1..n {
        let m = m as f64;
        let l2 = ((2.0 * m + 1.0 + k - x) * l1 - (m + k) * l0) / (m + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// `ln k!` for `k < n`.
fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for k in 0..n {
        if k > 0 {
            acc += (k as f64).ln();
        }
        out.push(acc);
    }
    out
}

/// Exact matrix elements `<m|D(alpha)|n>` for `m, n < dim`.
pub fn displacement(alpha: Complex64, dim: usize) -> CMatrix {
    let x = alpha.norm_sqr();
    let e = (-0.5 * x).exp();
    let lf = ln_factorials(dim);
    let mut up = vec![Complex64::new(1.0, 0.0); dim];
    let mut down = up.clone();
    for k in 1..dim {
        up[k] = up[k - 1] * alpha;
        down[k] = down[k - 1] * -alpha.conj();
    }
    CMatrix::from_fn(dim, dim, |m, n| {
        let (lo, hi, pow) = if m >= n { (n, m, &up) } else { (m, n, &down) };
        let k = hi - lo;
        pow[k] * ((0.5 * (lf[lo] - lf[hi])).exp() * e * laguerre(lo, k, x))
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp()
}

/// Pure loss with transmissivity `eta`, applied through its Kraus operators.
pub fn loss_channel(rho: &CMatrix, eta: f64) -> CMatrix {
    let dim = rho.nrows();
    let mut out = CMatrix::zeros(dim, dim);
    for k in 0..dim {
        let a = CMatrix::from_fn(dim, dim, |r, c| {
            if c >= k && r == c - k {
                let v = binomial(c, k) * eta.powi((c - k) as i32) * (1.0 - eta).powi(k as i32);
                Complex64::new(v.sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        out += &a * rho * a.adjoint();
    }
    out
}

/// Random displacement with per-quadrature variance `v_add` (vacuum 1/2),
/// integrated on an `n_gh`-point product Gauss-Hermite grid. The state is
/// embedded in `dim_work` levels while displaced.
pub fn random_displacement(rho: &CMatrix, v_add: f64, n_gh: usize, dim_work: usize) -> Result<CMatrix> {
    Ok(random_displacement_many(std::slice::from_ref(rho), v_add, n_gh, dim_work)?.remove(0))
}

/// [`random_displacement`] of several operators of equal dimension, sharing
/// the displacement matrices.
pub fn random_displacement_many(rhos: &[CMatrix], v_add: f64, n_gh: usize, dim_work: usize) -> Result<Vec<CMatrix>> {
    if v_add < 0.0 {
        return Err(Error::UnphysicalChannel(format!("negative added noise {v_add}")));
    }
    if v_add == 0.0 || rhos.is_empty() {
        return Ok(rhos.to_vec());
    }
    let dim = rhos[0].nrows();
    let dw = dim_work.max(dim);
    let bigs: Vec<CMatrix> = rhos
        .iter()
        .map(|r| {
            let mut big = CMatrix::zeros(dw, dw);
            big.view_mut((0, 0), (dim, dim)).copy_from(r);
            big
        })
        .collect();
    let (x, w) = gauss_hermite(n_gh)?;
    let s = v_add.sqrt();
    let norm = 1.0 / std::f64::consts::PI;
    let mut acc = vec![CMatrix::zeros(dw, dw); rhos.len()];
    for (xi, wi) in x.iter().zip(&w) {
        for (yj, wj) in x.iter().zip(&w) {
            let d = displacement(Complex64::new(s * xi, s * yj), dw);
            let da = d.adjoint();
            let c = Complex64::new(wi * wj * norm, 0.0);
            for (a, big) in acc.iter_mut().zip(&bigs) {
                *a += (&d * big * &da) * c;
            }
        }
    }
    Ok(acc.into_iter().map(|a| a.view((0, 0), (dim, dim)).into_owned()).collect())
}

/// Loss `G^2` followed by added classical noise `v_add`.
pub fn gaussian_channel_apply(rho: &CMatrix, gain: f64, v_add: f64) -> Result<CMatrix> {
    Ok(gaussian_channel_apply_many(std::slice::from_ref(rho), gain, v_add)?.remove(0))
}

/// The channel is linear, so it may be applied to non-Hermitian operators
/// such as `|i><j|`; the tail check looks at the diagonal of each image.
pub fn gaussian_channel_apply_many(rhos: &[CMatrix], gain: f64, v_add: f64) -> Result<Vec<CMatrix>> {
    if !(0.0..=1.0).contains(&gain) {
        return Err(Error::UnphysicalChannel(format!("gain {gain} outside [0, 1]")));
    }
    let lossy: Vec<CMatrix> = rhos.iter().map(|r| loss_channel(r, gain * gain)).collect();
    let Some(dim) = rhos.first().map(|r| r.nrows()) else {
        return Ok(Vec::new());
    };
    let out = random_displacement_many(&lossy, v_add, 16, dim + 20)?;
    for o in &out {
        let tail = o[(dim - 1, dim - 1)].norm();
        if tail > TAIL_LIMIT {
            return Err(Error::UnphysicalChannel(format!("population {tail:e} in the top Fock level")));
        }
    }
    Ok(out)
}

/// Projector onto a pure state.
pub fn pure(psi: &[Complex64], dim: usize) -> CMatrix {
    let mut v = nalgebra::DVector::<Complex64>::zeros(dim);
    for (k, c) in psi.iter().enumerate() {
        v[k] = *c;
    }
    &v * v.adjoint()
}

/// `<psi| rho |psi>`.
pub fn overlap(psi: &[Complex64], rho: &CMatrix) -> f64 {
    let mut s = Complex64::new(0.0, 0.0);
    for (i, a) in psi.iter().enumerate() {
        for (j, b) in psi.iter().enumerate() {
            s += a.conj() * rho[(i, j)] * b;
        }
    }
    s.re
}

/// `<a>` and symmetrized quadrature variances `(Var X, Var P)`, vacuum 1/2.
pub fn quadrature_moments(rho: &CMatrix) -> (Complex64, f64, f64) {
    let dim = rho.nrows();
    let a = annihilation(dim);
    let tr = |m: &CMatrix| (rho * m).trace();
    let r2 = std::f64::consts::SQRT_2;
    let x = (&a + a.adjoint()) / Complex64::new(r2, 0.0);
    let p = (&a - a.adjoint()) / Complex64::new(0.0, r2);
    let mean = tr(&a);
    let vx = tr(&(&x * &x)).re - tr(&x).re.powi(2);
    let vp = tr(&(&p * &p)).re - tr(&p).re.powi(2);
    (mean, vx, vp)
}
