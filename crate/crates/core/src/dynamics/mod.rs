// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! First- and second-moment equations, their integration and drive
//! synthesis.

mod integrate;
mod pulse;

pub use integrate::{
    integrate, CovGroup, IntegrateOptions, Mode, Readout, Trajectory, TrajectorySample,
};
pub use pulse::{calibrate_pulse_amplitude, presolve_spins, synthesize_drive, PulseSign, SechPulse, SynthesizedDrive};

use crate::model::{spin_slots, ControlSample, EnsembleModel, MomentState, IDX_P, IDX_X};
use crate::scalar::Real;

/// Per-sub-ensemble coefficients in the working precision.
#[derive(Debug, Clone)]
pub struct Coeffs<T: Real> {
    /// `g / sqrt 2`, coupling of the cavity to the spin means.
    pub g_r2: Vec<T>,
    /// `sqrt 2 g`, coupling of the spins to the cavity means.
    pub a: Vec<T>,
    pub delta: Vec<T>,
    pub n: Vec<T>,
    pub gamma_perp: T,
    pub gamma_par: T,
}

impl<T: Real> Coeffs<T> {
    pub fn new(model: &EnsembleModel) -> Self {
        let r2 = std::f64::consts::SQRT_2;
        let s = model.subs();
        Self {
            g_r2: s.iter().map(|x| T::c(x.g / r2)).collect(),
            a: s.iter().map(|x| T::c(x.g * r2)).collect(),
            delta: s.iter().map(|x| T::c(x.delta)).collect(),
            n: s.iter().map(|x| T::c(x.n)).collect(),
            gamma_perp: T::c(model.params().gamma_perp),
            gamma_par: T::c(model.params().gamma_par),
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    pub fn dim(&self) -> usize {
        2 + 3 * self.n.len()
    }
}

/// Controls converted to the working precision.
#[derive(Debug, Clone, Copy)]
pub struct Ctrl<T> {
    pub delta_cs: T,
    pub kappa: T,
    pub beta_re: T,
    pub beta_im: T,
}

impl<T: Real> From<ControlSample> for Ctrl<T> {
    fn from(c: ControlSample) -> Self {
        Self { delta_cs: T::c(c.delta_cs), kappa: T::c(c.kappa), beta_re: T::c(c.beta.re), beta_im: T::c(c.beta.im) }
    }
}

/// Mean-value right-hand side. With `cov` present the spin equations include
/// the cavity-spin covariance terms.
pub fn mean_rhs<T: Real>(y: &[T], cov: Option<&[T]>, ctrl: &Ctrl<T>, k: &Coeffs<T>, out: &mut [T]) {
    let (x, p) = (y[IDX_X], y[IDX_P]);
    let (gp, gl) = (k.gamma_perp, k.gamma_par);
    let mut sum_sy = T::zero();
    let mut sum_sx = T::zero();
    let spins = &y[2..];
    let dsp = &mut out[2..];
    for m in 0..k.len() {
        let j = 3 * m;
        let (sx, sy, sz) = (spins[j], spins[j + 1], spins[j + 2]);
        let a = k.a[m];
        let dm = k.delta[m];
        sum_sy += k.g_r2[m] * sy;
        sum_sx += k.g_r2[m] * sx;
        dsp[j] = -gp * sx - dm * sy - a * sz * p;
        dsp[j + 1] = -gp * sy + dm * sx - a * sz * x;
        dsp[j + 2] = a * (sx * p + sy * x) - gl * (sz + k.n[m]);
    }
    let two = T::two();
    let drive = two * ctrl.kappa.sqrt();
    out[IDX_X] = -ctrl.kappa * x + ctrl.delta_cs * p - sum_sy + drive * ctrl.beta_re;
    out[IDX_P] = -ctrl.kappa * p - ctrl.delta_cs * x - sum_sx + drive * ctrl.beta_im;
    if let Some(c) = cov {
        let d = k.dim();
        let h = T::half();
        for m in 0..k.len() {
            let [ix, iy, iz] = spin_slots(m);
            let a = k.a[m];
            out[ix] -= a * h * c[iz * d + IDX_P];
            out[iy] -= a * h * c[iz * d + IDX_X];
            out[iz] += a * h * (c[ix * d + IDX_P] + c[iy * d + IDX_X]);
        }
    }
}

/// Mean-value derivative of a state.
pub fn mean_derivative<T: Real>(state: &MomentState<T>, ctrl: ControlSample, model: &EnsembleModel, include_covariance_coupling: bool) -> Vec<T> {
    let k = Coeffs::<T>::new(model);
    let mut out = vec![T::zero(); state.dim()];
    let cov = if include_covariance_coupling { state.cov.as_deref() } else { None };
    mean_rhs(&state.means, cov, &ctrl.into(), &k, &mut out);
    out
}

/// `R = M gamma` for the block-arrow drift matrix, written into `r`.
pub fn drift_times<T: Real>(y: &[T], g: &[T], ctrl: &Ctrl<T>, k: &Coeffs<T>, r: &mut [T]) {
    let d = k.dim();
    let (x, p) = (y[IDX_X], y[IDX_P]);
    let (kap, dcs) = (ctrl.kappa, ctrl.delta_cs);
    let (g0, rest) = g.split_at(d);
    let (g1, _) = rest.split_at(d);
    {
        let (r0, rrest) = r.split_at_mut(d);
        let (r1, _) = rrest.split_at_mut(d);
        for j in 0..d {
            r0[j] = -kap * g0[j] + dcs * g1[j];
            r1[j] = -kap * g1[j] - dcs * g0[j];
        }
        for m in 0..k.len() {
            let [ix, iy, _] = spin_slots(m);
            let c = k.g_r2[m];
            let gy = &g[iy * d..iy * d + d];
            let gx = &g[ix * d..ix * d + d];
            for j in 0..d {
                r0[j] -= c * gy[j];
                r1[j] -= c * gx[j];
            }
        }
    }
    let gp = k.gamma_perp;
    let gl = k.gamma_par;
    for m in 0..k.len() {
        let [ix, iy, iz] = spin_slots(m);
        let (sx, sy, sz) = (y[ix], y[iy], y[iz]);
        let a = k.a[m];
        let dm = k.delta[m];
        let gx = &g[ix * d..ix * d + d];
        let gy = &g[iy * d..iy * d + d];
        let gz = &g[iz * d..iz * d + d];
        let (asz, ap, ax, asx, asy) = (a * sz, a * p, a * x, a * sx, a * sy);
        let block = &mut r[ix * d..iz * d + d];
        let (rx, rest) = block.split_at_mut(d);
        let (ry, rz) = rest.split_at_mut(d);
        for j in 0..d {
            let (vx, vy, vz) = (gx[j], gy[j], gz[j]);
            rx[j] = -asz * g1[j] - gp * vx - dm * vy - ap * vz;
            ry[j] = -asz * g0[j] + dm * vx - gp * vy - ax * vz;
            rz[j] = asy * g0[j] + asx * g1[j] + ap * vx + ax * vy - gl * vz;
        }
    }
}

/// Adds the noise matrix `N` to the row-major `out`.
pub fn add_noise<T: Real>(y: &[T], ctrl: &Ctrl<T>, k: &Coeffs<T>, out: &mut [T]) {
    let d = k.dim();
    let two = T::two();
    let four = T::c(4.0);
    out[0] += two * ctrl.kappa;
    out[d + 1] += two * ctrl.kappa;
    let (gp, gl) = (k.gamma_perp, k.gamma_par);
    for m in 0..k.len() {
        let [ix, iy, iz] = spin_slots(m);
        let n = k.n[m];
        out[ix * d + ix] += four * gp * n;
        out[iy * d + iy] += four * gp * n;
        if gl != T::zero() {
            let cx = two * gl * y[ix];
            let cy = two * gl * y[iy];
            out[ix * d + iz] += cx;
            out[iz * d + ix] += cx;
            out[iy * d + iz] += cy;
            out[iz * d + iy] += cy;
            out[iz * d + iz] += four * gl * (y[iz] + n);
        }
    }
}

/// `d gamma/dt = M gamma + gamma M^T + N`, using `scratch` for `M gamma`.
pub fn covariance_rhs<T: Real>(y: &[T], g: &[T], ctrl: &Ctrl<T>, k: &Coeffs<T>, scratch: &mut [T], out: &mut [T]) {
    let d = k.dim();
    drift_times(y, g, ctrl, k, scratch);
    for i in 0..d {
        out[i * d + i] = scratch[i * d + i] + scratch[i * d + i];
        for j in (i + 1)..d {
            let v = scratch[i * d + j] + scratch[j * d + i];
            out[i * d + j] = v;
            out[j * d + i] = v;
        }
    }
    add_noise(y, ctrl, k, out);
}

/// Covariance derivative of a state with a covariance matrix.
pub fn covariance_derivative<T: Real>(state: &MomentState<T>, ctrl: ControlSample, model: &EnsembleModel) -> Option<Vec<T>> {
    let cov = state.cov.as_ref()?;
    let k = Coeffs::<T>::new(model);
    let d = state.dim();
    let mut scratch = vec![T::zero(); d * d];
    let mut out = vec![T::zero(); d * d];
    covariance_rhs(&state.means, cov, &ctrl.into(), &k, &mut scratch, &mut out);
    Some(out)
}

/// `lambda M` for one row vector: the adjoint drift.
pub fn row_times_drift<T: Real>(y: &[T], lam: &[T], ctrl: &Ctrl<T>, k: &Coeffs<T>, out: &mut [T]) {
    let (x, p) = (y[IDX_X], y[IDX_P]);
    let (l0, l1) = (lam[0], lam[1]);
    let mut cx = -ctrl.kappa * l0 - ctrl.delta_cs * l1;
    let mut cp = ctrl.delta_cs * l0 - ctrl.kappa * l1;
    let (gp, gl) = (k.gamma_perp, k.gamma_par);
    let ls = &lam[2..];
    let ys = &y[2..];
    let os = &mut out[2..];
    for m in 0..k.len() {
        let j = 3 * m;
        let (lx, ly, lz) = (ls[j], ls[j + 1], ls[j + 2]);
        let (sx, sy, sz) = (ys[j], ys[j + 1], ys[j + 2]);
        let a = k.a[m];
        let dm = k.delta[m];
        let c = k.g_r2[m];
        cx += a * (lz * sy - ly * sz);
        cp += a * (lz * sx - lx * sz);
        os[j] = -c * l1 - gp * lx + dm * ly + a * p * lz;
        os[j + 1] = -c * l0 - dm * lx - gp * ly + a * x * lz;
        os[j + 2] = -a * (p * lx + x * ly) - gl * lz;
    }
    out[0] = cx;
    out[1] = cp;
}

/// `lambda N mu^T`.
pub fn noise_form<T: Real>(y: &[T], lam: &[T], mu: &[T], ctrl: &Ctrl<T>, k: &Coeffs<T>) -> T {
    let two = T::two();
    let four = T::c(4.0);
    let mut s = two * ctrl.kappa * (lam[0] * mu[0] + lam[1] * mu[1]);
    let mut acc = T::zero();
    let ls = &lam[2..];
    let ms = &mu[2..];
    for m in 0..k.len() {
        let j = 3 * m;
        acc += k.n[m] * (ls[j] * ms[j] + ls[j + 1] * ms[j + 1]);
    }
    s += four * k.gamma_perp * acc;
    if k.gamma_par != T::zero() {
        let gl = k.gamma_par;
        let ys = &y[2..];
        for m in 0..k.len() {
            let j = 3 * m;
            let (sx, sy, sz) = (ys[j], ys[j + 1], ys[j + 2]);
            s += two * gl * sx * (ls[j] * ms[j + 2] + ls[j + 2] * ms[j]);
            s += two * gl * sy * (ls[j + 1] * ms[j + 2] + ls[j + 2] * ms[j + 1]);
            s += four * gl * (sz + k.n[m]) * ls[j + 2] * ms[j + 2];
        }
    }
    s
}
