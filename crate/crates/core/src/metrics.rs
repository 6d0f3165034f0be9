// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Figures of merit: gain fit, qubit fidelity, excess noise and the
//! free-induction-decay cross-check.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::distributions::{FreqBin, FrequencyLine};
use crate::dynamics::{integrate, IntegrateOptions, Trajectory};
use crate::error::{Error, Result};
use crate::fock::{gaussian_channel_apply_many, CMatrix};
use crate::model::{spin_slots, EnsembleModel, MomentState, PhysicalParams, SubEnsemble};
use crate::schedule::ControlSchedule;

/// Fock dimension used by [`qubit_fidelity`].
pub const FIDELITY_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainFit {
    pub gain: f64,
    pub phase: f64,
    /// Complex scalar of the fit through the origin.
    pub c: [f64; 2],
    /// Offset of the affine fit `c' alpha + d`.
    pub offset: [f64; 2],
    /// Largest `|out - c in|`.
    pub linearity_residual: f64,
    /// Largest `|out - c' in - d|`.
    pub affine_residual: f64,
}

/// Least-squares `out ~ c in`; the affine offset is reported separately.
pub fn fit_gain(inputs: &[Complex64], outputs: &[Complex64]) -> Result<GainFit> {
    if inputs.len() != outputs.len() {
        return Err(Error::DegenerateFit(format!("{} inputs, {} outputs", inputs.len(), outputs.len())));
    }
    let mut distinct: Vec<Complex64> = Vec::new();
    for z in inputs {
        if !distinct.iter().any(|d| (d - z).norm() < 1e-12) {
            distinct.push(*z);
        }
    }
    if distinct.len() < 3 || !distinct.iter().any(|z| z.norm() < 1e-12) {
        return Err(Error::DegenerateFit("need at least 3 distinct inputs including 0".into()));
    }
    let num: Complex64 = inputs.iter().zip(outputs).map(|(i, o)| i.conj() * o).sum();
    let den: f64 = inputs.iter().map(|i| i.norm_sqr()).sum();
    let c = num / den;
    let n = inputs.len() as f64;
    let mi: Complex64 = inputs.iter().sum::<Complex64>() / n;
    let mo: Complex64 = outputs.iter().sum::<Complex64>() / n;
    let sxy: Complex64 = inputs.iter().zip(outputs).map(|(i, o)| (i - mi).conj() * (o - mo)).sum();
    let sxx: f64 = inputs.iter().map(|i| (i - mi).norm_sqr()).sum();
    let d = mo - sxy / sxx * mi;
    let cp = sxy / sxx;
    let worst = |f: &dyn Fn(&Complex64) -> Complex64| inputs.iter().zip(outputs).map(|(i, o)| (o - f(i)).norm()).fold(0.0, f64::max);
    let linearity_residual = worst(&|i| c * i);
    let affine_residual = worst(&|i| cp * i + d);
    Ok(GainFit { gain: c.norm(), phase: c.arg(), c: [c.re, c.im], offset: [d.re, d.im], linearity_residual, affine_residual })
}

/// Standard coherent-input grid: origin, axes and diagonals.
pub fn reference_grid() -> Vec<Complex64> {
    let z = |a: f64, b: f64| Complex64::new(a, b);
    vec![z(0.0, 0.0), z(1.0, 0.0), z(-1.0, 0.0), z(0.0, 2.0), z(0.0, -2.0), z(1.0, 1.0), z(-1.0, 1.0), z(2.0, -1.0)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitFidelity {
    /// Average over the six cardinal Bloch states.
    pub six_state: f64,
    /// Average over a spherical quadrature of pure qubit states.
    pub haar: f64,
}

fn qubit_state(theta: f64, phi: f64) -> [Complex64; 2] {
    [Complex64::new((theta / 2.0).cos(), 0.0), Complex64::from_polar((theta / 2.0).sin(), phi)]
}

/// Images of `|i><j|`, `i, j` in `{0, 1}`, under the channel.
fn qubit_images(gain: f64, v_add: f64) -> Result<Vec<CMatrix>> {
    let basis: Vec<CMatrix> = (0..4)
        .map(|k| {
            let mut m = CMatrix::zeros(FIDELITY_DIM, FIDELITY_DIM);
            m[(k / 2, k % 2)] = Complex64::new(1.0, 0.0);
            m
        })
        .collect();
    gaussian_channel_apply_many(&basis, gain, v_add)
}

/// `<psi| E(|psi><psi|) |psi>` assembled from the basis images.
fn channel_fidelity(psi: &[Complex64; 2], images: &[CMatrix]) -> f64 {
    let mut f = Complex64::new(0.0, 0.0);
    for (k, img) in images.iter().enumerate() {
        let coeff = psi[k / 2] * psi[k % 2].conj();
        for a in 0..2 {
            for b in 0..2 {
                f += coeff * psi[a].conj() * img[(a, b)] * psi[b];
            }
        }
    }
    f.re
}

/// Qubit fidelity of the phase-insensitive Gaussian channel with amplitude
/// gain `gain` and output variance sum `var_sum` (vacuum 1).
pub fn qubit_fidelity(gain: f64, var_sum: f64) -> Result<QubitFidelity> {
    if !(gain > 0.0 && gain <= 1.0) {
        return Err(Error::UnphysicalChannel(format!("gain {gain} outside (0, 1]")));
    }
    let floor = gain * gain + (1.0 - gain * gain);
    if var_sum < floor - 1e-9 {
        return Err(Error::UnphysicalChannel(format!("var_sum {var_sum} below the loss floor {floor}")));
    }
    let v_add = ((var_sum - 1.0) / 2.0).max(0.0);
    let images = qubit_images(gain, v_add)?;
    use std::f64::consts::{FRAC_PI_2, PI};
    let cardinal = [(0.0, 0.0), (PI, 0.0), (FRAC_PI_2, 0.0), (FRAC_PI_2, PI), (FRAC_PI_2, FRAC_PI_2), (FRAC_PI_2, -FRAC_PI_2)];
    let mut six = 0.0;
    for (t, p) in cardinal {
        six += channel_fidelity(&qubit_state(t, p), &images);
    }
    six /= 6.0;
    // Gauss-Legendre in cos(theta) times a uniform phi grid.
    let (nodes, weights) = gauss_legendre(6)?;
    let n_phi = 6;
    let mut haar = 0.0;
    for (u, w) in nodes.iter().zip(&weights) {
        for k in 0..n_phi {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            haar += w / 2.0 / n_phi as f64 * channel_fidelity(&qubit_state(u.acos(), phi), &images);
        }
    }
    Ok(QubitFidelity { six_state: six, haar })
}

fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let b = kf / (4.0 * kf * kf - 1.0).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    Ok((0..n).map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2))).unzip())
}

/// Time series of `(t, var_sum, spin_var)` from a covariance-carrying run.
pub fn excess_noise_series(tr: &Trajectory<f64>) -> Result<Vec<(f64, f64, f64)>> {
    let out: Vec<(f64, f64, f64)> = tr.samples.iter().filter(|s| s.var_sum.is_finite()).map(|s| (s.t, s.var_sum, s.spin_var)).collect();
    if out.is_empty() {
        return Err(Error::MissingCovariance("trajectory carries no covariance samples".into()));
    }
    Ok(out)
}

/// Symmetry and positivity of a dense covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    pub trace: f64,
}

impl CovarianceCheck {
    pub fn passes(&self, rel: f64) -> bool {
        self.max_asymmetry == 0.0 && self.min_eigenvalue >= -rel * self.trace
    }
}

pub fn check_covariance(state: &MomentState<f64>) -> Result<CovarianceCheck> {
    let cov = state.cov.as_ref().ok_or_else(|| Error::MissingCovariance("state has no covariance".into()))?;
    let d = state.dim();
    let m = DMatrix::from_row_slice(d, d, cov);
    let mut asym: f64 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    let trace = m.trace();
    let min_eigenvalue = SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(CovarianceCheck { max_asymmetry: asym, min_eigenvalue, trace })
}

/// Uncoupled ensemble over `freq` with raw bin weights; the population is
/// whatever mass the bins hold.
pub fn decoupled_model(params: &PhysicalParams, freq: &[FreqBin]) -> Result<EnsembleModel> {
    let subs: Vec<SubEnsemble> = freq.iter().map(|b| SubEnsemble { g: 0.0, delta: b.delta, n: params.n_total * b.weight }).collect();
    let n_total = subs.iter().map(|s| s.n).sum();
    EnsembleModel::new(subs, PhysicalParams { gens: 0.0, n_total, ..params.clone() })
}

/// Samples `(t, simulated, analytic)`.
pub type EnvelopeSeries = Vec<(f64, f64, f64)>;

/// Decoupled free-induction decay: every sub-ensemble starts along `+x`
/// and the unweighted `|<S_->|` is compared with the analytic envelope,
/// normalized by `n_ref`, the population of the untruncated line, so
/// mass outside the bins counts as error. Returns the largest
/// deviation in units of the initial amplitude and the sampled curve
/// `(t, simulated, analytic)`.
pub fn fid_analytic_compare(model: &EnsembleModel, line: &FrequencyLine, n_ref: f64, t_end: f64, dt: f64, n_samples: usize) -> Result<(f64, EnvelopeSeries)> {
    if model.subs().iter().any(|s| s.g != 0.0) {
        return Err(Error::WrongConfiguration("free-induction comparison needs a decoupled model".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let d = model.dim();
    let mut means = vec![0.0; d];
    for (m, s) in model.subs().iter().enumerate() {
        means[spin_slots(m)[0]] = s.n;
    }
    let mut state = MomentState { means, cov: None, time: 0.0 };
    let amplitude = |st: &MomentState<f64>| {
        let (mut sx, mut sy) = (0.0, 0.0);
        for m in 0..model.len() {
            let [ix, iy, _] = spin_slots(m);
            sx += st.means[ix];
            sy += st.means[iy];
        }
        sx.hypot(sy)
    };
    let opts = IntegrateOptions { enforce_step_limit: false, ..IntegrateOptions::default() };
    let chunk = t_end / n_samples as f64;
    if !(n_ref > 0.0) {
        return Err(Error::InvalidParameter(format!("reference population {n_ref}")));
    }
    let mut curve = vec![(0.0, amplitude(&state) / n_ref, line.fid_envelope(0.0).abs())];
    for k in 1..=n_samples {
        let mut sched = ControlSchedule::default();
        sched.push(1, "fid", chunk, dt, (0.0, 0.0), (0.0, 0.0));
        state = integrate(&state, &sched, model, &opts)?.final_state;
        let t = k as f64 * chunk;
        curve.push((t, amplitude(&state) / n_ref, line.fid_envelope(t).abs()));
    }
    let err = curve.iter().map(|(_, s, a)| (s - a).abs()).fold(0.0, f64::max);
    Ok((err, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn z(a: f64, b: f64) -> Complex64 {
        Complex64::new(a, b)
    }

    #[test]
    fn identity_fit() {
        let ins = reference_grid();
        let f = fit_gain(&ins, &ins).unwrap();
        assert_relative_eq!(f.gain, 1.0, epsilon = 1e-14);
        assert!(f.linearity_residual < 1e-14);
    }

    #[test]
    fn reversed_fit() {
        let ins = reference_grid();
        let outs: Vec<_> = ins.iter().map(|a| a * -0.79).collect();
        let f = fit_gain(&ins, &outs).unwrap();
        assert_relative_eq!(f.gain, 0.79, epsilon = 1e-14);
        assert_relative_eq!(f.phase.abs(), std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn affine_offset_recovered() {
        let ins = reference_grid();
        let outs: Vec<_> = ins.iter().map(|a| a * z(0.5, 0.1) + z(0.01, -0.02)).collect();
        let f = fit_gain(&ins, &outs).unwrap();
        assert!((z(f.offset[0], f.offset[1]) - z(0.01, -0.02)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(fit_gain(&[z(0.0, 0.0), z(1.0, 0.0)], &[z(0.0, 0.0), z(1.0, 0.0)]).is_err());
        assert!(fit_gain(&[z(1.0, 0.0), z(2.0, 0.0), z(3.0, 0.0)], &[z(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn perfect_channel_fidelity() {
        let f = qubit_fidelity(1.0, 1.0).unwrap();
        assert_relative_eq!(f.six_state, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pure_loss_closed_form() {
        let g: f64 = 0.79;
        let eta = g * g;
        let f = qubit_fidelity(g, 1.0).unwrap();
        assert_relative_eq!(f.six_state, (3.0 + eta + 2.0 * eta.sqrt()) / 6.0, epsilon = 1e-10);
        assert_relative_eq!(f.haar, f.six_state, epsilon = 1e-9);
    }

    #[test]
    fn unphysical_channel_rejected() {
        assert!(qubit_fidelity(0.8, 0.9).is_err());
        assert!(qubit_fidelity(0.0, 1.0).is_err());
    }

    #[test]
    fn fidelity_monotone() {
        let a = qubit_fidelity(0.79, 1.0).unwrap().six_state;
        let b = qubit_fidelity(0.79, 1.2).unwrap().six_state;
        let c = qubit_fidelity(0.9, 1.2).unwrap().six_state;
        assert!(a > b && c > b);
    }
}
