// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Hyperbolic-secant inversion pulses and the drive that produces them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::TWO_PI;
use crate::error::{Error, Result};
use crate::model::{ControlSample, EnsembleModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseSign {
    FromGround,
    FromExcited,
}

/// Intracavity target `a_max sech(beta t)^(1 + i mu)` on
/// `[-duration/2, duration/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SechPulse {
    pub a_max: f64,
    pub beta_sech: f64,
    pub mu: f64,
    pub duration: f64,
    pub sign: PulseSign,
}

impl SechPulse {
    /// `mu = 3.5`, `mu beta = 2 pi 7.5 MHz`, 1 us window, amplitude unset.
    pub fn reference(sign: PulseSign) -> Self {
        let mu = 3.5;
        Self { a_max: 0.0, beta_sech: TWO_PI * 7.5e6 / mu, mu, duration: 1e-6, sign }
    }

    /// Amplitude at time `t` from the pulse centre.
    pub fn amplitude(&self, t: f64) -> Complex64 {
        let sech = 1.0 / (self.beta_sech * t).cosh();
        Complex64::from_polar(self.a_max * sech, self.mu * sech.ln())
    }

    pub fn derivative(&self, t: f64) -> Complex64 {
        let th = (self.beta_sech * t).tanh();
        -Complex64::new(1.0, self.mu) * self.beta_sech * th * self.amplitude(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesizedDrive {
    /// Drive at half-step spacing, `2 n_steps + 1` samples.
    pub beta: Vec<Complex64>,
    pub peak_power: f64,
}

/// Spin reaction `sum_m g_m S_-^(m)` at half-step spacing, from the spin
/// equations driven by the prescribed cavity field.
pub fn presolve_spins(pulse: &SechPulse, model: &EnsembleModel, n_steps: usize) -> Vec<Complex64> {
    let np = 2 * n_steps;
    let h = pulse.duration / np as f64;
    let r2 = std::f64::consts::SQRT_2;
    // cavity quadratures at quarter points of the half-step grid
    let xp: Vec<(f64, f64)> = (0..=2 * np)
        .map(|q| {
            let a = pulse.amplitude(q as f64 * 0.5 * h - 0.5 * pulse.duration);
            (r2 * a.re, r2 * a.im)
        })
        .collect();
    let sz0 = match pulse.sign {
        PulseSign::FromGround => -1.0,
        PulseSign::FromExcited => 1.0,
    };
    let gp = model.params().gamma_perp;
    let gl = model.params().gamma_par;
    let mut out = vec![Complex64::new(0.0, 0.0); np + 1];
    for s in model.subs() {
        let a = r2 * s.g;
        let dm = s.delta;
        let f = |v: [f64; 3], (x, p): (f64, f64)| -> [f64; 3] {
            [
                -gp * v[0] - dm * v[1] - a * v[2] * p,
                -gp * v[1] + dm * v[0] - a * v[2] * x,
                a * (v[0] * p + v[1] * x) - gl * (v[2] + 1.0),
            ]
        };
        let w = 0.5 * s.g * s.n;
        let mut v = [0.0, 0.0, sz0];
        out[0] += Complex64::new(w * v[0], -w * v[1]);
        for i in 0..np {
            let (c0, c1, c2) = (xp[2 * i], xp[2 * i + 1], xp[2 * i + 2]);
            let k1 = f(v, c0);
            let k2 = f(add(v, 0.5 * h, k1), c1);
            let k3 = f(add(v, 0.5 * h, k2), c1);
            let k4 = f(add(v, h, k3), c2);
            for j in 0..3 {
                v[j] += h / 6.0 * (k1[j] + 2.0 * (k2[j] + k3[j]) + k4[j]);
            }
            out[i + 1] += Complex64::new(w * v[0], -w * v[1]);
        }
    }
    out
}

#[inline]
fn add(v: [f64; 3], a: f64, k: [f64; 3]) -> [f64; 3] {
    [v[0] + a * k[0], v[1] + a * k[1], v[2] + a * k[2]]
}

fn drive_from_reaction(pulse: &SechPulse, ctrl: &ControlSample, reaction: &[Complex64], photon_energy: f64) -> Result<SynthesizedDrive> {
    if !(ctrl.kappa > 0.0) {
        return Err(Error::InvalidParameter("drive synthesis needs kappa > 0".into()));
    }
    let np = reaction.len() - 1;
    let h = pulse.duration / np as f64;
    let norm = 1.0 / (2.0 * ctrl.kappa).sqrt();
    let k = Complex64::new(ctrl.kappa, ctrl.delta_cs);
    let i = Complex64::new(0.0, 1.0);
    let mut peak: f64 = 0.0;
    let beta: Vec<Complex64> = reaction
        .iter()
        .enumerate()
        .map(|(q, r)| {
            let t = q as f64 * h - 0.5 * pulse.duration;
            let b = (pulse.derivative(t) + k * pulse.amplitude(t) + i * r) * norm;
            peak = peak.max(photon_energy * b.norm_sqr());
            b
        })
        .collect();
    Ok(SynthesizedDrive { beta, peak_power: peak })
}

/// `beta = [da/dt + (kappa + i delta_cs) a + i sum g S_-] / sqrt(2 kappa)`
/// sampled for a segment of `n_steps` integration steps. Fails when the
/// peak input power exceeds `p_peak` by more than the calibration
/// tolerance.
pub fn synthesize_drive(pulse: &SechPulse, ctrl: &ControlSample, model: &EnsembleModel, n_steps: usize) -> Result<SynthesizedDrive> {
    let reaction = presolve_spins(pulse, model, n_steps);
    let d = drive_from_reaction(pulse, ctrl, &reaction, model.params().photon_energy())?;
    let limit = model.params().p_peak;
    if d.peak_power > limit * (1.0 + CALIBRATION_TOL) {
        let q = d.beta.iter().position(|b| model.params().photon_energy() * b.norm_sqr() == d.peak_power).unwrap_or(0);
        return Err(Error::PowerViolation { power: d.peak_power, limit, time: q as f64 * pulse.duration / (2 * n_steps) as f64 });
    }
    Ok(d)
}

/// Relative tolerance on the calibrated peak power.
pub const CALIBRATION_TOL: f64 = 1e-3;

/// Amplitude `a_max` whose synthesized drive peaks at `p_peak`.
pub fn calibrate_pulse_amplitude(p_peak: f64, shape: &SechPulse, ctrl: &ControlSample, model: &EnsembleModel, n_steps: usize) -> Result<f64> {
    if !(p_peak > 0.0) {
        return Err(Error::InvalidParameter("p_peak must be positive".into()));
    }
    let e = model.params().photon_energy();
    let power = |a: f64| -> Result<f64> {
        let p = SechPulse { a_max: a, ..*shape };
        let r = presolve_spins(&p, model, n_steps);
        Ok(drive_from_reaction(&p, ctrl, &r, e)?.peak_power)
    };
    // empty-cavity steady state as a first guess
    let mut a = (p_peak / e).sqrt() * (2.0 / ctrl.kappa).sqrt();
    let (mut lo, mut plo) = (0.0, 0.0);
    let mut hi = f64::NAN;
    let mut phi = f64::NAN;
    for _ in 0..80 {
        let p = power(a)?;
        if (p / p_peak - 1.0).abs() < 0.5 * CALIBRATION_TOL {
            return Ok(a);
        }
        if p < p_peak {
            lo = a;
            plo = p;
        } else {
            hi = a;
            phi = p;
        }
        let mut next = if p > 0.0 { a * (p_peak / p).sqrt() } else { 2.0 * a };
        if hi.is_finite() && lo > 0.0 {
            // secant in log-log coordinates
            let s = (phi.ln() - plo.ln()) / (hi.ln() - lo.ln());
            if s.is_finite() && s > 0.0 {
                next = (lo.ln() + (p_peak.ln() - plo.ln()) / s).exp();
            }
        }
        if hi.is_finite() && !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if !hi.is_finite() && next <= a {
            next = 2.0 * a;
        }
        a = next;
    }
    Err(Error::Bracket(format!("no amplitude reaches {p_peak:.4e} W (last a_max = {a:.4e})")))
}
