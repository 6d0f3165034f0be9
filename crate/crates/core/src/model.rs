// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Domain types shared by every module: physical parameters, the
//! sub-ensemble model, moment states and control samples.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{hz, HBAR};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative tolerance for the ensemble sum rules.
pub const SUM_RULE_TOL: f64 = 1e-6;

/// Physical parameters. Frequencies are angular (rad/s), rates in 1/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub gens: f64,
    pub w: f64,
    pub delta_hfs: f64,
    pub gamma_perp: f64,
    pub gamma_par: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
    pub omega_c: f64,
    pub delta_cs_target: f64,
    pub delta_cs_parked: f64,
    pub chirp_rate: f64,
    pub p_peak: f64,
    pub n_total: f64,
}

impl PhysicalParams {
    /// NV-ensemble reference parameters.
    pub fn reference() -> Self {
        let omega_c = hz(2.9e9);
        let gbar = hz(12.5);
        let gens = hz(3.5e6);
        Self {
            gens,
            w: hz(2.0e6),
            delta_hfs: hz(2.2e6),
            gamma_perp: 1.0 / 100e-6,
            gamma_par: 0.0,
            kappa_min: kappa_from_q(omega_c, 1e4),
            kappa_max: kappa_from_q(omega_c, 100.0),
            omega_c,
            delta_cs_target: hz(100e6),
            delta_cs_parked: hz(50e6),
            chirp_rate: hz(10e6) / 1e-9,
            p_peak: 100e-6,
            n_total: (gens / gbar).powi(2),
        }
    }

    /// Mean single-spin coupling `gens / sqrt(N)`.
    pub fn gbar(&self) -> f64 {
        self.gens / self.n_total.sqrt()
    }

    /// Photon energy at the nominal cavity frequency.
    pub fn photon_energy(&self) -> f64 {
        HBAR * self.omega_c
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("gens", self.gens),
            ("w", self.w),
            ("delta_hfs", self.delta_hfs),
            ("gamma_perp", self.gamma_perp),
            ("gamma_par", self.gamma_par),
            ("kappa_min", self.kappa_min),
            ("kappa_max", self.kappa_max),
            ("omega_c", self.omega_c),
            ("delta_cs_target", self.delta_cs_target),
            ("delta_cs_parked", self.delta_cs_parked),
            ("chirp_rate", self.chirp_rate),
            ("p_peak", self.p_peak),
            ("n_total", self.n_total),
        ];
        for (name, v) in named {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.kappa_min >= self.kappa_max {
            return Err(Error::InvalidParameter(format!(
                "kappa_min = {} must be below kappa_max = {}",
                self.kappa_min, self.kappa_max
            )));
        }
        Ok(())
    }
}

/// `kappa = omega_c / (2 Q)`.
pub fn kappa_from_q(omega_c: f64, q: f64) -> f64 {
    omega_c / (2.0 * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubEnsemble {
    pub g: f64,
    pub delta: f64,
    pub n: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    subs: Vec<SubEnsemble>,
    params: PhysicalParams,
}

impl EnsembleModel {
    /// Validates the sum rules `sum n = N` and `sum n g^2 = gens^2`.
    pub fn new(subs: Vec<SubEnsemble>, params: PhysicalParams) -> Result<Self> {
        params.validate()?;
        if subs.is_empty() {
            return Err(Error::InvalidModel("no sub-ensembles".into()));
        }
        for (i, s) in subs.iter().enumerate() {
            if !(s.g >= 0.0 && s.n >= 0.0 && s.g.is_finite() && s.n.is_finite() && s.delta.is_finite()) {
                return Err(Error::InvalidModel(format!("sub-ensemble {i} invalid: {s:?}")));
            }
        }
        let n_sum: f64 = subs.iter().map(|s| s.n).sum();
        let g2_sum: f64 = subs.iter().map(|s| s.n * s.g * s.g).sum();
        if !rel_close(n_sum, params.n_total, SUM_RULE_TOL) {
            return Err(Error::InvalidModel(format!(
                "sum of weights {n_sum:.9e} differs from N = {:.9e}",
                params.n_total
            )));
        }
        if !rel_close(g2_sum, params.gens * params.gens, SUM_RULE_TOL) {
            return Err(Error::InvalidModel(format!(
                "sum n g^2 = {g2_sum:.9e} differs from gens^2 = {:.9e}",
                params.gens * params.gens
            )));
        }
        Ok(Self { subs, params })
    }

    pub fn subs(&self) -> &[SubEnsemble] {
        &self.subs
    }

    pub fn params(&self) -> &PhysicalParams {
        &self.params
    }

    /// Number of sub-ensembles M.
    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    /// Moment-vector dimension `2 + 3M`.
    pub fn dim(&self) -> usize {
        state_dim(self.subs.len())
    }

    /// Same sub-ensembles under different physical parameters. The sum
    /// rules are re-checked.
    pub fn with_params(&self, params: PhysicalParams) -> Result<Self> {
        Self::new(self.subs.clone(), params)
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if b == 0.0 {
        a.abs() <= tol
    } else {
        ((a - b) / b).abs() <= tol
    }
}

pub const IDX_X: usize = 0;
pub const IDX_P: usize = 1;

pub fn state_dim(m: usize) -> usize {
    2 + 3 * m
}

/// Slots `(Sx, Sy, Sz)` of sub-ensemble `m` (zero based).
#[inline]
pub fn spin_slots(m: usize) -> [usize; 3] {
    let b = 2 + 3 * m;
    [b, b + 1, b + 2]
}

/// Inverse of [`spin_slots`]: `(sub-ensemble, component)`.
pub fn slot_owner(k: usize) -> Option<(usize, usize)> {
    if k < 2 {
        None
    } else {
        Some(((k - 2) / 3, (k - 2) % 3))
    }
}

/// First and second moments. `cov` is row-major `dim x dim` and absent in
/// means-only runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState<T: Real> {
    pub means: Vec<T>,
    pub cov: Option<Vec<T>>,
    pub time: f64,
}

impl<T: Real> MomentState<T> {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn cov_at(&self, k: usize, l: usize) -> Option<T> {
        let d = self.dim();
        self.cov.as_ref().map(|c| c[k * d + l])
    }

    /// Complex cavity amplitude `(X + iP)/sqrt 2`.
    pub fn cavity_amplitude(&self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Complex64::new(self.means[IDX_X].as_f64() * s, self.means[IDX_P].as_f64() * s)
    }

    /// Cavity 2x2 covariance block.
    pub fn cavity_cov(&self) -> Option<[[f64; 2]; 2]> {
        let d = self.dim();
        self.cov.as_ref().map(|c| {
            [
                [c[0].as_f64(), c[1].as_f64()],
                [c[d].as_f64(), c[d + 1].as_f64()],
            ]
        })
    }

    /// `(2Var X + 2Var P)/2`, equal to 1 for vacuum.
    pub fn var_sum(&self) -> Option<f64> {
        self.cavity_cov().map(|c| 0.5 * (c[0][0] + c[1][1]))
    }

    pub fn drop_cov(mut self) -> Self {
        self.cov = None;
        self
    }

    /// Replaces the cavity by a coherent state: means set from `alpha`,
    /// cavity block to the identity, cavity-spin correlations cleared.
    pub fn replace_cavity(&mut self, alpha: Complex64) {
        let r2 = std::f64::consts::SQRT_2;
        self.means[IDX_X] = T::c(r2 * alpha.re);
        self.means[IDX_P] = T::c(r2 * alpha.im);
        let d = self.dim();
        if let Some(c) = self.cov.as_mut() {
            for i in 0..2 {
                for j in 0..d {
                    c[i * d + j] = T::zero();
                    c[j * d + i] = T::zero();
                }
                c[i * d + i] = T::one();
            }
        }
    }

    pub fn convert<U: Real>(&self) -> MomentState<U> {
        MomentState {
            means: self.means.iter().map(|v| U::c(v.as_f64())).collect(),
            cov: self.cov.as_ref().map(|c| c.iter().map(|v| U::c(v.as_f64())).collect()),
            time: self.time,
        }
    }
}

/// Instantaneous control values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSample {
    pub delta_cs: f64,
    pub kappa: f64,
    pub beta: Complex64,
}

impl ControlSample {
    pub fn idle(delta_cs: f64, kappa: f64) -> Self {
        Self { delta_cs, kappa, beta: Complex64::new(0.0, 0.0) }
    }

    /// Incoming power `hbar omega |beta|^2`.
    pub fn power(&self, params: &PhysicalParams) -> f64 {
        params.photon_energy() * self.beta.norm_sqr()
    }
}

/// Ground-state spins with a coherent cavity.
pub fn init_state<T: Real>(model: &EnsembleModel, cavity_alpha: Complex64, with_cov: bool) -> MomentState<T> {
    let d = model.dim();
    let mut means = vec![T::zero(); d];
    let r2 = std::f64::consts::SQRT_2;
    means[IDX_X] = T::c(r2 * cavity_alpha.re);
    means[IDX_P] = T::c(r2 * cavity_alpha.im);
    for (m, s) in model.subs().iter().enumerate() {
        means[spin_slots(m)[2]] = T::c(-s.n);
    }
    let cov = with_cov.then(|| {
        let mut c = vec![T::zero(); d * d];
        c[0] = T::one();
        c[d + 1] = T::one();
        for (m, s) in model.subs().iter().enumerate() {
            let [x, y, _] = spin_slots(m);
            c[x * d + x] = T::c(2.0 * s.n);
            c[y * d + y] = T::c(2.0 * s.n);
        }
        c
    });
    MomentState { means, cov, time: 0.0 }
}

/// Coupling-weighted collective observables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinObservables {
    pub sx_eff: f64,
    pub sy_eff: f64,
    pub p_exc: f64,
    pub p_exc_eff: f64,
}

pub fn weighted_spin_observables<T: Real>(state: &MomentState<T>, model: &EnsembleModel) -> Result<SpinObservables> {
    let n_total = model.params().n_total;
    if n_total <= 0.0 {
        return Err(Error::InvalidModel("N = 0".into()));
    }
    if state.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: state.dim() });
    }
    let gbar = model.params().gbar();
    let (mut sx, mut sy, mut sz, mut sz_eff) = (0.0, 0.0, 0.0, 0.0);
    for (m, s) in model.subs().iter().enumerate() {
        let [ix, iy, iz] = spin_slots(m);
        let r = s.g / gbar;
        sx += r * state.means[ix].as_f64();
        sy += r * state.means[iy].as_f64();
        sz += state.means[iz].as_f64();
        sz_eff += r * r * state.means[iz].as_f64();
    }
    Ok(SpinObservables {
        sx_eff: sx,
        sy_eff: sy,
        p_exc: (sz + n_total) / (2.0 * n_total),
        p_exc_eff: (sz_eff + n_total) / (2.0 * n_total),
    })
}

/// Projection rows of `Sx_eff` and `Sy_eff` over the moment vector.
pub fn effective_spin_rows(model: &EnsembleModel) -> [Vec<f64>; 2] {
    let d = model.dim();
    let gbar = model.params().gbar();
    let mut rx = vec![0.0; d];
    let mut ry = vec![0.0; d];
    for (m, s) in model.subs().iter().enumerate() {
        let [ix, iy, _] = spin_slots(m);
        rx[ix] = s.g / gbar;
        ry[iy] = s.g / gbar;
    }
    [rx, ry]
}
