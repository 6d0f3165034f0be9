// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Truncated-Fock Lindblad integrator for a cavity and at most three
//! single spins, used to validate the moment equations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate, IntegrateOptions, Mode, Readout};
use crate::error::{Error, Result};
use crate::model::{init_state, spin_slots, ControlSample, EnsembleModel, MomentState, IDX_P, IDX_X};
use crate::schedule::{ControlSchedule, Event};

pub const MAX_SPINS: usize = 3;
/// Allowed drift of the trace from one.
pub const TRACE_TOL: f64 = 1e-6;
/// Allowed population in the top photon level.
pub const TAIL_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Operator stored as `(row, col, value)` triplets.
#[derive(Debug, Clone, Default)]
struct Sparse {
    entries: Vec<(usize, usize, Complex64)>,
}

impl Sparse {
    fn from_fn(d: usize, f: impl Fn(usize) -> Vec<(usize, Complex64)>) -> Self {
        let mut entries = Vec::new();
        for col in 0..d {
            for (row, v) in f(col) {
                if v != ZERO {
                    entries.push((row, col, v));
                }
            }
        }
        Self { entries }
    }

    fn adjoint(&self) -> Self {
        Self { entries: self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect() }
    }

    fn scaled(&self, s: Complex64) -> Self {
        Self { entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect() }
    }

    fn plus(mut self, other: &Sparse) -> Self {
        self.entries.extend_from_slice(&other.entries);
        self
    }

    fn product(&self, other: &Sparse, d: usize) -> Sparse {
        let mut by_row: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); d];
        for &(r, c, v) in &other.entries {
            by_row[r].push((c, v));
        }
        let mut acc = vec![ZERO; d * d];
        for &(r, k, v) in &self.entries {
            for &(c, w) in &by_row[k] {
                acc[r * d + c] += v * w;
            }
        }
        let entries = acc.iter().enumerate().filter(|(_, v)| **v != ZERO).map(|(i, v)| (i / d, i % d, *v)).collect();
        Sparse { entries }
    }

    /// `out += self * rho`.
    fn mul_add(&self, rho: &[Complex64], d: usize, out: &mut [Complex64]) {
        for &(r, k, v) in &self.entries {
            let src = &rho[k * d..k * d + d];
            let dst = &mut out[r * d..r * d + d];
            for (o, s) in dst.iter_mut().zip(src) {
                *o += v * s;
            }
        }
    }

    /// `out += t * self^dagger`.
    fn right_adjoint_add(&self, t: &[Complex64], d: usize, out: &mut [Complex64]) {
        for &(j, k, v) in &self.entries {
            let vc = v.conj();
            for i in 0..d {
                out[i * d + j] += t[i * d + k] * vc;
            }
        }
    }

    /// `Tr(self * m)`.
    fn trace_with(&self, m: &[Complex64], d: usize) -> Complex64 {
        self.entries.iter().map(|&(r, k, v)| v * m[k * d + r]).sum()
    }
}

/// Initial state of one spin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpinInit {
    #[default]
    Ground,
    /// Bloch angles; `theta = 0` is the excited state.
    Bloch { theta: f64, phi: f64 },
}

impl SpinInit {
    /// Amplitudes on `(ground, excited)`.
    fn amplitudes(self) -> [Complex64; 2] {
        match self {
            SpinInit::Ground => [Complex64::new(1.0, 0.0), ZERO],
            SpinInit::Bloch { theta, phi } => {
                [Complex64::new((theta / 2.0).sin(), 0.0), Complex64::from_polar((theta / 2.0).cos(), phi)]
            }
        }
    }
}

/// Density matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    pub dim: usize,
    pub data: Vec<Complex64>,
}

impl DensityMatrix {
    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).sum()
    }

    pub fn max_anti_hermitian(&self) -> f64 {
        let d = self.dim;
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                m = m.max((self.data[i * d + j] - self.data[j * d + i].conj()).norm());
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct OracleTrajectory {
    /// Moments every `sample_stride` steps and at segment ends.
    pub samples: Vec<MomentState<f64>>,
    pub readouts: Vec<Readout>,
    pub final_rho: DensityMatrix,
}

/// Cavity with photon cutoff `n_max` and one spin per sub-ensemble of the
/// model (each must carry weight one).
#[derive(Debug, Clone)]
pub struct SmallSystem {
    model: EnsembleModel,
    n_max: usize,
    dim: usize,
    a: Sparse,
    a_dag: Sparse,
    n_op: Sparse,
    /// Static part of the Hamiltonian: spin splittings and couplings.
    h_static: Sparse,
    /// Spin collapse operators, already scaled.
    spin_jumps: Vec<Sparse>,
    /// `-i/2 sum L^dagger L` of the spin collapse operators.
    spin_damping: Sparse,
    /// Observables in moment-state order.
    observables: Vec<Sparse>,
}

impl SmallSystem {
    pub fn new(model: &EnsembleModel, n_max: usize) -> Result<Self> {
        let k = model.len();
        if k == 0 || k > MAX_SPINS {
            return Err(Error::Oracle(format!("{k} spins, at most {MAX_SPINS} supported")));
        }
        if let Some(s) = model.subs().iter().find(|s| (s.n - 1.0).abs() > 1e-12) {
            return Err(Error::Oracle(format!("sub-ensemble of weight {} is not a single spin", s.n)));
        }
        if n_max < 1 {
            return Err(Error::Oracle("photon cutoff must be at least 1".into()));
        }
        let p = model.params();
        let ns = 1usize << k;
        let d = (n_max + 1) * ns;
        let c = |v: f64| Complex64::new(v, 0.0);
        // basis index n * 2^k + s; bit j of s set means spin j excited
        let a = Sparse::from_fn(d, |col| {
            let (n, s) = (col / ns, col % ns);
            if n == 0 { vec![] } else { vec![((n - 1) * ns + s, c((n as f64).sqrt()))] }
        });
        let a_dag = a.adjoint();
        let n_op = Sparse::from_fn(d, |col| vec![(col, c((col / ns) as f64))]);
        let sigma_minus = |j: usize| Sparse::from_fn(d, move |col| if col & (1 << j) != 0 { vec![(col ^ (1 << j), c(1.0))] } else { vec![] });
        let sigma_z = |j: usize| Sparse::from_fn(d, move |col| vec![(col, c(if col & (1 << j) != 0 { 1.0 } else { -1.0 }))]);

        let mut h_static = Sparse::default();
        let mut spin_jumps = Vec::new();
        let dephase = p.gamma_perp - 0.5 * p.gamma_par;
        if dephase < -1e-12 {
            return Err(Error::Oracle(format!("gamma_perp {} below gamma_par / 2", p.gamma_perp)));
        }
        let mut observables = vec![
            a.clone().plus(&a_dag).scaled(c(std::f64::consts::FRAC_1_SQRT_2)),
            a.scaled(I).plus(&a_dag.scaled(-I)).scaled(c(-std::f64::consts::FRAC_1_SQRT_2)),
        ];
        for (j, sub) in model.subs().iter().enumerate() {
            let sm = sigma_minus(j);
            let sp = sm.adjoint();
            let sz = sigma_z(j);
            h_static = h_static.plus(&sz.scaled(c(0.5 * sub.delta)));
            h_static = h_static.plus(&a.product(&sp, d).scaled(c(sub.g)));
            h_static = h_static.plus(&a_dag.product(&sm, d).scaled(c(sub.g)));
            if p.gamma_par > 0.0 {
                spin_jumps.push(sm.scaled(c(p.gamma_par.sqrt())));
            }
            if dephase > 0.0 {
                spin_jumps.push(sz.scaled(c((0.5 * dephase).sqrt())));
            }
            observables.push(sm.clone().plus(&sp));
            observables.push(sp.scaled(-I).plus(&sm.scaled(I)));
            observables.push(sz);
        }
        let mut spin_damping = Sparse::default();
        for l in &spin_jumps {
            spin_damping = spin_damping.plus(&l.adjoint().product(l, d).scaled(Complex64::new(0.0, -0.5)));
        }
        Ok(Self { model: model.clone(), n_max, dim: d, a, a_dag, n_op, h_static, spin_jumps, spin_damping, observables })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Coherent cavity state times a product spin state.
    pub fn initial_state(&self, alpha: Complex64, spins: &[SpinInit]) -> Result<DensityMatrix> {
        if spins.len() != self.model.len() {
            return Err(Error::DimensionMismatch { expected: self.model.len(), got: spins.len() });
        }
        let cav = self.coherent(alpha);
        let mut spin_vec = vec![Complex64::new(1.0, 0.0)];
        for (j, s) in spins.iter().enumerate() {
            let amp = s.amplitudes();
            let mut next = vec![ZERO; spin_vec.len() * 2];
            for (idx, v) in spin_vec.iter().enumerate() {
                next[idx] += v * amp[0];
                next[idx | (1 << j)] += v * amp[1];
            }
            spin_vec = next;
        }
        let ns = spin_vec.len();
        let psi: Vec<Complex64> = (0..self.dim).map(|i| cav[i / ns] * spin_vec[i % ns]).collect();
        let d = self.dim;
        let mut data = vec![ZERO; d * d];
        for i in 0..d {
            for j in 0..d {
                data[i * d + j] = psi[i] * psi[j].conj();
            }
        }
        let rho = DensityMatrix { dim: d, data };
        self.check(&rho, 0.0)?;
        Ok(rho)
    }

    fn coherent(&self, alpha: Complex64) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.n_max + 1);
        let mut c = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..=self.n_max {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            out.push(c);
        }
        out
    }

    fn check(&self, rho: &DensityMatrix, t: f64) -> Result<()> {
        let tr = rho.trace();
        if !tr.is_finite() || (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::Oracle(format!("trace {tr} at t = {t:e}")));
        }
        let ns = 1usize << self.model.len();
        let d = self.dim;
        let tail: f64 = (self.n_max * ns..d).map(|i| rho.data[i * d + i].re).sum();
        if tail > TAIL_TOL {
            return Err(Error::Oracle(format!("population {tail:e} at the photon cutoff, t = {t:e}")));
        }
        Ok(())
    }

    /// Means and symmetrized covariances `<{dA, dB}>` in moment-state layout.
    pub fn moments(&self, rho: &DensityMatrix, time: f64) -> MomentState<f64> {
        let d = self.dim;
        let nobs = self.observables.len();
        let means: Vec<f64> = self.observables.iter().map(|o| o.trace_with(&rho.data, d).re).collect();
        let products: Vec<Vec<Complex64>> = self
            .observables
            .iter()
            .map(|o| {
                let mut t = vec![ZERO; d * d];
                o.mul_add(&rho.data, d, &mut t);
                t
            })
            .collect();
        let mut cov = vec![0.0; nobs * nobs];
        for i in 0..nobs {
            for j in i..nobs {
                // <A B + B A> = 2 Re Tr(A B rho) for Hermitian A, B
                let v = 2.0 * self.observables[i].trace_with(&products[j], d).re - 2.0 * means[i] * means[j];
                cov[i * nobs + j] = v;
                cov[j * nobs + i] = v;
            }
        }
        debug_assert_eq!(IDX_X, 0);
        debug_assert_eq!(IDX_P, 1);
        debug_assert_eq!(spin_slots(0)[0], 2);
        MomentState { means, cov: Some(cov), time }
    }

    fn rhs(&self, rho: &[Complex64], ctrl: &ControlSample, out: &mut [Complex64], scratch: &mut [Complex64]) {
        let d = self.dim;
        let c = |v: f64| Complex64::new(v, 0.0);
        let root = (2.0 * ctrl.kappa).sqrt();
        // K = H - i/2 sum L^dag L; first scratch = -i K rho
        scratch.iter_mut().for_each(|v| *v = ZERO);
        self.h_static.scaled(-I).mul_add(rho, d, scratch);
        self.spin_damping.scaled(-I).mul_add(rho, d, scratch);
        let k_var = self
            .n_op
            .scaled(c(ctrl.delta_cs) * -I - c(ctrl.kappa))
            .plus(&self.a_dag.scaled(c(root) * ctrl.beta))
            .plus(&self.a.scaled(-c(root) * ctrl.beta.conj()));
        k_var.mul_add(rho, d, scratch);
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = scratch[i * d + j] + scratch[j * d + i].conj();
            }
        }
        // jump terms L rho L^dag
        let cav_jump = self.a.scaled(c(root));
        for l in self.spin_jumps.iter().chain(std::iter::once(&cav_jump)) {
            scratch.iter_mut().for_each(|v| *v = ZERO);
            l.mul_add(rho, d, scratch);
            l.right_adjoint_add(scratch, d, out);
        }
    }

    /// Integrates `rho` through `schedule` with RK4 on the schedule's own
    /// step grid and half-step controls. Load and readout events act on the
    /// cavity as in the moment integrator.
    pub fn evolve(&self, rho: &mut DensityMatrix, schedule: &ControlSchedule, sample_stride: usize) -> Result<OracleTrajectory> {
        let d = self.dim;
        let n2 = d * d;
        let stride = sample_stride.max(1);
        let mut samples = Vec::new();
        let mut readouts = Vec::new();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![ZERO; n2], vec![ZERO; n2], vec![ZERO; n2], vec![ZERO; n2]);
        let mut tmp = vec![ZERO; n2];
        let mut scratch = vec![ZERO; n2];
        let mut t = schedule.segments.first().map_or(0.0, |s| s.t0);
        samples.push(self.moments(rho, t));
        for seg in &schedule.segments {
            self.apply_events(&seg.events, rho, seg.t0, &mut readouts)?;
            let h = seg.step();
            for s in 0..seg.n_steps {
                let (c0, cm, c1) = (seg.control_at(2 * s), seg.control_at(2 * s + 1), seg.control_at(2 * s + 2));
                self.rhs(&rho.data, &c0, &mut k1, &mut scratch);
                axpy(&rho.data, &k1, 0.5 * h, &mut tmp);
                self.rhs(&tmp, &cm, &mut k2, &mut scratch);
                axpy(&rho.data, &k2, 0.5 * h, &mut tmp);
                self.rhs(&tmp, &cm, &mut k3, &mut scratch);
                axpy(&rho.data, &k3, h, &mut tmp);
                self.rhs(&tmp, &c1, &mut k4, &mut scratch);
                for i in 0..n2 {
                    rho.data[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0);
                }
                t = seg.t0 + (s + 1) as f64 * h;
                self.check(rho, t)?;
                if (s + 1) % stride == 0 || s + 1 == seg.n_steps {
                    samples.push(self.moments(rho, t));
                }
            }
        }
        self.apply_events(&schedule.final_events, rho, t, &mut readouts)?;
        Ok(OracleTrajectory { samples, readouts, final_rho: rho.clone() })
    }

    fn apply_events(&self, events: &[Event], rho: &mut DensityMatrix, t: f64, readouts: &mut Vec<Readout>) -> Result<()> {
        for e in events {
            match e {
                Event::Load(alpha) => self.load(rho, *alpha),
                Event::Readout(slot) => {
                    let m = self.moments(rho, t);
                    let cov = m.cavity_cov().unwrap_or([[f64::NAN; 2]; 2]);
                    readouts.push(Readout { slot: *slot, t, alpha: m.cavity_amplitude(), cov: Some(cov) });
                }
            }
        }
        self.check(rho, t)
    }

    /// Replaces the cavity by a coherent state, keeping the reduced spin state.
    fn load(&self, rho: &mut DensityMatrix, alpha: Complex64) {
        let ns = 1usize << self.model.len();
        let d = self.dim;
        let mut spin = vec![ZERO; ns * ns];
        for n in 0..=self.n_max {
            for s in 0..ns {
                for r in 0..ns {
                    spin[s * ns + r] += rho.data[(n * ns + s) * d + n * ns + r];
                }
            }
        }
        let cav = self.coherent(alpha);
        for i in 0..d {
            for j in 0..d {
                rho.data[i * d + j] = cav[i / ns] * cav[j / ns].conj() * spin[(i % ns) * ns + j % ns];
            }
        }
    }
}

fn axpy(x: &[Complex64], k: &[Complex64], h: f64, out: &mut [Complex64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(k) {
        *o = a + b * h;
    }
}

/// Builds the small system, prepares the state and integrates it.
pub fn lindblad_evolve(
    model: &EnsembleModel,
    schedule: &ControlSchedule,
    alpha: Complex64,
    spins: &[SpinInit],
    n_max: usize,
    sample_stride: usize,
) -> Result<OracleTrajectory> {
    let sys = SmallSystem::new(model, n_max)?;
    let mut rho = sys.initial_state(alpha, spins)?;
    sys.evolve(&mut rho, schedule, sample_stride)
}

/// Lindblad and moment trajectories sampled at common chunk boundaries.
#[derive(Debug, Clone)]
pub struct OracleComparison {
    pub oracle: Vec<MomentState<f64>>,
    pub moments: Vec<MomentState<f64>>,
    /// Worst first-moment deviation, each component relative to its range.
    pub mean_deviation: f64,
    /// Worst cavity covariance deviation relative to the largest entry.
    pub cavity_cov_deviation: f64,
}

/// Runs the oracle and the full moment equations from a coherent cavity and
/// ground-state spins, comparing them every `chunk_steps` steps.
pub fn compare_with_moments(model: &EnsembleModel, schedule: &ControlSchedule, alpha: Complex64, n_max: usize, chunk_steps: usize) -> Result<OracleComparison> {
    let sys = SmallSystem::new(model, n_max)?;
    let mut rho = sys.initial_state(alpha, &vec![SpinInit::Ground; model.len()])?;
    let mut state = init_state::<f64>(model, alpha, true);
    let t0 = schedule.t_start();
    state.time = t0;
    let mut oracle = vec![sys.moments(&rho, t0)];
    let mut moments = vec![state.clone()];
    let opts = IntegrateOptions { mode: Mode::Full, include_cov_coupling: true, enforce_step_limit: false, ..IntegrateOptions::default() };
    for piece in schedule.chunked(chunk_steps) {
        let tr = sys.evolve(&mut rho, &piece, usize::MAX)?;
        oracle.push(tr.samples.last().cloned().expect("at least the initial sample"));
        state = integrate(&state, &piece, model, &opts)?.final_state;
        moments.push(state.clone());
    }
    let comps: Vec<usize> = (0..model.dim()).collect();
    let mean_deviation = max_relative_deviation(&oracle, &moments, &comps)?;
    let block = |s: &MomentState<f64>| s.cavity_cov().map(|c| [c[0][0], c[0][1], c[1][1]]);
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for (a, b) in oracle.iter().zip(&moments) {
        let (ca, cb) = (block(a).ok_or_else(|| Error::MissingCovariance("oracle".into()))?, block(b).ok_or_else(|| Error::MissingCovariance("moments".into()))?);
        for k in 0..3 {
            scale = scale.max(ca[k].abs()).max(cb[k].abs());
            worst = worst.max((ca[k] - cb[k]).abs());
        }
    }
    Ok(OracleComparison { oracle, moments, mean_deviation, cavity_cov_deviation: worst / scale })
}

/// Largest deviation between two moment trajectories over the listed
/// components, relative to the largest magnitude each component reaches.
pub fn max_relative_deviation(a: &[MomentState<f64>], b: &[MomentState<f64>], components: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let mut worst: f64 = 0.0;
    for &c in components {
        let scale = a.iter().chain(b).map(|s| s.means[c].abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x.means[c] - y.means[c]).abs() / scale);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PhysicalParams, SubEnsemble};

    fn hz(f: f64) -> f64 {
        2.0 * std::f64::consts::PI * f
    }

    fn single_spins(spins: &[(f64, f64)], gamma_perp: f64, gamma_par: f64) -> EnsembleModel {
        let subs: Vec<SubEnsemble> = spins.iter().map(|&(g, delta)| SubEnsemble { g, delta, n: 1.0 }).collect();
        let gens = subs.iter().map(|s| s.g * s.g).sum::<f64>().sqrt();
        let params = PhysicalParams { gens, n_total: subs.len() as f64, gamma_perp, gamma_par, ..PhysicalParams::reference() };
        EnsembleModel::new(subs, params).unwrap()
    }

    #[test]
    fn vacuum_is_stationary() {
        let m = single_spins(&[(hz(1e6), hz(0.2e6))], 1e5, 5e4);
        let mut sched = ControlSchedule::default();
        sched.push(1, "idle", 0.5e-6, 1e-9, (0.0, 0.0), (1e6, 1e6));
        let tr = lindblad_evolve(&m, &sched, ZERO, &[SpinInit::Ground], 3, 100).unwrap();
        let s = tr.samples.last().unwrap();
        assert!(s.means.iter().enumerate().all(|(i, v)| if i == 4 { (v + 1.0).abs() < 1e-12 } else { v.abs() < 1e-12 }));
        let cov = s.cov.as_ref().unwrap();
        assert!((cov[0] - 1.0).abs() < 1e-12);
        assert!(tr.final_rho.max_anti_hermitian() < 1e-12);
    }

    #[test]
    fn single_spin_free_decay() {
        let (gp, delta) = (2e6, hz(3e6));
        let m = single_spins(&[(0.0, delta)], gp, 0.0);
        let t_end = 1e-6;
        let mut sched = ControlSchedule::default();
        sched.push(1, "fid", t_end, 1e-9, (0.0, 0.0), (0.0, 0.0));
        let init = SpinInit::Bloch { theta: std::f64::consts::FRAC_PI_2, phi: 0.0 };
        let tr = lindblad_evolve(&m, &sched, ZERO, &[init], 1, 50).unwrap();
        for s in &tr.samples {
            // <sigma_-> = (Sx - i Sy) / 2
            let got = Complex64::new(s.means[2], -s.means[3]) / 2.0;
            let want = Complex64::new(0.5, 0.0) * (Complex64::new(-gp, -delta) * s.time).exp();
            assert!((got - want).norm() < 1e-8, "t = {}: {got} vs {want}", s.time);
        }
    }

    #[test]
    fn load_replaces_cavity_only() {
        let m = single_spins(&[(hz(1e6), 0.0)], 0.0, 0.0);
        let sys = SmallSystem::new(&m, 6).unwrap();
        let init = SpinInit::Bloch { theta: 1.0, phi: 0.3 };
        let mut rho = sys.initial_state(Complex64::new(0.5, 0.0), &[init]).unwrap();
        let before = sys.moments(&rho, 0.0);
        sys.load(&mut rho, Complex64::new(0.0, 0.2));
        let after = sys.moments(&rho, 0.0);
        assert!((after.cavity_amplitude() - Complex64::new(0.0, 0.2)).norm() < 1e-7, "{}", after.cavity_amplitude());
        for i in 2..5 {
            assert!((after.means[i] - before.means[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_ensembles() {
        let subs = vec![SubEnsemble { g: 1.0, delta: 0.0, n: 4.0 }];
        let params = PhysicalParams { gens: 2.0, n_total: 4.0, ..PhysicalParams::reference() };
        let m = EnsembleModel::new(subs, params).unwrap();
        assert!(SmallSystem::new(&m, 4).is_err());
    }

    #[test]
    fn cutoff_violation_detected() {
        let m = single_spins(&[(hz(1e6), 0.0)], 0.0, 0.0);
        let sys = SmallSystem::new(&m, 3).unwrap();
        assert!(sys.initial_state(Complex64::new(1.5, 0.0), &[SpinInit::Ground]).is_err());
    }
}
