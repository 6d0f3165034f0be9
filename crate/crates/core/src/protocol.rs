// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! The 21-part storage protocol: schedule construction, swap-time and
//! effective-cavity-time calibration, single- and multi-mode runs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    calibrate_pulse_amplitude, integrate, synthesize_drive, IntegrateOptions, Mode, PulseSign, SechPulse, SynthesizedDrive, Trajectory,
};
use crate::error::{Error, Result};
use crate::model::{init_state, kappa_from_q, ControlSample, EnsembleModel, PhysicalParams};
use crate::schedule::{solve_timing, ControlSchedule, Event, ProtocolTiming, Segment, TimingConstants};

/// Step sizes per kind of protocol part, seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Parts with a moving cavity detuning.
    pub chirp: f64,
    /// Inversion pulses.
    pub pulse: f64,
    /// Resonant parts without drive (swaps, relaxation).
    pub resonant: f64,
    /// Parked parts and kappa ramps.
    pub parked: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { chirp: 0.05e-9, pulse: 0.05e-9, resonant: 0.25e-9, parked: 0.5e-9 }
    }
}

impl StepConfig {
    pub fn scaled(&self, f: f64) -> Self {
        Self { chirp: self.chirp * f, pulse: self.pulse * f, resonant: self.resonant * f, parked: self.parked * f }
    }
}

/// How the two pulse amplitudes are fixed by the power limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PulseCalibration {
    /// Each pulse reaches the peak power on its own.
    #[default]
    Separate,
    /// One amplitude for both pulses; the stronger drive reaches the peak.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub t_mem: f64,
    pub t_delta_p: f64,
    pub t_delta_t: f64,
    pub t_kappa: f64,
    pub t_pi: f64,
    pub t_res: f64,
    pub mu: f64,
    /// `mu * beta_sech`, rad/s.
    pub sech_bandwidth: f64,
    pub calibration: PulseCalibration,
    pub steps: StepConfig,
    /// Extension of part 18 while locating the spin revival.
    pub revival_probe_extension: f64,
    /// Largest `|<a_c>|` tolerated while kappa is tuned.
    pub kappa_tuning_limit: f64,
    /// Golden-section tolerance for the swap time.
    pub tswap_tol: f64,
    /// Convergence tolerance of the effective cavity time.
    pub t_cav_tol: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        let c = TimingConstants::reference();
        Self {
            t_mem: 10e-6,
            t_delta_p: c.t_delta_p,
            t_delta_t: c.t_delta_t,
            t_kappa: c.t_kappa,
            t_pi: c.t_pi,
            t_res: c.t_res,
            mu: 3.5,
            sech_bandwidth: crate::constants::hz(7.5e6),
            calibration: PulseCalibration::Separate,
            steps: StepConfig::default(),
            revival_probe_extension: 0.5e-6,
            kappa_tuning_limit: 10.0,
            tswap_tol: 0.1e-9,
            t_cav_tol: 0.1e-9,
        }
    }
}

impl ProtocolConfig {
    pub fn constants(&self) -> TimingConstants<f64> {
        TimingConstants { t_delta_p: self.t_delta_p, t_delta_t: self.t_delta_t, t_kappa: self.t_kappa, t_pi: self.t_pi, t_res: self.t_res }
    }

    pub fn pulse_shape(&self, sign: PulseSign) -> SechPulse {
        SechPulse { a_max: 0.0, beta_sech: self.sech_bandwidth / self.mu, mu: self.mu, duration: self.t_pi, sign }
    }

    pub fn pulse_steps(&self) -> usize {
        crate::schedule::steps_for(self.t_pi, self.steps.pulse)
    }
}

/// Controls of one protocol part apart from its duration.
#[derive(Debug, Clone, Copy)]
struct PartSpec {
    delta: (f64, f64),
    kappa: (f64, f64),
    dt: f64,
}

fn part_specs(p: &PhysicalParams, st: &StepConfig) -> [PartSpec; 21] {
    let (tg, pk) = (p.delta_cs_target, p.delta_cs_parked);
    let (kn, kx) = (p.kappa_min, p.kappa_max);
    let ps = |d: (f64, f64), k: (f64, f64), dt: f64| PartSpec { delta: d, kappa: k, dt };
    [
        ps((tg, 0.0), (kn, kn), st.chirp),
        ps((0.0, 0.0), (kn, kn), st.resonant),
        ps((0.0, pk), (kn, kn), st.chirp),
        ps((pk, pk), (kn, kn), st.parked),
        ps((pk, pk), (kn, kx), st.parked),
        ps((pk, 0.0), (kx, kx), st.chirp),
        ps((0.0, 0.0), (kx, kx), st.pulse),
        ps((0.0, 0.0), (kx, kx), st.resonant),
        ps((0.0, pk), (kx, kx), st.chirp),
        ps((pk, pk), (kx, kn), st.parked),
        ps((pk, pk), (kn, kn), st.parked),
        ps((pk, pk), (kn, kx), st.parked),
        ps((pk, 0.0), (kx, kx), st.chirp),
        ps((0.0, 0.0), (kx, kx), st.pulse),
        ps((0.0, 0.0), (kx, kx), st.resonant),
        ps((0.0, pk), (kx, kx), st.chirp),
        ps((pk, pk), (kx, kn), st.parked),
        ps((pk, pk), (kn, kn), st.parked),
        ps((pk, 0.0), (kn, kn), st.chirp),
        ps((0.0, 0.0), (kn, kn), st.resonant),
        ps((0.0, tg), (kn, kn), st.chirp),
    ]
}

/// Piecewise-linear controls for the 21 parts; drives go into parts 7 and
/// 14. The cavity is read out at the end.
pub fn build_schedule(params: &PhysicalParams, timing: &ProtocolTiming<f64>, drives: [&SynthesizedDrive; 2], steps: &StepConfig) -> Result<ControlSchedule> {
    let mut s = build_schedule_parts(params, &timing.t, steps);
    for (part, d) in [(7usize, drives[0]), (14, drives[1])] {
        let seg = &mut s.segments[part - 1];
        if d.beta.len() != 2 * seg.n_steps + 1 {
            return Err(Error::InvalidParameter(format!(
                "drive for part {part} has {} samples, segment needs {}",
                d.beta.len(),
                2 * seg.n_steps + 1
            )));
        }
        seg.drive = Some(d.beta.clone());
    }
    s.final_events.push(Event::Readout(0));
    s.check_chirp_rate(params.chirp_rate)?;
    Ok(s)
}

/// Schedule for the given part durations without drives.
pub fn build_schedule_parts(params: &PhysicalParams, durations: &[f64], steps: &StepConfig) -> ControlSchedule {
    let specs = part_specs(params, steps);
    let mut s = ControlSchedule::default();
    for (j, dur) in durations.iter().enumerate() {
        let sp = specs[j];
        s.push(j + 1, format!("part{}", j + 1), *dur, sp.dt, sp.delta, sp.kappa);
    }
    s
}

/// Both pulses with calibrated amplitudes, and the drives for them.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPulses {
    pub pulses: [SechPulse; 2],
    pub drives: [SynthesizedDrive; 2],
}

/// Calibrates and synthesizes both inversion drives (resonant cavity at
/// `kappa_max`).
pub fn calibrate_pulses(model: &EnsembleModel, cfg: &ProtocolConfig, a_max: Option<[f64; 2]>) -> Result<CalibratedPulses> {
    let p = model.params();
    let ctrl = ControlSample::idle(0.0, p.kappa_max);
    let n = cfg.pulse_steps();
    let shapes = [cfg.pulse_shape(PulseSign::FromGround), cfg.pulse_shape(PulseSign::FromExcited)];
    let amps = match a_max {
        Some(a) => a,
        None => {
            let a0 = calibrate_pulse_amplitude(p.p_peak, &shapes[0], &ctrl, model, n)?;
            let a1 = calibrate_pulse_amplitude(p.p_peak, &shapes[1], &ctrl, model, n)?;
            match cfg.calibration {
                PulseCalibration::Separate => [a0, a1],
                PulseCalibration::Shared => [a0.min(a1); 2],
            }
        }
    };
    let pulses = [SechPulse { a_max: amps[0], ..shapes[0] }, SechPulse { a_max: amps[1], ..shapes[1] }];
    let drives = [synthesize_drive(&pulses[0], &ctrl, model, n)?, synthesize_drive(&pulses[1], &ctrl, model, n)?];
    Ok(CalibratedPulses { pulses, drives })
}

/// `|<a_c>|` left in the cavity after parts 1-3 for unit input.
pub fn swap_residual(model: &EnsembleModel, cfg: &ProtocolConfig, t_swap: f64) -> Result<f64> {
    let p = model.params();
    let durations = [cfg.t_delta_t, t_swap, cfg.t_delta_p];
    let sched = build_schedule_parts(p, &durations, &cfg.steps);
    let s0 = init_state::<f64>(model, Complex64::new(1.0, 0.0), false);
    let tr = integrate(&s0, &sched, model, &IntegrateOptions::default())?;
    Ok(tr.final_amplitude().norm())
}

/// Golden-section minimization of the swap residual over
/// `[0.5, 1.5] pi/(2 gens)`.
pub fn optimize_tswap(model: &EnsembleModel, cfg: &ProtocolConfig) -> Result<f64> {
    let ideal = std::f64::consts::PI / (2.0 * model.params().gens);
    let (lo, hi) = (0.5 * ideal, 1.5 * ideal);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = swap_residual(model, cfg, c)?;
    let mut fd = swap_residual(model, cfg, d)?;
    while b - a > cfg.tswap_tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = swap_residual(model, cfg, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = swap_residual(model, cfg, d)?;
        }
    }
    let t = 0.5 * (a + b);
    if t - lo < 2.0 * cfg.tswap_tol || hi - t < 2.0 * cfg.tswap_tol {
        return Err(Error::BracketEdge(format!("swap residual minimal at {t:.4e} s, bracket [{lo:.4e}, {hi:.4e}]")));
    }
    Ok(t)
}

/// Result of the revival probe used for the effective cavity time.
#[derive(Debug, Clone, PartialEq)]
pub struct RevivalProbe {
    pub t_revival: f64,
    pub t_echo: f64,
    pub t_cav_eff: f64,
    /// `(t, |S_perp_eff| difference)` over the probe window.
    pub signal: Vec<(f64, f64)>,
}

/// Locates the spin revival for a trial `t_cav_eff` and returns the
/// implied fixed-point value `t_revival - T_echo`.
pub fn probe_revival(model: &EnsembleModel, cfg: &ProtocolConfig, pulses: &CalibratedPulses, t_swap: f64, t_cav_guess: f64) -> Result<RevivalProbe> {
    let p = model.params();
    let timing = solve_timing(cfg.t_mem, t_swap, t_cav_guess, &cfg.constants())?;
    let mut durations = timing.t[..18].to_vec();
    durations[17] += cfg.revival_probe_extension;
    let mut sched = build_schedule_parts(p, &durations, &cfg.steps);
    sched.segments[6].drive = Some(pulses.drives[0].beta.clone());
    sched.segments[13].drive = Some(pulses.drives[1].beta.clone());
    let window = &sched.segments[17];
    let (w0, w1) = (window.t0, window.t1());
    let opts = IntegrateOptions { sample_stride: 1, ..IntegrateOptions::default() };
    let run = |alpha: f64| -> Result<Trajectory<f64>> {
        let s0 = init_state::<f64>(model, Complex64::new(alpha, 0.0), false);
        integrate(&s0, &sched, model, &opts)
    };
    let (on, off) = (run(1.0)?, run(0.0)?);
    let signal: Vec<(f64, f64)> = on
        .samples
        .iter()
        .zip(&off.samples)
        .filter(|(s, _)| s.t >= w0 && s.t <= w1)
        .map(|(a, b)| (a.t, (a.sx_eff - b.sx_eff).hypot(a.sy_eff - b.sy_eff)))
        .collect();
    let t_revival = peak_time(&signal).ok_or(Error::NoRevival { start: w0, end: w1 })?;
    Ok(RevivalProbe { t_revival, t_echo: timing.t_echo, t_cav_eff: t_revival - timing.t_echo, signal })
}

/// Interior maximum with parabolic refinement.
pub fn peak_time(signal: &[(f64, f64)]) -> Option<f64> {
    let (i, _) = signal.iter().enumerate().max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))?;
    if i == 0 || i + 1 >= signal.len() {
        return None;
    }
    let (t0, y0) = signal[i - 1];
    let (t1, y1) = signal[i];
    let (t2, y2) = signal[i + 1];
    let mean = signal.iter().map(|s| s.1).sum::<f64>() / signal.len() as f64;
    if !(y1 > 2.0 * mean) {
        return None;
    }
    let den = y0 - 2.0 * y1 + y2;
    if den >= 0.0 || (t2 - t1 - (t1 - t0)).abs() > 1e-6 * (t2 - t0) {
        return Some(t1);
    }
    let off = 0.5 * (y0 - y2) / den;
    Some(t1 + off * (t1 - t0))
}

/// Fixed point of `t -> probe_revival(t).t_cav_eff`, solved by secant
/// iteration on the residual to within `tol`.
pub fn fix_t_cav_eff(model: &EnsembleModel, cfg: &ProtocolConfig, pulses: &CalibratedPulses, t_swap: f64, guess: f64) -> Result<f64> {
    const MAX_ITER: usize = 8;
    let tol = cfg.t_cav_tol;
    let f = |t: f64| probe_revival(model, cfg, pulses, t_swap, t).map(|p| p.t_cav_eff);
    let (mut x0, mut y0) = (guess, f(guess)?);
    if (y0 - x0).abs() < tol {
        return Ok(y0);
    }
    let (mut x1, mut y1) = (y0, f(y0)?);
    for _ in 0..MAX_ITER {
        if (y1 - x1).abs() < tol {
            return Ok(y1);
        }
        let (r0, r1) = (y0 - x0, y1 - x1);
        let x2 = if r1 != r0 { x1 - r1 * (x1 - x0) / (r1 - r0) } else { y1 };
        (x0, y0) = (x1, y1);
        x1 = x2;
        y1 = f(x1)?;
    }
    Err(Error::NoRevival { start: x1, end: y1 })
}

/// Everything needed to run the single-mode protocol repeatedly.
#[derive(Debug, Clone)]
pub struct PreparedProtocol {
    pub model: EnsembleModel,
    pub config: ProtocolConfig,
    pub t_swap: f64,
    pub pulses: CalibratedPulses,
    pub timing: ProtocolTiming<f64>,
    pub schedule: ControlSchedule,
}

/// Values that may be supplied from a cache instead of recomputed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_swap: Option<f64>,
    pub a_max: Option<[f64; 2]>,
    pub t_cav_eff: Option<f64>,
}

impl PreparedProtocol {
    pub fn prepare(model: &EnsembleModel, cfg: &ProtocolConfig, known: Calibration) -> Result<Self> {
        let t_swap = match known.t_swap {
            Some(t) => t,
            None => optimize_tswap(model, cfg)?,
        };
        let pulses = calibrate_pulses(model, cfg, known.a_max)?;
        let t_cav_eff = match known.t_cav_eff {
            Some(t) => t,
            None => fix_t_cav_eff(model, cfg, &pulses, t_swap, cfg.t_delta_t + 0.5 * t_swap)?,
        };
        Self::assemble(model, cfg, t_swap, pulses, t_cav_eff)
    }

    pub fn assemble(model: &EnsembleModel, cfg: &ProtocolConfig, t_swap: f64, pulses: CalibratedPulses, t_cav_eff: f64) -> Result<Self> {
        let timing = solve_timing(cfg.t_mem, t_swap, t_cav_eff, &cfg.constants())?;
        let schedule = build_schedule(model.params(), &timing, [&pulses.drives[0], &pulses.drives[1]], &cfg.steps)?;
        Ok(Self { model: model.clone(), config: cfg.clone(), t_swap, pulses, timing, schedule })
    }

    pub fn calibration(&self) -> Calibration {
        Calibration {
            t_swap: Some(self.t_swap),
            a_max: Some([self.pulses.pulses[0].a_max, self.pulses.pulses[1].a_max]),
            t_cav_eff: Some(self.timing.t_cav_eff),
        }
    }

    /// Same calibration at another memory time.
    pub fn with_t_mem(&self, t_mem: f64) -> Result<Self> {
        let cfg = ProtocolConfig { t_mem, ..self.config.clone() };
        Self::assemble(&self.model, &cfg, self.t_swap, self.pulses.clone(), self.timing.t_cav_eff)
    }

    /// Same calibration with different step sizes (drives re-synthesized).
    pub fn with_steps(&self, steps: StepConfig) -> Result<Self> {
        let cfg = ProtocolConfig { steps, ..self.config.clone() };
        let a = [self.pulses.pulses[0].a_max, self.pulses.pulses[1].a_max];
        let pulses = calibrate_pulses(&self.model, &cfg, Some(a))?;
        Self::assemble(&self.model, &cfg, self.t_swap, pulses, self.timing.t_cav_eff)
    }

    pub fn run(&self, alpha_in: Complex64, opts: &IntegrateOptions) -> Result<MemoryRun> {
        run_memory_on(&self.model, &self.schedule, alpha_in, opts, self.config.kappa_tuning_limit)
    }
}

/// Outcome of one storage and retrieval.
#[derive(Debug, Clone)]
pub struct MemoryRun {
    pub trajectory: Trajectory<f64>,
    pub alpha_out: Complex64,
    pub cov_out: Option<[[f64; 2]; 2]>,
}

impl MemoryRun {
    pub fn var_sum(&self) -> Option<f64> {
        self.cov_out.map(|c| 0.5 * (c[0][0] + c[1][1]))
    }
}

fn run_memory_on(model: &EnsembleModel, schedule: &ControlSchedule, alpha_in: Complex64, opts: &IntegrateOptions, kappa_limit: f64) -> Result<MemoryRun> {
    let s0 = init_state::<f64>(model, alpha_in, opts.mode == Mode::Full);
    let trajectory = integrate(&s0, schedule, model, opts)?;
    check_kappa_tuning(schedule, &trajectory, kappa_limit)?;
    let ro = trajectory.readout(0).cloned();
    let alpha_out = ro.as_ref().map_or(trajectory.final_amplitude(), |r| r.alpha);
    let cov_out = ro.and_then(|r| r.cov).or(trajectory.final_cavity_cov);
    Ok(MemoryRun { trajectory, alpha_out, cov_out })
}

/// Stores `alpha_in`, runs the full protocol and reads out at `T_mem`.
pub fn run_memory(alpha_in: Complex64, t_mem: f64, model: &EnsembleModel, cfg: &ProtocolConfig, known: Calibration, opts: &IntegrateOptions) -> Result<MemoryRun> {
    let cfg = ProtocolConfig { t_mem, ..cfg.clone() };
    PreparedProtocol::prepare(model, &cfg, known)?.run(alpha_in, opts)
}

/// Rejects runs in which kappa was ramped while the cavity field exceeded
/// `limit`. Only recorded samples are inspected.
pub fn check_kappa_tuning(schedule: &ControlSchedule, tr: &Trajectory<f64>, limit: f64) -> Result<()> {
    for seg in schedule.segments.iter().filter(|s| s.kappa.0 != s.kappa.1) {
        for s in tr.samples.iter().filter(|s| s.t >= seg.t0 && s.t <= seg.t1()) {
            let amp = (s.xc * s.xc + s.pc * s.pc).sqrt() / std::f64::consts::SQRT_2;
            if amp > limit {
                return Err(Error::KappaTuning { part: seg.part, amplitude: amp, limit });
            }
        }
    }
    Ok(())
}

/// Parameters of the multi-mode sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultimodeConfig {
    /// Separation of successive input slots.
    pub spacing: f64,
    /// Cavity quality factor while waiting between slots.
    pub q_between: f64,
}

impl Default for MultimodeConfig {
    fn default() -> Self {
        Self { spacing: 0.29e-6, q_between: 1e3 }
    }
}

/// Duration of a chirp between the parked and target detunings.
fn park_target_chirp(p: &PhysicalParams) -> f64 {
    (p.delta_cs_target - p.delta_cs_parked).abs() / p.chirp_rate
}

/// Wait between two slots at the parked detuning.
pub fn multimode_wait(p: &PhysicalParams, cfg: &ProtocolConfig, mm: &MultimodeConfig, t_swap: f64) -> f64 {
    mm.spacing - (cfg.t_delta_t + t_swap + cfg.t_delta_p + park_target_chirp(p))
}

/// Multi-mode schedule: sequential storage of `k` slots, the refocusing
/// pulse pair centred between the first storage and the last retrieval,
/// then first-in first-out retrieval at `t_k + T_mem`.
pub fn build_multimode_schedule(
    p: &PhysicalParams,
    cfg: &ProtocolConfig,
    mm: &MultimodeConfig,
    prepared: &PreparedProtocol,
    alphas: &[Complex64],
) -> Result<ControlSchedule> {
    let k = alphas.len();
    if k == 0 {
        return Err(Error::InvalidParameter("no input slots".into()));
    }
    let st = &cfg.steps;
    let t_swap = prepared.t_swap;
    let t_cav = prepared.timing.t_cav_eff;
    let (tg, pk) = (p.delta_cs_target, p.delta_cs_parked);
    let (kn, kx) = (p.kappa_min, p.kappa_max);
    let kq = kappa_from_q(p.omega_c, mm.q_between).clamp(kn, kx);
    let t_pt = park_target_chirp(p);
    let wait = multimode_wait(p, cfg, mm, t_swap);
    if k > 1 && wait < 2.0 * cfg.t_kappa {
        return Err(Error::ModeOverlap(format!("slot spacing {:.4e} s leaves {wait:.4e} s between slots", mm.spacing)));
    }
    let mut s = ControlSchedule::default();
    let parked_wait = |s: &mut ControlSchedule, part: usize, dur: f64| {
        if kq > kn && dur >= 2.0 * cfg.t_kappa {
            s.push(part, "q-ramp", cfg.t_kappa, st.parked, (pk, pk), (kn, kq));
            s.push(part, "q-hold", dur - 2.0 * cfg.t_kappa, st.parked, (pk, pk), (kq, kq));
            s.push(part, "q-ramp", cfg.t_kappa, st.parked, (pk, pk), (kq, kn));
        } else {
            s.push(part, "wait", dur, st.parked, (pk, pk), (kn, kn));
        }
    };
    for (i, a) in alphas.iter().enumerate() {
        s.push(1, format!("store{i}-chirp"), cfg.t_delta_t, st.chirp, (tg, 0.0), (kn, kn)).events.push(Event::Load(*a));
        s.push(2, format!("store{i}-swap"), t_swap, st.resonant, (0.0, 0.0), (kn, kn));
        s.push(3, format!("store{i}-park"), cfg.t_delta_p, st.chirp, (0.0, pk), (kn, kn));
        if i + 1 < k {
            parked_wait(&mut s, 4, wait);
            s.push(4, format!("store{i}-retarget"), t_pt, st.chirp, (pk, tg), (kn, kn));
        }
    }
    let t_last = mm.spacing * (k - 1) as f64;
    let centre = 0.5 * (t_last + cfg.t_mem);
    let half_sep = 0.25 * (cfg.t_mem - 2.0 * t_cav);
    let (c1, c2) = (centre - half_sep, centre + half_sep);
    let pi1_start = c1 - 0.5 * cfg.t_pi;
    let pre = cfg.t_kappa + cfg.t_delta_p;
    let gap1 = pi1_start - pre - s.t_end();
    if gap1 < 0.0 {
        return Err(Error::ModeOverlap(format!("first pulse would start {:.4e} s before storage ends", -gap1)));
    }
    let d1 = &prepared.pulses.drives[0];
    let d2 = &prepared.pulses.drives[1];
    s.push(4, "wait", gap1, st.parked, (pk, pk), (kn, kn));
    s.push(5, "kappa-up", cfg.t_kappa, st.parked, (pk, pk), (kn, kx));
    s.push(6, "chirp", cfg.t_delta_p, st.chirp, (pk, 0.0), (kx, kx));
    s.push(7, "pi1", cfg.t_pi, st.pulse, (0.0, 0.0), (kx, kx)).drive = Some(d1.beta.clone());
    s.push(8, "res", cfg.t_res, st.resonant, (0.0, 0.0), (kx, kx));
    s.push(9, "chirp", cfg.t_delta_p, st.chirp, (0.0, pk), (kx, kx));
    s.push(10, "kappa-down", cfg.t_kappa, st.parked, (pk, pk), (kx, kn));
    let pi2_start = c2 - 0.5 * cfg.t_pi;
    let t11 = pi2_start - cfg.t_kappa - cfg.t_delta_p - s.t_end();
    if t11 < 0.0 {
        return Err(Error::ModeOverlap("pulses overlap".into()));
    }
    s.push(11, "echo-wait", t11, st.parked, (pk, pk), (kn, kn));
    s.push(12, "kappa-up", cfg.t_kappa, st.parked, (pk, pk), (kn, kx));
    s.push(13, "chirp", cfg.t_delta_p, st.chirp, (pk, 0.0), (kx, kx));
    s.push(14, "pi2", cfg.t_pi, st.pulse, (0.0, 0.0), (kx, kx)).drive = Some(d2.beta.clone());
    s.push(15, "res", cfg.t_res, st.resonant, (0.0, 0.0), (kx, kx));
    s.push(16, "chirp", cfg.t_delta_p, st.chirp, (0.0, pk), (kx, kx));
    s.push(17, "kappa-down", cfg.t_kappa, st.parked, (pk, pk), (kx, kn));
    for seg in [6usize, 13] {
        let got = s.segments.iter().find(|x| x.part == seg + 1).map(|x| x.n_steps);
        if got.map(|n| 2 * n + 1) != Some(d1.beta.len()) {
            return Err(Error::InvalidParameter("pulse drive does not match the pulse step count".into()));
        }
    }
    let retrieve_len = cfg.t_delta_p + t_swap + cfg.t_delta_t;
    for i in 0..k {
        let t_read = mm.spacing * i as f64 + cfg.t_mem;
        let gap = t_read - retrieve_len - s.t_end();
        if gap < -1e-15 {
            return Err(Error::ModeOverlap(format!("retrieval of slot {i} starts before the previous part ends")));
        }
        if i == 0 {
            s.push(18, "wait", gap.max(0.0), st.parked, (pk, pk), (kn, kn));
        } else {
            s.push(18, format!("read{i}-target-park"), t_pt, st.chirp, (tg, pk), (kn, kn));
            parked_wait(&mut s, 18, (gap - t_pt).max(0.0));
        }
        s.push(19, format!("read{i}-chirp"), cfg.t_delta_p, st.chirp, (pk, 0.0), (kn, kn));
        s.push(20, format!("read{i}-swap"), t_swap, st.resonant, (0.0, 0.0), (kn, kn));
        s.push(21, format!("read{i}-target"), cfg.t_delta_t, st.chirp, (0.0, tg), (kn, kn));
        if i + 1 < k {
            // readout then reset at the start of the next segment
            let n = s.segments.len();
            s.segments.push(Segment {
                part: 21,
                label: format!("read{i}-mark"),
                t0: s.segments[n - 1].t1(),
                duration: 0.0,
                n_steps: 0,
                delta: (tg, tg),
                kappa: (kn, kn),
                drive: None,
                events: vec![Event::Readout(i), Event::Load(Complex64::new(0.0, 0.0))],
            });
        } else {
            s.final_events.push(Event::Readout(i));
        }
    }
    s.check_chirp_rate(p.chirp_rate)?;
    Ok(s)
}

/// Per-slot outcome of the multi-mode run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeResult {
    pub slot: usize,
    pub alpha_in: [f64; 2],
    pub alpha_out: [f64; 2],
    pub gain: f64,
    pub var_sum: f64,
}

#[derive(Debug, Clone)]
pub struct MultimodeRun {
    pub modes: Vec<ModeResult>,
    /// `response[j][k]`: amplitude response of slot `j` to unit input on
    /// slot `k`, vacuum response removed.
    pub response: Vec<Vec<Complex64>>,
    pub cross_talk: f64,
    pub trajectory: Trajectory<f64>,
    pub schedule: ControlSchedule,
}

/// Runs the multi-mode sequence and the one-hot cross-talk analysis.
pub fn run_multimode(prepared: &PreparedProtocol, mm: &MultimodeConfig, alphas: &[Complex64], opts: &IntegrateOptions) -> Result<MultimodeRun> {
    let model = &prepared.model;
    let p = model.params();
    let cfg = &prepared.config;
    let k = alphas.len();
    let zero = Complex64::new(0.0, 0.0);
    let run = |inputs: &[Complex64], o: &IntegrateOptions| -> Result<Trajectory<f64>> {
        let sched = build_multimode_schedule(p, cfg, mm, prepared, inputs)?;
        // slot 0 is loaded by the first segment's event
        let s0 = init_state::<f64>(model, zero, o.mode == Mode::Full);
        let tr = integrate(&s0, &sched, model, o)?;
        check_kappa_tuning(&sched, &tr, cfg.kappa_tuning_limit)?;
        Ok(tr)
    };
    let schedule = build_multimode_schedule(p, cfg, mm, prepared, alphas)?;
    let trajectory = run(alphas, opts)?;
    let means = IntegrateOptions { mode: Mode::MeansOnly, sample_stride: opts.sample_stride, ..IntegrateOptions::default() };
    let out_of = |tr: &Trajectory<f64>, j: usize| tr.readout(j).map_or(zero, |r| r.alpha);
    let vac = run(&vec![zero; k], &means)?;
    let mut response = vec![vec![zero; k]; k];
    for col in 0..k {
        let mut inp = vec![zero; k];
        inp[col] = Complex64::new(1.0, 0.0);
        let tr = run(&inp, &means)?;
        for (j, row) in response.iter_mut().enumerate() {
            row[col] = out_of(&tr, j) - out_of(&vac, j);
        }
    }
    let mut cross_talk: f64 = 0.0;
    for (j, row) in response.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if c != j {
                cross_talk = cross_talk.max(v.norm());
            }
        }
    }
    let modes = (0..k)
        .map(|j| {
            let ro = trajectory.readout(j);
            let out = ro.map_or(zero, |r| r.alpha);
            ModeResult {
                slot: j,
                alpha_in: [alphas[j].re, alphas[j].im],
                alpha_out: [out.re, out.im],
                gain: response[j][j].norm(),
                var_sum: ro.and_then(|r| r.cov).map_or(f64::NAN, |c| 0.5 * (c[0][0] + c[1][1])),
            }
        })
        .collect();
    Ok(MultimodeRun { modes, response, cross_talk, trajectory, schedule })
}
