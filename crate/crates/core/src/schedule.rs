// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Protocol timing algebra and piecewise-linear control schedules.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ControlSample;
use crate::scalar::Field;

/// Fixed durations of the auxiliary protocol parts.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingConstants<F> {
    pub t_delta_p: F,
    pub t_delta_t: F,
    pub t_kappa: F,
    pub t_pi: F,
    pub t_res: F,
}

impl TimingConstants<f64> {
    pub fn reference() -> Self {
        Self { t_delta_p: 5e-9, t_delta_t: 10e-9, t_kappa: 10e-9, t_pi: 1e-6, t_res: 1e-6 }
    }
}

impl<F: Field> TimingConstants<F> {
    pub fn zero() -> Self {
        Self { t_delta_p: F::zero(), t_delta_t: F::zero(), t_kappa: F::zero(), t_pi: F::zero(), t_res: F::zero() }
    }
}

/// Durations of the 21 protocol parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolTiming<F> {
    pub t: Vec<F>,
    pub t_echo: F,
    pub t_cav_eff: F,
    pub t_mem: F,
    pub t_swap: F,
    pub constants: TimingConstants<F>,
}

impl<F: Field> ProtocolTiming<F> {
    /// Duration of part `j` (1 based).
    pub fn part(&self, j: usize) -> F {
        self.t[j - 1].clone()
    }

    /// Start time of part `j` (1 based).
    pub fn start(&self, j: usize) -> F {
        self.t[..j - 1].iter().cloned().fold(F::zero(), |a, b| a + b)
    }

    pub fn sum_range(&self, from: usize, to: usize) -> F {
        self.t[from - 1..to].iter().cloned().fold(F::zero(), |a, b| a + b)
    }

    pub fn to_f64(&self) -> ProtocolTiming<f64> {
        let c = &self.constants;
        ProtocolTiming {
            t: self.t.iter().map(Field::to_f64).collect(),
            t_echo: self.t_echo.to_f64(),
            t_cav_eff: self.t_cav_eff.to_f64(),
            t_mem: self.t_mem.to_f64(),
            t_swap: self.t_swap.to_f64(),
            constants: TimingConstants {
                t_delta_p: c.t_delta_p.to_f64(),
                t_delta_t: c.t_delta_t.to_f64(),
                t_kappa: c.t_kappa.to_f64(),
                t_pi: c.t_pi.to_f64(),
                t_res: c.t_res.to_f64(),
            },
        }
    }
}

#[derive(Debug, Serialize)]
struct TimingJson<'a> {
    #[serde(rename = "T")]
    t: &'a [f64],
    #[serde(rename = "T_echo")]
    t_echo: f64,
    #[serde(rename = "T_cav_eff")]
    t_cav_eff: f64,
    #[serde(rename = "T_mem")]
    t_mem: f64,
}

impl ProtocolTiming<f64> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(TimingJson { t: &self.t, t_echo: self.t_echo, t_cav_eff: self.t_cav_eff, t_mem: self.t_mem })
            .expect("timing serializes")
    }
}

fn f<F: Field>(v: i64) -> F {
    F::from_i64(v)
}

/// Smallest memory time for which all derived durations are nonnegative.
pub fn min_feasible_t_mem<F: Field>(t_swap: &F, t_cav_eff: &F, c: &TimingConstants<F>) -> F {
    let two: F = f(2);
    let four: F = f(4);
    let from_t11 = two.clone()
        * (two.clone() * c.t_delta_p.clone() + two.clone() * c.t_kappa.clone() + c.t_pi.clone() + c.t_res.clone() + t_cav_eff.clone());
    let from_t18 = four
        * (c.t_delta_t.clone() + two.clone() * c.t_delta_p.clone() + c.t_kappa.clone() + c.t_pi.clone() / two.clone() + c.t_res.clone()
            + t_swap.clone()
            - t_cav_eff.clone() / two);
    if from_t11 > from_t18 {
        from_t11
    } else {
        from_t18
    }
}

/// Solves the timing algebra for the 21-part protocol.
pub fn solve_timing<F: Field>(t_mem: F, t_swap: F, t_cav_eff: F, c: &TimingConstants<F>) -> Result<ProtocolTiming<F>> {
    let two: F = f(2);
    let four: F = f(4);
    let t11 = t_mem.clone() / two.clone()
        - two.clone() * c.t_delta_p.clone()
        - two.clone() * c.t_kappa.clone()
        - c.t_pi.clone()
        - c.t_res.clone()
        - t_cav_eff.clone();
    let t18 = t_mem.clone() / four
        - c.t_delta_t.clone()
        - two.clone() * c.t_delta_p.clone()
        - c.t_kappa.clone()
        - c.t_pi.clone() / two.clone()
        - c.t_res.clone()
        - t_swap.clone()
        + t_cav_eff.clone() / two.clone();
    let t4 = c.t_res.clone() + t18.clone();
    let zero = F::zero();
    for (name, v) in [("T4", &t4), ("T11", &t11), ("T18", &t18)] {
        if *v < zero {
            return Err(Error::InfeasibleTiming {
                constraint: name.into(),
                value: v.to_f64(),
                min_t_mem: min_feasible_t_mem(&t_swap, &t_cav_eff, c).to_f64(),
            });
        }
    }
    if t_swap < zero || t_cav_eff < zero {
        return Err(Error::InvalidParameter("t_swap and t_cav_eff must be nonnegative".into()));
    }
    let (dt, dp, dk, pi, res) =
        (c.t_delta_t.clone(), c.t_delta_p.clone(), c.t_kappa.clone(), c.t_pi.clone(), c.t_res.clone());
    let t = vec![
        dt.clone(),
        t_swap.clone(),
        dp.clone(),
        t4,
        dk.clone(),
        dp.clone(),
        pi.clone(),
        res.clone(),
        dp.clone(),
        dk.clone(),
        t11,
        dk.clone(),
        dp.clone(),
        pi,
        res,
        dp.clone(),
        dk,
        t18,
        dp,
        t_swap.clone(),
        dt,
    ];
    let t_echo = t_mem.clone() - two * t_cav_eff.clone();
    Ok(ProtocolTiming { t, t_echo, t_cav_eff, t_mem, t_swap, constants: c.clone() })
}

/// Discrete action applied at a segment boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// Cavity replaced by a coherent state; spin-spin moments untouched.
    Load(Complex64),
    /// Cavity state recorded under the given slot.
    Readout(usize),
}

/// One piece of the schedule: linear `delta_cs` and `kappa` ramps and an
/// optional drive sampled at half-step spacing (`2 n_steps + 1` points).
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub part: usize,
    pub label: String,
    pub t0: f64,
    pub duration: f64,
    pub n_steps: usize,
    pub delta: (f64, f64),
    pub kappa: (f64, f64),
    pub drive: Option<Vec<Complex64>>,
    pub events: Vec<Event>,
}

impl Segment {
    pub fn step(&self) -> f64 {
        self.duration / self.n_steps as f64
    }

    /// Controls at half-step index `q` in `0..=2 n_steps`.
    #[inline]
    pub fn control_at(&self, q: usize) -> ControlSample {
        let s = q as f64 / (2 * self.n_steps) as f64;
        ControlSample {
            delta_cs: self.delta.0 + (self.delta.1 - self.delta.0) * s,
            kappa: self.kappa.0 + (self.kappa.1 - self.kappa.0) * s,
            beta: self.drive.as_ref().map_or(Complex64::new(0.0, 0.0), |d| d[q]),
        }
    }

    /// Controls at an arbitrary time inside the segment (drive linearly
    /// interpolated).
    pub fn control_at_time(&self, t: f64) -> ControlSample {
        let s = ((t - self.t0) / self.duration).clamp(0.0, 1.0);
        let beta = self.drive.as_ref().map_or(Complex64::new(0.0, 0.0), |d| {
            let x = s * (d.len() - 1) as f64;
            let i = (x.floor() as usize).min(d.len() - 2);
            let fr = x - i as f64;
            d[i] * (1.0 - fr) + d[i + 1] * fr
        });
        ControlSample {
            delta_cs: self.delta.0 + (self.delta.1 - self.delta.0) * s,
            kappa: self.kappa.0 + (self.kappa.1 - self.kappa.0) * s,
            beta,
        }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.duration
    }

    /// Steps `s0..s1` as a segment of their own; events stay with step 0.
    pub fn slice(&self, s0: usize, s1: usize) -> Segment {
        let h = self.step();
        let (a, b) = (self.control_at(2 * s0), self.control_at(2 * s1));
        Segment {
            part: self.part,
            label: self.label.clone(),
            t0: self.t0 + s0 as f64 * h,
            duration: (s1 - s0) as f64 * h,
            n_steps: s1 - s0,
            delta: (a.delta_cs, b.delta_cs),
            kappa: (a.kappa, b.kappa),
            drive: self.drive.as_ref().map(|d| d[2 * s0..=2 * s1].to_vec()),
            events: if s0 == 0 { self.events.clone() } else { Vec::new() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControlSchedule {
    pub segments: Vec<Segment>,
    /// Events applied after the last segment.
    pub final_events: Vec<Event>,
}

impl ControlSchedule {
    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(0.0, Segment::t1)
    }

    pub fn t_start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t0)
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.n_steps).sum()
    }

    /// Index of the segment active at time `t`.
    pub fn segment_at(&self, t: f64) -> Option<usize> {
        self.segments.iter().position(|s| t >= s.t0 && t <= s.t1())
    }

    pub fn control_at_time(&self, t: f64) -> Option<ControlSample> {
        self.segment_at(t).map(|i| self.segments[i].control_at_time(t))
    }

    /// Appends a segment starting where the previous one ends.
    pub fn push(&mut self, part: usize, label: impl Into<String>, duration: f64, dt: f64, delta: (f64, f64), kappa: (f64, f64)) -> &mut Segment {
        let t0 = self.t_end();
        let n_steps = steps_for(duration, dt);
        self.segments.push(Segment {
            part,
            label: label.into(),
            t0,
            duration,
            n_steps,
            delta,
            kappa,
            drive: None,
            events: Vec::new(),
        });
        self.segments.last_mut().expect("just pushed")
    }

    /// Splits every segment into pieces of at most `steps` steps. The last
    /// piece carries the final events.
    pub fn chunked(&self, steps: usize) -> Vec<ControlSchedule> {
        let steps = steps.max(1);
        let mut out = Vec::new();
        for seg in &self.segments {
            if seg.n_steps == 0 {
                out.push(ControlSchedule { segments: vec![seg.clone()], final_events: Vec::new() });
                continue;
            }
            let mut s0 = 0;
            while s0 < seg.n_steps {
                let s1 = (s0 + steps).min(seg.n_steps);
                out.push(ControlSchedule { segments: vec![seg.slice(s0, s1)], final_events: Vec::new() });
                s0 = s1;
            }
        }
        if let Some(last) = out.last_mut() {
            last.final_events = self.final_events.clone();
        }
        out
    }

    /// Prefix covering the first `n` segments.
    pub fn truncated(&self, n: usize) -> Self {
        Self { segments: self.segments[..n.min(self.segments.len())].to_vec(), final_events: Vec::new() }
    }

    /// Rejects discontinuous or too fast detuning sweeps.
    pub fn check_chirp_rate(&self, limit: f64) -> Result<()> {
        for s in &self.segments {
            if s.duration > 0.0 {
                let rate = (s.delta.1 - s.delta.0).abs() / s.duration;
                if rate > limit * (1.0 + 1e-9) {
                    return Err(Error::ChirpRate { part: s.part, rate, limit });
                }
            }
        }
        for w in self.segments.windows(2) {
            if (w[0].delta.1 - w[1].delta.0).abs() > 1e-6 * w[0].delta.1.abs().max(1.0) {
                return Err(Error::InvalidParameter(format!("detuning jumps between parts {} and {}", w[0].part, w[1].part)));
            }
        }
        Ok(())
    }
}

/// Number of equal steps of size at most `dt` covering `duration`.
pub fn steps_for(duration: f64, dt: f64) -> usize {
    if duration <= 0.0 {
        return 0;
    }
    ((duration / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}
