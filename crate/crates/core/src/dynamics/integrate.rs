// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Fixed-step RK4 over a [`ControlSchedule`].
//!
//! Three modes share the mean-value propagation:
//! * `MeansOnly` integrates first moments.
//! * `Full` carries the dense covariance matrix.
//! * `Adjoint` integrates the means forward and then propagates projection
//!   rows of the covariance backward, `d lambda/ds = -lambda M(s)`, picking
//!   up `lambda N lambda^T` along the way. This yields exact projections of
//!   the covariance (the covariance equation is linear once the means are
//!   fixed) at O(M) cost per row and step.

use num_complex::Complex64;

use super::{covariance_rhs, mean_rhs, noise_form, row_times_drift, Coeffs, Ctrl};
use crate::error::{Error, Result};
use crate::model::{effective_spin_rows, spin_slots, EnsembleModel, MomentState, IDX_P, IDX_X};
use crate::scalar::Real;
use crate::schedule::{ControlSchedule, Event, Segment};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    MeansOnly,
    Full,
    Adjoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    pub mode: Mode,
    /// Feed cavity-spin covariances back into the mean equations (`Full`
    /// mode only).
    pub include_cov_coupling: bool,
    /// Record a trajectory sample every this many steps (0: only the end
    /// points).
    pub sample_stride: usize,
    /// In `Adjoint` mode, attach covariance projections to every this many
    /// samples (0: only readouts and the final state).
    pub cov_sample_every: usize,
    /// Steps between stored checkpoints in `Adjoint` mode.
    pub checkpoint_stride: usize,
    /// Reject steps above `0.2 / max(|delta_cs|, kappa, gens)`.
    pub enforce_step_limit: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            mode: Mode::MeansOnly,
            include_cov_coupling: false,
            sample_stride: 0,
            cov_sample_every: 0,
            checkpoint_stride: 256,
            enforce_step_limit: true,
        }
    }
}

impl IntegrateOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self { mode, ..Self::default() }
    }
}

/// One trajectory row. Covariance-derived columns are NaN when unavailable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub xc: f64,
    pub pc: f64,
    pub var_sum: f64,
    pub sx_eff: f64,
    pub sy_eff: f64,
    pub p_exc: f64,
    pub p_exc_eff: f64,
    /// `(C(Sx_eff) + C(Sy_eff)) / (4N)`, equal to 1 for ground-state spins.
    pub spin_var: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub slot: usize,
    pub t: f64,
    pub alpha: Complex64,
    pub cov: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub samples: Vec<TrajectorySample>,
    pub readouts: Vec<Readout>,
    pub final_state: MomentState<T>,
    /// Cavity covariance block at the end of the schedule.
    pub final_cavity_cov: Option<[[f64; 2]; 2]>,
}

impl<T: Real> Trajectory<T> {
    pub fn readout(&self, slot: usize) -> Option<&Readout> {
        self.readouts.iter().find(|r| r.slot == slot)
    }

    pub fn final_amplitude(&self) -> Complex64 {
        self.final_state.cavity_amplitude()
    }
}

/// Observable weights derived from the model.
struct Observer {
    weight: Vec<f64>,
    n_total: f64,
}

impl Observer {
    fn new(model: &EnsembleModel) -> Self {
        let gbar = model.params().gbar();
        Self { weight: model.subs().iter().map(|s| s.g / gbar).collect(), n_total: model.params().n_total }
    }

    fn sample<T: Real>(&self, t: f64, y: &[T], cov: Option<&[T]>) -> TrajectorySample {
        let (mut sx, mut sy, mut sz, mut sze) = (0.0, 0.0, 0.0, 0.0);
        for (m, w) in self.weight.iter().enumerate() {
            let [ix, iy, iz] = spin_slots(m);
            sx += w * y[ix].as_f64();
            sy += w * y[iy].as_f64();
            sz += y[iz].as_f64();
            sze += w * w * y[iz].as_f64();
        }
        let n = self.n_total;
        let (var_sum, spin_var) = match cov {
            Some(c) => {
                let d = y.len();
                let vs = 0.5 * (c[0].as_f64() + c[d + 1].as_f64());
                let mut acc = 0.0;
                for (a, wa) in self.weight.iter().enumerate() {
                    let [ax, ay, _] = spin_slots(a);
                    for (b, wb) in self.weight.iter().enumerate() {
                        let [bx, by, _] = spin_slots(b);
                        acc += wa * wb * (c[ax * d + bx].as_f64() + c[ay * d + by].as_f64());
                    }
                }
                (vs, acc / (4.0 * n))
            }
            None => (f64::NAN, f64::NAN),
        };
        TrajectorySample {
            t,
            xc: y[IDX_X].as_f64(),
            pc: y[IDX_P].as_f64(),
            var_sum,
            sx_eff: sx,
            sy_eff: sy,
            p_exc: (sz + n) / (2.0 * n),
            p_exc_eff: (sze + n) / (2.0 * n),
            spin_var,
        }
    }
}

/// Working buffers for one RK4 step.
struct Rk4<T: Real> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    // covariance buffers
    c1: Vec<T>,
    c2: Vec<T>,
    c3: Vec<T>,
    c4: Vec<T>,
    ctmp: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> Rk4<T> {
    fn new(d: usize, full: bool) -> Self {
        let z = |n| vec![T::zero(); n];
        let dd = if full { d * d } else { 0 };
        Self { k1: z(d), k2: z(d), k3: z(d), k4: z(d), tmp: z(d), c1: z(dd), c2: z(dd), c3: z(dd), c4: z(dd), ctmp: z(dd), scratch: z(dd) }
    }

    /// One means-only step; `k1` must hold `f(y, c0)` on entry when
    /// `have_k1` is set.
    fn step_means(&mut self, y: &mut [T], h: T, c: [&Ctrl<T>; 3], k: &Coeffs<T>, have_k1: bool) {
        let half = T::half() * h;
        if !have_k1 {
            mean_rhs(y, None, c[0], k, &mut self.k1);
        }
        axpy_into(&mut self.tmp, y, half, &self.k1);
        mean_rhs(&self.tmp, None, c[1], k, &mut self.k2);
        axpy_into(&mut self.tmp, y, half, &self.k2);
        mean_rhs(&self.tmp, None, c[1], k, &mut self.k3);
        axpy_into(&mut self.tmp, y, h, &self.k3);
        mean_rhs(&self.tmp, None, c[2], k, &mut self.k4);
        combine(y, h, &self.k1, &self.k2, &self.k3, &self.k4);
    }

    fn step_full(&mut self, y: &mut [T], g: &mut [T], h: T, c: [&Ctrl<T>; 3], k: &Coeffs<T>, coupled: bool) {
        let half = T::half() * h;
        mean_rhs(y, if coupled { Some(&*g) } else { None }, c[0], k, &mut self.k1);
        covariance_rhs(y, g, c[0], k, &mut self.scratch, &mut self.c1);

        axpy_into(&mut self.tmp, y, half, &self.k1);
        axpy_into(&mut self.ctmp, g, half, &self.c1);
        mean_rhs(&self.tmp, if coupled { Some(&self.ctmp) } else { None }, c[1], k, &mut self.k2);
        covariance_rhs(&self.tmp, &self.ctmp, c[1], k, &mut self.scratch, &mut self.c2);

        axpy_into(&mut self.tmp, y, half, &self.k2);
        axpy_into(&mut self.ctmp, g, half, &self.c2);
        mean_rhs(&self.tmp, if coupled { Some(&self.ctmp) } else { None }, c[1], k, &mut self.k3);
        covariance_rhs(&self.tmp, &self.ctmp, c[1], k, &mut self.scratch, &mut self.c3);

        axpy_into(&mut self.tmp, y, h, &self.k3);
        axpy_into(&mut self.ctmp, g, h, &self.c3);
        mean_rhs(&self.tmp, if coupled { Some(&self.ctmp) } else { None }, c[2], k, &mut self.k4);
        covariance_rhs(&self.tmp, &self.ctmp, c[2], k, &mut self.scratch, &mut self.c4);

        combine(y, h, &self.k1, &self.k2, &self.k3, &self.k4);
        combine(g, h, &self.c1, &self.c2, &self.c3, &self.c4);
        symmetrize(g, y.len());
    }
}

#[inline]
fn axpy_into<T: Real>(out: &mut [T], y: &[T], a: T, x: &[T]) {
    for ((o, yv), xv) in out.iter_mut().zip(y).zip(x) {
        *o = *yv + a * *xv;
    }
}

#[inline]
fn combine<T: Real>(y: &mut [T], h: T, k1: &[T], k2: &[T], k3: &[T], k4: &[T]) {
    let s = h / T::c(6.0);
    let two = T::two();
    for i in 0..y.len() {
        y[i] += s * (k1[i] + two * (k2[i] + k3[i]) + k4[i]);
    }
}

fn symmetrize<T: Real>(g: &mut [T], d: usize) {
    let half = T::half();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = half * (g[i * d + j] + g[j * d + i]);
            g[i * d + j] = v;
            g[j * d + i] = v;
        }
    }
}

fn seg_ctrls<T: Real>(seg: &Segment, s: usize) -> [Ctrl<T>; 3] {
    [seg.control_at(2 * s).into(), seg.control_at(2 * s + 1).into(), seg.control_at(2 * s + 2).into()]
}

fn check_step(seg: &Segment, gens: f64) -> Result<()> {
    if seg.n_steps == 0 {
        return Ok(());
    }
    let rate = seg.delta.0.abs().max(seg.delta.1.abs()).max(seg.kappa.0).max(seg.kappa.1).max(gens);
    let limit = 0.2 / rate;
    let h = seg.step();
    if h > limit * (1.0 + 1e-9) {
        return Err(Error::StepTooLarge { dt: h, limit });
    }
    Ok(())
}

fn finite_sum<T: Real>(v: &[T]) -> bool {
    v.iter().fold(T::zero(), |a, b| a + b.abs()).is_finite()
}

fn load_cavity<T: Real>(y: &mut [T], cov: Option<&mut Vec<T>>, alpha: Complex64) {
    let r2 = std::f64::consts::SQRT_2;
    y[IDX_X] = T::c(r2 * alpha.re);
    y[IDX_P] = T::c(r2 * alpha.im);
    if let Some(c) = cov {
        let d = y.len();
        for i in 0..2 {
            for j in 0..d {
                c[i * d + j] = T::zero();
                c[j * d + i] = T::zero();
            }
            c[i * d + i] = T::one();
        }
    }
}

/// Projection rows whose covariance is wanted at one instant.
#[derive(Debug, Clone)]
pub struct CovGroup<T> {
    pub t: f64,
    pub rows: Vec<Vec<T>>,
    /// Accumulated `Lambda gamma Lambda^T`, row-major `r x r`.
    pub value: Vec<f64>,
}

/// Integrates `state` over the whole schedule.
pub fn integrate<T: Real>(state: &MomentState<T>, schedule: &ControlSchedule, model: &EnsembleModel, opts: &IntegrateOptions) -> Result<Trajectory<T>> {
    let d = model.dim();
    if state.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: state.dim() });
    }
    if opts.enforce_step_limit {
        for seg in &schedule.segments {
            check_step(seg, model.params().gens)?;
        }
    }
    match opts.mode {
        Mode::MeansOnly => forward(state, schedule, model, opts, false, None),
        Mode::Full => {
            if state.cov.is_none() {
                return Err(Error::MissingCovariance("full mode needs an initial covariance".into()));
            }
            forward(state, schedule, model, opts, true, None)
        }
        Mode::Adjoint => adjoint(state, schedule, model, opts),
    }
}

/// Forward pass. With `ckpt` set, stores the means at every segment start
/// (after its events) and every `checkpoint_stride` steps.
fn forward<T: Real>(
    state: &MomentState<T>,
    schedule: &ControlSchedule,
    model: &EnsembleModel,
    opts: &IntegrateOptions,
    full: bool,
    mut ckpt: Option<&mut Checkpoints<T>>,
) -> Result<Trajectory<T>> {
    let d = model.dim();
    let k = Coeffs::<T>::new(model);
    let obs = Observer::new(model);
    let mut y = state.means.clone();
    let mut g = if full { state.cov.clone() } else { None };
    let mut rk = Rk4::new(d, full);
    let mut samples = Vec::new();
    let mut readouts = Vec::new();
    let mut t = schedule.t_start();
    let mut step_count = 0usize;
    let coupled = full && opts.include_cov_coupling;
    samples.push(obs.sample(t, &y, g.as_deref()));
    let apply_events = |events: &[Event], y: &mut Vec<T>, g: &mut Option<Vec<T>>, t: f64, readouts: &mut Vec<Readout>| {
        for e in events {
            match e {
                Event::Load(alpha) => load_cavity(y, g.as_mut(), *alpha),
                Event::Readout(slot) => {
                    let st = MomentState { means: vec![y[0], y[1]], cov: None, time: t };
                    let cov = g.as_ref().map(|c| {
                        [[c[0].as_f64(), c[1].as_f64()], [c[d].as_f64(), c[d + 1].as_f64()]]
                    });
                    readouts.push(Readout { slot: *slot, t, alpha: st.cavity_amplitude(), cov });
                }
            }
        }
    };
    for (si, seg) in schedule.segments.iter().enumerate() {
        apply_events(&seg.events, &mut y, &mut g, seg.t0, &mut readouts);
        if let Some(c) = ckpt.as_deref_mut() {
            c.store(si, 0, &y);
        }
        let h = seg.step();
        let ht = T::c(h);
        for s in 0..seg.n_steps {
            let c = seg_ctrls::<T>(seg, s);
            match g.as_mut() {
                Some(gm) => rk.step_full(&mut y, gm, ht, [&c[0], &c[1], &c[2]], &k, coupled),
                None => rk.step_means(&mut y, ht, [&c[0], &c[1], &c[2]], &k, false),
            }
            t = seg.t0 + (s + 1) as f64 * h;
            step_count += 1;
            if !finite_sum(&y) || g.as_ref().is_some_and(|gm| !(0..d).map(|i| gm[i * d + i]).fold(T::zero(), |a, b| a + b).is_finite()) {
                return Err(Error::Diverged { time: t });
            }
            if let Some(c) = ckpt.as_deref_mut() {
                if (s + 1) % c.stride == 0 && s + 1 < seg.n_steps {
                    c.store(si, s + 1, &y);
                }
                c.mark_sample(si, s + 1, step_count, opts);
            }
            if opts.sample_stride > 0 && step_count.is_multiple_of(opts.sample_stride) {
                samples.push(obs.sample(t, &y, g.as_deref()));
            }
        }
    }
    apply_events(&schedule.final_events, &mut y, &mut g, t, &mut readouts);
    if samples.last().map(|s| s.t) != Some(t) {
        samples.push(obs.sample(t, &y, g.as_deref()));
    }
    let final_state = MomentState { means: y, cov: g, time: t };
    let final_cavity_cov = final_state.cavity_cov();
    Ok(Trajectory { samples, readouts, final_state, final_cavity_cov })
}

struct Checkpoints<T> {
    stride: usize,
    /// `(segment, step) -> means`
    data: Vec<Vec<(usize, Vec<T>)>>,
    /// Steps (segment, step-after) at which covariance samples are wanted,
    /// with the global step count.
    cov_marks: Vec<(usize, usize, usize)>,
}

impl<T: Real> Checkpoints<T> {
    fn new(n_seg: usize, stride: usize) -> Self {
        Self { stride: stride.max(1), data: vec![Vec::new(); n_seg], cov_marks: Vec::new() }
    }

    fn store(&mut self, seg: usize, step: usize, y: &[T]) {
        self.data[seg].push((step, y.to_vec()));
    }

    fn mark_sample(&mut self, seg: usize, step: usize, count: usize, opts: &IntegrateOptions) {
        if opts.sample_stride > 0 && opts.cov_sample_every > 0 && count.is_multiple_of(opts.sample_stride * opts.cov_sample_every) {
            self.cov_marks.push((seg, step, count));
        }
    }
}

/// Active projection group during the backward sweep.
struct ActiveGroup<T: Real> {
    target: GroupTarget,
    t: f64,
    rows: Vec<Vec<T>>,
    acc: Vec<f64>,
}

#[derive(Clone, Copy)]
enum GroupTarget {
    Sample(usize),
    Readout(usize),
    Final,
}

fn adjoint<T: Real>(state: &MomentState<T>, schedule: &ControlSchedule, model: &EnsembleModel, opts: &IntegrateOptions) -> Result<Trajectory<T>> {
    let d = model.dim();
    let nseg = schedule.segments.len();
    let mut ck = Checkpoints::new(nseg, opts.checkpoint_stride);
    let mut traj = forward(state, schedule, model, opts, false, Some(&mut ck))?;
    let k = Coeffs::<T>::new(model);
    let [ux, uy] = effective_spin_rows(model);
    let unit = |i: usize| {
        let mut v = vec![T::zero(); d];
        v[i] = T::one();
        v
    };
    let spin_rows = || vec![ux.iter().map(|v| T::c(*v)).collect::<Vec<T>>(), uy.iter().map(|v| T::c(*v)).collect()];
    let n_total = model.params().n_total;

    // sample index by global step count
    let sample_index = |samples: &[TrajectorySample], t: f64| samples.iter().position(|s| s.t == t);
    let mut pending: Vec<(usize, usize, GroupTarget, f64)> = Vec::new();
    for &(si, step, _) in &ck.cov_marks {
        let t = schedule.segments[si].t0 + step as f64 * schedule.segments[si].step();
        if let Some(idx) = sample_index(&traj.samples, t) {
            pending.push((si, step, GroupTarget::Sample(idx), t));
        }
    }

    let mut active: Vec<ActiveGroup<T>> = Vec::new();
    let new_group = |target: GroupTarget, t: f64, with_spin: bool| {
        let mut rows = vec![unit(IDX_X), unit(IDX_P)];
        if with_spin {
            rows.extend(spin_rows());
        }
        let r = rows.len();
        ActiveGroup { target, t, rows, acc: vec![0.0; r * r] }
    };
    let mut finished: Vec<ActiveGroup<T>> = Vec::new();

    // Final state group, then final events in reverse.
    let t_end = schedule.t_end();
    active.push(new_group(GroupTarget::Final, t_end, sample_index(&traj.samples, t_end).is_some()));
    for e in schedule.final_events.iter().rev() {
        match e {
            Event::Load(_) => apply_load(&mut active),
            Event::Readout(slot) => {
                active.push(new_group(GroupTarget::Readout(*slot), t_end, false));
            }
        }
    }

    let mut buf = AdjointBuffers::new(d);
    buf.ensure_rows(4);
    for si in (0..nseg).rev() {
        let seg = &schedule.segments[si];
        let h = seg.step();
        let ckpts = &ck.data[si];
        // walk checkpoint blocks backwards
        for (bi, (start, y0)) in ckpts.iter().enumerate().rev() {
            let end = ckpts.get(bi + 1).map_or(seg.n_steps, |c| c.0);
            let ys = recompute_block(seg, *start, end, y0, &k);
            for s in (*start..end).rev() {
                for p in pending.iter().filter(|p| p.0 == si && p.1 == s + 1) {
                    active.push(new_group(p.2, p.3, true));
                }
                let yl = &ys.y[s - start];
                let yr = &ys.y[s + 1 - start];
                let fl = &ys.f[s - start];
                let fr = &ys.f[s + 1 - start];
                backward_step(&mut active, yl, yr, fl, fr, seg, s, h, &k, &mut buf);
            }
        }
        if seg.n_steps == 0 {
            for p in pending.iter().filter(|p| p.0 == si) {
                active.push(new_group(p.2, p.3, true));
            }
        }
        for e in seg.events.iter().rev() {
            match e {
                Event::Load(_) => apply_load(&mut active),
                Event::Readout(slot) => {
                    active.push(new_group(GroupTarget::Readout(*slot), seg.t0, false));
                    }
            }
        }
        for p in pending.iter().filter(|p| p.0 == si && p.1 == 0) {
            active.push(new_group(p.2, p.3, true));
        }
    }
    // initial covariance
    let g0 = state.cov.as_ref();
    for grp in active.drain(..) {
        let r = grp.rows.len();
        let mut g = grp;
        for i in 0..r {
            for j in 0..r {
                g.acc[i * r + j] += initial_form(&g.rows[i], &g.rows[j], g0, model, d);
            }
        }
        finished.push(g);
    }
    for g in finished {
        let r = g.rows.len();
        let cav = [[g.acc[0], g.acc[1]], [g.acc[r], g.acc[r + 1]]];
        let spin = (r == 4).then(|| (g.acc[2 * r + 2] + g.acc[3 * r + 3]) / (4.0 * n_total));
        match g.target {
            GroupTarget::Final => {
                traj.final_cavity_cov = Some(cav);
                if let Some(i) = sample_index(&traj.samples, g.t) {
                    traj.samples[i].var_sum = 0.5 * (cav[0][0] + cav[1][1]);
                    if let Some(s) = spin {
                        traj.samples[i].spin_var = s;
                    }
                }
            }
            GroupTarget::Sample(i) => {
                traj.samples[i].var_sum = 0.5 * (cav[0][0] + cav[1][1]);
                if let Some(s) = spin {
                    traj.samples[i].spin_var = s;
                }
            }
            GroupTarget::Readout(slot) => {
                if let Some(ro) = traj.readouts.iter_mut().find(|r| r.slot == slot && r.t == g.t) {
                    ro.cov = Some(cav);
                }
            }
        }
    }
    // the initial sample is read off the initial covariance directly
    if let Some(first) = traj.samples.first_mut() {
        let form = |a: &[T], b: &[T]| initial_form(a, b, g0, model, d);
        let sr = spin_rows();
        first.var_sum = 0.5 * (form(&unit(0), &unit(0)) + form(&unit(1), &unit(1)));
        first.spin_var = (form(&sr[0], &sr[0]) + form(&sr[1], &sr[1])) / (4.0 * n_total);
    }
    Ok(traj)
}

/// Load event seen backward: cavity block restarts at the identity and
/// cavity columns of each row are dropped.
fn apply_load<T: Real>(active: &mut [ActiveGroup<T>]) {
    for g in active.iter_mut() {
        let r = g.rows.len();
        for i in 0..r {
            for j in 0..r {
                let v = g.rows[i][0] * g.rows[j][0] + g.rows[i][1] * g.rows[j][1];
                g.acc[i * r + j] += v.as_f64();
            }
        }
        for row in g.rows.iter_mut() {
            row[0] = T::zero();
            row[1] = T::zero();
        }
    }
}

/// `lambda gamma_0 mu^T`; without an explicit matrix the ground/vacuum
/// diagonal is used.
fn initial_form<T: Real>(lam: &[T], mu: &[T], g0: Option<&Vec<T>>, model: &EnsembleModel, d: usize) -> f64 {
    match g0 {
        Some(c) => {
            let mut s = 0.0;
            for i in 0..d {
                if lam[i] == T::zero() {
                    continue;
                }
                let row = &c[i * d..i * d + d];
                let mut acc = T::zero();
                for j in 0..d {
                    acc += row[j] * mu[j];
                }
                s += (lam[i] * acc).as_f64();
            }
            s
        }
        None => {
            let mut s = lam[0].as_f64() * mu[0].as_f64() + lam[1].as_f64() * mu[1].as_f64();
            for (m, sub) in model.subs().iter().enumerate() {
                let [ix, iy, _] = spin_slots(m);
                s += 2.0 * sub.n * (lam[ix].as_f64() * mu[ix].as_f64() + lam[iy].as_f64() * mu[iy].as_f64());
            }
            s
        }
    }
}

struct Block<T> {
    y: Vec<Vec<T>>,
    f: Vec<Vec<T>>,
}

fn recompute_block<T: Real>(seg: &Segment, start: usize, end: usize, y0: &[T], k: &Coeffs<T>) -> Block<T> {
    let d = y0.len();
    let mut rk = Rk4::new(d, false);
    let ht = T::c(seg.step());
    let mut y = y0.to_vec();
    let mut ys = Vec::with_capacity(end - start + 1);
    let mut fs = Vec::with_capacity(end - start + 1);
    for s in start..end {
        let c = seg_ctrls::<T>(seg, s);
        mean_rhs(&y, None, &c[0], k, &mut rk.k1);
        ys.push(y.clone());
        fs.push(rk.k1.clone());
        rk.step_means(&mut y, ht, [&c[0], &c[1], &c[2]], k, true);
    }
    let c_end: Ctrl<T> = seg.control_at(2 * end).into();
    let mut f_end = vec![T::zero(); d];
    mean_rhs(&y, None, &c_end, k, &mut f_end);
    ys.push(y);
    fs.push(f_end);
    Block { y: ys, f: fs }
}

struct AdjointBuffers<T> {
    d: usize,
    mid: Vec<T>,
    /// Per row: the four stage rows and their drift products.
    st: Vec<[Vec<T>; 4]>,
    kk: Vec<[Vec<T>; 4]>,
}

impl<T: Real> AdjointBuffers<T> {
    fn new(d: usize) -> Self {
        Self { d, mid: vec![T::zero(); d], st: Vec::new(), kk: Vec::new() }
    }

    fn ensure_rows(&mut self, r: usize) {
        let d = self.d;
        let z = || vec![T::zero(); d];
        while self.st.len() < r {
            self.st.push([z(), z(), z(), z()]);
            self.kk.push([z(), z(), z(), z()]);
        }
    }
}

/// One RK4 step of every active row from `t_{s+1}` back to `t_s`, with the
/// noise quadrature integrated alongside.
#[allow(clippy::too_many_arguments)]
fn backward_step<T: Real>(
    active: &mut [ActiveGroup<T>],
    yl: &[T],
    yr: &[T],
    fl: &[T],
    fr: &[T],
    seg: &Segment,
    s: usize,
    h: f64,
    k: &Coeffs<T>,
    buf: &mut AdjointBuffers<T>,
) {
    if active.is_empty() {
        return;
    }
    let ht = T::c(h);
    let eighth = ht / T::c(8.0);
    let half = T::half();
    for i in 0..yl.len() {
        buf.mid[i] = half * (yl[i] + yr[i]) + eighth * (fl[i] - fr[i]);
    }
    let cr: Ctrl<T> = seg.control_at(2 * s + 2).into();
    let cm: Ctrl<T> = seg.control_at(2 * s + 1).into();
    let cl: Ctrl<T> = seg.control_at(2 * s).into();
    let hh = half * ht;
    let w = [1.0, 2.0, 2.0, 1.0];
    let AdjointBuffers { mid, st, kk, .. } = buf;
    let ystage: [&[T]; 4] = [yr, mid, mid, yl];
    let cstage = [&cr, &cm, &cm, &cl];
    for g in active.iter_mut() {
        let r = g.rows.len();
        for i in 0..r {
            let row = &g.rows[i];
            let (sr, kr) = (&mut st[i], &mut kk[i]);
            sr[0].copy_from_slice(row);
            row_times_drift(ystage[0], &sr[0], cstage[0], k, &mut kr[0]);
            for stg in 1..4 {
                let a = if stg == 3 { ht } else { hh };
                let (prev, cur) = kr.split_at_mut(stg);
                axpy_into(&mut sr[stg], row, a, &prev[stg - 1]);
                row_times_drift(ystage[stg], &sr[stg], cstage[stg], k, &mut cur[0]);
            }
        }
        for i in 0..r {
            for j in i..r {
                let mut q = 0.0;
                for stg in 0..4 {
                    q += w[stg] * noise_form(ystage[stg], &st[i][stg], &st[j][stg], cstage[stg], k).as_f64();
                }
                let v = h / 6.0 * q;
                g.acc[i * r + j] += v;
                if i != j {
                    g.acc[j * r + i] += v;
                }
            }
        }
        for (i, row) in g.rows.iter_mut().enumerate() {
            let kr = &kk[i];
            combine(row, ht, &kr[0], &kr[1], &kr[2], &kr[3]);
        }
    }
}
