// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Model construction from a compact specification and the standard
//! single-mode, multi-mode and gain-scaling studies.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::hz;
use crate::distributions::{
    build_model, coupling_histogram, frequency_bins, Coupling, CouplingBin, FrequencyBins, FrequencyLine, TailPolicy,
    WaveguideGeometry,
};
use crate::dynamics::{IntegrateOptions, Mode};
use crate::error::{Error, Result};
use crate::metrics::{fit_gain, qubit_fidelity, GainFit, QubitFidelity};
use crate::model::{EnsembleModel, PhysicalParams};
use crate::protocol::{MemoryRun, PreparedProtocol};

/// Equal-width frequency bins over a symmetric span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrequencySpec {
    pub n_bins: usize,
    /// Half width of the binned span (rad/s).
    pub half_span: f64,
    pub tail_policy: TailPolicy,
    /// Largest tolerated line mass outside the span.
    pub max_tail: f64,
}

impl Default for FrequencySpec {
    fn default() -> Self {
        // 77 kHz spacing: the comb revival sits at 13 us
        Self { n_bins: 1821, half_span: hz(70e6), tail_policy: TailPolicy::Renormalize, max_tail: 1e-2 }
    }
}

impl FrequencySpec {
    /// Spacing chosen so that the artificial comb revival lies beyond
    /// `horizon`; the span is kept.
    pub fn with_revival_after(&self, horizon: f64) -> Self {
        let spacing = 1.0 / horizon;
        let n = (2.0 * self.half_span / hz(spacing)).ceil() as usize;
        Self { n_bins: n | 1, ..self.clone() }
    }

    /// Time at which the discretized line rephases spuriously.
    pub fn comb_revival(&self) -> f64 {
        let spacing = 2.0 * self.half_span / self.n_bins as f64;
        2.0 * std::f64::consts::PI / spacing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingSpec {
    /// Every spin couples with `gens / sqrt(N)`.
    Homogeneous,
    /// Log-binned histogram of the waveguide field over the crystal.
    Geometry {
        n_bins: usize,
        nx: usize,
        ny: usize,
        #[serde(default)]
        geometry: WaveguideGeometry,
    },
    /// Explicit histogram (rad/s, mass).
    Bins { bins: Vec<CouplingBin> },
}

impl Default for CouplingSpec {
    fn default() -> Self {
        CouplingSpec::Geometry { n_bins: 7, nx: 200, ny: 200, geometry: WaveguideGeometry::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub params: PhysicalParams,
    pub frequency: FrequencySpec,
    pub coupling: CouplingSpec,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::reference()
    }
}

/// A model together with the distributions it was built from.
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: EnsembleModel,
    pub freq: FrequencyBins,
    pub coupling: Vec<CouplingBin>,
}

impl ModelSpec {
    /// Inhomogeneous coupling from the waveguide geometry.
    pub fn reference() -> Self {
        Self { params: PhysicalParams::reference(), frequency: FrequencySpec::default(), coupling: CouplingSpec::default() }
    }

    pub fn homogeneous() -> Self {
        Self { coupling: CouplingSpec::Homogeneous, ..Self::reference() }
    }

    pub fn line(&self) -> FrequencyLine {
        FrequencyLine::from_params(&self.params)
    }

    pub fn build(&self) -> Result<BuiltModel> {
        let f = &self.frequency;
        if f.tail_policy == TailPolicy::Drop {
            return Err(Error::InvalidModel("dropped tails leave the frequency weights unnormalized".into()));
        }
        let freq = frequency_bins(&self.line(), f.n_bins, f.half_span, f.tail_policy, f.max_tail)?;
        let coupling = match &self.coupling {
            CouplingSpec::Homogeneous => vec![CouplingBin { g: self.params.gbar(), mass: 1.0 }],
            CouplingSpec::Geometry { n_bins, nx, ny, geometry } => coupling_histogram(geometry, self.params.omega_c, *n_bins, *nx, *ny)?,
            CouplingSpec::Bins { bins } => bins.clone(),
        };
        let c = match self.coupling {
            CouplingSpec::Homogeneous => Coupling::Homogeneous,
            _ => Coupling::Bins(coupling.clone()),
        };
        let model = build_model(&self.params, &c, &freq.bins)?;
        Ok(BuiltModel { model, freq, coupling })
    }
}

/// Runs `f` over `items` on up to `workers` threads, keeping the order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Gain, noise and inversion figures of one calibrated protocol.
#[derive(Debug, Clone)]
pub struct SingleModeReport {
    pub fit: GainFit,
    pub inputs: Vec<Complex64>,
    pub outputs: Vec<Complex64>,
    /// Retrieved `2 sigma^2` for vacuum input, when noise was computed.
    pub var_sum: Option<f64>,
    pub fidelity: Option<QubitFidelity>,
    /// Effective excitation halfway between the two pulses.
    pub p_exc_eff_mid: f64,
    /// Effective excitation at the end of the protocol.
    pub p_exc_eff_end: f64,
    /// Vacuum-input run.
    pub vacuum: MemoryRun,
}

/// Stores each input, fits the linear map and, with `noise`, carries the
/// retrieved covariance of the vacuum run through the adjoint pass.
pub fn single_mode(prepared: &PreparedProtocol, inputs: &[Complex64], noise: bool, sample_stride: usize, workers: usize) -> Result<SingleModeReport> {
    let zero = Complex64::new(0.0, 0.0);
    let vac_idx = inputs
        .iter()
        .position(|z| z.norm() == 0.0)
        .ok_or_else(|| Error::DegenerateFit("input grid lacks the vacuum".into()))?;
    let runs: Vec<Result<MemoryRun>> = parallel_map(inputs, workers, |a| {
        let mode = if noise && *a == zero { Mode::Adjoint } else { Mode::MeansOnly };
        prepared.run(*a, &IntegrateOptions { mode, sample_stride, ..IntegrateOptions::default() })
    });
    let runs: Vec<MemoryRun> = runs.into_iter().collect::<Result<_>>()?;
    let outputs: Vec<Complex64> = runs.iter().map(|r| r.alpha_out).collect();
    let fit = fit_gain(inputs, &outputs)?;
    let vacuum = runs.into_iter().nth(vac_idx).expect("index from position");
    let var_sum = if noise { vacuum.var_sum() } else { None };
    let fidelity = match var_sum {
        Some(v) => Some(qubit_fidelity(fit.gain.min(1.0), v.max(1.0))?),
        None => None,
    };
    let (p_exc_eff_mid, p_exc_eff_end) = excitation_figures(prepared, &vacuum);
    Ok(SingleModeReport { fit, inputs: inputs.to_vec(), outputs, var_sum, fidelity, p_exc_eff_mid, p_exc_eff_end, vacuum })
}

/// `p_exc_eff` at the middle of the inter-pulse wait and at the end.
pub fn excitation_figures(prepared: &PreparedProtocol, run: &MemoryRun) -> (f64, f64) {
    let s = &run.trajectory.samples;
    let mid = prepared.timing.start(11) + 0.5 * prepared.timing.part(11);
    let at = |t: f64| s.iter().min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs())).map_or(f64::NAN, |x| x.p_exc_eff);
    (at(mid), s.last().map_or(f64::NAN, |x| x.p_exc_eff))
}

/// Cavity and dephasing factors of the approximate gain law
/// `G0 exp(-kappa_min (pi/(2 gens) + 2 T_chirp)) exp(-gamma_perp (T_mem - t_offset))`.
pub fn gain_scaling(params: &PhysicalParams, t_chirp: f64, t_mem: f64, t_offset: f64) -> (f64, f64) {
    let k = (-params.kappa_min * (std::f64::consts::PI / (2.0 * params.gens) + 2.0 * t_chirp)).exp();
    let g = (-params.gamma_perp * (t_mem - t_offset)).exp();
    (k, g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_spec_round_trips() {
        let s = ModelSpec::reference();
        let j = serde_json::to_string(&s).unwrap();
        let back: ModelSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let r: std::result::Result<FrequencySpec, _> = serde_json::from_str(r#"{"n_bins": 3, "bogus": 1}"#);
        assert!(r.is_err());
    }

    #[test]
    fn revival_spacing() {
        let f = FrequencySpec::default().with_revival_after(26e-6);
        assert!(f.n_bins % 2 == 1);
        assert!(f.comb_revival() >= 26e-6 * (1.0 - 1e-3));
        assert!(FrequencySpec::default().comb_revival() > 12e-6);
    }

    #[test]
    fn homogeneous_builds_one_coupling_class() {
        let mut s = ModelSpec::homogeneous();
        s.frequency.n_bins = 101;
        let b = s.build().unwrap();
        assert_eq!(b.coupling.len(), 1);
        assert_eq!(b.model.len(), 101);
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v: Vec<usize> = (0..17).collect();
        assert_eq!(parallel_map(&v, 4, |x| x * 2), v.iter().map(|x| x * 2).collect::<Vec<_>>());
    }

    #[test]
    fn scaling_factors_match_reference_estimates() {
        let p = PhysicalParams::reference();
        let (k, g) = gain_scaling(&p, 10e-9, 10e-6, 0.7e-6);
        assert!((k - 0.92).abs() < 0.01, "{k}");
        assert!((g - 0.91).abs() < 0.01, "{g}");
    }
}
