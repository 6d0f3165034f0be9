// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Run configuration. Frequencies in `*_hz` fields are cycles per second,
//! durations in `*_s` fields are seconds; conversion to angular units
//! happens here and nowhere else.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use spinmem::constants::hz;
use spinmem::distributions::{TailPolicy, WaveguideGeometry};
use spinmem::dynamics::Mode;
use spinmem::experiment::FrequencySpec;
use spinmem::metrics::reference_grid;
use spinmem::model::kappa_from_q;
use spinmem::protocol::{MultimodeConfig, ProtocolConfig, PulseCalibration, StepConfig};
use spinmem::PhysicalParams;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physics: Physics,
    pub frequency: Frequency,
    pub coupling: Coupling,
    pub protocol: Protocol,
    pub integrator: Integrator,
    pub metrics: Metrics,
    pub multimode: Multimode,
    pub oracle: Oracle,
    /// Seeds Monte-Carlo coupling sampling.
    pub seed: u64,
}

impl RunConfig {
    /// Parses a config file. Relative histogram paths are resolved against
    /// the file's directory so the resolved config is location independent.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Coupling::Histogram { path: p } = &mut cfg.coupling {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *p = base.join(&*p);
            }
            *p = std::fs::canonicalize(&*p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub gens_hz: f64,
    /// Lorentzian FWHM of each hyperfine line.
    pub w_hz: f64,
    pub delta_hfs_hz: f64,
    pub gamma_perp_per_s: f64,
    pub gamma_par_per_s: f64,
    pub q_high: f64,
    pub q_low: f64,
    pub cavity_hz: f64,
    pub delta_cs_target_hz: f64,
    pub delta_cs_parked_hz: f64,
    pub chirp_rate_hz_per_s: f64,
    pub p_peak_w: f64,
    /// Mean single-spin coupling; fixes `N = (gens / gbar)^2`.
    pub gbar_hz: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            gens_hz: 3.5e6,
            w_hz: 2.0e6,
            delta_hfs_hz: 2.2e6,
            gamma_perp_per_s: 1e4,
            gamma_par_per_s: 0.0,
            q_high: 1e4,
            q_low: 100.0,
            cavity_hz: 2.9e9,
            delta_cs_target_hz: 100e6,
            delta_cs_parked_hz: 50e6,
            chirp_rate_hz_per_s: 1e16,
            p_peak_w: 100e-6,
            gbar_hz: 12.5,
        }
    }
}

impl Physics {
    pub fn params(&self) -> PhysicalParams {
        let omega_c = hz(self.cavity_hz);
        PhysicalParams {
            gens: hz(self.gens_hz),
            w: hz(self.w_hz),
            delta_hfs: hz(self.delta_hfs_hz),
            gamma_perp: self.gamma_perp_per_s,
            gamma_par: self.gamma_par_per_s,
            kappa_min: kappa_from_q(omega_c, self.q_high),
            kappa_max: kappa_from_q(omega_c, self.q_low),
            omega_c,
            delta_cs_target: hz(self.delta_cs_target_hz),
            delta_cs_parked: hz(self.delta_cs_parked_hz),
            chirp_rate: hz(self.chirp_rate_hz_per_s),
            p_peak: self.p_peak_w,
            n_total: (self.gens_hz / self.gbar_hz).powi(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Frequency {
    pub n_bins: usize,
    pub half_span_hz: f64,
    pub tail_policy: TailPolicy,
    pub max_tail: f64,
}

impl Default for Frequency {
    fn default() -> Self {
        Self { n_bins: 1821, half_span_hz: 70e6, tail_policy: TailPolicy::Renormalize, max_tail: 1e-2 }
    }
}

impl Frequency {
    pub fn spec(&self) -> FrequencySpec {
        FrequencySpec { n_bins: self.n_bins, half_span: hz(self.half_span_hz), tail_policy: self.tail_policy, max_tail: self.max_tail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    Homogeneous,
    /// Grid quadrature of the waveguide coupling over the crystal.
    Geometry {
        n_bins: usize,
        nx: usize,
        ny: usize,
        #[serde(default)]
        geometry: WaveguideGeometry,
    },
    /// `g_hz,mass` CSV; only the shape matters after the sum-rule rescaling.
    Histogram { path: PathBuf },
    /// Uniformly sampled spin positions, drawn from `seed`.
    MonteCarlo {
        n_bins: usize,
        samples: usize,
        #[serde(default)]
        geometry: WaveguideGeometry,
    },
}

impl Default for Coupling {
    fn default() -> Self {
        Coupling::Geometry { n_bins: 7, nx: 200, ny: 200, geometry: WaveguideGeometry::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Steps {
    pub chirp_s: f64,
    pub pulse_s: f64,
    pub resonant_s: f64,
    pub parked_s: f64,
}

impl Default for Steps {
    fn default() -> Self {
        let s = StepConfig::default();
        Self { chirp_s: s.chirp, pulse_s: s.pulse, resonant_s: s.resonant, parked_s: s.parked }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Protocol {
    pub t_mem_s: f64,
    pub t_delta_p_s: f64,
    pub t_delta_t_s: f64,
    pub t_kappa_s: f64,
    pub t_pi_s: f64,
    pub t_res_s: f64,
    pub mu: f64,
    /// `mu * beta_sech / 2 pi`.
    pub sech_bandwidth_hz: f64,
    pub calibration: PulseCalibration,
    pub steps: Steps,
    pub revival_probe_extension_s: f64,
    pub kappa_tuning_limit: f64,
    pub tswap_tol_s: f64,
    pub t_cav_tol_s: f64,
}

impl Default for Protocol {
    fn default() -> Self {
        let p = ProtocolConfig::default();
        Self {
            t_mem_s: p.t_mem,
            t_delta_p_s: p.t_delta_p,
            t_delta_t_s: p.t_delta_t,
            t_kappa_s: p.t_kappa,
            t_pi_s: p.t_pi,
            t_res_s: p.t_res,
            mu: p.mu,
            sech_bandwidth_hz: 7.5e6,
            calibration: p.calibration,
            steps: Steps::default(),
            revival_probe_extension_s: p.revival_probe_extension,
            kappa_tuning_limit: p.kappa_tuning_limit,
            tswap_tol_s: p.tswap_tol,
            t_cav_tol_s: p.t_cav_tol,
        }
    }
}

impl Protocol {
    pub fn config(&self) -> ProtocolConfig {
        let s = &self.steps;
        ProtocolConfig {
            t_mem: self.t_mem_s,
            t_delta_p: self.t_delta_p_s,
            t_delta_t: self.t_delta_t_s,
            t_kappa: self.t_kappa_s,
            t_pi: self.t_pi_s,
            t_res: self.t_res_s,
            mu: self.mu,
            sech_bandwidth: hz(self.sech_bandwidth_hz),
            calibration: self.calibration,
            steps: StepConfig { chirp: s.chirp_s, pulse: s.pulse_s, resonant: s.resonant_s, parked: s.parked_s },
            revival_probe_extension: self.revival_probe_extension_s,
            kappa_tuning_limit: self.kappa_tuning_limit,
            tswap_tol: self.tswap_tol_s,
            t_cav_tol: self.t_cav_tol_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    /// First moments only; variance columns are NaN.
    MeansOnly,
    /// Means forward, readout covariances by the adjoint pass.
    Adjoint,
    /// Full covariance matrix; small models only.
    Full,
}

impl IntegratorMode {
    pub fn mode(self) -> Mode {
        match self {
            IntegratorMode::MeansOnly => Mode::MeansOnly,
            IntegratorMode::Adjoint => Mode::Adjoint,
            IntegratorMode::Full => Mode::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Integrator {
    pub mode: IntegratorMode,
    /// Steps between trajectory rows.
    pub sample_stride: usize,
    /// In adjoint mode, attach `var_sum` to every this many rows (0: none).
    pub cov_sample_every: usize,
    pub include_cov_coupling: bool,
    /// Full mode is refused above this many sub-ensembles.
    pub max_full_subensembles: usize,
}

impl Default for Integrator {
    fn default() -> Self {
        Self { mode: IntegratorMode::Adjoint, sample_stride: 200, cov_sample_every: 0, include_cov_coupling: false, max_full_subensembles: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Metrics {
    /// Input amplitudes `[re, im]`; must contain the vacuum.
    pub inputs: Vec<[f64; 2]>,
    /// Input whose trajectory `run` exports.
    pub trajectory_input: [f64; 2],
}

impl Default for Metrics {
    fn default() -> Self {
        Self { inputs: reference_grid().iter().map(|z| [z.re, z.im]).collect(), trajectory_input: [1.0, 0.0] }
    }
}

impl Metrics {
    pub fn inputs(&self) -> Vec<Complex64> {
        self.inputs.iter().map(|a| Complex64::new(a[0], a[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Multimode {
    pub t_mem_s: f64,
    pub spacing_s: f64,
    pub q_between: f64,
    pub amplitudes: Vec<[f64; 2]>,
    /// The frequency grid is refined until its comb revival lies beyond
    /// this time.
    pub min_comb_revival_s: f64,
}

impl Default for Multimode {
    fn default() -> Self {
        let m = MultimodeConfig::default();
        Self {
            t_mem_s: 12e-6,
            spacing_s: m.spacing,
            q_between: m.q_between,
            amplitudes: vec![[3.0, 0.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            min_comb_revival_s: 26e-6,
        }
    }
}

impl Multimode {
    pub fn config(&self) -> MultimodeConfig {
        MultimodeConfig { spacing: self.spacing_s, q_between: self.q_between }
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.amplitudes.iter().map(|a| Complex64::new(a[0], a[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Oracle {
    pub n_max: usize,
    /// Collective coupling `g sqrt(N)` of the few-spin system.
    pub collective_coupling_hz: f64,
    pub detunings_hz: Vec<f64>,
    pub gamma_perp_per_s: f64,
    pub gamma_par_per_s: f64,
    pub kappa_per_s: f64,
    pub alpha: [f64; 2],
    pub dt_s: f64,
    pub exchange_periods: f64,
    pub chunk_steps: usize,
    pub inversion: Inversion,
}

impl Default for Oracle {
    fn default() -> Self {
        Self {
            n_max: 5,
            collective_coupling_hz: 1e6,
            detunings_hz: vec![0.3e6, -0.2e6],
            gamma_perp_per_s: 1e5,
            gamma_par_per_s: 5e4,
            kappa_per_s: 3e5,
            alpha: [0.03, 0.0],
            dt_s: 0.5e-9,
            exchange_periods: 3.0,
            chunk_steps: 50,
            inversion: Inversion::default(),
        }
    }
}

/// One spin rotated by a resonant coherent cavity field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inversion {
    pub coupling_hz: f64,
    pub alpha: f64,
    pub n_max: usize,
    pub dt_s: f64,
}

impl Default for Inversion {
    fn default() -> Self {
        Self { coupling_hz: 1e6, alpha: 2.0, n_max: 20, dt_s: 0.1e-9 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_params() {
        let p = Physics::default().params();
        let r = PhysicalParams::reference();
        for (a, b) in [
            (p.gens, r.gens),
            (p.kappa_min, r.kappa_min),
            (p.kappa_max, r.kappa_max),
            (p.chirp_rate, r.chirp_rate),
            (p.n_total, r.n_total),
            (p.delta_cs_parked, r.delta_cs_parked),
        ] {
            assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
        }
        assert_eq!(Protocol::default().config(), ProtocolConfig::default());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for bad in [
            r#"{"bogus": 1}"#,
            r#"{"physics": {"gens": 1}}"#,
            r#"{"coupling": {"kind": "geometry", "n_bins": 3, "nx": 4, "ny": 4, "geometry": {"wrong": 1}}}"#,
            r#"{"protocol": {"steps": {"chirp": 1e-9}}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"frequency": {"n_bins": 41}, "coupling": {"kind": "homogeneous"}}"#).unwrap();
        assert_eq!(c.frequency.n_bins, 41);
        assert_eq!(c.frequency.half_span_hz, 70e6);
        assert_eq!(c.coupling, Coupling::Homogeneous);
    }
}
