// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Coupling-strength and resonance-frequency distributions, and their
//! discretization into an [`EnsembleModel`].

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, G_NV, HBAR, MU0, SPEED_OF_LIGHT, TWO_PI, VACUUM_IMPEDANCE};
use crate::error::{Error, Result};
use crate::model::{EnsembleModel, PhysicalParams, SubEnsemble};

/// Relative size of the truncated tail of the field series that counts as
/// converged.
pub const SERIES_TOL: f64 = 1e-8;

/// Coplanar waveguide cross-section and crystal region, SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveguideGeometry {
    pub s_center: f64,
    pub w_gap: f64,
    pub b: f64,
    pub epsilon_r: f64,
    pub z0_ohms: f64,
    pub length_l: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Crystal extends over `|x| <= x_half_width`.
    pub x_half_width: f64,
}

impl Default for WaveguideGeometry {
    fn default() -> Self {
        Self {
            s_center: 10e-6,
            w_gap: 5e-6,
            b: 300e-6,
            epsilon_r: 11.7,
            z0_ohms: 50.0,
            length_l: 0.02,
            y_min: 0.5e-6,
            y_max: 40e-6,
            x_half_width: 150e-6,
        }
    }
}

impl WaveguideGeometry {
    pub fn eps_eff(&self) -> f64 {
        0.5 * (self.epsilon_r + 1.0)
    }

    pub fn delta(&self) -> f64 {
        self.w_gap / self.b
    }

    pub fn delta_bar(&self) -> f64 {
        (self.s_center + self.w_gap) / self.b
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.delta();
        let db = self.delta_bar();
        if !(d > 0.0 && d < 1.0 && db > 0.0 && db < 1.0) {
            return Err(Error::InvalidParameter(format!("geometry ratios W/b = {d}, (S+W)/b = {db} must lie in (0,1)")));
        }
        if self.epsilon_r < 1.0 || self.z0_ohms <= 0.0 {
            return Err(Error::InvalidParameter("epsilon_r >= 1 and z0 > 0 required".into()));
        }
        if !(self.y_min > 0.0 && self.y_max > self.y_min && self.x_half_width > 0.0) {
            return Err(Error::InvalidParameter("crystal region must satisfy 0 < y_min < y_max, x_half_width > 0".into()));
        }
        Ok(())
    }

    fn gamma_n(&self, n: f64, omega_c: f64) -> f64 {
        let a = n * PI / self.b;
        let c = 4.0 * PI * SPEED_OF_LIGHT * self.b * (self.eps_eff() - 1.0).sqrt() / (n * omega_c);
        (a * a + c * c).sqrt()
    }
}

/// Zero-point rms voltage at the end of a half-wave resonator.
pub fn zero_point_voltage(omega_c: f64, z0: f64) -> f64 {
    omega_c * (HBAR * z0 / PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldValue {
    pub bx: f64,
    pub by: f64,
    /// Upper bound on the dropped tail relative to the summed envelope.
    pub tail_bound: f64,
    pub terms: usize,
}

impl FieldValue {
    pub fn converged(&self) -> bool {
        self.tail_bound <= SERIES_TOL
    }

    pub fn perp(&self) -> f64 {
        self.bx.hypot(self.by)
    }
}

/// Partial sums of the coplanar field series through `n_terms`.
pub fn waveguide_field(x: f64, y: f64, geom: &WaveguideGeometry, v0: f64, omega_c: f64, n_terms: usize) -> Result<FieldValue> {
    if !(y > 0.0) {
        return Err(Error::InvalidParameter(format!("y = {y} must be positive")));
    }
    if n_terms == 0 {
        return Err(Error::InvalidParameter("n_terms must be >= 1".into()));
    }
    let pref = -2.0 * MU0 * v0 / (VACUUM_IMPEDANCE * geom.b) * geom.eps_eff().sqrt();
    let (d, db) = (geom.delta(), geom.delta_bar());
    let rot = Complex64::from_polar(1.0, PI * x / geom.b);
    let mut phase = Complex64::new(1.0, 0.0);
    let (mut sx, mut sy, mut env_sum) = (0.0, 0.0, 0.0);
    let mut last_env = 0.0;
    for n in 1..=n_terms {
        phase *= rot;
        let nf = n as f64;
        let arg = nf * PI * d / 2.0;
        let coef = arg.sin() / arg * (nf * PI * db / 2.0).sin();
        let gam = geom.gamma_n(nf, omega_c);
        let decay = (-gam * y).exp();
        let f_n = geom.b * gam / (nf * PI);
        sx += coef / f_n * phase.re * decay;
        sy += coef * phase.im * decay;
        last_env = decay / arg.abs().max(1.0);
        env_sum += last_env;
    }
    // Envelope decays at least geometrically with ratio exp(-pi y / b).
    let q = (-PI * y / geom.b).exp();
    let tail = last_env * q / (1.0 - q);
    Ok(FieldValue {
        bx: pref * sx,
        by: pref * sy,
        tail_bound: if env_sum > 0.0 { tail / env_sum } else { 0.0 },
        terms: n_terms,
    })
}

/// Number of series terms whose tail bound falls below [`SERIES_TOL`] at
/// height `y`.
pub fn terms_needed(y: f64, geom: &WaveguideGeometry) -> usize {
    let k = PI * y / geom.b;
    // envelope ~ exp(-k n)/(n pi delta/2); require it below tol * (1 - e^-k)
    let q = (-k).exp();
    let target = SERIES_TOL * (1.0 - q) * 1e-2;
    let n = (-target.ln() / k).ceil() + 1.0;
    (n as usize).clamp(16, 2_000_000)
}

/// Single-spin coupling `g = g_NV mu_B |dB_perp| / (sqrt 2 hbar)` at the
/// resonator midpoint, rad/s.
pub fn coupling_constant(x: f64, y: f64, geom: &WaveguideGeometry, omega_c: f64) -> Result<f64> {
    if y < geom.y_min || y > geom.y_max || x.abs() > geom.x_half_width {
        return Err(Error::OutsideCrystal { x, y });
    }
    let v0 = zero_point_voltage(omega_c, geom.z0_ohms);
    let f = waveguide_field(x, y, geom, v0, omega_c, terms_needed(y, geom))?;
    if !f.converged() {
        return Err(Error::NonConvergence { terms: f.terms, ratio: f.tail_bound });
    }
    Ok(G_NV * BOHR_MAGNETON * f.perp() / (std::f64::consts::SQRT_2 * HBAR))
}

/// One coupling class: representative g (rad/s) and spin fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingBin {
    pub g: f64,
    pub mass: f64,
}

/// Coupling classes over `n_bins` log-spaced g intervals. Each class keeps
/// the fraction of spins it holds and its rms coupling, so `mass * g^2`
/// equals the quadrature of `rho(g) g^2` over the interval.
pub fn bin_couplings(samples: &[(f64, f64)], edges: &[f64]) -> Vec<CouplingBin> {
    let nb = edges.len() - 1;
    let mut w = vec![0.0; nb];
    let mut wg2 = vec![0.0; nb];
    let total: f64 = samples.iter().filter(|s| s.0 > 0.0).map(|s| s.1).sum();
    for &(g, weight) in samples {
        if g <= 0.0 {
            continue;
        }
        let k = match edges.iter().rposition(|e| g >= *e) {
            Some(k) => k.min(nb - 1),
            None => 0,
        };
        w[k] += weight;
        wg2[k] += weight * g * g;
    }
    (0..nb)
        .filter(|&k| w[k] > 0.0)
        .map(|k| CouplingBin { g: (wg2[k] / w[k]).sqrt(), mass: w[k] / total })
        .collect()
}

fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..=n).map(|i| (a + (b - a) * i as f64 / n as f64).exp()).collect()
}

/// Coupling map on a midpoint grid over the crystal cross-section. Returns
/// `(g, area weight)` per cell.
pub fn coupling_grid(geom: &WaveguideGeometry, omega_c: f64, nx: usize, ny: usize) -> Result<Vec<(f64, f64)>> {
    geom.validate()?;
    let hx = 2.0 * geom.x_half_width / nx as f64;
    let hy = (geom.y_max - geom.y_min) / ny as f64;
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = geom.y_min + (j as f64 + 0.5) * hy;
        for i in 0..nx {
            let x = -geom.x_half_width + (i as f64 + 0.5) * hx;
            out.push((coupling_constant(x, y, geom, omega_c)?, hx * hy));
        }
    }
    Ok(out)
}

/// Deterministic coupling histogram from grid quadrature.
pub fn coupling_histogram(geom: &WaveguideGeometry, omega_c: f64, n_bins: usize, nx: usize, ny: usize) -> Result<Vec<CouplingBin>> {
    let grid = coupling_grid(geom, omega_c, nx, ny)?;
    histogram_from_samples(&grid, n_bins)
}

/// Log-spaced histogram over the sampled coupling range.
pub fn histogram_from_samples(samples: &[(f64, f64)], n_bins: usize) -> Result<Vec<CouplingBin>> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("n_bins must be >= 1".into()));
    }
    let positive = samples.iter().map(|s| s.0).filter(|g| *g > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0, f64::max);
    if !(lo.is_finite() && hi > 0.0) {
        return Err(Error::EmptyDistribution("no positive couplings".into()));
    }
    Ok(bin_couplings(samples, &log_edges(lo, hi * (1.0 + 1e-12), n_bins)))
}

/// Monte-Carlo estimate with uniform spin positions on given bin edges.
pub fn coupling_histogram_mc(geom: &WaveguideGeometry, omega_c: f64, edges: &[f64], samples: usize, seed: u64) -> Result<Vec<CouplingBin>> {
    geom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = rng.random_range(-geom.x_half_width..geom.x_half_width);
        let y = rng.random_range(geom.y_min..geom.y_max);
        pts.push((coupling_constant(x, y, geom, omega_c)?, 1.0));
    }
    Ok(bin_couplings(&pts, edges))
}

/// Log-spaced edges used by [`histogram_from_samples`].
pub fn histogram_edges(samples: &[(f64, f64)], n_bins: usize) -> Vec<f64> {
    let positive = samples.iter().map(|s| s.0).filter(|g| *g > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0, f64::max);
    log_edges(lo, hi * (1.0 + 1e-12), n_bins)
}

/// Triple-Lorentzian hyperfine line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyLine {
    pub w: f64,
    pub delta_hfs: f64,
    pub gamma_perp: f64,
}

impl FrequencyLine {
    pub fn from_params(p: &PhysicalParams) -> Self {
        Self { w: p.w, delta_hfs: p.delta_hfs, gamma_perp: p.gamma_perp }
    }

    pub fn density(&self, d: f64) -> f64 {
        let h2 = 0.25 * self.w * self.w;
        let l = |x: f64| 1.0 / (x * x + h2);
        self.w / (6.0 * PI) * (l(d - self.delta_hfs) + l(d) + l(d + self.delta_hfs))
    }

    pub fn cdf(&self, d: f64) -> f64 {
        let h = 0.5 * self.w;
        let at = |x: f64| (x / h).atan();
        0.5 + (at(d - self.delta_hfs) + at(d) + at(d + self.delta_hfs)) / (3.0 * PI)
    }

    /// Closed-form free-induction-decay envelope relative to `t = 0`.
    pub fn fid_envelope(&self, t: f64) -> f64 {
        (1.0 + 2.0 * (self.delta_hfs * t).cos()) / 3.0 * (-(self.gamma_perp + 0.5 * self.w) * t).exp()
    }
}

pub fn characteristic_width(line: &FrequencyLine) -> f64 {
    let a = line.gamma_perp + 0.5 * line.w;
    let h2 = line.delta_hfs * line.delta_hfs;
    a * (a * a + h2) / (a * a + h2 / 3.0)
}

/// Treatment of line mass outside the binned span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Scale all weights to sum to one.
    #[default]
    Renormalize,
    /// Add each side's tail to its outermost bin.
    Fold,
    /// Keep raw bin integrals.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqBin {
    pub delta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBins {
    pub bins: Vec<FreqBin>,
    /// Line mass outside the span before any tail treatment.
    pub tail_mass: f64,
}

/// Equal-width bins over `[-half_span, half_span]` with bin-integrated
/// weights.
pub fn frequency_bins(line: &FrequencyLine, n_bins: usize, half_span: f64, policy: TailPolicy, max_tail: f64) -> Result<FrequencyBins> {
    if n_bins == 0 || n_bins.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("n_bins = {n_bins} must be odd")));
    }
    if !(half_span > 0.0) {
        return Err(Error::InvalidParameter("span must be positive".into()));
    }
    let width = 2.0 * half_span / n_bins as f64;
    let mid = (n_bins / 2) as f64;
    let mut bins: Vec<FreqBin> = (0..n_bins)
        .map(|i| {
            let c = (i as f64 - mid) * width;
            FreqBin { delta: c, weight: line.cdf(c + 0.5 * width) - line.cdf(c - 0.5 * width) }
        })
        .collect();
    let lower = line.cdf(-half_span);
    let upper = 1.0 - line.cdf(half_span);
    let tail_mass = lower + upper;
    if tail_mass > max_tail {
        return Err(Error::SpanTooSmall { tail: tail_mass, limit: max_tail });
    }
    match policy {
        TailPolicy::Renormalize => {
            let s: f64 = bins.iter().map(|b| b.weight).sum();
            bins.iter_mut().for_each(|b| b.weight /= s);
        }
        TailPolicy::Fold => {
            bins[0].weight += lower;
            bins[n_bins - 1].weight += upper;
        }
        TailPolicy::Drop => {}
    }
    Ok(FrequencyBins { bins, tail_mass })
}

/// Coupling input to [`build_model`].
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Homogeneous,
    Bins(Vec<CouplingBin>),
}

/// Product discretization: one sub-ensemble per (coupling bin, frequency
/// bin). Couplings are rescaled so that `sum n g^2 = gens^2`.
pub fn build_model(params: &PhysicalParams, coupling: &Coupling, freq: &[FreqBin]) -> Result<EnsembleModel> {
    let cbins = match coupling {
        Coupling::Homogeneous => vec![CouplingBin { g: params.gbar(), mass: 1.0 }],
        Coupling::Bins(b) => b.clone(),
    };
    if cbins.is_empty() || freq.is_empty() {
        return Err(Error::EmptyDistribution("no coupling or frequency bins".into()));
    }
    let mass: f64 = cbins.iter().map(|b| b.mass).sum();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("coupling masses sum to {mass}")));
    }
    let wsum: f64 = freq.iter().map(|b| b.weight).sum();
    if (wsum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("frequency weights sum to {wsum}")));
    }
    if cbins.iter().any(|b| b.mass <= 0.0 || b.g <= 0.0) {
        return Err(Error::EmptyDistribution("coupling bin with zero mass or coupling".into()));
    }
    let g2: f64 = cbins.iter().map(|b| b.mass * b.g * b.g).sum::<f64>() * params.n_total;
    let scale = params.gens / g2.sqrt();
    let mut subs = Vec::with_capacity(cbins.len() * freq.len());
    for cb in &cbins {
        for fb in freq {
            subs.push(SubEnsemble { g: cb.g * scale, delta: fb.delta, n: params.n_total * cb.mass * fb.weight });
        }
    }
    EnsembleModel::new(subs, params.clone())
}

pub fn write_coupling_csv<W: Write>(bins: &[CouplingBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["g_hz", "mass"]).map_err(csv_err)?;
    for b in bins {
        w.write_record([fmt17(b.g / TWO_PI), fmt17(b.mass)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_coupling_csv<R: Read>(input: R) -> Result<Vec<CouplingBin>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["g_hz", "mass"] {
        return Err(Error::Io(format!("coupling CSV header must be g_hz,mass, got {headers:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let g: f64 = parse_field(&rec, 0)?;
        let mass: f64 = parse_field(&rec, 1)?;
        out.push(CouplingBin { g: g * TWO_PI, mass });
    }
    Ok(out)
}

pub fn write_freq_csv<W: Write>(bins: &[FreqBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta_hz", "weight"]).map_err(csv_err)?;
    for b in bins {
        w.write_record([fmt17(b.delta / TWO_PI), fmt17(b.weight)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_field(rec: &csv::StringRecord, i: usize) -> Result<f64> {
    rec.get(i)
        .ok_or_else(|| Error::Io(format!("missing column {i}")))?
        .trim()
        .parse()
        .map_err(|e| Error::Io(format!("bad number: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Round-trip decimal with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::hz;

    fn line() -> FrequencyLine {
        FrequencyLine { w: hz(2e6), delta_hfs: hz(2.2e6), gamma_perp: 1e4 }
    }

    #[test]
    fn gamma_degenerates_without_splitting() {
        let l = FrequencyLine { delta_hfs: 0.0, ..line() };
        assert!((characteristic_width(&l) - (l.gamma_perp + l.w / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn cooperativity_reference() {
        let p = PhysicalParams::reference();
        let l = FrequencyLine { gamma_perp: 0.0, ..line() };
        let c = p.gens * p.gens / (p.kappa_max * characteristic_width(&l));
        assert!((c - 0.38).abs() < 0.01, "C = {c}");
    }

    #[test]
    fn gamma_monotone_in_splitting() {
        let mut prev = 0.0;
        for k in 0..50 {
            let l = FrequencyLine { delta_hfs: hz(0.1e6 * k as f64), ..line() };
            let g = characteristic_width(&l);
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn density_at_zero_matches_quadrature() {
        let l = line();
        let h = 1e2;
        let num = (l.cdf(h) - l.cdf(-h)) / (2.0 * h);
        assert!((num - l.density(0.0)).abs() / l.density(0.0) < 1e-6);
    }

    #[test]
    fn bins_symmetric_single_lorentzian() {
        let l = FrequencyLine { delta_hfs: 0.0, ..line() };
        let fb = frequency_bins(&l, 41, hz(12e6), TailPolicy::Renormalize, 0.1).unwrap();
        for i in 0..41 {
            assert!((fb.bins[i].weight - fb.bins[40 - i].weight).abs() < 1e-14);
        }
        assert_eq!(fb.bins[20].delta, 0.0);
    }

    #[test]
    fn bins_normalized() {
        let fb = frequency_bins(&line(), 201, hz(12e6), TailPolicy::Renormalize, 0.1).unwrap();
        let s: f64 = fb.bins.iter().map(|b| b.weight).sum();
        assert!((s - 1.0).abs() < 1e-3);
        let fold = frequency_bins(&line(), 201, hz(12e6), TailPolicy::Fold, 0.1).unwrap();
        let s: f64 = fold.bins.iter().map(|b| b.weight).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(frequency_bins(&line(), 201, hz(12e6), TailPolicy::Drop, 1e-2).is_err());
        assert!(frequency_bins(&line(), 200, hz(12e6), TailPolicy::Drop, 1.0).is_err());
    }

    #[test]
    fn far_field_vanishes() {
        let g = WaveguideGeometry::default();
        let f = waveguide_field(20e-6, 1e3 * g.b, &g, 1.0, hz(2.9e9), 50).unwrap();
        assert!(f.perp() < 1e-30);
    }

    #[test]
    fn by_vanishes_on_axis() {
        let g = WaveguideGeometry::default();
        let f = waveguide_field(0.0, 2e-6, &g, 1.0, hz(2.9e9), 3000).unwrap();
        assert_eq!(f.by, 0.0);
    }

    #[test]
    fn series_converges_at_cutoff() {
        let g = WaveguideGeometry::default();
        let wc = hz(2.9e9);
        for &(x, y) in &[(0.0, g.y_min), (12e-6, g.y_min), (7.5e-6, 3e-6), (100e-6, 39e-6)] {
            let n = terms_needed(y, &g);
            let a = waveguide_field(x, y, &g, 1.0, wc, n).unwrap();
            let b = waveguide_field(x, y, &g, 1.0, wc, 2 * n).unwrap();
            assert!(a.converged());
            let scale = a.perp().max(1e-300);
            assert!(((a.bx - b.bx).hypot(a.by - b.by)) / scale < 1e-8, "{x} {y}");
        }
    }

    #[test]
    fn coupling_scales_with_frequency() {
        let g = WaveguideGeometry::default();
        let a = coupling_constant(10e-6, 2e-6, &g, hz(2.9e9)).unwrap();
        let b = coupling_constant(10e-6, 2e-6, &g, hz(5.8e9)).unwrap();
        // gamma_n barely depends on omega_c, so g follows dV0.
        assert!((b / a - 2.0).abs() < 1e-6);
        assert!(coupling_constant(0.0, 0.4e-6, &g, hz(2.9e9)).is_err());
    }

    #[test]
    fn coupling_magnitude_near_gbar() {
        let g = WaveguideGeometry::default();
        let v = coupling_constant(10e-6, 5e-6, &g, hz(2.9e9)).unwrap();
        assert!(v > hz(1.0) && v < hz(1000.0), "g/2pi = {}", v / TWO_PI);
    }

    #[test]
    fn homogeneous_single_bin() {
        let p = PhysicalParams::reference();
        let m = build_model(&p, &Coupling::Homogeneous, &[FreqBin { delta: 0.0, weight: 1.0 }]).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.subs()[0].g - p.gens / p.n_total.sqrt()).abs() / m.subs()[0].g < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let bins = vec![CouplingBin { g: hz(10.0), mass: 0.25 }, CouplingBin { g: hz(31.5), mass: 0.75 }];
        let mut buf = Vec::new();
        write_coupling_csv(&bins, &mut buf).unwrap();
        let back = read_coupling_csv(buf.as_slice()).unwrap();
        for (a, b) in bins.iter().zip(&back) {
            assert!((a.g - b.g).abs() / a.g < 1e-15);
            assert_eq!(a.mass, b.mass);
        }
    }
}
