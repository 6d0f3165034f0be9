// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

use num_complex::Complex64;
use num_rational::Ratio;
use proptest::prelude::*;
use spinmem::constants::hz;
use spinmem::distributions::{build_model, frequency_bins, Coupling, CouplingBin, FrequencyLine, TailPolicy};
use spinmem::dynamics::{integrate, IntegrateOptions, Mode};
use spinmem::fock::{gaussian_channel_apply, pure, quadrature_moments};
use spinmem::metrics::{check_covariance, fit_gain, qubit_fidelity};
use spinmem::model::init_state;
use spinmem::schedule::{min_feasible_t_mem, solve_timing, ControlSchedule, TimingConstants};
use spinmem::{EnsembleModel, PhysicalParams, SubEnsemble};

fn ns(v: i64) -> Ratio<i64> {
    Ratio::new(v, 1_000_000_000)
}

fn constants_ns() -> TimingConstants<Ratio<i64>> {
    TimingConstants { t_delta_p: ns(5), t_delta_t: ns(10), t_kappa: ns(10), t_pi: ns(1000), t_res: ns(1000) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn timing_identities_are_exact_in_rationals(t_swap in 20i64..200, t_cav in 10i64..100, extra in 0i64..20_000) {
        let c = constants_ns();
        let (ts, tc) = (ns(t_swap), ns(t_cav));
        let t_mem = min_feasible_t_mem(&ts, &tc, &c) + ns(extra);
        let t = solve_timing(t_mem, ts, tc, &c).unwrap();
        let sum: Ratio<i64> = t.t.iter().copied().sum();
        prop_assert_eq!(sum, t_mem);
        prop_assert_eq!(t.t[3], c.t_res + t.t[17]);
        prop_assert_eq!(t.t_echo, t_mem - tc * 2);
        prop_assert!(t.t.iter().all(|x| *x >= Ratio::from_integer(0)));
    }

    #[test]
    fn timing_below_minimum_is_infeasible(t_swap in 20i64..200, t_cav in 10i64..100, short in 1i64..1000) {
        let c = constants_ns();
        let (ts, tc) = (ns(t_swap), ns(t_cav));
        let t_mem = min_feasible_t_mem(&ts, &tc, &c) - ns(short);
        let infeasible = matches!(solve_timing(t_mem, ts, tc, &c), Err(spinmem::Error::InfeasibleTiming { .. }));
        prop_assert!(infeasible);
    }

    #[test]
    fn built_models_obey_sum_rules(
        masses in prop::collection::vec(0.01f64..1.0, 1..6),
        couplings in prop::collection::vec(1.0f64..100.0, 6),
        n_freq in (1usize..40).prop_map(|k| 2 * k + 1),
    ) {
        let p = PhysicalParams::reference();
        let total: f64 = masses.iter().sum();
        let bins: Vec<CouplingBin> = masses.iter().zip(&couplings).map(|(m, g)| CouplingBin { g: hz(*g), mass: m / total }).collect();
        let line = FrequencyLine::from_params(&p);
        let fb = frequency_bins(&line, n_freq, hz(70e6), TailPolicy::Renormalize, 1e-2).unwrap();
        let model = build_model(&p, &Coupling::Bins(bins.clone()), &fb.bins).unwrap();
        prop_assert_eq!(model.len(), bins.len() * n_freq);
        let n: f64 = model.subs().iter().map(|s| s.n).sum();
        let g2: f64 = model.subs().iter().map(|s| s.n * s.g * s.g).sum();
        prop_assert!((n / p.n_total - 1.0).abs() < 1e-9);
        prop_assert!((g2 / (p.gens * p.gens) - 1.0).abs() < 1e-9);
        // relative couplings survive the rescaling
        let r0 = model.subs()[0].g / bins[0].g;
        for (i, b) in bins.iter().enumerate() {
            prop_assert!((model.subs()[i * n_freq].g / b.g / r0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gain_fit_recovers_affine_map(gain in 0.05f64..1.5, phase in -3.1f64..3.1, off_re in -0.1f64..0.1, off_im in -0.1f64..0.1, rot in 0.0f64..std::f64::consts::TAU) {
        let c = Complex64::from_polar(gain, phase);
        let d = Complex64::new(off_re, off_im);
        let grid = spinmem::metrics::reference_grid();
        let outs: Vec<Complex64> = grid.iter().map(|a| c * a + d).collect();
        let f = fit_gain(&grid, &outs).unwrap();
        prop_assert!((f.offset[0] - d.re).abs() < 1e-12 && (f.offset[1] - d.im).abs() < 1e-12);
        prop_assert!(f.affine_residual < 1e-12);
        // a global input rotation leaves the gain unchanged
        let u = Complex64::from_polar(1.0, rot);
        let rotated: Vec<Complex64> = grid.iter().map(|a| a * u).collect();
        let outs2: Vec<Complex64> = rotated.iter().map(|a| c * a).collect();
        let f2 = fit_gain(&rotated, &outs2).unwrap();
        prop_assert!((f2.gain - gain).abs() < 1e-12);
        prop_assert!((Complex64::from_polar(1.0, f2.phase) - Complex64::from_polar(1.0, phase)).norm() < 1e-12);
    }
}

fn tiny_model(deltas: &[f64]) -> EnsembleModel {
    let p = PhysicalParams::reference();
    let n = p.n_total / deltas.len() as f64;
    let subs = deltas.iter().map(|d| SubEnsemble { g: p.gbar(), delta: hz(*d), n }).collect();
    EnsembleModel::new(subs, p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn fidelity_monotone(g in 0.1f64..0.95, dg in 0.01f64..0.05, v in 1.0f64..1.5, dv in 0.01f64..0.3) {
        let base = qubit_fidelity(g, v).unwrap();
        let better = qubit_fidelity(g + dg, v).unwrap();
        let noisier = qubit_fidelity(g, v + dv).unwrap();
        prop_assert!(better.six_state > base.six_state);
        prop_assert!(noisier.six_state < base.six_state);
        prop_assert!((base.six_state - base.haar).abs() < 1e-9);
        prop_assert!(base.six_state > 0.5 && base.six_state <= 1.0);
    }

    #[test]
    fn gaussian_channel_moments_are_affine(re in -1.0f64..1.0, im in -1.0f64..1.0, gain in 0.2f64..1.0, v_add in 0.0f64..0.3) {
        // coherent input; per-quadrature variance 1/2 in the a-units of the Fock code
        let dim = 24;
        let a = Complex64::new(re, im);
        let mut psi = vec![Complex64::new(0.0, 0.0); dim];
        let mut c = Complex64::new((-0.5 * a.norm_sqr()).exp(), 0.0);
        for (k, p) in psi.iter_mut().enumerate() {
            *p = c;
            c = c * a / ((k + 1) as f64).sqrt();
        }
        let out = gaussian_channel_apply(&pure(&psi, dim), gain, v_add).unwrap();
        let (mean, vx, vp) = quadrature_moments(&out);
        prop_assert!((mean - a * gain).norm() < 1e-6);
        let want = gain * gain * 0.5 + (1.0 - gain * gain) * 0.5 + v_add;
        prop_assert!((vx - want).abs() < 1e-6 && (vp - want).abs() < 1e-6, "{} {} {}", vx, vp, want);
    }

    #[test]
    fn full_covariance_stays_symmetric_and_positive(
        deltas in prop::collection::vec(-3e6f64..3e6, 1..5),
        alpha_re in -2.0f64..2.0,
        kappa in 1e5f64..1e7,
        detuning in -5e6f64..5e6,
    ) {
        let model = tiny_model(&deltas);
        let mut s = ControlSchedule::default();
        s.push(1, "free", 300e-9, 0.25e-9, (hz(detuning), hz(detuning)), (kappa, kappa));
        let s0 = init_state::<f64>(&model, Complex64::new(alpha_re, 0.0), true);
        let tr = integrate(&s0, &s, &model, &IntegrateOptions { mode: Mode::Full, ..IntegrateOptions::default() }).unwrap();
        let chk = check_covariance(&tr.final_state).unwrap();
        prop_assert_eq!(chk.max_asymmetry, 0.0);
        prop_assert!(chk.min_eigenvalue >= -1e-8 * chk.trace, "{:?}", chk);
        let v = tr.final_state.var_sum().unwrap();
        prop_assert!(v >= 1.0 - 1e-9, "{}", v);
    }

    #[test]
    fn adjoint_matches_full_at_the_end(deltas in prop::collection::vec(-3e6f64..3e6, 1..4), kappa in 1e5f64..1e7) {
        let model = tiny_model(&deltas);
        let mut s = ControlSchedule::default();
        s.push(1, "free", 200e-9, 0.25e-9, (0.0, 0.0), (kappa, kappa));
        let s0 = init_state::<f64>(&model, Complex64::new(0.0, 0.0), true);
        let full = integrate(&s0, &s, &model, &IntegrateOptions { mode: Mode::Full, ..IntegrateOptions::default() }).unwrap();
        let s1 = init_state::<f64>(&model, Complex64::new(0.0, 0.0), false);
        let adj = integrate(&s1, &s, &model, &IntegrateOptions { mode: Mode::Adjoint, ..IntegrateOptions::default() }).unwrap();
        let a = full.final_state.cavity_cov().unwrap();
        let b = adj.final_cavity_cov.unwrap();
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((a[i][j] - b[i][j]).abs() < 1e-9, "{:?} vs {:?}", a, b);
            }
        }
    }
}
