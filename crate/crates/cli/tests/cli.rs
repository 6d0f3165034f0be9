// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

/// Coarse model that calibrates in seconds.
const SMALL: &str = r#"{
  "frequency": {"n_bins": 201},
  "coupling": {"kind": "homogeneous"},
  "integrator": {"mode": "means_only", "sample_stride": 2000},
  "metrics": {"inputs": [[0, 0], [1, 0], [0, 1], [-1, 1]]},
  "multimode": {"amplitudes": [[1, 0], [0, 0], [0.5, 0]], "min_comb_revival_s": 0}
}"#;

struct Run {
    out: PathBuf,
    output: Output,
}

impl Run {
    fn ok(self) -> Self {
        assert!(self.output.status.success(), "stdout: {}\nstderr: {}", self.stdout(), String::from_utf8_lossy(&self.output.stderr));
        self
    }

    fn stdout(&self) -> String {
        String::from_utf8_lossy(&self.output.stdout).into_owned()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn spinmem(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_spinmem"))
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env_remove("SPINMEM_WORKERS")
        .output()
        .expect("spawn spinmem");
    Run { out: out.to_path_buf(), output }
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn distribution_homogeneous_and_line_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"coupling": {"kind": "homogeneous"}}"#);
    let r = spinmem("distribution", &cfg, &dir.path().join("o"), &[]).ok();
    let c = csv_rows(&r.read("coupling_bins.csv"));
    assert_eq!(c[0], ["g_hz", "mass"]);
    assert_eq!(c.len(), 2);
    assert_eq!(c[1][1].parse::<f64>().unwrap(), 1.0);
    let f = csv_rows(&r.read("freq_bins.csv"));
    assert_eq!(f[0], ["delta_hz", "weight"]);
    assert_eq!(f.len(), 1822);
    let s = r.json("distribution.json");
    let coop = s["cooperativity"].as_f64().unwrap();
    assert!((coop - 0.38).abs() < 0.02, "C = {coop}");
    let peaks: Vec<f64> = s["peaks_hz"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(peaks.len(), 3, "{peaks:?}");
    for (p, want) in peaks.iter().zip([-2.2e6, 0.0, 2.2e6]) {
        assert!((p - want).abs() < 0.1e6, "{p}");
    }
}

#[test]
fn geometry_histogram_round_trips_through_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"frequency": {"n_bins": 201}, "coupling": {"kind": "geometry", "n_bins": 4, "nx": 30, "ny": 30}}"#);
    let r = spinmem("distribution", &cfg, &dir.path().join("a"), &[]).ok();
    std::fs::copy(r.out.join("coupling_bins.csv"), dir.path().join("hist.csv")).unwrap();
    let cfg2 = write_config(dir.path(), "h.json", r#"{"frequency": {"n_bins": 201}, "coupling": {"kind": "histogram", "path": "hist.csv"}}"#);
    let r2 = spinmem("distribution", &cfg2, &dir.path().join("b"), &[]).ok();
    let (a, b) = (csv_rows(&r.read("coupling_bins.csv")), csv_rows(&r2.read("coupling_bins.csv")));
    assert_eq!(a.len(), 5);
    for (x, y) in a.iter().zip(&b).skip(1) {
        for k in 0..2 {
            let (u, v): (f64, f64) = (x[k].parse().unwrap(), y[k].parse().unwrap());
            assert!((u - v).abs() <= 1e-12 * u.abs(), "{u} vs {v}");
        }
    }
    // the resolved config holds an absolute path
    let resolved = r2.json("resolved_config.json");
    assert!(Path::new(resolved["coupling"]["path"].as_str().unwrap()).is_absolute());
}

#[test]
fn monte_carlo_coupling_follows_the_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"frequency": {"n_bins": 101}, "coupling": {"kind": "monte_carlo", "n_bins": 4, "samples": 300}}"#);
    let a = spinmem("distribution", &cfg, &dir.path().join("a"), &["--seed", "7"]).ok();
    let b = spinmem("distribution", &cfg, &dir.path().join("b"), &["--seed", "7"]).ok();
    let c = spinmem("distribution", &cfg, &dir.path().join("c"), &["--seed", "8"]).ok();
    assert_eq!(a.read("coupling_bins.csv"), b.read("coupling_bins.csv"));
    assert_ne!(a.read("coupling_bins.csv"), c.read("coupling_bins.csv"));
    assert_eq!(a.json("resolved_config.json")["seed"], 7);
}

#[test]
fn schedule_emits_timing_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let r = spinmem("schedule", &cfg, &dir.path().join("o"), &[]).ok();
    let t = r.json("timing.json");
    let parts = t["T"].as_array().unwrap();
    assert_eq!(parts.len(), 21);
    let total: f64 = parts.iter().map(|v| v.as_f64().unwrap()).sum();
    assert!(total > t["T_mem"].as_f64().unwrap());
    for k in ["T_echo", "T_cav_eff", "T_mem"] {
        assert!(t[k].is_f64(), "{k}");
    }
    assert_eq!(csv_rows(&r.read("schedule.csv")).len(), 22);
    assert!(r.stderr().lines().filter(|l| l.starts_with("segment")).count() == 21);
}

#[test]
fn means_only_run_is_deterministic_and_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let a = spinmem("run", &cfg, &dir.path().join("a"), &[]).ok();
    let b = spinmem("run", &cfg, &dir.path().join("b"), &[]).ok();
    let resolved = dir.path().join("a").join("resolved_config.json");
    let c = spinmem("run", &resolved, &dir.path().join("c"), &[]).ok();
    for name in ["trajectory.csv", "summary.json", "resolved_config.json"] {
        assert_eq!(a.read(name), b.read(name), "{name}");
        assert_eq!(a.read(name), c.read(name), "{name}");
    }
    let rows = csv_rows(&a.read("trajectory.csv"));
    assert_eq!(rows[0], ["t_s", "Xc", "Pc", "var_sum", "Sx_eff", "Sy_eff", "p_exc", "p_exc_eff"]);
    assert!(rows.len() > 10);
    assert!(rows[1..].iter().all(|r| r[3] == "NaN"));
    // 17 significant digits
    assert!(rows[2][0].split('e').next().unwrap().len() >= 18, "{}", rows[2][0]);
    let s = a.json("summary.json");
    assert!(s["metrics"]["var_sum"].is_null());
    assert!(s["metrics"]["gain"].as_f64().unwrap() > 0.1);
    assert!(s["timing"]["T"].as_array().unwrap().len() == 21);
}

#[test]
fn calibration_is_cached() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let cache = dir.path().join("cache.json");
    let cache_arg = cache.to_str().unwrap();
    let a = spinmem("schedule", &cfg, &dir.path().join("a"), &["--cache", cache_arg]).ok();
    assert!(!a.stderr().contains("(cached)"));
    let b = spinmem("schedule", &cfg, &dir.path().join("b"), &["--cache", cache_arg]).ok();
    assert!(b.stderr().contains("(cached)"));
    assert_eq!(a.read("timing.json"), b.read("timing.json"));
    assert_eq!(a.read("calibration.json"), b.read("calibration.json"));
}

#[test]
fn metrics_with_noise_and_workers() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", &SMALL.replace("means_only", "adjoint"));
    let one = spinmem("metrics", &cfg, &dir.path().join("a"), &["--workers", "1"]).ok();
    let out = dir.path().join("b");
    let output = Command::new(env!("CARGO_BIN_EXE_spinmem"))
        .args(["metrics", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("SPINMEM_WORKERS", "3")
        .output()
        .unwrap();
    let three = Run { out, output }.ok();
    assert!(three.stderr().contains("workers=3"));
    assert_eq!(one.read("metrics.json"), three.read("metrics.json"));
    assert_eq!(one.read("io_table.csv"), three.read("io_table.csv"));
    let m = one.json("metrics.json");
    for k in ["gain", "phase", "var_sum", "fq", "p_exc_eff_mid", "p_exc_eff_end"] {
        assert!(m[k].is_f64(), "{k}: {m}");
    }
    assert!(m["var_sum"].as_f64().unwrap() >= 1.0 - 1e-6);
    let rows = csv_rows(&one.read("io_table.csv"));
    assert_eq!(rows[0], ["re_in", "im_in", "re_out", "im_out", "sigma"]);
    assert_eq!(rows.len(), 5);
}

#[test]
fn multimode_writes_cross_talk_matrix() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL);
    let r = spinmem("multimode", &cfg, &dir.path().join("o"), &[]).ok();
    let rows = csv_rows(&r.read("cross_talk.csv"));
    assert_eq!(rows[0], ["slot_out", "slot_in", "re", "im", "abs"]);
    assert_eq!(rows.len(), 10);
    let s = r.json("multimode.json");
    assert_eq!(s["modes"].as_array().unwrap().len(), 3);
    assert!(s["cross_talk_max"].is_f64());
    assert!(csv_rows(&r.read("trajectory.csv")).len() > 10);
}

#[test]
fn oracle_report_within_tolerance() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{}");
    let r = spinmem("oracle", &cfg, &dir.path().join("o"), &[]).ok();
    let rep = r.json("oracle_report.json");
    assert_eq!(rep["within_tolerance"], true, "{rep}");
    assert!(rep["max_relative_mean_error"].as_f64().unwrap() < 0.02);
    let inv = &rep["inversion"];
    assert!(inv["sz_oracle"].as_f64().unwrap() > 0.0, "{inv}");
    assert!(inv["abs_error"].is_f64());
    assert!(csv_rows(&r.read("oracle_trajectory.csv")).len() > 3);
}

#[test]
fn unknown_key_fails_with_error_json() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"physics": {"gens_hz": 3.5e6, "typo_hz": 1}}"#);
    let r = spinmem("run", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.output.status.code(), Some(1));
    let v: Value = serde_json::from_str(r.stdout().trim()).unwrap();
    assert_eq!(v["error"]["kind"], "config");
    assert!(v["error"]["message"].as_str().unwrap().contains("typo_hz"));
}

#[test]
fn module_errors_are_reported_by_kind() {
    let dir = TempDir::new().unwrap();
    // a 2 MHz span leaves most of the line outside the bins
    let cfg = write_config(dir.path(), "c.json", r#"{"frequency": {"n_bins": 21, "half_span_hz": 2e6}, "coupling": {"kind": "homogeneous"}}"#);
    let r = spinmem("distribution", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.output.status.code(), Some(1));
    let v: Value = serde_json::from_str(r.stdout().trim()).unwrap();
    assert_eq!(v["error"]["kind"], "span_too_small");
}

#[test]
fn full_mode_refused_on_large_models() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"frequency": {"n_bins": 201}, "coupling": {"kind": "homogeneous"}, "integrator": {"mode": "full", "max_full_subensembles": 50}}"#,
    );
    let r = spinmem("run", &cfg, &dir.path().join("o"), &[]);
    assert_eq!(r.output.status.code(), Some(1));
    let v: Value = serde_json::from_str(r.stdout().trim()).unwrap();
    assert_eq!(v["error"]["kind"], "config");
}
