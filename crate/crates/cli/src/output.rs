// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! File writers. Every float goes through [`fmt17`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use spinmem::constants::to_hz;
use spinmem::distributions::fmt17;
use spinmem::dynamics::TrajectorySample;
use spinmem::schedule::ControlSchedule;

use crate::error::CliError;

pub const TRAJECTORY_HEADER: [&str; 8] = ["t_s", "Xc", "Pc", "var_sum", "Sx_eff", "Sy_eff", "p_exc", "p_exc_eff"];

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes a CSV with the given header and rows of floats.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.into_iter().map(fmt17)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `var_sum` is NaN wherever the run carried no covariance.
pub fn write_trajectory(path: &Path, samples: &[TrajectorySample]) -> Result<(), CliError> {
    write_table(path, &TRAJECTORY_HEADER, samples.iter().map(|s| vec![s.t, s.xc, s.pc, s.var_sum, s.sx_eff, s.sy_eff, s.p_exc, s.p_exc_eff]))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn write_segments(path: &Path, schedule: &ControlSchedule) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record([
        "part",
        "label",
        "t0_s",
        "duration_s",
        "n_steps",
        "delta_cs_start_hz",
        "delta_cs_end_hz",
        "kappa_start_per_s",
        "kappa_end_per_s",
        "driven",
    ])
    .map_err(io)?;
    for s in &schedule.segments {
        w.write_record([
            s.part.to_string(),
            s.label.clone(),
            fmt17(s.t0),
            fmt17(s.duration),
            s.n_steps.to_string(),
            fmt17(to_hz(s.delta.0)),
            fmt17(to_hz(s.delta.1)),
            fmt17(s.kappa.0),
            fmt17(s.kappa.1),
            s.drive.is_some().to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// One stderr line per schedule segment with the largest recorded `|<a>|`.
pub fn log_segments(schedule: &ControlSchedule, samples: &[TrajectorySample]) {
    for s in &schedule.segments {
        let (t0, t1) = (s.t0, s.t1());
        let amp = samples
            .iter()
            .filter(|x| x.t >= t0 && x.t <= t1)
            .map(|x| (x.xc * x.xc + x.pc * x.pc).sqrt() / std::f64::consts::SQRT_2)
            .fold(0.0, f64::max);
        eprintln!(
            "segment part={:>2} {:<22} t0={:.6e} s dur={:.6e} s steps={:<7} max|a|={:.4e}",
            s.part, s.label, t0, s.duration, s.n_steps, amp
        );
    }
}
