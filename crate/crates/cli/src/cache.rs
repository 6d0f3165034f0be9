// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Sidecar cache of protocol calibrations, keyed by a SHA-256 of the config
//! subset the calibration depends on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};
use spinmem::protocol::Calibration;

use crate::config::{Coupling, Frequency, RunConfig};
use crate::error::CliError;

const FORMAT: u32 = 1;

pub struct CalibrationCache {
    path: PathBuf,
    entries: BTreeMap<String, Calibration>,
}

impl CalibrationCache {
    /// Opens `path`; a missing file is an empty cache.
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let entries = match std::fs::read_to_string(path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| CliError::Io(format!("cache {}: {e}", path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Self { path: path.to_path_buf(), entries })
    }

    pub fn get(&self, key: &str) -> Option<Calibration> {
        self.entries.get(key).copied()
    }

    pub fn insert(&mut self, key: String, cal: Calibration) -> Result<(), CliError> {
        self.entries.insert(key, cal);
        let text = serde_json::to_string_pretty(&self.entries)? + "\n";
        std::fs::write(&self.path, text)?;
        Ok(())
    }
}

/// Hash of everything that changes `T_swap`, the pulse amplitudes or
/// `T_cav^eff`. `frequency` is the grid actually used.
pub fn calibration_key(cfg: &RunConfig, frequency: &Frequency) -> Result<String, CliError> {
    let coupling = match &cfg.coupling {
        // the file content matters, not where it lives
        Coupling::Histogram { path } => {
            let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            json!({ "kind": "histogram", "sha256": format!("{:x}", Sha256::digest(&bytes)) })
        }
        other => serde_json::to_value(other)?,
    };
    let seed = matches!(cfg.coupling, Coupling::MonteCarlo { .. }).then_some(cfg.seed);
    let subset = json!({
        "format": FORMAT,
        "physics": cfg.physics,
        "frequency": frequency,
        "coupling": coupling,
        "seed": seed,
        "protocol": cfg.protocol,
    });
    Ok(format!("{:x}", Sha256::digest(subset.to_string().as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_ignores_unrelated_sections() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.integrator.sample_stride += 1;
        b.seed = 99;
        b.metrics.inputs.pop();
        assert_eq!(calibration_key(&a, &a.frequency).unwrap(), calibration_key(&b, &b.frequency).unwrap());
        b.protocol.t_mem_s *= 2.0;
        assert_ne!(calibration_key(&a, &a.frequency).unwrap(), calibration_key(&b, &b.frequency).unwrap());
    }

    #[test]
    fn seed_enters_only_for_sampled_couplings() {
        let mut a = RunConfig { coupling: Coupling::MonteCarlo { n_bins: 3, samples: 10, geometry: Default::default() }, ..RunConfig::default() };
        let k0 = calibration_key(&a, &a.frequency).unwrap();
        a.seed = 5;
        assert_ne!(k0, calibration_key(&a, &a.frequency).unwrap());
    }

    #[test]
    fn entries_persist() {
        let dir = std::env::temp_dir().join(format!("spinmem-cache-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("cache.json");
        let _ = std::fs::remove_file(&p);
        let cal = Calibration { t_swap: Some(7.29e-8), a_max: Some([1.5, 2.5]), t_cav_eff: Some(3.4e-8) };
        CalibrationCache::open(&p).unwrap().insert("k".into(), cal).unwrap();
        assert_eq!(CalibrationCache::open(&p).unwrap().get("k"), Some(cal));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
