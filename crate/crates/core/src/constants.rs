// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Physical constants (SI).

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const MU0: f64 = 1.256_637_062_12e-6;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum impedance in the rounded form used by the coplanar field series.
pub const VACUUM_IMPEDANCE: f64 = 376.7;
/// Electron g-factor of the NV spin.
pub const G_NV: f64 = 2.0;

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Converts a cyclic frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}

/// Converts an angular frequency in rad/s to Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TWO_PI
}
