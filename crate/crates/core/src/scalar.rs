// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Scalar abstraction shared by the moment equations.
//!
//! The dynamics, the ensemble model and the integrator are written once over
//! [`Real`] and instantiated for `f64` (production) and `f32` (cheap sweeps).
//! Timing algebra only needs field operations and is written over
//! [`Field`], which additionally admits exact rationals.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, Num, ToPrimitive};

/// Floating-point scalar used by the simulator.
pub trait Real:
    Float
    + FloatConst
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    /// Converts a literal. Values outside the target range saturate.
    fn c(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn two() -> Self {
        Self::c(2.0)
    }

    fn half() -> Self {
        Self::c(0.5)
    }
}

impl Real for f64 {
    #[inline(always)]
    fn c(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline(always)]
    fn c(x: f64) -> Self {
        x as f32
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Ordered field: enough structure for the protocol timing algebra.
pub trait Field: Num + Clone + PartialOrd + Debug {
    fn from_i64(v: i64) -> Self;

    fn to_f64(&self) -> f64;
}

impl Field for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Field for f32 {
    fn from_i64(v: i64) -> Self {
        v as f32
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }
}

impl<I> Field for num_rational::Ratio<I>
where
    I: num_integer::Integer + Clone + Debug + TryFrom<i64> + ToPrimitive,
{
    fn from_i64(v: i64) -> Self {
        let i = I::try_from(v).unwrap_or_else(|_| panic!("integer {v} out of range"));
        num_rational::Ratio::from_integer(i)
    }

    fn to_f64(&self) -> f64 {
        let n = self.numer().to_f64().unwrap_or(f64::NAN);
        let d = self.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    }
}
