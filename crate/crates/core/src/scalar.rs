//! Scalar abstraction for the closed forms and recursions.
//!
//! Everything downstream is written against [`Real`] so the same code runs
//! in `f32` or `f64`. The crate root exposes `f64` aliases for the common
//! case; the reference tolerances quoted throughout the docs assume `f64`.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Bit pattern of the value, used to fingerprint canonical belief
    /// vectors in the oracle's memo table.
    fn pattern(self) -> u64;

    /// Conversion from an `f64` literal.
    fn val(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in this scalar type")
    }

    /// Lossy view as `f64`, for diagnostics and text output.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {
    fn pattern(self) -> u64 {
        u64::from(self.to_bits())
    }
}

impl Real for f64 {
    fn pattern(self) -> u64 {
        self.to_bits()
    }
}

/// Tolerance for probability-vector normalization checks.
pub fn prob_tol<S: Real>() -> S {
    S::val(1e-12)
}
