//! Floating-point scalar abstraction.
//!
//! All numerical machinery (tensors, layers, training, attacks) is generic
//! over [`Scalar`] so the same code runs in f32 for deployment-sized models
//! and in f64 where precision matters (finite-difference gradient checks).

use num_traits::{Float, FromPrimitive, NumAssignOps};

/// Floating-point scalar: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssignOps
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Convert an f64 constant into this scalar type (lossy for f32).
    fn cast(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 constant")
    }

    /// Widen to f64.
    fn into_f64(self) -> f64 {
        self.to_f64().expect("scalar widens to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
