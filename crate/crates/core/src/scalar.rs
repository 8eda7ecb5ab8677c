//! Scalar abstraction for the numeric core.
//!
//! Every stage of the pipeline (assembly, time stepping, spectral analysis,
//! the classifier, the attack loop) is generic over a floating-point scalar so
//! the same code runs in f32 or f64. Persisted artifacts always store f64 and
//! convert on load.

use ndarray::LinalgScalar;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{Debug, Display, LowerExp};

/// Floating-point scalar usable throughout the crate.
///
/// Beyond the arithmetic supplied by `num_traits::Float`, implementors provide
/// seeded sampling hooks so noise generation stays generic, and conversions to
/// and from f64 for persistence.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + LinalgScalar
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Draws a standard normal sample from `rng`.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws a uniform sample in `[0, 1)` from `rng`.
    fn standard_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an f64 literal; panics only on values unrepresentable even
    /// approximately (never for ordinary constants).
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    /// Lossy widening to f64 for persistence and reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn standard_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen::<$t>()
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);
