//! Scalar abstraction for everything real-valued in the pipeline.
//!
//! Permanences, anomaly statistics, SVM arithmetic and simulated KPI values
//! are generic over [`Real`] so the whole stack runs in `f32` or `f64`.
//! Bit-level SDR math stays in integer types and is not affected.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used throughout the library.
///
/// Implemented for `f32` and `f64`. The serde bounds let models built on
/// either type round-trip through the persistence layer.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + core::fmt::Debug
    + core::fmt::Display
    + core::ops::AddAssign
    + core::ops::SubAssign
    + core::ops::MulAssign
    + Default
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Converts an `f64` constant. Panics only for values outside the
    /// target type's range, which never happens for the constants used here.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable")
    }

    /// Converts a count. Counts in this crate are far below 2^24 so the
    /// conversion is exact even for `f32`.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count not representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    fn half() -> Self {
        Self::of(0.5)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(f64::of_usize(288), 288.0);
        assert_eq!(0.25f64.as_f64(), 0.25);
        assert_eq!(f32::half(), 0.5);
    }
}
