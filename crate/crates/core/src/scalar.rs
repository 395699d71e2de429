//! Scalar abstraction for edge weights and distances.

use std::fmt::{Debug, Display};

use num_traits::float::FloatCore;
use num_traits::{FromPrimitive, ToPrimitive};
use ordered_float::OrderedFloat;

/// Floating-point weight type. Implemented for `f32` and `f64`.
///
/// Distances are sums of weights, so the type must be able to represent
/// infinity for unreachable pairs.
pub trait Weight:
    FloatCore + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Width in bytes of the little-endian snapshot encoding.
    const BYTES: u8;

    fn to_f64_lossless(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    fn from_usize_lossy(x: usize) -> Self {
        Self::from_usize(x).unwrap_or_else(Self::infinity)
    }
}

impl Weight for f32 {
    const BYTES: u8 = 4;
}

impl Weight for f64 {
    const BYTES: u8 = 8;
}

/// Hashable, totally ordered wrapper used as a map key for distance values.
pub type Key<W> = OrderedFloat<W>;

pub(crate) fn key<W: Weight>(w: W) -> Key<W> {
    // -0.0 and 0.0 must share a key.
    if w == W::zero() {
        OrderedFloat(W::zero())
    } else {
        OrderedFloat(w)
    }
}

/// Comparison slack used by every audit assertion: `1e-9 * max(1, |x|)`.
pub fn tolerance(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// `a <= b` up to [`tolerance`].
pub fn approx_le(a: f64, b: f64) -> bool {
    if a <= b {
        return true;
    }
    a - b <= tolerance(a.max(b))
}

/// `a == b` up to [`tolerance`]. Two infinities compare equal.
pub fn approx_eq(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tolerance(a.abs().max(b.abs()))
}
