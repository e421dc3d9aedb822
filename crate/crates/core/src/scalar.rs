//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::FftNum;

/// Real floating-point scalar: `f32` or `f64`.
///
/// Everything in the crate is generic over this trait; the crate root
/// re-exports `f64` aliases for the common case.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two_pi() -> Self {
        Self::TAU()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Error-free transformation `a + b = s + e` (Knuth's TwoSum).
#[inline]
pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Fractional part of `k . omega` carried in double-double, reduced to
/// `[-1/2, 1/2)`. Integer `k` times `omega` is formed exactly via FMA.
pub(crate) fn frac_dot(k: &[i64], omega: &[f64]) -> f64 {
    let mut hi = 0.0f64;
    let mut lo = 0.0f64;
    for (&kj, &wj) in k.iter().zip(omega) {
        if kj == 0 {
            continue;
        }
        let kf = kj as f64;
        let p = kf * wj;
        let pe = kf.mul_add(wj, -p);
        let (s, e) = two_sum(hi, p);
        hi = s;
        lo += e + pe;
    }
    let n = hi.round();
    let (s, e) = two_sum(hi - n, lo);
    let mut r = s + e;
    if r >= 0.5 {
        r -= 1.0;
    } else if r < -0.5 {
        r += 1.0;
    }
    r
}

/// `k . omega` in double-double, collapsed to one `f64`.
pub(crate) fn exact_dot(k: &[i64], omega: &[f64]) -> f64 {
    let mut hi = 0.0f64;
    let mut lo = 0.0f64;
    for (&kj, &wj) in k.iter().zip(omega) {
        let kf = kj as f64;
        let p = kf * wj;
        let pe = kf.mul_add(wj, -p);
        let (s, e) = two_sum(hi, p);
        hi = s;
        lo += e + pe;
    }
    hi + lo
}
