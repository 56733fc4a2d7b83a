//! Numeric scalar abstraction shared by the similarity kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type for embeddings, weight matrices and losses.
///
/// Implemented for `f32` (the on-disk index format) and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; used for literal constants inside generic code.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn l2_norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == S::zero() {
        S::zero()
    } else {
        dot(a, b) / denom
    }
}

/// Scales `v` in place to unit L2 norm. Returns false (leaving `v` untouched)
/// when the norm is zero or not finite.
pub fn normalize_in_place<S: Scalar>(v: &mut [S]) -> bool {
    let n = l2_norm(v);
    if n == S::zero() || !n.is_finite() {
        return false;
    }
    for x in v.iter_mut() {
        *x = *x / n;
    }
    true
}
