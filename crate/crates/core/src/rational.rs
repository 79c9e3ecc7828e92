//! Exact rational helpers.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

/// Arbitrary precision rational used wherever an iff-statement has to be
/// decided exactly.
pub type Q = BigRational;

/// `num / den` as an exact rational. Panics if `den == 0`.
pub fn q(num: i64, den: i64) -> Q {
    Q::new(BigInt::from(num), BigInt::from(den))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

/// Exact conversion of a finite `f64`. Returns `None` for NaN or infinities.
pub fn from_f64(x: f64) -> Option<Q> {
    Q::from_float(x)
}

pub fn to_f64(x: &Q) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn abs_diff(a: &Q, b: &Q) -> Q {
    (a - b).abs()
}

pub fn max_q(a: Q, b: Q) -> Q {
    if b > a {
        b
    } else {
        a
    }
}

pub fn is_zero(x: &Q) -> bool {
    x.is_zero()
}
