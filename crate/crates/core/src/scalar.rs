//! Number types the q-calculus is generic over.
//!
//! Three backends implement [`QRing`]: `f64`, exact [`BigRational`], and the
//! integer polynomial [`QPoly`] for results that stay polynomial in `q`.
//! Series that need division and magnitude tests additionally require
//! [`QField`], which `QPoly` does not implement.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::poly::QPoly;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Backend {
    ExactRational,
    Symbolic,
    Float64,
}

pub trait QRing:
    Clone
    + PartialEq
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    const BACKEND: Backend;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(n: u64) -> Self;
    fn from_bigint(n: &BigInt) -> Self;
    fn is_zero(&self) -> bool;

    /// `self / rhs` when the quotient exists in this ring.
    fn checked_div(&self, rhs: &Self) -> Option<Self>;

    fn pow(&self, mut exp: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base.clone();
            }
            exp >>= 1;
            if exp > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

pub trait QField: QRing + Div<Output = Self> + PartialOrd {
    fn from_f64(x: f64) -> Option<Self>;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
}

impl QRing for f64 {
    const BACKEND: Backend = Backend::Float64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_u64(n: u64) -> Self {
        n as f64
    }
    fn from_bigint(n: &BigInt) -> Self {
        n.to_f64().unwrap_or(f64::NAN)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn checked_div(&self, rhs: &Self) -> Option<Self> {
        (*rhs != 0.0).then(|| self / rhs)
    }
    fn pow(&self, exp: u32) -> Self {
        match i32::try_from(exp) {
            Ok(e) => self.powi(e),
            Err(_) => self.powf(exp as f64),
        }
    }
}

impl QField for f64 {
    fn from_f64(x: f64) -> Option<Self> {
        Some(x)
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

impl QRing for BigRational {
    const BACKEND: Backend = Backend::ExactRational;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn from_bigint(n: &BigInt) -> Self {
        BigRational::from_integer(n.clone())
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn checked_div(&self, rhs: &Self) -> Option<Self> {
        (!Zero::is_zero(rhs)).then(|| self / rhs)
    }
}

impl QField for BigRational {
    fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}

impl QRing for QPoly {
    const BACKEND: Backend = Backend::Symbolic;

    fn zero() -> Self {
        QPoly::zero()
    }
    fn one() -> Self {
        QPoly::one()
    }
    fn from_u64(n: u64) -> Self {
        QPoly::constant(BigInt::from(n))
    }
    fn from_bigint(n: &BigInt) -> Self {
        QPoly::constant(n.clone())
    }
    fn is_zero(&self) -> bool {
        QPoly::is_zero(self)
    }
    fn checked_div(&self, rhs: &Self) -> Option<Self> {
        self.div_exact(rhs)
    }
}

/// Parses a decimal (`"0.25"`, `"2"`, `"-1.5e-3"`) or fraction (`"1/3"`)
/// literal into an exact rational without passing through `f64`.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let mut value = BigRational::from_integer(all_digits.parse().ok()?);
    let scale = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    if scale >= 0 {
        value *= num_traits::pow(ten, scale as usize);
    } else {
        value /= num_traits::pow(ten, scale.unsigned_abs() as usize);
    }
    Some(if negative { -value } else { value })
}
