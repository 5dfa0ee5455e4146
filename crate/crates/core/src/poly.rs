//! Integer polynomials in the deformation parameter `q`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::scalar::QRing;

/// Polynomial `c_0 + c_1 q + c_2 q^2 + ...` with arbitrary-precision integer
/// coefficients. Always stored without trailing zero coefficients, so
/// structural equality is polynomial equality.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct QPoly {
    coeffs: Vec<BigInt>,
}

impl QPoly {
    pub fn zero() -> Self {
        QPoly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Self::constant(BigInt::one())
    }

    /// The indeterminate `q`.
    pub fn q() -> Self {
        Self::monomial(BigInt::one(), 1)
    }

    pub fn constant(c: BigInt) -> Self {
        Self::from_coeffs(vec![c])
    }

    pub fn monomial(c: BigInt, power: usize) -> Self {
        let mut coeffs = vec![BigInt::zero(); power + 1];
        coeffs[power] = c;
        Self::from_coeffs(coeffs)
    }

    /// Builds a polynomial from ascending coefficients, trimming trailing zeros.
    pub fn from_coeffs(mut coeffs: Vec<BigInt>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        QPoly { coeffs }
    }

    pub fn from_i64s(coeffs: &[i64]) -> Self {
        Self::from_coeffs(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    /// Coefficient of `q^i` (zero past the degree).
    pub fn coefficient(&self, i: usize) -> BigInt {
        self.coeffs.get(i).cloned().unwrap_or_default()
    }

    /// `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Value at `q = 1`.
    pub fn coefficient_sum(&self) -> BigInt {
        self.coeffs.iter().sum()
    }

    pub fn has_nonnegative_coefficients(&self) -> bool {
        self.coeffs.iter().all(|c| !c.is_negative())
    }

    /// Horner evaluation at `q` in any ring (including composition with
    /// another `QPoly`).
    pub fn eval<T: QRing>(&self, q: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * q.clone() + T::from_bigint(c))
    }

    /// Quotient `self / divisor` when it exists in `Z[q]`.
    pub fn div_exact(&self, divisor: &QPoly) -> Option<QPoly> {
        let d_deg = divisor.degree()?;
        let lead = &divisor.coeffs[d_deg];
        let mut rem = self.coeffs.clone();
        let Some(r_deg) = self.degree() else {
            return Some(QPoly::zero());
        };
        if r_deg < d_deg {
            return None;
        }
        let mut quot = vec![BigInt::zero(); r_deg - d_deg + 1];
        for shift in (0..=r_deg - d_deg).rev() {
            let top = &rem[shift + d_deg];
            if top.is_zero() {
                continue;
            }
            let (factor, remainder) = top.div_rem(lead);
            if !remainder.is_zero() {
                return None;
            }
            for (i, c) in divisor.coeffs.iter().enumerate() {
                rem[shift + i] -= &factor * c;
            }
            quot[shift] = factor;
        }
        rem.iter()
            .all(Zero::is_zero)
            .then(|| QPoly::from_coeffs(quot))
    }

    /// Conventional highest-power-first rendering, e.g. `q^2 + 2q`.
    pub fn to_descending_string(&self) -> String {
        render(self.coeffs.iter().enumerate().rev())
    }
}

fn render<'a>(terms: impl Iterator<Item = (usize, &'a BigInt)>) -> String {
    let mut out = String::new();
    for (power, c) in terms.filter(|(_, c)| !c.is_zero()) {
        let magnitude = c.abs();
        if out.is_empty() {
            if c.is_negative() {
                out.push('-');
            }
        } else {
            out.push_str(if c.is_negative() { " - " } else { " + " });
        }
        match power {
            0 => out.push_str(&magnitude.to_string()),
            _ => {
                if !magnitude.is_one() {
                    out.push_str(&magnitude.to_string());
                }
                out.push('q');
                if power > 1 {
                    out.push('^');
                    out.push_str(&power.to_string());
                }
            }
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// Canonical ascending-power form: `1 + 2q + q^2`.
impl fmt::Display for QPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self.coeffs.iter().enumerate()))
    }
}

impl Add<&QPoly> for &QPoly {
    type Output = QPoly;
    fn add(self, rhs: &QPoly) -> QPoly {
        let (long, short) = if self.coeffs.len() >= rhs.coeffs.len() {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let mut coeffs = long.coeffs.clone();
        for (c, s) in coeffs.iter_mut().zip(&short.coeffs) {
            *c += s;
        }
        QPoly::from_coeffs(coeffs)
    }
}

impl Neg for &QPoly {
    type Output = QPoly;
    fn neg(self) -> QPoly {
        QPoly {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

impl Sub<&QPoly> for &QPoly {
    type Output = QPoly;
    fn sub(self, rhs: &QPoly) -> QPoly {
        self + &(-rhs)
    }
}

impl Mul<&QPoly> for &QPoly {
    type Output = QPoly;
    fn mul(self, rhs: &QPoly) -> QPoly {
        if self.is_zero() || rhs.is_zero() {
            return QPoly::zero();
        }
        let mut coeffs = vec![BigInt::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        QPoly::from_coeffs(coeffs)
    }
}

macro_rules! forward_owned {
    ($($tr:ident :: $method:ident),*) => {$(
        impl $tr<QPoly> for QPoly {
            type Output = QPoly;
            fn $method(self, rhs: QPoly) -> QPoly {
                (&self).$method(&rhs)
            }
        }
    )*};
}
forward_owned!(Add::add, Sub::sub, Mul::mul);

impl Neg for QPoly {
    type Output = QPoly;
    fn neg(self) -> QPoly {
        -&self
    }
}
