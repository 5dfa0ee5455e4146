//! Truncated power series in an auxiliary variable `u`.

use crate::scalar::QRing;

/// `c_0 + c_1 u + ... + c_order u^order + O(u^(order+1))`.
///
/// Coefficients past the stored vector are zero. The stored vector never
/// holds more than `order + 1` entries and has no trailing zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries<T> {
    coeffs: Vec<T>,
    order: usize,
}

impl<T: QRing> PowerSeries<T> {
    pub fn new(mut coeffs: Vec<T>, order: usize) -> Self {
        coeffs.truncate(order + 1);
        while coeffs.last().is_some_and(T::is_zero) {
            coeffs.pop();
        }
        PowerSeries { coeffs, order }
    }

    pub fn zero(order: usize) -> Self {
        PowerSeries {
            coeffs: Vec::new(),
            order,
        }
    }

    /// `c * u^power`, truncated at `order`.
    pub fn monomial(c: T, power: usize, order: usize) -> Self {
        if power > order {
            return Self::zero(order);
        }
        let mut coeffs = vec![T::zero(); power + 1];
        coeffs[power] = c;
        Self::new(coeffs, order)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coefficient(&self, n: usize) -> T {
        self.coeffs.get(n).cloned().unwrap_or_else(T::zero)
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let coeffs = (0..=order)
            .map(|n| self.coefficient(n) + other.coefficient(n))
            .collect();
        Self::new(coeffs, order)
    }

    pub fn scale(&self, factor: &T) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| c.clone() * factor.clone())
            .collect();
        Self::new(coeffs, self.order)
    }

    /// Cauchy product, exact up to the smaller of the two orders.
    pub fn mul(&self, other: &Self) -> Self {
        let order = self.order.min(other.order);
        let coeffs = (0..=order)
            .map(|n| {
                (0..=n).fold(T::zero(), |acc, k| {
                    acc + self.coefficient(k) * other.coefficient(n - k)
                })
            })
            .collect();
        Self::new(coeffs, order)
    }

    /// Multiplication by `u`.
    pub fn shift_up(&self) -> Self {
        let mut coeffs = Vec::with_capacity(self.coeffs.len() + 1);
        coeffs.push(T::zero());
        coeffs.extend(self.coeffs.iter().cloned());
        Self::new(coeffs, self.order + 1)
    }

    pub fn truncate(&self, order: usize) -> Self {
        Self::new(self.coeffs.clone(), order.min(self.order))
    }

    /// Value of the truncated polynomial at `u`.
    pub fn eval(&self, u: &T) -> T {
        self.coeffs
            .iter()
            .rev()
            .fold(T::zero(), |acc, c| acc * u.clone() + c.clone())
    }
}
