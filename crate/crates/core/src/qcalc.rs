//! q-numbers, q-factorials, q-binomials, the two q-exponentials and the
//! q-derivative on truncated power series.
//!
//! Every integer-valued quantity is built from sums and products only
//! (`[n] = 1 + q + ... + q^(n-1)`), so the exact and symbolic backends never
//! divide and `q = 1` never produces `0/0`.

use num_rational::BigRational;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::poly::QPoly;
use crate::scalar::{Backend, QField, QRing};
use crate::series::PowerSeries;

pub const DEFAULT_EPSILON: f64 = 1e-14;
pub const DEFAULT_MAX_TERMS: usize = 10_000;

/// Deformation parameter together with the series-truncation policy.
///
/// The backend is the scalar type `T`: `f64`, `BigRational` or `QPoly`
/// (where `q` is the indeterminate itself).
#[derive(Clone, Debug, PartialEq)]
pub struct QContext<T> {
    q: T,
    classical: bool,
    epsilon: f64,
    max_terms: usize,
}

impl<T: QRing> QContext<T> {
    fn with_q(q: T, classical: bool) -> Self {
        QContext {
            q,
            classical,
            epsilon: DEFAULT_EPSILON,
            max_terms: DEFAULT_MAX_TERMS,
        }
    }

    /// The `q = 1` context of any backend.
    pub fn classical() -> Self {
        Self::with_q(T::one(), true)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon.abs();
        self
    }

    pub fn with_max_terms(mut self, max_terms: usize) -> Self {
        self.max_terms = max_terms;
        self
    }

    pub fn q(&self) -> &T {
        &self.q
    }

    pub fn is_classical(&self) -> bool {
        self.classical
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }

    pub fn backend(&self) -> Backend {
        T::BACKEND
    }

    /// `q^k`, without touching `q` when classical.
    pub fn q_pow(&self, k: u32) -> T {
        if self.classical {
            T::one()
        } else {
            self.q.pow(k)
        }
    }
}

impl QContext<f64> {
    pub fn float(q: f64) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidQ(q.to_string()));
        }
        Ok(Self::with_q(q, q == 1.0))
    }
}

impl QContext<BigRational> {
    pub fn exact(q: BigRational) -> Result<Self> {
        if !q.is_positive() {
            return Err(Error::InvalidQ(q.to_string()));
        }
        let classical = q == <BigRational as QRing>::one();
        Ok(Self::with_q(q, classical))
    }
}

impl QContext<QPoly> {
    /// `q` kept as a formal variable.
    pub fn symbolic() -> Self {
        Self::with_q(QPoly::q(), false)
    }
}

/// `[n] = (1 - q^n)/(1 - q)`, evaluated as `1 + q + ... + q^(n-1)`.
pub fn q_number<T: QRing>(n: usize, ctx: &QContext<T>) -> T {
    if ctx.classical {
        return T::from_u64(n as u64);
    }
    (0..n).fold(T::zero(), |acc, _| T::one() + ctx.q.clone() * acc)
}

/// `[0], [1], ..., [n_max]`, each obtained from the previous by `1 + q[n-1]`.
pub fn q_numbers<T: QRing>(n_max: usize, ctx: &QContext<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(T::zero());
    for n in 1..=n_max {
        let next = if ctx.classical {
            T::from_u64(n as u64)
        } else {
            T::one() + ctx.q.clone() * out[n - 1].clone()
        };
        out.push(next);
    }
    out
}

/// `[n]! = [1][2]...[n]`, with `[0]! = 1`.
pub fn q_factorial<T: QRing>(n: usize, ctx: &QContext<T>) -> T {
    q_numbers(n, ctx)
        .into_iter()
        .skip(1)
        .fold(T::one(), |acc, k| acc * k)
}

/// `[n]!/[n-s]! = [n][n-1]...[n-s+1]`, computed as a product.
pub fn q_falling_factorial<T: QRing>(n: usize, s: usize, ctx: &QContext<T>) -> Result<T> {
    if s > n {
        return Err(Error::Index(format!(
            "falling factorial needs s <= n (s={s}, n={n})"
        )));
    }
    Ok(falling_product(n, s, ctx))
}

/// Falling product that is zero once it passes the factor `[0]` (`s > n`).
pub(crate) fn falling_product<T: QRing>(n: usize, s: usize, ctx: &QContext<T>) -> T {
    if s > n {
        return T::zero();
    }
    let numbers = q_numbers(n, ctx);
    numbers[n + 1 - s..]
        .iter()
        .fold(T::one(), |acc, k| acc * k.clone())
}

/// Both sides of `[n-s] = ([n] - [s]) / q^s` for `s < n`.
pub fn q_shift_identity<T: QRing>(n: usize, s: usize, ctx: &QContext<T>) -> Result<(T, T)> {
    if s >= n {
        return Err(Error::Index(format!(
            "shift identity needs s < n (s={s}, n={n})"
        )));
    }
    let lhs = q_number(n - s, ctx);
    let diff = q_number(n, ctx) - q_number(s, ctx);
    let rhs = diff
        .checked_div(&ctx.q_pow(s as u32))
        .ok_or(Error::InexactDivision)?;
    Ok((lhs, rhs))
}

/// Gaussian binomial `[n]!/([k]![n-k]!)` via the q-Pascal rule
/// `C(n,k) = C(n-1,k-1) + q^k C(n-1,k)`, so exact backends never divide.
pub fn q_binomial<T: QRing>(n: usize, k: usize, ctx: &QContext<T>) -> Result<T> {
    if k > n {
        return Err(Error::Index(format!(
            "q-binomial needs k <= n (k={k}, n={n})"
        )));
    }
    let q_pows: Vec<T> = (0..=k as u32).map(|j| ctx.q_pow(j)).collect();
    let mut row = vec![T::zero(); k + 1];
    row[0] = T::one();
    for m in 1..=n {
        for j in (1..=k.min(m)).rev() {
            row[j] = row[j - 1].clone() + q_pows[j].clone() * row[j].clone();
        }
    }
    Ok(row.swap_remove(k))
}

/// A truncated series value with the number of terms that were summed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesSum<T> {
    pub value: T,
    pub terms: usize,
}

/// Sums a series whose term-magnitude ratios are eventually non-increasing.
///
/// Stops before term `n+1` once the geometric bound `|t_{n+1}| / (1 - rho)`,
/// with `rho = |t_{n+1} / t_n| < 1`, drops below the context epsilon; that
/// bound dominates the whole omitted tail.
pub(crate) fn sum_series<T, I>(ctx: &QContext<T>, terms: I) -> Result<SeriesSum<T>>
where
    T: QField,
    I: IntoIterator<Item = T>,
{
    let mut iter = terms.into_iter();
    let Some(first) = iter.next() else {
        return Ok(SeriesSum {
            value: T::zero(),
            terms: 0,
        });
    };
    let mut current = first.to_f64().abs();
    let mut value = first;
    let mut count = 1;
    for next in iter {
        let magnitude = next.to_f64().abs();
        if magnitude == 0.0 && current == 0.0 {
            return Ok(SeriesSum {
                value,
                terms: count,
            });
        }
        if current > 0.0 && magnitude.is_finite() {
            let rho = magnitude / current;
            if rho < 1.0 && magnitude < ctx.epsilon && magnitude / (1.0 - rho) < ctx.epsilon {
                return Ok(SeriesSum {
                    value,
                    terms: count,
                });
            }
        }
        if count >= ctx.max_terms {
            return Err(Error::NonConvergence(ctx.max_terms));
        }
        value = value + next;
        current = magnitude;
        count += 1;
    }
    Ok(SeriesSum {
        value,
        terms: count,
    })
}

/// `sum_n x^n/[n]!`, successive terms related by `t_{n+1} = t_n x / [n+1]`.
pub(crate) fn q_exp_terms<'a, T: QField>(
    x: &'a T,
    ctx: &'a QContext<T>,
) -> impl Iterator<Item = T> + 'a {
    let mut n = 0usize;
    let mut qn = T::zero();
    let mut term = T::one();
    std::iter::from_fn(move || {
        let out = term.clone();
        n += 1;
        qn = if ctx.classical {
            T::from_u64(n as u64)
        } else {
            T::one() + ctx.q.clone() * qn.clone()
        };
        term = term.clone() * x.clone() / qn.clone();
        Some(out)
    })
}

fn less_than_one<T: QField>(value: T) -> bool {
    value < T::one()
}

/// `e_q(x) = sum_{n>=0} x^n/[n]!`.
///
/// For `0 < q < 1` the series only converges when `|x|(1 - q) < 1`.
pub fn q_exp<T: QField>(x: &T, ctx: &QContext<T>) -> Result<SeriesSum<T>> {
    if !ctx.classical && ctx.q < T::one() && !less_than_one(x.abs() * (T::one() - ctx.q.clone())) {
        return Err(Error::Domain(format!(
            "e_q(x) needs |x|(1-q) < 1; got x={x:?}, q={:?}",
            ctx.q
        )));
    }
    sum_series(ctx, q_exp_terms(x, ctx))
}

/// `e_{1/q}(x)`, summed as `sum_n q^(n(n-1)/2) x^n/[n]_q!` so it shares the
/// `[n]_q` recursion with [`q_exp`].
///
/// Converges for every `x` when `q <= 1`; for `q > 1` needs `|x|(q-1) < q`.
// The negated comparison also rejects NaN inputs.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn q_exp_dual<T: QField>(x: &T, ctx: &QContext<T>) -> Result<SeriesSum<T>> {
    if !ctx.classical && ctx.q > T::one() && !(x.abs() * (ctx.q.clone() - T::one()) < ctx.q.clone())
    {
        return Err(Error::Domain(format!(
            "e_(1/q)(x) needs |x|(q-1) < q; got x={x:?}, q={:?}",
            ctx.q
        )));
    }
    let mut n = 0usize;
    let mut qn = T::zero();
    let mut q_to_n = T::one();
    let mut term = T::one();
    let terms = std::iter::from_fn(move || {
        let out = term.clone();
        n += 1;
        if ctx.classical {
            qn = T::from_u64(n as u64);
        } else {
            qn = T::one() + ctx.q.clone() * qn.clone();
        }
        // t_n = t_{n-1} q^(n-1) x / [n]
        term = term.clone() * q_to_n.clone() * x.clone() / qn.clone();
        if !ctx.classical {
            q_to_n = q_to_n.clone() * ctx.q.clone();
        }
        Some(out)
    });
    sum_series(ctx, terms)
}

/// Jackson q-derivative in `u`: `D_q u^n = [n] u^(n-1)`.
///
/// The result is one order shorter; an order-0 input yields the zero series.
pub fn q_derivative<T: QRing>(series: &PowerSeries<T>, ctx: &QContext<T>) -> PowerSeries<T> {
    let Some(order) = series.order().checked_sub(1) else {
        return PowerSeries::zero(0);
    };
    let len = series.coeffs().len();
    let numbers = q_numbers(len, ctx);
    let coeffs = (1..len)
        .map(|n| numbers[n].clone() * series.coefficient(n))
        .collect();
    PowerSeries::new(coeffs, order)
}
