//! q-Stirling numbers of the second kind and q-Bell numbers.
//!
//! `C(r,s)` is defined by the recursion
//! `C(r+1,s) = q^(s-1) C(r,s-1) + [s] C(r,s)` from `C(1,1) = 1`, with
//! `C(r,0) = 0` and `C(r,s) = 0` for `s > r`. It is the coefficient of the
//! falling q-factorial `[N]!/[N-s]!` in `[N]^r`.

use std::io;

use crate::error::{Error, Result};
use crate::poly::QPoly;
use crate::qcalc::{falling_product, q_exp, q_number, sum_series, QContext};
use crate::scalar::{Backend, QField, QRing};

pub const DEFAULT_R_MAX: usize = 16;

/// Lower-triangular table of `C(r,s)` for `1 <= s <= r <= r_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct StirlingTable<T> {
    // rows[r-1][s-1]
    rows: Vec<Vec<T>>,
}

impl<T: QRing> StirlingTable<T> {
    fn by_recursion(r_max: usize, ctx: &QContext<T>) -> Self {
        let numbers: Vec<T> = crate::qcalc::q_numbers(r_max, ctx);
        let q_pows: Vec<T> = (0..r_max as u32).map(|k| ctx.q_pow(k)).collect();
        let mut rows: Vec<Vec<T>> = Vec::with_capacity(r_max);
        rows.push(vec![T::one()]);
        for r in 1..r_max {
            let prev = &rows[r - 1];
            let row = (1..=r + 1)
                .map(|s| {
                    let from_left = match s {
                        1 => T::zero(),
                        _ => q_pows[s - 1].clone() * prev[s - 2].clone(),
                    };
                    let from_above = prev
                        .get(s - 1)
                        .map(|c| numbers[s].clone() * c.clone())
                        .unwrap_or_else(T::zero);
                    from_left + from_above
                })
                .collect();
            rows.push(row);
        }
        StirlingTable { rows }
    }

    pub fn r_max(&self) -> usize {
        self.rows.len()
    }

    /// `C(r,s)`, zero outside `1 <= s <= r`. Panics if `r > r_max`.
    pub fn entry(&self, r: usize, s: usize) -> T {
        assert!(
            r <= self.r_max(),
            "row {r} beyond table order {}",
            self.r_max()
        );
        self.get(r, s).cloned().unwrap_or_else(T::zero)
    }

    pub fn get(&self, r: usize, s: usize) -> Option<&T> {
        if s == 0 {
            return None;
        }
        self.rows.get(r.checked_sub(1)?)?.get(s - 1)
    }

    /// `C(r,1), ..., C(r,r)`.
    pub fn row(&self, r: usize) -> &[T] {
        &self.rows[r - 1]
    }

    /// `sum_s C(r,s)`, the q-Bell number of order `r`.
    pub fn row_sum(&self, r: usize) -> T {
        self.row(r)
            .iter()
            .cloned()
            .fold(T::zero(), |acc, c| acc + c)
    }

    /// `(r, s, C(r,s))` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, c)| (i + 1, j + 1, c)))
    }
}

impl StirlingTable<QPoly> {
    pub fn symbolic(r_max: usize) -> Self {
        Self::by_recursion(r_max.max(1), &QContext::symbolic())
    }

    /// Evaluates every entry at a concrete `q`.
    pub fn evaluate<T: QRing>(&self, q: &T) -> StirlingTable<T> {
        StirlingTable {
            rows: self
                .rows
                .iter()
                .map(|row| row.iter().map(|p| p.eval(q)).collect())
                .collect(),
        }
    }

    /// CSV export: `r,s,polynomial,value` with the polynomial in ascending
    /// powers and the value at `q` (blank when `q` is `None`).
    pub fn write_csv<W: io::Write>(&self, mut out: W, q: Option<f64>) -> io::Result<()> {
        writeln!(out, "r,s,polynomial,value")?;
        for (r, s, p) in self.iter() {
            let value = q.map(|q| p.eval(&q).to_string()).unwrap_or_default();
            writeln!(out, "{r},{s},{p},{value}")?;
        }
        Ok(())
    }
}

/// Builds `C(r,s)` up to `r_max`.
///
/// Numeric non-classical backends build the symbolic table first and then
/// evaluate each polynomial, so no rounding accumulates through the
/// recursion. At `q = 1` the classical recursion `S(r+1,s) = S(r,s-1) +
/// s S(r,s)` runs directly.
pub fn build_stirling_table<T: QRing>(r_max: usize, ctx: &QContext<T>) -> Result<StirlingTable<T>> {
    if r_max == 0 {
        return Err(Error::Argument("stirling table needs r_max >= 1".into()));
    }
    if ctx.is_classical() || T::BACKEND == Backend::Symbolic {
        return Ok(StirlingTable::by_recursion(r_max, ctx));
    }
    Ok(StirlingTable::symbolic(r_max).evaluate(ctx.q()))
}

pub fn q_stirling<T: QRing>(r: usize, s: usize, ctx: &QContext<T>) -> Result<T> {
    if s == 0 || s > r {
        return Err(Error::Index(format!(
            "q-Stirling needs 1 <= s <= r (r={r}, s={s})"
        )));
    }
    Ok(build_stirling_table(r, ctx)?.entry(r, s))
}

/// `([N]^r, sum_s C(r,s) [N]!/[N-s]!)`. Terms with `s > N` vanish because
/// the falling product then contains `[0]`.
pub fn verify_falling_expansion<T: QRing>(r: usize, n: usize, ctx: &QContext<T>) -> Result<(T, T)> {
    if r == 0 || n == 0 {
        return Err(Error::Argument(format!(
            "falling expansion needs r, N >= 1 (r={r}, N={n})"
        )));
    }
    let table = build_stirling_table(r, ctx)?;
    let lhs = q_number(n, ctx).pow(r as u32);
    let rhs = table
        .row(r)
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, c)| {
            acc + c.clone() * falling_product(n, i + 1, ctx)
        });
    Ok((lhs, rhs))
}

pub fn q_bell<T: QRing>(r: usize, ctx: &QContext<T>) -> Result<T> {
    if r == 0 {
        return Err(Error::Argument("q-Bell number needs r >= 1".into()));
    }
    Ok(build_stirling_table(r, ctx)?.row_sum(r))
}

/// `sum_{N>=1} [N]^r lambda^N / [N]!`.
fn dobinski_sum<T: QField>(r: usize, lambda: &T, ctx: &QContext<T>) -> Result<T> {
    let mut n = 0usize;
    let mut qn = T::zero();
    let mut weight = T::one(); // lambda^N / [N]!
    let terms = std::iter::from_fn(move || {
        n += 1;
        qn = if ctx.is_classical() {
            T::from_u64(n as u64)
        } else {
            T::one() + ctx.q().clone() * qn.clone()
        };
        weight = weight.clone() * lambda.clone() / qn.clone();
        Some(qn.pow(r as u32) * weight.clone())
    });
    Ok(sum_series(ctx, terms)?.value)
}

/// q-Dobinski series `(1/e_q(1)) sum_{N>=1} [N]^r/[N]!`.
pub fn q_bell_dobinsky<T: QField>(r: usize, ctx: &QContext<T>) -> Result<T> {
    Ok(dobinsky_generating(r, &T::one(), ctx)?.1)
}

/// `(sum_s C(r,s) lambda^s, (1/e_q(lambda)) sum_N [N]^r lambda^N/[N]!)`.
pub fn dobinsky_generating<T: QField>(r: usize, lambda: &T, ctx: &QContext<T>) -> Result<(T, T)> {
    if r == 0 {
        return Err(Error::Argument("Dobinski series needs r >= 1".into()));
    }
    let table = build_stirling_table(r, ctx)?;
    let lhs = table
        .row(r)
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, c)| {
            acc + c.clone() * lambda.pow(i as u32 + 1)
        });
    let e = q_exp(lambda, ctx)?.value;
    let rhs = dobinski_sum(r, lambda, ctx)? / e;
    Ok((lhs, rhs))
}
