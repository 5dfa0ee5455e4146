//! The validation grid: every identity the library relies on, checked
//! across fixed `(q, lambda)` grids and reported as one row per identity
//! with the largest defect observed.
//!
//! Exact identities run on the rational or symbolic backend and report a
//! defect of exactly zero when they hold; numeric identities run in `f64`
//! unless their magnitude makes an absolute tolerance meaningless there.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::Result;
use crate::pointproc::{verify_marginalization, DensityModel, FixedNProcess, JanossyFamily};
use crate::poly::QPoly;
use crate::qcalc::{q_exp, q_exp_dual, q_number, q_shift_identity, QContext};
use crate::qcomb::{
    build_stirling_table, dobinsky_generating, q_bell, q_bell_dobinsky, verify_falling_expansion,
};
use crate::qdist::{apply_u_dq_operator, is_admissible, QPoissonModel};
use crate::scalar::QField;

/// `q` values of the numeric grid.
pub const Q_GRID: [f64; 6] = [0.3, 0.5, 0.9, 1.0, 1.5, 2.0];
/// Candidate `lambda` values; each is used where admissible for the `q`.
pub const LAMBDA_GRID: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
/// Exact rational `q` values (as `(numerator, denominator)`) for exact identities.
pub const EXACT_Q_GRID: [(i64, i64); 4] = [(1, 3), (1, 2), (2, 1), (3, 1)];
/// Energies at which reconstructed product densities are evaluated.
pub const EVAL_POINTS: [f64; 3] = [0.2, 0.45, 0.8];
pub const CHI_SQUARE_ALPHA: f64 = 1e-3;
pub const CHI_SQUARE_CELLS: usize = 16;
/// Truncation error allowed in exact-backend series, relative to the
/// magnitude of the value being checked; keeps absolute defects far below
/// `1e-9` even where values reach `1e10`.
pub const EXACT_SERIES_RELATIVE_EPSILON: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub identity: String,
    pub cases: usize,
    pub max_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// A zero tolerance demands an exact identity.
fn row(identity: &str, cases: usize, max_defect: f64, tolerance: f64) -> IdentityRow {
    let passed = if tolerance == 0.0 {
        max_defect == 0.0
    } else {
        max_defect < tolerance
    };
    IdentityRow {
        identity: identity.to_string(),
        cases,
        max_defect,
        tolerance,
        passed,
    }
}

/// `(q, lambda)` pairs of the grid that give a proper q-Poisson distribution.
pub fn admissible_grid() -> Vec<(f64, f64)> {
    Q_GRID
        .iter()
        .flat_map(|&q| LAMBDA_GRID.iter().map(move |&l| (q, l)))
        .filter(|&(q, l)| QContext::float(q).is_ok_and(|ctx| is_admissible(&l, &ctx)))
        .collect()
}

/// Exact rational nearest to the short decimal `x` used on the grids.
pub fn grid_rational(x: f64) -> BigRational {
    crate::scalar::parse_rational(&x.to_string()).expect("grid values are finite decimals")
}

fn exact_contexts() -> Vec<QContext<BigRational>> {
    EXACT_Q_GRID
        .iter()
        .map(|&(n, d)| QContext::exact(BigRational::new(BigInt::from(n), BigInt::from(d))).unwrap())
        .collect()
}

fn rational_defect(a: &BigRational, b: &BigRational) -> f64 {
    QField::to_f64(&(a - b)).abs()
}

fn poly_defect(a: &QPoly, b: &QPoly) -> f64 {
    let diff = a - b;
    diff.coeffs()
        .iter()
        .map(|c| {
            num_traits::ToPrimitive::to_f64(c)
                .unwrap_or(f64::INFINITY)
                .abs()
        })
        .fold(0.0, f64::max)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    values.into_iter().fold((0, 0.0), |(n, m), v| {
        (n + 1, if v.is_nan() { f64::INFINITY } else { m.max(v) })
    })
}

/// `[n] = 1 + q [n-1]` for `n <= 30` over the exact grid.
pub fn q_number_recursion() -> IdentityRow {
    let (cases, defect) = max_of(exact_contexts().iter().flat_map(|ctx| {
        (1..=30).map(move |n| {
            let rhs = BigRational::from_integer(1.into()) + ctx.q() * q_number(n - 1, ctx);
            rational_defect(&q_number(n, ctx), &rhs)
        })
    }));
    row("q-number recursion", cases, defect, 0.0)
}

/// `[n-s] = ([n]-[s])/q^s` for `s < n <= 20` over the exact grid.
pub fn shift_identity() -> Result<IdentityRow> {
    let mut defects = Vec::new();
    for ctx in exact_contexts() {
        for n in 1..=20 {
            for s in 0..n {
                let (a, b) = q_shift_identity(n, s, &ctx)?;
                defects.push(rational_defect(&a, &b));
            }
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("q-number shift", cases, defect, 0.0))
}

/// `[N]^r = sum_s C(r,s) [N]!/[N-s]!` as polynomials in `q`, `r, N <= 8`.
pub fn falling_expansion() -> Result<IdentityRow> {
    let ctx = QContext::symbolic();
    let mut defects = Vec::new();
    for r in 1..=8 {
        for n in 1..=8 {
            let (lhs, rhs) = verify_falling_expansion(r, n, &ctx)?;
            defects.push(poly_defect(&lhs, &rhs));
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("falling expansion (symbolic)", cases, defect, 0.0))
}

/// Classical Stirling numbers of the second kind by their own recursion
/// `S(r+1,s) = S(r,s-1) + s S(r,s)`.
pub fn classical_stirling(r_max: usize) -> Vec<Vec<u64>> {
    let mut rows = vec![vec![1u64]];
    for r in 1..=r_max {
        let prev = &rows[r - 1];
        let at = |s: usize| prev.get(s).copied().unwrap_or(0);
        let next = (0..=r)
            .map(|s| {
                if s == 0 {
                    u64::from(r == 0)
                } else {
                    at(s - 1) + s as u64 * at(s)
                }
            })
            .collect();
        rows.push(next);
    }
    rows
}

/// Low-order table entries, and the `q = 1` triangle against classical
/// Stirling numbers for `r <= 10`.
pub fn stirling_table_values() -> Result<IdentityRow> {
    let sym = build_stirling_table(3, &QContext::symbolic())?;
    let expected = [
        (2, 2, QPoly::q()),
        (3, 2, QPoly::from_i64s(&[0, 2, 1])),
        (3, 3, QPoly::monomial(1.into(), 3)),
    ];
    let mut defects: Vec<f64> = expected
        .iter()
        .map(|(r, s, p)| poly_defect(&sym.entry(*r, *s), p))
        .collect();
    let classical = build_stirling_table(10, &QContext::<BigRational>::classical())?;
    let oracle = classical_stirling(10);
    for (r, oracle_row) in oracle.iter().enumerate().skip(1) {
        for (s, &value) in oracle_row.iter().enumerate().skip(1) {
            let s_rs = BigRational::from_integer(BigInt::from(value));
            defects.push(rational_defect(&classical.entry(r, s), &s_rs));
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("stirling table values", cases, defect, 0.0))
}

/// Classical Bell numbers from the Stirling oracle.
pub fn classical_bell(r_max: usize) -> Vec<u64> {
    classical_stirling(r_max)
        .iter()
        .map(|row| row.iter().sum())
        .collect()
}

/// q-Bell numbers at `q = 1` against classical Bell numbers, `r <= 8`.
pub fn q_bell_classical_reduction() -> Result<IdentityRow> {
    let ctx = QContext::<BigRational>::classical();
    let bell = classical_bell(8);
    let mut defects = Vec::new();
    for (r, &b) in bell.iter().enumerate().skip(1) {
        let expected = BigRational::from_integer(BigInt::from(b));
        defects.push(rational_defect(&q_bell(r, &ctx)?, &expected));
    }
    let (cases, defect) = max_of(defects);
    Ok(row("q=1 reduction: q-Bell = Bell", cases, defect, 0.0))
}

/// `ctx` with its series tolerance scaled to `magnitude`.
fn scaled_epsilon(ctx: &QContext<BigRational>, magnitude: &BigRational) -> QContext<BigRational> {
    let scale = magnitude.to_f64().abs().max(1.0);
    ctx.clone()
        .with_epsilon(EXACT_SERIES_RELATIVE_EPSILON / scale)
}

/// Row sums against the q-Dobinski series, `r <= 8`, on the exact backend:
/// at `q = 2` the values reach `1e10`, beyond an absolute `1e-9` in `f64`.
pub fn q_bell_dobinski() -> Result<IdentityRow> {
    let mut defects = Vec::new();
    for q in Q_GRID.iter().filter(|&&q| q != 1.0) {
        let ctx = QContext::exact(grid_rational(*q))?;
        for r in 1..=8 {
            let bell = q_bell(r, &ctx)?;
            let ctx = scaled_epsilon(&ctx, &bell);
            defects.push(rational_defect(&bell, &q_bell_dobinsky(r, &ctx)?));
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("q-Bell vs q-Dobinski", cases, defect, 1e-9))
}

/// `sum_s C(r,s) lambda^s` against the generating Dobinski series.
pub fn dobinski_generating_grid() -> Result<IdentityRow> {
    let mut defects = Vec::new();
    for q in Q_GRID.iter().filter(|&&q| q != 1.0) {
        let lambdas: &[f64] = if *q < 1.0 {
            &[0.25, 0.5]
        } else {
            &[0.5, 1.0, 2.0]
        };
        let ctx = QContext::exact(grid_rational(*q))?;
        for &lambda in lambdas {
            for r in 1..=8 {
                let bell = q_bell(r, &ctx)?;
                let ctx = scaled_epsilon(&ctx, &bell);
                let (lhs, rhs) = dobinsky_generating(r, &grid_rational(lambda), &ctx)?;
                defects.push(rational_defect(&lhs, &rhs));
            }
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("Dobinski generating function", cases, defect, 1e-9))
}

/// `x` values of the Euler grid lying in both exponentials' domains.
pub fn euler_points(q: f64) -> Vec<f64> {
    [0.1, 0.5, 1.0]
        .into_iter()
        .filter(|&x| {
            let ctx = QContext::float(q).unwrap();
            q_exp(&x, &ctx).is_ok() && q_exp_dual(&-x, &ctx).is_ok()
        })
        .collect()
}

/// `e_q(x) e_{1/q}(-x) = 1`.
pub fn euler_identity() -> Result<IdentityRow> {
    let mut defects = Vec::new();
    for q in [0.3, 0.5, 0.9, 1.5, 2.0] {
        let ctx = QContext::float(q)?;
        for x in euler_points(q) {
            let product = q_exp(&x, &ctx)?.value * q_exp_dual(&-x, &ctx)?.value;
            defects.push((product - 1.0).abs());
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("Euler identity", cases, defect, 1e-10))
}

fn poisson_rows<F>(name: &str, tolerance: f64, mut defect: F) -> Result<IdentityRow>
where
    F: FnMut(&QPoissonModel<f64>) -> Result<Vec<f64>>,
{
    let mut defects = Vec::new();
    for (q, lambda) in admissible_grid() {
        let model = QPoissonModel::new(lambda, QContext::float(q)?)?;
        defects.extend(defect(&model)?);
    }
    let (cases, max) = max_of(defects);
    Ok(row(name, cases, max, tolerance))
}

pub fn poisson_normalization() -> Result<IdentityRow> {
    poisson_rows("q-Poisson normalization", 1e-10, |m| {
        Ok(vec![m.normalization_defect()])
    })
}

pub fn poisson_mean() -> Result<IdentityRow> {
    poisson_rows("q-Poisson mean = lambda", 1e-10, |m| {
        Ok(vec![(m.mean()? - m.lambda()).abs()])
    })
}

/// `E([n]!/[n-k]!) = lambda^k`, `k <= 6`.
pub fn poisson_factorial_moments() -> Result<IdentityRow> {
    poisson_rows("q-Poisson factorial moments", 1e-9, |m| {
        (1..=6)
            .map(|k| Ok((m.factorial_moment(k)? - m.lambda().powi(k as i32)).abs()))
            .collect()
    })
}

/// Direct summation against the Stirling expansion, `r <= 6`.
pub fn poisson_stirling_moments() -> Result<IdentityRow> {
    poisson_rows("moments: direct vs Stirling", 1e-9, |m| {
        (1..=6)
            .map(|r| Ok((m.moment(r)? - m.moment_via_stirling(r)?).abs()))
            .collect()
    })
}

/// `(u D_q)^r` on the generating series at `u = 1`, against direct
/// summation and the Stirling expansion, `r <= 4`.
pub fn poisson_operator_moments() -> Result<IdentityRow> {
    poisson_rows("moments: operator vs direct vs Stirling", 1e-9, |m| {
        let mut out = Vec::new();
        for r in 1..=4 {
            let direct = m.moment(r)?;
            let stirling = m.moment_via_stirling(r)?;
            let operator = operator_moment(m, r)?;
            out.extend([
                (direct - stirling).abs(),
                (operator - direct).abs(),
                (operator - stirling).abs(),
            ]);
        }
        Ok(out)
    })
}

/// `(u D_q)^r G(u)` at `u = 1`, with the generating series carried to the
/// order at which direct summation of the `r`-th moment stopped.
pub fn operator_moment<T: QField>(model: &QPoissonModel<T>, r: usize) -> Result<T> {
    let order = model.moment_series(r)?.terms.max(model.tail_cap()) + 1;
    let series = model.generating_series(order);
    Ok(apply_u_dq_operator(&series, r, model.ctx()).eval(&T::one()))
}

/// Components of the marginalization relation, exactly, for `h < N <= 8`.
pub fn marginalization() -> Result<IdentityRow> {
    let u = DensityModel::uniform(0.0, 1.0)?;
    let mut defects = Vec::new();
    let mut contexts = exact_contexts();
    contexts.push(QContext::classical());
    for n in 2..=8 {
        for ctx in &contexts {
            let proc = FixedNProcess::new(n, u.clone(), ctx.clone())?;
            for h in 1..n {
                let (l, r) = verify_marginalization(&proc, h)?;
                defects.push(rational_defect(&l, &r));
            }
        }
        let proc = FixedNProcess::new(n, u.clone(), QContext::symbolic())?;
        for h in 1..n {
            let (l, r) = verify_marginalization(&proc, h)?;
            defects.push(poly_defect(&l, &r));
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("marginalization (exact)", cases, defect, 0.0))
}

/// q-Poisson Janossy family reconstructing `lambda^h f0(E_1)...f0(E_h)`,
/// `h <= 3`, for a uniform and a tent density.
pub fn janossy_reconstruction() -> Result<IdentityRow> {
    let densities = [
        DensityModel::uniform(0.0, 1.0)?,
        DensityModel::tent(0.0, 1.0)?,
    ];
    let mut defects = Vec::new();
    for (q, lambda) in admissible_grid() {
        let model = QPoissonModel::new(lambda, QContext::float(q)?)?;
        for density in &densities {
            let family = JanossyFamily::q_poisson(&model, density.clone(), 3)?;
            for h in 1..=3 {
                let points = &EVAL_POINTS[..h];
                let f: f64 = points.iter().map(|&e| density.evaluate(e)).product();
                let rec = family.janossy_to_product_density(h, points)?;
                let weighted = family.weighted_product_density(h, points)?;
                let target = lambda.powi(h as i32) * f;
                defects.extend([(rec.value - target).abs(), (weighted - target).abs()]);
            }
        }
    }
    let (cases, defect) = max_of(defects);
    Ok(row("Janossy reconstruction", cases, defect, 1e-8))
}

/// Janossy normalizers over `h = 0..=N_max` summing to one.
pub fn janossy_normalizers() -> Result<IdentityRow> {
    let u = DensityModel::uniform(0.0, 1.0)?;
    let mut defects = Vec::new();
    for (q, lambda) in admissible_grid() {
        let model = QPoissonModel::new(lambda, QContext::float(q)?)?;
        let family = JanossyFamily::q_poisson(&model, u.clone(), 3)?;
        let total = (0..=family.n_max())
            .map(|h| family.janossy_normalizer(h))
            .sum::<Result<f64>>()?;
        defects.push((total - 1.0).abs());
    }
    let (cases, defect) = max_of(defects);
    Ok(row("Janossy normalizers sum to 1", cases, defect, 1e-10))
}

/// Chi-square statistic of q-Poisson draws (`q = 0.5`, `lambda = 1`)
/// against the critical value at [`CHI_SQUARE_ALPHA`].
pub fn sampler_chi_square(samples: usize, seed: u64) -> Result<IdentityRow> {
    let model = QPoissonModel::new(1.0, QContext::float(0.5)?)?;
    let fit = model.chi_square_test(samples, seed, CHI_SQUARE_CELLS);
    let critical = ChiSquared::new(fit.degrees_of_freedom as f64)
        .map_err(|e| crate::Error::Argument(e.to_string()))?
        .inverse_cdf(1.0 - CHI_SQUARE_ALPHA);
    Ok(row(
        "q-Poisson sampler chi-square",
        1,
        fit.statistic,
        critical,
    ))
}

/// The whole suite in a fixed order.
pub fn run_identity_suite(samples: usize, seed: u64) -> Result<Vec<IdentityRow>> {
    Ok(vec![
        q_number_recursion(),
        shift_identity()?,
        falling_expansion()?,
        stirling_table_values()?,
        q_bell_classical_reduction()?,
        q_bell_dobinski()?,
        dobinski_generating_grid()?,
        euler_identity()?,
        poisson_normalization()?,
        poisson_mean()?,
        poisson_factorial_moments()?,
        poisson_stirling_moments()?,
        poisson_operator_moments()?,
        marginalization()?,
        janossy_reconstruction()?,
        janossy_normalizers()?,
        sampler_chi_square(samples, seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classical_oracles() {
        assert_eq!(classical_bell(8)[1..], [1, 2, 5, 15, 52, 203, 877, 4140]);
        assert_eq!(classical_stirling(4)[4], vec![0, 1, 7, 6, 1]);
    }

    #[test]
    fn grid_shape() {
        let grid = admissible_grid();
        assert!(grid.contains(&(1.0, 2.0)));
        assert!(grid.contains(&(1.5, 2.0)));
        assert!(!grid.contains(&(0.3, 2.0)));
        assert!(!grid.contains(&(2.0, 2.0)));
        assert_eq!(euler_points(0.3), vec![0.1, 0.5, 1.0]);
        assert_eq!(grid_rational(0.3), BigRational::new(3.into(), 10.into()));
    }
}
