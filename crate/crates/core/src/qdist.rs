//! The q-Poisson distribution `P(n) = e_{1/q}(-lambda) lambda^n / [n]!`
//! over integer indices `n`, whose q-count `[n]` has mean `lambda` and
//! factorial moments `lambda^k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::qcalc::{q_derivative, q_exp, sum_series, QContext, SeriesSum};
use crate::qcomb::build_stirling_table;
use crate::scalar::{QField, QRing};
use crate::series::PowerSeries;

/// Probability mass left outside the cached table.
pub const TAIL_MASS: f64 = 1e-12;
pub const MAX_TAIL_CAP: usize = 10_000;
pub const MIN_REPORT_SAMPLES: usize = 10_000;

/// q-Poisson model with its normalizing prefactor and the pmf/cdf tables
/// cached up to `tail_cap`.
#[derive(Clone, Debug)]
pub struct QPoissonModel<T> {
    lambda: T,
    ctx: QContext<T>,
    prefactor: T,
    numbers: Vec<T>,
    pmf: Vec<T>,
    cdf: Vec<f64>,
}

/// Whether `(q, lambda)` gives a proper distribution: `lambda(1-q) < 1` for
/// `q < 1`, `lambda(q-1) < q` for `q > 1`, anything nonnegative at `q = 1`.
pub fn is_admissible<T: QField>(lambda: &T, ctx: &QContext<T>) -> bool {
    if *lambda < T::zero() {
        return false;
    }
    if ctx.is_classical() {
        return true;
    }
    let q = ctx.q().clone();
    if q < T::one() {
        lambda.clone() * (T::one() - q) < T::one()
    } else {
        lambda.clone() * (q.clone() - T::one()) < q
    }
}

impl<T: QField> QPoissonModel<T> {
    pub fn new(lambda: T, ctx: QContext<T>) -> Result<Self> {
        if !is_admissible(&lambda, &ctx) {
            return Err(Error::Domain(format!(
                "q-Poisson needs lambda >= 0 with lambda(1-q) < 1 (q<1) or lambda(q-1) < q (q>1); \
                 got lambda={}, q={}",
                lambda.to_f64(),
                ctx.q().to_f64()
            )));
        }
        // e_{1/q}(-lambda) = 1/e_q(lambda); the reciprocal form sums positive
        // terms only and avoids the cancellation of the alternating series.
        let prefactor = T::one() / q_exp(&lambda, &ctx)?.value;
        if prefactor <= T::zero() {
            return Err(Error::Domain("e_(1/q)(-lambda) is not positive".into()));
        }
        let mut model = QPoissonModel {
            numbers: vec![T::zero()],
            pmf: vec![prefactor.clone()],
            cdf: vec![prefactor.to_f64()],
            lambda,
            ctx,
            prefactor: prefactor.clone(),
        };
        let mut cumulative = prefactor;
        while (T::one() - cumulative.clone()).to_f64() > TAIL_MASS {
            if model.pmf.len() > MAX_TAIL_CAP {
                return Err(Error::NonConvergence(MAX_TAIL_CAP));
            }
            let (number, p) = model.next_after(model.pmf.len() - 1);
            cumulative = cumulative + p.clone();
            model.numbers.push(number);
            model.pmf.push(p);
            model.cdf.push(cumulative.to_f64());
        }
        Ok(model)
    }

    /// `([n+1], pmf(n+1))` from the values at `n`.
    fn next_after(&self, n: usize) -> (T, T) {
        let (number, p) = self.at(n);
        self.step(n, &number, &p)
    }

    fn step(&self, n: usize, number: &T, p: &T) -> (T, T) {
        let next = if self.ctx.is_classical() {
            T::from_u64(n as u64 + 1)
        } else {
            T::one() + self.ctx.q().clone() * number.clone()
        };
        let p = p.clone() * self.lambda.clone() / next.clone();
        (next, p)
    }

    fn at(&self, n: usize) -> (T, T) {
        if n < self.pmf.len() {
            return (self.numbers[n].clone(), self.pmf[n].clone());
        }
        self.terms(n).next().expect("unbounded iterator")
    }

    /// `([n], pmf(n))` for `n = start, start+1, ...`, past the cached table
    /// when needed.
    fn terms(&self, start: usize) -> impl Iterator<Item = (T, T)> + '_ {
        let last = self.pmf.len() - 1;
        let mut n = start.min(last);
        let mut state = (self.numbers[n].clone(), self.pmf[n].clone());
        while n < start {
            state = self.step(n, &state.0, &state.1);
            n += 1;
        }
        std::iter::from_fn(move || {
            let out = state.clone();
            state = if n < last {
                (self.numbers[n + 1].clone(), self.pmf[n + 1].clone())
            } else {
                self.step(n, &state.0, &state.1)
            };
            n += 1;
            Some(out)
        })
    }

    pub fn lambda(&self) -> &T {
        &self.lambda
    }

    pub fn ctx(&self) -> &QContext<T> {
        &self.ctx
    }

    /// Cached `e_{1/q}(-lambda)`.
    pub fn prefactor(&self) -> &T {
        &self.prefactor
    }

    /// Largest index in the cached table; the mass beyond it is below
    /// [`TAIL_MASS`].
    pub fn tail_cap(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn pmf(&self, n: usize) -> T {
        self.at(n).1
    }

    /// `[n]` for the index `n`.
    pub fn q_count(&self, n: usize) -> T {
        self.at(n).0
    }

    /// `|sum_{n <= tail_cap} pmf(n) - 1|`.
    pub fn normalization_defect(&self) -> T {
        let total = self.pmf.iter().cloned().fold(T::zero(), |a, p| a + p);
        (total - T::one()).abs()
    }

    /// Direct summation of `sum_n [n]^r pmf(n)`; `terms` is the largest index
    /// included.
    pub fn moment_series(&self, r: usize) -> Result<SeriesSum<T>> {
        if r == 0 {
            return sum_series(&self.ctx, self.terms(0).map(|(_, p)| p));
        }
        let exp = r as u32;
        sum_series(&self.ctx, self.terms(1).map(|(x, p)| x.pow(exp) * p))
    }

    pub fn moment(&self, r: usize) -> Result<T> {
        Ok(self.moment_series(r)?.value)
    }

    pub fn mean(&self) -> Result<T> {
        self.moment(1)
    }

    /// `sum_{n>=k} ([n]!/[n-k]!) pmf(n)`.
    pub fn factorial_moment(&self, k: usize) -> Result<T> {
        let mut falling: Option<T> = None;
        let mut n = k;
        let terms = self.terms(k).map(|(_, p)| {
            let f = match falling.take() {
                None => crate::qcalc::falling_product(k, k, &self.ctx),
                // [n]!/[n-k]! = ([n-1]!/[n-1-k]!) [n] / [n-k]
                Some(prev) => prev * self.q_count(n) / self.q_count(n - k),
            };
            falling = Some(f.clone());
            n += 1;
            f * p
        });
        Ok(sum_series(&self.ctx, terms)?.value)
    }

    /// `sum_{s=1..r} C(r,s) lambda^s`.
    pub fn moment_via_stirling(&self, r: usize) -> Result<T> {
        if r == 0 {
            return Ok(T::one());
        }
        let table = build_stirling_table(r, &self.ctx)?;
        Ok(table
            .row(r)
            .iter()
            .enumerate()
            .fold(T::zero(), |acc, (i, c)| {
                acc + c.clone() * self.lambda.pow(i as u32 + 1)
            }))
    }

    /// Generating series `sum_n pmf(n) u^n` truncated at `order`.
    pub fn generating_series(&self, order: usize) -> PowerSeries<T> {
        let coeffs = self.terms(0).take(order + 1).map(|(_, p)| p).collect();
        PowerSeries::new(coeffs, order)
    }

    /// Draws an index `n` by inverse-CDF search over the cached table; the
    /// mass beyond `tail_cap` is folded into the last cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.tail_cap())
    }

    /// Analytic, Stirling-expanded and Monte Carlo moments of `[n]` for
    /// `r = 1..=r_max`, reproducible from `seed`.
    pub fn empirical_moment_report(
        &self,
        r_max: usize,
        samples: usize,
        seed: u64,
    ) -> Result<MomentReportSet> {
        if samples < MIN_REPORT_SAMPLES {
            return Err(Error::Argument(format!(
                "empirical moments need at least {MIN_REPORT_SAMPLES} samples (got {samples})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts: Vec<f64> = self.numbers.iter().map(QField::to_f64).collect();
        let mut sums = vec![0.0f64; r_max];
        let mut squares = vec![0.0f64; r_max];
        for _ in 0..samples {
            let x = counts[self.sample(&mut rng)];
            let mut power = 1.0;
            for (s, sq) in sums.iter_mut().zip(squares.iter_mut()) {
                power *= x;
                *s += power;
                *sq += power * power;
            }
        }
        let m = samples as f64;
        let rows = (1..=r_max)
            .map(|r| {
                let mean = sums[r - 1] / m;
                let var = ((squares[r - 1] - m * mean * mean) / (m - 1.0)).max(0.0);
                Ok(MomentReport {
                    r,
                    analytic: self.moment(r)?.to_f64(),
                    via_stirling: self.moment_via_stirling(r)?.to_f64(),
                    empirical: Some(mean),
                    standard_error: Some((var / m).sqrt()),
                    sample_count: samples,
                    seed,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MomentReportSet {
            q: self.ctx.q().to_f64(),
            lambda: self.lambda.to_f64(),
            rows,
            seed,
            samples,
        })
    }

    /// Pearson chi-square test of `samples` draws against the pmf over the
    /// cells `0..cells` plus one tail cell.
    pub fn chi_square_test(&self, samples: usize, seed: u64, cells: usize) -> GoodnessOfFit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut observed = vec![0u64; cells + 1];
        for _ in 0..samples {
            observed[self.sample(&mut rng).min(cells)] += 1;
        }
        let mut probs: Vec<f64> = (0..cells).map(|n| self.pmf(n).to_f64()).collect();
        probs.push((1.0 - probs.iter().sum::<f64>()).max(0.0));
        chi_square(&observed, &probs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson statistic for observed counts against cell probabilities. Cells
/// with zero expected probability are dropped.
pub fn chi_square(observed: &[u64], probabilities: &[f64]) -> GoodnessOfFit {
    let total: u64 = observed.iter().sum();
    let mut statistic = 0.0;
    let mut used = 0usize;
    for (&o, &p) in observed.iter().zip(probabilities) {
        let expected = p * total as f64;
        if expected <= 0.0 {
            if o > 0 {
                statistic = f64::INFINITY;
            }
            continue;
        }
        used += 1;
        statistic += (o as f64 - expected).powi(2) / expected;
    }
    let degrees_of_freedom = used.saturating_sub(1);
    let p_value = match ChiSquared::new(degrees_of_freedom as f64) {
        Ok(dist) if statistic.is_finite() => dist.sf(statistic),
        _ => 0.0,
    };
    GoodnessOfFit {
        statistic,
        degrees_of_freedom,
        p_value,
    }
}

/// Applies `(u D_q)^r`, i.e. `c_n -> [n]^r c_n`, as `r` rounds of
/// q-differentiation followed by multiplication with `u`.
pub fn apply_u_dq_operator<T: QRing>(
    series: &PowerSeries<T>,
    r: usize,
    ctx: &QContext<T>,
) -> PowerSeries<T> {
    let order = series.order();
    (0..r).fold(series.clone(), |s, _| {
        q_derivative(&s, ctx).shift_up().truncate(order)
    })
}

/// One row of a moment comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub r: usize,
    pub analytic: f64,
    pub via_stirling: f64,
    pub empirical: Option<f64>,
    #[serde(rename = "stderr")]
    pub standard_error: Option<f64>,
    #[serde(skip)]
    pub sample_count: usize,
    #[serde(skip)]
    pub seed: u64,
}

/// Serialized as `{q, lambda, rows: [{r, analytic, via_stirling, empirical,
/// stderr}], seed, samples}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReportSet {
    pub q: f64,
    pub lambda: f64,
    pub rows: Vec<MomentReport>,
    pub seed: u64,
    pub samples: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcalc::{q_exp_dual, q_number};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn model(q: f64, lambda: f64) -> QPoissonModel<f64> {
        QPoissonModel::new(lambda, QContext::float(q).unwrap()).unwrap()
    }

    #[test]
    fn admissibility() {
        assert!(QPoissonModel::new(2.5, QContext::float(0.5).unwrap()).is_err());
        assert!(QPoissonModel::new(2.0, QContext::float(0.5).unwrap()).is_err());
        assert!(QPoissonModel::new(1.9, QContext::float(0.5).unwrap()).is_ok());
        assert!(QPoissonModel::new(2.0, QContext::float(2.0).unwrap()).is_err());
        assert!(QPoissonModel::new(1.9, QContext::float(2.0).unwrap()).is_ok());
        assert!(QPoissonModel::new(-0.1, QContext::float(1.0).unwrap()).is_err());
        let err = QPoissonModel::new(2.5, QContext::float(0.5).unwrap()).unwrap_err();
        assert!(err.is_domain());
    }

    #[test]
    fn degenerate_lambda_zero() {
        let m = model(0.5, 0.0);
        assert_eq!(m.pmf(0), 1.0);
        assert_eq!(m.pmf(3), 0.0);
        assert_eq!(m.tail_cap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..1000).all(|_| m.sample(&mut rng) == 0));
        assert_eq!(m.mean().unwrap(), 0.0);
    }

    #[test]
    fn classical_pmf_is_poisson() {
        let m = model(1.0, 2.0);
        let mut fact = 1.0;
        for n in 0..20 {
            if n > 0 {
                fact *= n as f64;
            }
            let expected = (-2.0f64).exp() * 2.0f64.powi(n) / fact;
            assert!(
                (m.pmf(n as usize) - expected).abs() <= 1e-14 * expected,
                "n={n}"
            );
        }
        assert!(m.normalization_defect() < 1e-12);
    }

    #[test]
    fn pmf_zero_is_dual_exponential() {
        let m = model(0.5, 1.0);
        let ctx = QContext::float(0.5).unwrap();
        assert!((m.pmf(0) - q_exp_dual(&-1.0, &ctx).unwrap().value).abs() < 1e-15);
        // Brute-force normalization oracle over many terms with closed-form [n].
        let mut rest = 0.0;
        let mut fact = 1.0;
        for n in 1..400 {
            fact *= (1.0 - 0.5f64.powi(n)) / 0.5;
            rest += 1.0 / fact;
        }
        let p0 = 1.0 / (1.0 + rest);
        assert!((m.pmf(0) - p0).abs() < 1e-14);
    }

    #[test]
    fn normalization_examples() {
        assert!(model(1.0, 2.0).normalization_defect() < 1e-12);
        assert!(model(0.5, 1.5).normalization_defect() < 1e-10);
        assert!(model(2.0, 1.0).normalization_defect() < 1e-10);
    }

    #[test]
    fn mean_and_moments() {
        assert!((model(1.0, 3.0).mean().unwrap() - 3.0).abs() < 1e-10);
        assert!((model(0.5, 1.0).mean().unwrap() - 1.0).abs() < 1e-10);
        assert!((model(2.0, 0.5).mean().unwrap() - 0.5).abs() < 1e-10);
        assert!((model(1.0, 1.0).moment(2).unwrap() - 2.0).abs() < 1e-10);
        assert!((model(0.5, 1.0).moment(2).unwrap() - 1.5).abs() < 1e-10);
        let m = model(0.7, 0.9);
        assert_eq!(m.moment(1).unwrap(), m.mean().unwrap());
    }

    #[test]
    fn factorial_moments() {
        let m = model(0.5, 1.0);
        assert!((m.factorial_moment(0).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.factorial_moment(1).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.factorial_moment(3).unwrap() - 1.0).abs() < 1e-9);
        let m = model(1.5, 0.8);
        for k in 0..6 {
            assert!((m.factorial_moment(k).unwrap() - 0.8f64.powi(k as i32)).abs() < 1e-9);
        }
    }

    #[test]
    fn stirling_moments() {
        let m = model(0.5, 1.0);
        assert_eq!(m.moment_via_stirling(1).unwrap(), 1.0);
        assert!((m.moment_via_stirling(2).unwrap() - 1.5).abs() < 1e-15);
        let m = model(1.0, 1.0);
        assert_eq!(m.moment_via_stirling(3).unwrap(), 5.0);
        let m = model(0.3, 0.7);
        assert!((m.moment_via_stirling(2).unwrap() - (0.7 + 0.3 * 0.49)).abs() < 1e-15);
    }

    #[test]
    fn generating_series_examples() {
        let m = model(0.5, 1.0);
        let g = m.generating_series(60);
        assert!((g.eval(&1.0) - 1.0).abs() < 1e-10);
        assert_eq!(g.coefficient(0), m.pmf(0));
        let ctx = m.ctx().clone();
        let mut d = g.clone();
        for s in 1..=4 {
            d = q_derivative(&d, &ctx);
            assert!((d.eval(&1.0) - 1.0).abs() < 1e-9, "s={s}");
        }
    }

    #[test]
    fn u_dq_operator() {
        let ctx = QContext::float(0.5).unwrap();
        let s = PowerSeries::new(vec![1.0, 2.0, 3.0], 5);
        assert_eq!(apply_u_dq_operator(&s, 0, &ctx), s);
        let sym = QContext::symbolic();
        let u3 = PowerSeries::monomial(crate::QPoly::one(), 3, 6);
        let out = apply_u_dq_operator(&u3, 2, &sym);
        let three = q_number(3, &sym);
        assert_eq!(out, PowerSeries::monomial(&three * &three, 3, 6));
        let m = model(0.5, 1.0);
        let g = apply_u_dq_operator(&m.generating_series(60), 2, &ctx);
        assert!((g.eval(&1.0) - m.moment(2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn sampler_mean_within_four_standard_errors() {
        for (q, lambda) in [(1.0, 4.0), (0.5, 1.0)] {
            let report = model(q, lambda)
                .empirical_moment_report(1, 200_000, 7)
                .unwrap();
            let row = &report.rows[0];
            let se = row.standard_error.unwrap();
            assert!((row.empirical.unwrap() - lambda).abs() < 4.0 * se, "q={q}");
        }
    }

    #[test]
    fn report_requires_enough_samples() {
        assert!(model(0.5, 1.0).empirical_moment_report(2, 100, 1).is_err());
    }

    #[test]
    fn report_json_schema() {
        let report = model(0.5, 1.0)
            .empirical_moment_report(1, 10_000, 3)
            .unwrap();
        let json = serde_json::to_value(&report).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 5);
        for k in ["q", "lambda", "rows", "seed", "samples"] {
            assert!(json.get(k).is_some(), "{k}");
        }
        let row = json["rows"][0].as_object().unwrap();
        let mut row_keys: Vec<_> = row.keys().cloned().collect();
        row_keys.sort();
        assert_eq!(
            row_keys,
            ["analytic", "empirical", "r", "stderr", "via_stirling"]
        );
    }

    #[test]
    fn exact_backend_moments() {
        let q = BigRational::new(BigInt::from(1), BigInt::from(2));
        let lambda = BigRational::from_integer(BigInt::from(1));
        let m = QPoissonModel::new(lambda, QContext::exact(q).unwrap()).unwrap();
        let stirling = m.moment_via_stirling(3).unwrap();
        assert_eq!(stirling, BigRational::new(19.into(), 8.into()));
        let direct = m.moment(3).unwrap();
        assert!((direct - stirling).abs().to_f64() < 1e-12);
    }

    #[test]
    fn chi_square_of_perfect_counts_is_zero() {
        let fit = chi_square(&[25, 50, 25], &[0.25, 0.5, 0.25]);
        assert_eq!(fit.statistic, 0.0);
        assert_eq!(fit.degrees_of_freedom, 2);
        assert!((fit.p_value - 1.0).abs() < 1e-12);
    }
}
