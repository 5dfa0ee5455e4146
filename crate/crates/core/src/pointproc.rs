//! Product densities on a continuous energy axis.
//!
//! For a fixed q-count `[N]` of particles whose positions are independent
//! with one-particle density `f0`, the degree-`m` q-product density is
//! `([N]!/[N-m]!) f0(E_1) ... f0(E_m)`. Integrals over energy are ordinary
//! integrals; only the particle counts are deformed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::io;

use crate::error::{Error, Result};
use crate::qcalc::{falling_product, q_factorial, QContext};
use crate::qcomb::build_stirling_table;
use crate::qdist::QPoissonModel;
use crate::scalar::{QField, QRing};

/// Tolerance on `integral f0 = 1` and on weight normalization.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_BINS: usize = 10;
pub const MIN_MC_SAMPLES: usize = 10_000;
/// Target for the omitted weighted tail of a q-Poisson Janossy family.
pub const JANOSSY_TAIL_TARGET: f64 = 1e-12;
/// Reconstructions whose tail bound exceeds this carry a warning.
pub const JANOSSY_TAIL_WARNING: f64 = 1e-9;

const MC_CHUNKS: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyRange {
    pub lo: f64,
    pub hi: f64,
}

impl EnergyRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Argument(format!(
                "invalid energy range [{lo}, {hi}]"
            )));
        }
        Ok(EnergyRange { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo <= e && e <= self.hi
    }

    pub fn contains_range(&self, other: &EnergyRange) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DensityKind {
    Uniform,
    /// Linear interpolation between `(energy, value)` knots.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

/// Normalized one-particle density `f0` on a closed support interval.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityModel {
    support: EnergyRange,
    kind: DensityKind,
    // cumulative mass at each knot (piecewise-linear only)
    cumulative: Vec<f64>,
}

fn trapezoid(x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    0.5 * (x1 - x0) * (y0 + y1)
}

impl DensityModel {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let support = EnergyRange::new(lo, hi)?;
        if support.width() <= 0.0 {
            return Err(Error::Density("uniform density needs lo < hi".into()));
        }
        Ok(DensityModel {
            support,
            kind: DensityKind::Uniform,
            cumulative: Vec::new(),
        })
    }

    /// Piecewise-linear density through `knots`, which must already
    /// integrate to one.
    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        let model = Self::piecewise_unchecked(knots)?;
        let total = *model.cumulative.last().unwrap();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Density(format!(
                "density integrates to {total}, not 1"
            )));
        }
        Ok(model)
    }

    /// Piecewise-linear density with the knot values rescaled to unit mass.
    pub fn piecewise_linear_normalized(knots: Vec<(f64, f64)>) -> Result<Self> {
        let model = Self::piecewise_unchecked(knots.clone())?;
        let total = *model.cumulative.last().unwrap();
        if total <= 0.0 {
            return Err(Error::Density("density has zero mass".into()));
        }
        Self::piecewise_unchecked(knots.into_iter().map(|(x, y)| (x, y / total)).collect())
    }

    /// Symmetric tent peaking at the midpoint of `[lo, hi]`.
    pub fn tent(lo: f64, hi: f64) -> Result<Self> {
        let mid = 0.5 * (lo + hi);
        Self::piecewise_linear_normalized(vec![(lo, 0.0), (mid, 1.0), (hi, 0.0)])
    }

    fn piecewise_unchecked(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Density(
                "piecewise-linear density needs two knots".into(),
            ));
        }
        if knots
            .iter()
            .any(|&(x, y)| !x.is_finite() || !y.is_finite() || y < 0.0)
        {
            return Err(Error::Density(
                "knots must be finite with nonnegative values".into(),
            ));
        }
        if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Density(
                "knot energies must strictly increase".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(knots.len());
        cumulative.push(0.0);
        for w in knots.windows(2) {
            let last = *cumulative.last().unwrap();
            cumulative.push(last + trapezoid(w[0].0, w[0].1, w[1].0, w[1].1));
        }
        Ok(DensityModel {
            support: EnergyRange::new(knots[0].0, knots[knots.len() - 1].0)?,
            kind: DensityKind::PiecewiseLinear { knots },
            cumulative,
        })
    }

    pub fn support(&self) -> EnergyRange {
        self.support
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    /// `f0(e)`, zero outside the support.
    pub fn evaluate(&self, e: f64) -> f64 {
        if !self.support.contains(e) {
            return 0.0;
        }
        match &self.kind {
            DensityKind::Uniform => 1.0 / self.support.width(),
            DensityKind::PiecewiseLinear { knots } => {
                let i = knots
                    .partition_point(|&(x, _)| x <= e)
                    .clamp(1, knots.len() - 1);
                let (x0, y0) = knots[i - 1];
                let (x1, y1) = knots[i];
                y0 + (y1 - y0) * (e - x0) / (x1 - x0)
            }
        }
    }

    /// `integral_range f0(E) dE` in closed form.
    pub fn integral(&self, range: &EnergyRange) -> Result<f64> {
        if !self.support.contains_range(range) {
            return Err(Error::Argument(format!(
                "range [{}, {}] exceeds support [{}, {}]",
                range.lo, range.hi, self.support.lo, self.support.hi
            )));
        }
        if *range == self.support {
            return Ok(1.0);
        }
        match &self.kind {
            DensityKind::Uniform => Ok(range.width() / self.support.width()),
            DensityKind::PiecewiseLinear { knots } => Ok(knots
                .windows(2)
                .filter_map(|w| {
                    let lo = range.lo.max(w[0].0);
                    let hi = range.hi.min(w[1].0);
                    (lo < hi).then(|| trapezoid(lo, self.evaluate(lo), hi, self.evaluate(hi)))
                })
                .sum()),
        }
    }

    /// Draws one energy by inverting the cumulative distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match &self.kind {
            DensityKind::Uniform => self.support.lo + u * self.support.width(),
            DensityKind::PiecewiseLinear { knots } => {
                let target = u * self.cumulative.last().unwrap();
                let i = self
                    .cumulative
                    .partition_point(|&c| c <= target)
                    .clamp(1, knots.len() - 1);
                let (x0, y0) = knots[i - 1];
                let (x1, y1) = knots[i];
                let slope = (y1 - y0) / (x1 - x0);
                let area = target - self.cumulative[i - 1];
                // Root of y0 t + slope t^2 / 2 = area in its cancellation-free form.
                let denom = y0 + (y0 * y0 + 2.0 * slope * area).max(0.0).sqrt();
                let t = if denom > 0.0 { 2.0 * area / denom } else { 0.0 };
                (x0 + t).clamp(x0, x1)
            }
        }
    }
}

pub fn density_integral(density: &DensityModel, range: &EnergyRange) -> Result<f64> {
    density.integral(range)
}

/// `[N]` particles placed independently with density `f0`.
#[derive(Clone, Debug)]
pub struct FixedNProcess<T> {
    n: usize,
    density: DensityModel,
    ctx: QContext<T>,
}

impl<T: QRing> FixedNProcess<T> {
    pub fn new(n: usize, density: DensityModel, ctx: QContext<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("fixed-N process needs N >= 1".into()));
        }
        Ok(FixedNProcess { n, density, ctx })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn density(&self) -> &DensityModel {
        &self.density
    }

    pub fn ctx(&self) -> &QContext<T> {
        &self.ctx
    }
}

/// `[N]!/[N-m]!`, the factor in front of `f0(E_1)...f0(E_m)`.
pub fn product_density_coefficient<T: QRing>(proc: &FixedNProcess<T>, m: usize) -> Result<T> {
    if m == 0 || m > proc.n {
        return Err(Error::Index(format!(
            "product density degree must be in 1..={} (got {m})",
            proc.n
        )));
    }
    Ok(falling_product(proc.n, m, &proc.ctx))
}

/// Degree-`points.len()` q-product density evaluated at `points`.
pub fn product_density<T: QField>(proc: &FixedNProcess<T>, points: &[f64]) -> Result<T> {
    let coefficient = product_density_coefficient(proc, points.len())?;
    Ok(coefficient * density_product(&proc.density, points)?)
}

fn density_product<T: QField>(density: &DensityModel, points: &[f64]) -> Result<T> {
    let support = density.support();
    if let Some(e) = points.iter().find(|&&e| !support.contains(e)) {
        return Err(Error::Argument(format!("point {e} outside support")));
    }
    let value: f64 = points.iter().map(|&e| density.evaluate(e)).product();
    from_f64(value)
}

fn from_f64<T: QField>(x: f64) -> Result<T> {
    T::from_f64(x).ok_or_else(|| Error::Argument(format!("{x} is not representable")))
}

/// `E{[N]^r}` over a range of probability mass `mass`:
/// `sum_{s <= min(r,N)} C(r,s) [N]!/[N-s]! mass^s`.
pub fn moment_with_mass<T: QRing>(proc: &FixedNProcess<T>, r: usize, mass: &T) -> Result<T> {
    if r == 0 {
        return Err(Error::Argument("moment order must be >= 1".into()));
    }
    let table = build_stirling_table(r, &proc.ctx)?;
    Ok((1..=r.min(proc.n)).fold(T::zero(), |acc, s| {
        acc + table.entry(r, s) * falling_product(proc.n, s, &proc.ctx) * mass.pow(s as u32)
    }))
}

/// r-th moment of the q-count falling in `range`.
pub fn moment_over_range<T: QField>(
    proc: &FixedNProcess<T>,
    r: usize,
    range: &EnergyRange,
) -> Result<T> {
    let mass = from_f64(proc.density.integral(range)?)?;
    moment_with_mass(proc, r, &mass)
}

/// `([N]!/[N-h]!, ([N]! * (integral f0)^(N-h)) / [N-h]!)`: the degree-`h`
/// coefficient against the top-degree density marginalized over its last
/// `N-h` coordinates.
pub fn verify_marginalization<T: QRing>(proc: &FixedNProcess<T>, h: usize) -> Result<(T, T)> {
    if h == 0 || h >= proc.n {
        return Err(Error::Index(format!(
            "marginalization needs 1 <= h < N (h={h}, N={})",
            proc.n
        )));
    }
    let lhs = falling_product(proc.n, h, &proc.ctx);
    // Each marginalized coordinate integrates f0 over the whole support.
    let unit_mass = T::one();
    let marginal = q_factorial(proc.n, &proc.ctx) * unit_mass.pow((proc.n - h) as u32);
    let rhs = marginal
        .checked_div(&q_factorial(proc.n - h, &proc.ctx))
        .ok_or(Error::InexactDivision)?;
    Ok((lhs, rhs))
}

/// Monte Carlo estimate with its analytic comparison value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub range_index: usize,
    pub range: EnergyRange,
    pub mass: f64,
    pub r: usize,
    pub estimate: f64,
    pub analytic: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BinEstimate {
    pub bin: usize,
    pub estimate: f64,
    pub analytic: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairEstimate {
    pub bin_a: usize,
    pub bin_b: usize,
    pub estimate: f64,
    pub analytic: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
    pub bin_edges: Vec<f64>,
    pub moments: Vec<MomentEstimate>,
    pub f1: Vec<BinEstimate>,
    pub f2: Vec<PairEstimate>,
}

impl EstimateReport {
    /// One row per range moment, bin and disjoint bin pair.
    pub fn write_csv<W: io::Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "kind,a,b,lo,hi,r,estimate,analytic,stderr")?;
        for m in &self.moments {
            writeln!(
                out,
                "moment,{},,{},{},{},{},{},{}",
                m.range_index, m.range.lo, m.range.hi, m.r, m.estimate, m.analytic, m.stderr
            )?;
        }
        for b in &self.f1 {
            writeln!(
                out,
                "f1,{},,{},{},,{},{},{}",
                b.bin,
                self.bin_edges[b.bin],
                self.bin_edges[b.bin + 1],
                b.estimate,
                b.analytic,
                b.stderr
            )?;
        }
        for p in &self.f2 {
            writeln!(
                out,
                "f2,{},{},,,,{},{},{}",
                p.bin_a, p.bin_b, p.estimate, p.analytic, p.stderr
            )?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
struct Tally {
    moment_sums: Vec<u128>,
    moment_squares: Vec<u128>,
    bin_sums: Vec<u128>,
    bin_squares: Vec<u128>,
    pair_sums: Vec<u128>,
    pair_squares: Vec<u128>,
}

impl Tally {
    fn new(ranges: usize, r_max: usize, bins: usize) -> Self {
        let pairs = bins * bins.saturating_sub(1) / 2;
        Tally {
            moment_sums: vec![0; ranges * r_max],
            moment_squares: vec![0; ranges * r_max],
            bin_sums: vec![0; bins],
            bin_squares: vec![0; bins],
            pair_sums: vec![0; pairs],
            pair_squares: vec![0; pairs],
        }
    }

    fn merge(mut self, other: &Tally) -> Self {
        for (a, b) in [
            (&mut self.moment_sums, &other.moment_sums),
            (&mut self.moment_squares, &other.moment_squares),
            (&mut self.bin_sums, &other.bin_sums),
            (&mut self.bin_squares, &other.bin_squares),
            (&mut self.pair_sums, &other.pair_sums),
            (&mut self.pair_squares, &other.pair_squares),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

/// Mean and standard error from integer sums of `x` and `x^2`.
fn mean_and_stderr(sum: u128, squares: u128, m: usize) -> (f64, f64) {
    let m_f = m as f64;
    let mean = sum as f64 / m_f;
    let var = ((squares as f64 - m_f * mean * mean) / (m_f - 1.0)).max(0.0);
    (mean, (var / m_f).sqrt())
}

/// Classical (`q = 1`) Monte Carlo of `N` i.i.d. points: counts in each
/// range give moments `E(n^r)`; counts in equal-width bins give `f1` and
/// `f2` (disjoint bin pairs only) per unit energy.
///
/// Work is split into fixed chunks, each with its own ChaCha stream derived
/// from `seed`, and merged with exact integer sums, so the report does not
/// depend on thread scheduling.
pub fn mc_estimate_classical_binned(
    n: usize,
    density: &DensityModel,
    ranges: &[EnergyRange],
    r_max: usize,
    samples: usize,
    seed: u64,
    bins: usize,
) -> Result<EstimateReport> {
    if n == 0 || r_max == 0 || bins == 0 {
        return Err(Error::Argument(
            "Monte Carlo needs N, r_max and bins >= 1".into(),
        ));
    }
    if samples < MIN_MC_SAMPLES {
        return Err(Error::Argument(format!(
            "Monte Carlo needs at least {MIN_MC_SAMPLES} samples (got {samples})"
        )));
    }
    let fits = (n as u128)
        .checked_pow(2 * r_max.max(2) as u32)
        .and_then(|x| x.checked_mul(samples as u128))
        .is_some();
    if !fits {
        return Err(Error::Argument(
            "N^(2 r_max) * samples overflows the tally".into(),
        ));
    }
    let masses = ranges
        .iter()
        .map(|r| density.integral(r))
        .collect::<Result<Vec<_>>>()?;

    let support = density.support();
    let width = support.width() / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins)
        .map(|i| support.lo + support.width() * i as f64 / bins as f64)
        .collect();

    let chunk_samples = |c: u64| {
        let base = samples as u64 / MC_CHUNKS;
        base + u64::from(c < samples as u64 % MC_CHUNKS)
    };
    let tallies: Vec<Tally> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk);
            let mut tally = Tally::new(ranges.len(), r_max, bins);
            let mut range_counts = vec![0u128; ranges.len()];
            let mut bin_counts = vec![0u128; bins];
            for _ in 0..chunk_samples(chunk) {
                range_counts.iter_mut().for_each(|c| *c = 0);
                bin_counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    let e = density.sample(&mut rng);
                    for (count, range) in range_counts.iter_mut().zip(ranges) {
                        *count += u128::from(range.contains(e));
                    }
                    let b = (((e - support.lo) / width) as usize).min(bins - 1);
                    bin_counts[b] += 1;
                }
                for (i, &count) in range_counts.iter().enumerate() {
                    let mut power = 1u128;
                    for r in 0..r_max {
                        power *= count;
                        tally.moment_sums[i * r_max + r] += power;
                        tally.moment_squares[i * r_max + r] += power * power;
                    }
                }
                let mut pair = 0;
                for a in 0..bins {
                    let ca = bin_counts[a];
                    tally.bin_sums[a] += ca;
                    tally.bin_squares[a] += ca * ca;
                    for &cb in &bin_counts[a + 1..] {
                        let x = ca * cb;
                        tally.pair_sums[pair] += x;
                        tally.pair_squares[pair] += x * x;
                        pair += 1;
                    }
                }
            }
            tally
        })
        .collect();
    let total = tallies
        .iter()
        .fold(Tally::new(ranges.len(), r_max, bins), |acc, t| acc.merge(t));

    let proc = FixedNProcess::new(n, density.clone(), QContext::<f64>::classical())?;
    let mut moments = Vec::with_capacity(ranges.len() * r_max);
    for (i, (range, &mass)) in ranges.iter().zip(&masses).enumerate() {
        for r in 1..=r_max {
            let k = i * r_max + r - 1;
            let (estimate, stderr) =
                mean_and_stderr(total.moment_sums[k], total.moment_squares[k], samples);
            moments.push(MomentEstimate {
                range_index: i,
                range: *range,
                mass,
                r,
                estimate,
                analytic: moment_with_mass(&proc, r, &mass)?,
                stderr,
            });
        }
    }

    let bin_mass = (0..bins)
        .map(|b| density.integral(&EnergyRange::new(bin_edges[b], bin_edges[b + 1])?))
        .collect::<Result<Vec<_>>>()?;
    let bin_width = |b: usize| bin_edges[b + 1] - bin_edges[b];
    let f1 = (0..bins)
        .map(|b| {
            let (mean, se) = mean_and_stderr(total.bin_sums[b], total.bin_squares[b], samples);
            let w = bin_width(b);
            BinEstimate {
                bin: b,
                estimate: mean / w,
                analytic: n as f64 * bin_mass[b] / w,
                stderr: se / w,
            }
        })
        .collect();
    let mut f2 = Vec::with_capacity(total.pair_sums.len());
    let mut pair = 0;
    for a in 0..bins {
        for b in a + 1..bins {
            let (mean, se) =
                mean_and_stderr(total.pair_sums[pair], total.pair_squares[pair], samples);
            let area = bin_width(a) * bin_width(b);
            f2.push(PairEstimate {
                bin_a: a,
                bin_b: b,
                estimate: mean / area,
                analytic: (n * (n - 1)) as f64 * bin_mass[a] * bin_mass[b] / area,
                stderr: se / area,
            });
            pair += 1;
        }
    }

    Ok(EstimateReport {
        n,
        samples,
        seed,
        bin_edges,
        moments,
        f1,
        f2,
    })
}

/// [`mc_estimate_classical_binned`] with [`DEFAULT_BINS`] bins.
pub fn mc_estimate_classical(
    n: usize,
    density: &DensityModel,
    ranges: &[EnergyRange],
    r_max: usize,
    samples: usize,
    seed: u64,
) -> Result<EstimateReport> {
    mc_estimate_classical_binned(n, density, ranges, r_max, samples, seed, DEFAULT_BINS)
}

#[derive(Clone, Debug)]
enum WeightSource<T> {
    Explicit,
    QPoisson { lambda: T, ctx: QContext<T> },
}

/// Weights `P(N)`, `N = 0..=N_max`, over factorized q-Janossy densities
/// `psi_N = P(N) [N]! f0(E_1)...f0(E_N)`.
#[derive(Clone, Debug)]
pub struct JanossyFamily<T> {
    weights: Vec<T>,
    density: DensityModel,
    ctx: QContext<T>,
    source: WeightSource<T>,
}

/// Reconstructed product density with the bound on what truncation at
/// `N_max` left out.
#[derive(Clone, Debug, PartialEq)]
pub struct JanossyReconstruction<T> {
    pub value: T,
    pub tail_bound: f64,
    pub truncation_warning: bool,
}

impl<T: QField> JanossyFamily<T> {
    /// Arbitrary nonnegative weights summing to one.
    pub fn new(weights: Vec<T>, density: DensityModel, ctx: QContext<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Weights("empty weight sequence".into()));
        }
        if weights.iter().any(|w| *w < T::zero()) {
            return Err(Error::Weights("weights must be nonnegative".into()));
        }
        let total = weights.iter().cloned().fold(T::zero(), |a, w| a + w);
        if (total.to_f64() - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Weights(format!(
                "weights sum to {}, not 1",
                total.to_f64()
            )));
        }
        Ok(JanossyFamily {
            weights,
            density,
            ctx,
            source: WeightSource::Explicit,
        })
    }

    /// q-Poisson weights, truncated where the omitted weighted tail for
    /// every degree `h <= h_max` is below [`JANOSSY_TAIL_TARGET`].
    pub fn q_poisson(
        model: &QPoissonModel<T>,
        density: DensityModel,
        h_max: usize,
    ) -> Result<Self> {
        let mut family = JanossyFamily {
            weights: Vec::new(),
            density,
            ctx: model.ctx().clone(),
            source: WeightSource::QPoisson {
                lambda: model.lambda().clone(),
                ctx: model.ctx().clone(),
            },
        };
        let mut n_max = model.tail_cap().max(h_max + 1);
        loop {
            family.weights = (0..=n_max).map(|n| model.pmf(n)).collect();
            if (0..=h_max).all(|h| family.tail_bound(h) < JANOSSY_TAIL_TARGET) {
                return Ok(family);
            }
            if n_max >= crate::qdist::MAX_TAIL_CAP {
                return Err(Error::NonConvergence(n_max));
            }
            n_max += 1;
        }
    }

    pub fn n_max(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn density(&self) -> &DensityModel {
        &self.density
    }

    /// Bound on `sum_{N > N_max} P(N) [N]!/[N-h]!` for the infinite family
    /// the weights were truncated from (zero for explicit weights).
    pub fn tail_bound(&self, h: usize) -> f64 {
        let WeightSource::QPoisson { lambda, ctx } = &self.source else {
            return 0.0;
        };
        let n_max = self.n_max();
        let next = n_max + 1;
        let numbers = crate::qcalc::q_numbers(next + 1, ctx);
        let weight = self.weights[n_max].clone() * lambda.clone() / numbers[next].clone();
        let first = (weight * falling_product(next, h, ctx)).to_f64().abs();
        if first == 0.0 {
            return 0.0;
        }
        // Successive ratios lambda/[N+1-h] do not increase with N.
        let rho = (lambda.clone() / numbers[next + 1 - h.min(next)].clone()).to_f64();
        if rho < 1.0 {
            first / (1.0 - rho)
        } else {
            f64::INFINITY
        }
    }

    fn check_points(&self, h: usize, points: &[f64]) -> Result<()> {
        if h == 0 {
            return Err(Error::Index("degree h must be >= 1".into()));
        }
        if h >= self.n_max() {
            return Err(Error::Index(format!(
                "degree h={h} must be below N_max={}",
                self.n_max()
            )));
        }
        if points.len() != h {
            return Err(Error::Argument(format!(
                "expected {h} energies, got {}",
                points.len()
            )));
        }
        Ok(())
    }

    fn total_mass(&self) -> Result<T> {
        from_f64(self.density.integral(&self.density.support())?)
    }

    /// `psi_h(E_1..E_h) = P(h) [h]! f0(E_1)...f0(E_h)`.
    pub fn janossy_density(&self, points: &[f64]) -> Result<T> {
        let h = points.len();
        let weight = self
            .weights
            .get(h)
            .ok_or_else(|| Error::Index(format!("degree {h} beyond N_max={}", self.n_max())))?;
        Ok(weight.clone() * q_factorial(h, &self.ctx) * density_product(&self.density, points)?)
    }

    /// `(1/[h]!) * integral psi_h`, which recovers `P(h)`.
    pub fn janossy_normalizer(&self, h: usize) -> Result<T> {
        if h > self.n_max() {
            return Err(Error::Index(format!(
                "degree {h} beyond N_max={}",
                self.n_max()
            )));
        }
        let factorial = q_factorial(h, &self.ctx);
        let integral =
            self.weights[h].clone() * factorial.clone() * self.total_mass()?.pow(h as u32);
        integral
            .checked_div(&factorial)
            .ok_or(Error::InexactDivision)
    }

    /// Product density of degree `h` rebuilt from Janossy densities:
    /// `sum_{N=h}^{N_max} (1/[N-h]!) integral psi_N dE_{h+1}...dE_N`.
    pub fn janossy_to_product_density(
        &self,
        h: usize,
        points: &[f64],
    ) -> Result<JanossyReconstruction<T>> {
        self.check_points(h, points)?;
        let mass = self.total_mass()?;
        let mut sum = T::zero();
        for big_n in h..=self.n_max() {
            let marginal = self.weights[big_n].clone()
                * q_factorial(big_n, &self.ctx)
                * mass.pow((big_n - h) as u32);
            sum = sum
                + marginal
                    .checked_div(&q_factorial(big_n - h, &self.ctx))
                    .ok_or(Error::InexactDivision)?;
        }
        let tail_bound = self.tail_bound(h);
        Ok(JanossyReconstruction {
            value: sum * density_product(&self.density, points)?,
            tail_bound,
            truncation_warning: tail_bound > JANOSSY_TAIL_WARNING,
        })
    }

    /// The same product density as a weighted sum of fixed-`[N]` product
    /// densities: `sum_N P(N) ([N]!/[N-h]!) f0(E_1)...f0(E_h)`.
    pub fn weighted_product_density(&self, h: usize, points: &[f64]) -> Result<T> {
        self.check_points(h, points)?;
        let sum = (h..=self.n_max()).fold(T::zero(), |acc, big_n| {
            acc + self.weights[big_n].clone() * falling_product(big_n, h, &self.ctx)
        });
        Ok(sum * density_product(&self.density, points)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::QPoly;
    use crate::qcalc::q_number;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn range(lo: f64, hi: f64) -> EnergyRange {
        EnergyRange::new(lo, hi).unwrap()
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn density_integrals() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        assert_eq!(u.integral(&range(0.0, 1.0)).unwrap(), 1.0);
        assert!((u.integral(&range(0.0, 0.3)).unwrap() - 0.3).abs() < 1e-15);
        assert!(u.integral(&range(-0.1, 0.3)).is_err());
        let tent = DensityModel::tent(0.0, 1.0).unwrap();
        assert_eq!(tent.integral(&tent.support()).unwrap(), 1.0);
        let half = tent.integral(&range(0.0, 0.5)).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        for (a, b) in [(0.1, 0.35), (0.2, 0.9), (0.55, 0.6)] {
            // Simpson is exact on each linear piece when the kink is a node.
            let mid = 0.5f64.clamp(a, b);
            let quad = simpson(|e| tent.evaluate(e), a, mid, 64)
                + simpson(|e| tent.evaluate(e), mid, b, 64);
            assert!((tent.integral(&range(a, b)).unwrap() - quad).abs() < 1e-13);
        }
    }

    #[test]
    fn density_validation() {
        assert!(DensityModel::uniform(1.0, 1.0).is_err());
        assert!(DensityModel::piecewise_linear(vec![(0.0, 1.0)]).is_err());
        assert!(DensityModel::piecewise_linear(vec![(0.0, 1.0), (1.0, 2.0)]).is_err());
        assert!(DensityModel::piecewise_linear(vec![(0.0, -1.0), (1.0, 3.0)]).is_err());
        assert!(DensityModel::piecewise_linear(vec![(1.0, 1.0), (0.0, 1.0)]).is_err());
        assert!(DensityModel::piecewise_linear(vec![(0.0, 0.5), (2.0, 0.5)]).is_ok());
        let tent = DensityModel::tent(0.0, 2.0).unwrap();
        assert_eq!(tent.evaluate(1.0), 1.0);
        assert_eq!(tent.evaluate(3.0), 0.0);
    }

    #[test]
    fn piecewise_sampler_follows_cdf() {
        let tent = DensityModel::tent(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 200_000;
        let below = (0..m).filter(|_| tent.sample(&mut rng) < 0.25).count() as f64 / m as f64;
        // P(E < 0.25) = 0.125 for the unit tent.
        let se = (0.125f64 * 0.875 / m as f64).sqrt();
        assert!((below - 0.125).abs() < 4.0 * se);
    }

    #[test]
    fn product_density_coefficients() {
        let sym = QContext::symbolic();
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let p = FixedNProcess::new(5, u.clone(), sym.clone()).unwrap();
        assert_eq!(
            product_density_coefficient(&p, 1).unwrap(),
            q_number(5, &sym)
        );
        assert_eq!(
            product_density_coefficient(&p, 2).unwrap(),
            &q_number(5, &sym) * &q_number(4, &sym)
        );
        assert_eq!(
            product_density_coefficient(&p, 5).unwrap(),
            q_factorial(5, &sym)
        );
        assert!(product_density_coefficient(&p, 6).is_err());
        let classical = FixedNProcess::new(5, u, QContext::<f64>::classical()).unwrap();
        assert_eq!(product_density_coefficient(&classical, 2).unwrap(), 20.0);
        assert_eq!(product_density(&classical, &[0.2, 0.7]).unwrap(), 20.0);
        assert!(FixedNProcess::new(0, DensityModel::uniform(0.0, 1.0).unwrap(), sym).is_err());
    }

    #[test]
    fn range_moment_examples() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let p = FixedNProcess::new(2, u.clone(), QContext::float(2.0).unwrap()).unwrap();
        assert_eq!(moment_over_range(&p, 2, &range(0.0, 0.5)).unwrap(), 3.0);
        let p = FixedNProcess::new(10, u.clone(), QContext::<f64>::classical()).unwrap();
        let m2 = moment_over_range(&p, 2, &range(0.0, 0.3)).unwrap();
        assert!((m2 - 11.1).abs() < 1e-12);
        let sym = QContext::symbolic();
        for n in 1..=6 {
            let p = FixedNProcess::new(n, u.clone(), sym.clone()).unwrap();
            for r in 1..=6 {
                assert_eq!(
                    moment_with_mass(&p, r, &QPoly::one()).unwrap(),
                    q_number(n, &sym).pow(r as u32)
                );
            }
        }
    }

    #[test]
    fn marginalization_examples() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let q2 = QContext::exact(BigRational::from_integer(BigInt::from(2))).unwrap();
        let p = FixedNProcess::new(3, u.clone(), q2).unwrap();
        let (l, r) = verify_marginalization(&p, 1).unwrap();
        assert_eq!(l, BigRational::from_integer(7.into()));
        assert_eq!(l, r);
        let sym = QContext::symbolic();
        let p = FixedNProcess::new(4, u.clone(), sym.clone()).unwrap();
        let (l, r) = verify_marginalization(&p, 3).unwrap();
        assert_eq!(l, q_factorial(4, &sym));
        assert_eq!(r, l);
        let p = FixedNProcess::new(6, u, QContext::<BigRational>::classical()).unwrap();
        let (l, r) = verify_marginalization(&p, 2).unwrap();
        assert_eq!((l.clone(), r), (BigRational::from_integer(30.into()), l));
        assert!(verify_marginalization(&p, 6).is_err());
    }

    #[test]
    fn janossy_two_point_family() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let ctx = QContext::float(0.5).unwrap();
        let family = JanossyFamily::new(vec![0.0, 0.0, 1.0], u, ctx.clone()).unwrap();
        let rec = family.janossy_to_product_density(1, &[0.4]).unwrap();
        assert_eq!(rec.value, q_number(2, &ctx));
        assert_eq!(rec.tail_bound, 0.0);
        assert!(!rec.truncation_warning);
        assert_eq!(family.weighted_product_density(1, &[0.4]).unwrap(), 1.5);
        assert_eq!(family.janossy_normalizer(2).unwrap(), 1.0);
        assert_eq!(family.janossy_normalizer(0).unwrap(), 0.0);
        assert!(family.janossy_to_product_density(2, &[0.1, 0.2]).is_err());
        assert!(family.janossy_to_product_density(1, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn janossy_weight_validation() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let ctx = QContext::float(0.5).unwrap();
        assert!(JanossyFamily::new(vec![0.5, 0.4], u.clone(), ctx.clone()).is_err());
        assert!(JanossyFamily::new(vec![1.5, -0.5], u.clone(), ctx.clone()).is_err());
        assert!(JanossyFamily::new(Vec::<f64>::new(), u, ctx).is_err());
    }

    #[test]
    fn janossy_classical_poisson() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let lambda = 1.7;
        let model = QPoissonModel::new(lambda, QContext::float(1.0).unwrap()).unwrap();
        let family = JanossyFamily::q_poisson(&model, u, 3).unwrap();
        let rec = family.janossy_to_product_density(1, &[0.3]).unwrap();
        assert!((rec.value - lambda).abs() < 1e-10);
        assert!(rec.tail_bound < JANOSSY_TAIL_TARGET);
        let mut fact = 1.0;
        for h in 0..6 {
            if h > 0 {
                fact *= h as f64;
            }
            let expected = (-lambda).exp() * lambda.powi(h as i32) / fact;
            assert!((family.janossy_normalizer(h).unwrap() - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn mc_small_run_is_deterministic_and_sane() {
        let u = DensityModel::uniform(0.0, 1.0).unwrap();
        let ranges = [range(0.0, 0.3)];
        let a = mc_estimate_classical(10, &u, &ranges, 2, 20_000, 5).unwrap();
        let b = mc_estimate_classical(10, &u, &ranges, 2, 20_000, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.f1.len(), DEFAULT_BINS);
        assert_eq!(a.f2.len(), DEFAULT_BINS * (DEFAULT_BINS - 1) / 2);
        assert!(a.moments.iter().all(|m| m.estimate >= 0.0));
        assert!((a.moments[0].analytic - 3.0).abs() < 1e-12);
        assert!((a.moments[0].estimate - 3.0).abs() < 4.0 * a.moments[0].stderr);
        assert!(mc_estimate_classical(10, &u, &ranges, 2, 100, 5).is_err());
    }
}
