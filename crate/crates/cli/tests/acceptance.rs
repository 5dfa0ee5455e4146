//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails.

use std::path::PathBuf;
use std::process::Command;

use num_rational::BigRational;

use qdensity::pointproc::{
    mc_estimate_classical, verify_marginalization, DensityModel, EnergyRange, FixedNProcess,
    JanossyFamily,
};
use qdensity::qcalc::{q_exp, q_exp_dual};
use qdensity::qcomb::{build_stirling_table, q_bell, q_bell_dobinsky, verify_falling_expansion};
use qdensity::qdist::QPoissonModel;
use qdensity::validate::{admissible_grid, grid_rational, operator_moment};
use qdensity::{QContext, QField, QPoly, DEFAULT_SEED};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

const NONCLASSICAL_Q: [f64; 5] = [0.3, 0.5, 0.9, 1.5, 2.0];

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

/// `[N]` written out as `1 + q + ... + q^(N-1)`.
fn q_number_poly(n: usize) -> QPoly {
    QPoly::from_i64s(&vec![1; n])
}

fn criterion_1() -> Outcome {
    let ctx = QContext::symbolic();
    let mut mismatches = 0;
    for r in 1..=8 {
        for n in 1..=8 {
            let (lhs, rhs) = verify_falling_expansion(r, n, &ctx).unwrap();
            let oracle = (0..r).fold(QPoly::one(), |acc, _| &acc * &q_number_poly(n));
            mismatches += usize::from(lhs != rhs || rhs != oracle);
        }
    }
    outcome(
        mismatches == 0,
        format!("64 (r, N) pairs, {mismatches} polynomial mismatches"),
    )
}

/// `S(r,s) = (1/s!) sum_j (-1)^j C(s,j) (s-j)^r`.
fn explicit_stirling(r: usize, s: usize) -> i128 {
    let mut binom = 1i128;
    let mut total = 0i128;
    for j in 0..=s {
        if j > 0 {
            binom = binom * (s - j + 1) as i128 / j as i128;
        }
        let sign = if j % 2 == 0 { 1 } else { -1 };
        total += sign * binom * ((s - j) as i128).pow(r as u32);
    }
    total / (1..=s as i128).product::<i128>()
}

fn criterion_2() -> Outcome {
    let sym = build_stirling_table(3, &QContext::symbolic()).unwrap();
    let tabulated = sym.entry(2, 2) == QPoly::q()
        && sym.entry(3, 2) == QPoly::from_i64s(&[0, 2, 1])
        && sym.entry(3, 3) == QPoly::from_i64s(&[0, 0, 0, 1]);
    let classical = build_stirling_table(10, &QContext::<BigRational>::classical()).unwrap();
    let mut mismatches = 0;
    for r in 1..=10 {
        for s in 1..=r {
            let expected = BigRational::from_integer((explicit_stirling(r, s) as i64).into());
            mismatches += usize::from(classical.entry(r, s) != expected);
        }
    }
    outcome(
        tabulated && mismatches == 0,
        format!("C22=q, C32=q(2+q), C33=q^3: {tabulated}; q=1 vs S(r,s), r<=10: {mismatches} mismatches"),
    )
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for q in NONCLASSICAL_Q {
        let ctx = QContext::exact(grid_rational(q)).unwrap();
        for r in 1..=8 {
            let bell = q_bell(r, &ctx).unwrap();
            // Truncate the series far below the tolerance relative to the value.
            let scale = bell.to_f64().max(1.0);
            let series_ctx = ctx.clone().with_epsilon(1e-14 / scale);
            let dobinski = q_bell_dobinsky(r, &series_ctx).unwrap();
            worst = worst.max((bell - dobinski).to_f64().abs());
        }
    }
    let classical: Vec<BigRational> = (1..=8)
        .map(|r| q_bell(r, &QContext::<BigRational>::classical()).unwrap())
        .collect();
    let expected: Vec<BigRational> = [1, 2, 5, 15, 52, 203, 877, 4140]
        .iter()
        .map(|&b| BigRational::from_integer(b.into()))
        .collect();
    let sequence_ok = classical == expected;
    outcome(
        worst < 1e-9 && sequence_ok,
        format!("max |B - Dobinski| = {worst:.3e} (< 1e-9, exact backend); q=1 sequence 1..4140: {sequence_ok}"),
    )
}

fn criterion_4() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for q in NONCLASSICAL_Q {
        let ctx = QContext::float(q).unwrap();
        for x in [0.1, 0.5, 1.0] {
            let (Ok(a), Ok(b)) = (q_exp(&x, &ctx), q_exp_dual(&-x, &ctx)) else {
                continue;
            };
            cases += 1;
            worst = worst.max((a.value * b.value - 1.0).abs());
        }
    }
    outcome(
        worst < 1e-10,
        format!("{cases} (x, q) points, max defect {worst:.3e} (< 1e-10)"),
    )
}

fn criterion_5() -> Outcome {
    let (mut norm, mut mean, mut fact): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let grid = admissible_grid();
    for &(q, lambda) in &grid {
        let model = QPoissonModel::new(lambda, QContext::float(q).unwrap()).unwrap();
        norm = norm.max(model.normalization_defect());
        mean = mean.max((model.mean().unwrap() - lambda).abs());
        for k in 1..=6 {
            fact = fact.max((model.factorial_moment(k).unwrap() - lambda.powi(k as i32)).abs());
        }
    }
    outcome(
        norm < 1e-10 && mean < 1e-10 && fact < 1e-9,
        format!(
            "{} (q, lambda) pairs; normalization {norm:.3e}, mean {mean:.3e}, factorial k<=6 {fact:.3e}",
            grid.len()
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    for (q, lambda) in admissible_grid() {
        let model = QPoissonModel::new(lambda, QContext::float(q).unwrap()).unwrap();
        for r in 1..=4 {
            let direct = model.moment(r).unwrap();
            let stirling = model.moment_via_stirling(r).unwrap();
            let operator = operator_moment(&model, r).unwrap();
            for d in [direct - stirling, direct - operator, stirling - operator] {
                worst = worst.max(d.abs());
            }
        }
    }
    outcome(
        worst < 1e-9,
        format!("r<=4 over the admissible grid, max pairwise defect {worst:.3e} (< 1e-9)"),
    )
}

fn criterion_7() -> Outcome {
    let (n, p) = (10usize, 0.3);
    let density = DensityModel::uniform(0.0, 1.0).unwrap();
    let range = EnergyRange::new(0.0, p).unwrap();
    let est = mc_estimate_classical(n, &density, &[range], 2, 1_000_000, DEFAULT_SEED).unwrap();
    // Binomial(N, p): E n^2 = N p (1 - p) + (N p)^2.
    let oracle = n as f64 * p * (1.0 - p) + (n as f64 * p).powi(2);
    let m2 = est.moments.iter().find(|m| m.r == 2).unwrap();
    let z2 = (m2.estimate - oracle).abs() / m2.stderr;
    // f0 = 1 on the unit interval, so f2 = N(N-1) on any pair of disjoint bins.
    let f2_oracle = (n * (n - 1)) as f64;
    let z_f2 = est
        .f2
        .iter()
        .map(|b| (b.estimate - f2_oracle).abs() / b.stderr)
        .fold(0.0, f64::max);
    outcome(
        z2 < 4.0 && z_f2 < 4.0 && (oracle - 11.1).abs() < 1e-12,
        format!(
            "E(n^2) = {:.5} vs {oracle:.1}: {z2:.2} SE; f2 on {} disjoint bin pairs vs {f2_oracle}: max {z_f2:.2} SE",
            m2.estimate,
            est.f2.len()
        ),
    )
}

fn criterion_8() -> Outcome {
    let model = QPoissonModel::new(1.0, QContext::float(0.5).unwrap()).unwrap();
    let fit = model.chi_square_test(1_000_000, DEFAULT_SEED, 16);
    outcome(
        fit.p_value >= 1e-3,
        format!(
            "chi2 = {:.3} on {} dof, p = {:.4} (>= 1e-3)",
            fit.statistic, fit.degrees_of_freedom, fit.p_value
        ),
    )
}

fn criterion_9() -> Outcome {
    let densities = [
        DensityModel::uniform(0.0, 1.0).unwrap(),
        DensityModel::tent(0.0, 1.0).unwrap(),
    ];
    let points = [0.2, 0.45, 0.8];
    let mut worst: f64 = 0.0;
    for (q, lambda) in admissible_grid() {
        let model = QPoissonModel::new(lambda, QContext::float(q).unwrap()).unwrap();
        for density in &densities {
            let family = JanossyFamily::q_poisson(&model, density.clone(), 3).unwrap();
            for h in 1..=3 {
                let pts = &points[..h];
                let target = lambda.powi(h as i32)
                    * pts.iter().map(|&e| density.evaluate(e)).product::<f64>();
                let rec = family.janossy_to_product_density(h, pts).unwrap();
                worst = worst.max((rec.value - target).abs());
            }
        }
    }
    let uniform = DensityModel::uniform(0.0, 1.0).unwrap();
    let mut mismatches = 0;
    let mut pairs = 0;
    let contexts = [
        rat(3, 10),
        rat(1, 2),
        rat(9, 10),
        rat(1, 1),
        rat(3, 2),
        rat(2, 1),
    ];
    for n in 2..=8 {
        for q in &contexts {
            let proc = FixedNProcess::new(n, uniform.clone(), QContext::exact(q.clone()).unwrap())
                .unwrap();
            for h in 1..n {
                let (l, r) = verify_marginalization(&proc, h).unwrap();
                pairs += 1;
                mismatches += usize::from(l != r);
            }
        }
        let proc = FixedNProcess::new(n, uniform.clone(), QContext::symbolic()).unwrap();
        for h in 1..n {
            let (l, r) = verify_marginalization(&proc, h).unwrap();
            pairs += 1;
            mismatches += usize::from(l != r);
        }
    }
    outcome(
        worst < 1e-8 && mismatches == 0,
        format!("reconstruction h<=3 max defect {worst:.3e} (< 1e-8); marginalization {pairs} cases, {mismatches} inexact"),
    )
}

fn criterion_10() -> Outcome {
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let cases: [(&[&str], &str); 2] = [
        (
            &["stirling", "--rmax", "6", "--q", "symbolic"],
            "stirling_rmax6_symbolic.txt",
        ),
        (&["identity-check"], "identity_check.txt"),
    ];
    let mut details = Vec::new();
    let mut passed = true;
    for (args, file) in cases {
        let run = || {
            Command::new(env!("CARGO_BIN_EXE_qdensity"))
                .args(args)
                .output()
                .unwrap()
        };
        let (a, b) = (run(), run());
        let expected = std::fs::read(golden.join(file)).unwrap_or_default();
        let ok = a.status.success() && a.stdout == b.stdout && a.stdout == expected;
        passed &= ok;
        details.push(format!(
            "{}: {}",
            args.join(" "),
            if ok { "byte-identical" } else { "differs" }
        ));
    }
    outcome(passed, details.join("; "))
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("exact falling-expansion identity", criterion_1),
        ("tabulated q-Stirling coefficients", criterion_2),
        ("q-Bell vs q-Dobinski", criterion_3),
        ("Euler identity", criterion_4),
        (
            "q-Poisson normalization, mean, factorial moments",
            criterion_5,
        ),
        ("moment equivalence", criterion_6),
        ("Monte Carlo oracle (q = 1)", criterion_7),
        ("sampler chi-square", criterion_8),
        ("Janossy reconstruction and marginalization", criterion_9),
        ("CLI golden files", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = std::time::Instant::now();
        let result = check();
        let status = if result.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!result.passed);
        println!(
            "{status} criterion {:>2} {name}: {} [{:.1}s]",
            i + 1,
            result.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
