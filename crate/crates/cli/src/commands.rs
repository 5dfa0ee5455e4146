//! One function per subcommand, each turning [`Settings`] into a [`Report`].

use num_rational::BigRational;
use serde_json::{json, Value};

use qdensity::pointproc::{mc_estimate_classical, DensityModel, EnergyRange, JanossyFamily};
use qdensity::qcomb::{build_stirling_table, q_bell_dobinsky, StirlingTable};
use qdensity::qdist::{MomentReport, QPoissonModel};
use qdensity::validate::{operator_moment, run_identity_suite};
use qdensity::{QContext, QField, QPoly};

use crate::args::{Command, DensityArg, QArg, Settings};
use crate::report::{num, sci, Report};
use crate::CliError;

pub const DEFAULT_TABLE_R_MAX: usize = 6;
pub const DEFAULT_MOMENT_R_MAX: usize = 4;
pub const DEFAULT_SIM_R_MAX: usize = 2;
pub const DEFAULT_SIM_N: usize = 10;
pub const DEFAULT_SIM_SAMPLES: usize = 100_000;
pub const DEFAULT_JANOSSY_H_MAX: usize = 3;
pub const DEFAULT_IDENTITY_SAMPLES: usize = 1_000_000;
pub const OPERATOR_TOLERANCE: f64 = 1e-9;

/// A report and whether every check it contains passed.
pub struct Outcome {
    pub report: Report,
    pub passed: bool,
}

impl From<Report> for Outcome {
    fn from(report: Report) -> Self {
        Outcome {
            report,
            passed: true,
        }
    }
}

pub fn dispatch(command: Command, settings: &Settings) -> Result<Outcome, CliError> {
    match command {
        Command::Stirling => stirling(settings).map(Outcome::from),
        Command::Bell => bell(settings).map(Outcome::from),
        Command::Poisson => poisson(settings).map(Outcome::from),
        Command::OperatorCheck => operator_check(settings),
        Command::Simulate => simulate(settings).map(Outcome::from),
        Command::Janossy => janossy(settings).map(Outcome::from),
        Command::IdentityCheck => identity_check(settings),
    }
}

fn q_label(q: &QArg) -> String {
    match q {
        QArg::Symbolic => "symbolic".into(),
        QArg::Value(v) => v.to_string(),
    }
}

/// Numeric `q` for commands that cannot run symbolically; defaults to 1
/// only where `default_one` says so.
fn numeric_q(
    settings: &Settings,
    command: &str,
    default_one: bool,
) -> Result<BigRational, CliError> {
    match &settings.q {
        Some(QArg::Value(q)) => Ok(q.clone()),
        Some(QArg::Symbolic) => Err(CliError::Usage(format!("{command} needs a numeric --q"))),
        None if default_one => Ok(BigRational::from_integer(1.into())),
        None => Err(CliError::Usage(format!("{command} needs --q"))),
    }
}

fn required_lambda(settings: &Settings, command: &str) -> Result<f64, CliError> {
    settings
        .lambda
        .ok_or_else(|| CliError::Usage(format!("{command} needs --lambda")))
}

fn poisson_model(settings: &Settings, command: &str) -> Result<QPoissonModel<f64>, CliError> {
    let q = numeric_q(settings, command, false)?;
    let lambda = required_lambda(settings, command)?;
    Ok(QPoissonModel::new(lambda, QContext::float(q.to_f64())?)?)
}

fn density(settings: &Settings) -> Result<DensityModel, CliError> {
    Ok(match settings.density {
        DensityArg::Uniform => DensityModel::uniform(0.0, 1.0)?,
        DensityArg::Tent => DensityModel::tent(0.0, 1.0)?,
    })
}

/// Symbolic triangle and, for numeric `q`, its exact values.
fn stirling_tables(
    r_max: usize,
    q: &QArg,
) -> Result<(StirlingTable<QPoly>, Option<StirlingTable<BigRational>>), CliError> {
    let symbolic = build_stirling_table(r_max, &QContext::symbolic())?;
    let values = match q {
        QArg::Symbolic => None,
        QArg::Value(v) => Some(build_stirling_table(r_max, &QContext::exact(v.clone())?)?),
    };
    Ok((symbolic, values))
}

/// Tables print polynomials from the highest power down; CSV and JSON use
/// the canonical ascending form.
fn stirling(settings: &Settings) -> Result<Report, CliError> {
    let r_max = settings.rmax.unwrap_or(DEFAULT_TABLE_R_MAX);
    let q = settings.q.clone().unwrap_or(QArg::Symbolic);
    let (symbolic, values) = stirling_tables(r_max, &q)?;
    let mut entries = Vec::new();
    let headers: &[&str] = if values.is_some() {
        &["r", "s", "polynomial", "value"]
    } else {
        &["r", "s", "polynomial"]
    };
    let mut report = Report::new(headers, Value::Null);
    let mut table_rows = Vec::new();
    for (r, s, p) in symbolic.iter() {
        let value = values.as_ref().map(|t| t.entry(r, s).to_f64());
        entries.push(json!({ "r": r, "s": s, "polynomial": p.to_string(), "value": value }));
        let mut row = vec![r.to_string(), s.to_string(), p.to_string()];
        row.extend(value.map(num));
        let mut table_row = row.clone();
        table_row[2] = p.to_descending_string();
        report.rows.push(row);
        table_rows.push(table_row);
    }
    report.table_rows = Some(table_rows);
    report.json = json!({ "q": q_label(&q), "r_max": r_max, "entries": entries });
    Ok(report)
}

fn bell(settings: &Settings) -> Result<Report, CliError> {
    let r_max = settings.rmax.unwrap_or(DEFAULT_TABLE_R_MAX);
    let q = settings.q.clone().unwrap_or(QArg::Symbolic);
    let (symbolic, values) = stirling_tables(r_max, &q)?;
    let float_ctx = match &q {
        QArg::Value(v) => Some(QContext::float(v.to_f64())?),
        QArg::Symbolic => None,
    };
    let headers: &[&str] = if values.is_some() {
        &["r", "polynomial", "value", "dobinski"]
    } else {
        &["r", "polynomial"]
    };
    let mut report = Report::new(headers, Value::Null);
    let mut table_rows = Vec::new();
    let mut entries = Vec::new();
    for r in 1..=r_max {
        let p = symbolic.row_sum(r);
        let value = values.as_ref().map(|t| t.row_sum(r).to_f64());
        let dobinski = float_ctx
            .as_ref()
            .map(|ctx| q_bell_dobinsky(r, ctx))
            .transpose()?;
        entries.push(
            json!({ "r": r, "polynomial": p.to_string(), "value": value, "dobinski": dobinski }),
        );
        let mut row = vec![r.to_string(), p.to_string()];
        row.extend(value.map(num));
        row.extend(dobinski.map(num));
        let mut table_row = row.clone();
        table_row[1] = p.to_descending_string();
        report.rows.push(row);
        table_rows.push(table_row);
    }
    report.table_rows = Some(table_rows);
    report.json = json!({ "q": q_label(&q), "r_max": r_max, "entries": entries });
    Ok(report)
}

fn poisson(settings: &Settings) -> Result<Report, CliError> {
    let model = poisson_model(settings, "poisson")?;
    let r_max = settings.rmax.unwrap_or(DEFAULT_MOMENT_R_MAX);
    let rows: Vec<MomentReport> = match settings.samples {
        Some(samples) => {
            model
                .empirical_moment_report(r_max, samples, settings.seed)?
                .rows
        }
        None => (1..=r_max)
            .map(|r| {
                Ok(MomentReport {
                    r,
                    analytic: model.moment(r)?,
                    via_stirling: model.moment_via_stirling(r)?,
                    empirical: None,
                    standard_error: None,
                    sample_count: 0,
                    seed: settings.seed,
                })
            })
            .collect::<Result<_, qdensity::Error>>()?,
    };
    let mut report = Report::new(
        &["r", "analytic", "via_stirling", "empirical", "stderr"],
        Value::Null,
    );
    report.preamble = vec![
        format!(
            "q = {}, lambda = {}",
            num(*model.ctx().q()),
            num(*model.lambda())
        ),
        format!("e_{{1/q}}(-lambda) = {}", num(*model.prefactor())),
        format!("tail_cap = {}", model.tail_cap()),
        format!(
            "normalization_defect = {}",
            sci(model.normalization_defect())
        ),
    ];
    for m in &rows {
        report.rows.push(vec![
            m.r.to_string(),
            num(m.analytic),
            num(m.via_stirling),
            m.empirical.map(num).unwrap_or_default(),
            m.standard_error.map(num).unwrap_or_default(),
        ]);
    }
    report.json = json!({
        "q": model.ctx().q(),
        "lambda": model.lambda(),
        "prefactor": model.prefactor(),
        "tail_cap": model.tail_cap(),
        "normalization_defect": model.normalization_defect(),
        "samples": settings.samples.unwrap_or(0),
        "seed": settings.seed,
        "rows": rows,
    });
    Ok(report)
}

fn operator_check(settings: &Settings) -> Result<Outcome, CliError> {
    let model = poisson_model(settings, "operator-check")?;
    let r_max = settings.rmax.unwrap_or(DEFAULT_MOMENT_R_MAX);
    let mut report = Report::new(
        &[
            "r",
            "direct",
            "stirling",
            "operator",
            "max_defect",
            "status",
        ],
        Value::Null,
    );
    let mut entries = Vec::new();
    let mut all_passed = true;
    for r in 1..=r_max {
        let direct = model.moment(r)?;
        let stirling = model.moment_via_stirling(r)?;
        let operator = operator_moment(&model, r)?;
        let defect = [direct - stirling, operator - direct, operator - stirling]
            .iter()
            .map(|d| d.abs())
            .fold(0.0, f64::max);
        let passed = defect < OPERATOR_TOLERANCE;
        all_passed &= passed;
        report.rows.push(vec![
            r.to_string(),
            num(direct),
            num(stirling),
            num(operator),
            sci(defect),
            status(passed).into(),
        ]);
        entries.push(json!({
            "r": r, "direct": direct, "stirling": stirling, "operator": operator,
            "max_defect": defect, "passed": passed,
        }));
    }
    report.json = json!({
        "q": model.ctx().q(),
        "lambda": model.lambda(),
        "tolerance": OPERATOR_TOLERANCE,
        "rows": entries,
    });
    Ok(Outcome {
        report,
        passed: all_passed,
    })
}

fn simulate(settings: &Settings) -> Result<Report, CliError> {
    let q = numeric_q(settings, "simulate", true)?;
    if q != BigRational::from_integer(1.into()) {
        return Err(CliError::Domain(format!(
            "Monte Carlo sampling is defined only at q = 1 (got q = {q})"
        )));
    }
    let density = density(settings)?;
    let ranges = if settings.ranges.is_empty() {
        vec![density.support()]
    } else {
        settings
            .ranges
            .iter()
            .map(|&(a, b)| EnergyRange::new(a, b))
            .collect::<Result<_, _>>()?
    };
    let est = mc_estimate_classical(
        settings.n.unwrap_or(DEFAULT_SIM_N),
        &density,
        &ranges,
        settings.rmax.unwrap_or(DEFAULT_SIM_R_MAX),
        settings.samples.unwrap_or(DEFAULT_SIM_SAMPLES),
        settings.seed,
    )?;
    let mut report = Report::new(
        &[
            "kind", "a", "b", "lo", "hi", "r", "estimate", "analytic", "stderr",
        ],
        serde_json::to_value(&est).expect("reports serialize"),
    );
    report.preamble = vec![format!(
        "N = {}, samples = {}, seed = {}",
        est.n, est.samples, est.seed
    )];
    for m in &est.moments {
        report.rows.push(vec![
            "moment".into(),
            m.range_index.to_string(),
            String::new(),
            num(m.range.lo),
            num(m.range.hi),
            m.r.to_string(),
            num(m.estimate),
            num(m.analytic),
            num(m.stderr),
        ]);
    }
    for b in &est.f1 {
        report.rows.push(vec![
            "f1".into(),
            b.bin.to_string(),
            String::new(),
            num(est.bin_edges[b.bin]),
            num(est.bin_edges[b.bin + 1]),
            String::new(),
            num(b.estimate),
            num(b.analytic),
            num(b.stderr),
        ]);
    }
    for p in &est.f2 {
        report.rows.push(vec![
            "f2".into(),
            p.bin_a.to_string(),
            p.bin_b.to_string(),
            String::new(),
            String::new(),
            String::new(),
            num(p.estimate),
            num(p.analytic),
            num(p.stderr),
        ]);
    }
    Ok(report)
}

/// Evaluation energies for degree `h`: equally spaced inside `[lo, hi]`.
fn janossy_points(support: EnergyRange, h: usize) -> Vec<f64> {
    (1..=h)
        .map(|i| support.lo + support.width() * i as f64 / (h + 1) as f64)
        .collect()
}

fn janossy(settings: &Settings) -> Result<Report, CliError> {
    let model = poisson_model(settings, "janossy")?;
    let h_max = settings.rmax.unwrap_or(DEFAULT_JANOSSY_H_MAX);
    let density = density(settings)?;
    let family = JanossyFamily::q_poisson(&model, density.clone(), h_max)?;
    let normalizer_sum = (0..=family.n_max())
        .map(|h| family.janossy_normalizer(h))
        .sum::<Result<f64, _>>()?;
    let lambda = *model.lambda();
    let mut report = Report::new(
        &[
            "h",
            "points",
            "reconstructed",
            "weighted",
            "target",
            "defect",
            "tail_bound",
            "warning",
        ],
        Value::Null,
    );
    report.preamble = vec![
        format!(
            "q = {}, lambda = {}, N_max = {}",
            num(*model.ctx().q()),
            num(lambda),
            family.n_max()
        ),
        format!("sum of normalizers = {}", num(normalizer_sum)),
    ];
    let mut entries = Vec::new();
    for h in 1..=h_max {
        let points = janossy_points(density.support(), h);
        let rec = family.janossy_to_product_density(h, &points)?;
        let weighted = family.weighted_product_density(h, &points)?;
        let target =
            lambda.powi(h as i32) * points.iter().map(|&e| density.evaluate(e)).product::<f64>();
        let defect = (rec.value - target).abs().max((weighted - target).abs());
        report.rows.push(vec![
            h.to_string(),
            points.iter().map(|&e| num(e)).collect::<Vec<_>>().join(";"),
            num(rec.value),
            num(weighted),
            num(target),
            sci(defect),
            sci(rec.tail_bound),
            rec.truncation_warning.to_string(),
        ]);
        entries.push(json!({
            "h": h, "points": points, "reconstructed": rec.value, "weighted": weighted,
            "target": target, "defect": defect, "tail_bound": rec.tail_bound,
            "warning": rec.truncation_warning,
        }));
    }
    report.json = json!({
        "q": model.ctx().q(),
        "lambda": lambda,
        "n_max": family.n_max(),
        "normalizer_sum": normalizer_sum,
        "rows": entries,
    });
    Ok(report)
}

fn status(passed: bool) -> &'static str {
    if passed {
        "PASS"
    } else {
        "FAIL"
    }
}

fn identity_check(settings: &Settings) -> Result<Outcome, CliError> {
    let samples = settings.samples.unwrap_or(DEFAULT_IDENTITY_SAMPLES);
    let rows = run_identity_suite(samples, settings.seed)?;
    let mut report = Report::new(
        &["identity", "cases", "max_defect", "tolerance", "status"],
        Value::Null,
    );
    for row in &rows {
        report.rows.push(vec![
            row.identity.clone(),
            row.cases.to_string(),
            sci(row.max_defect),
            sci(row.tolerance),
            status(row.passed).into(),
        ]);
    }
    let passed = rows.iter().all(|r| r.passed);
    report.json = json!({ "seed": settings.seed, "samples": samples, "rows": rows });
    Ok(Outcome { report, passed })
}
