//! Flag grammar, the flat TOML config file, and their merge (flags win).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use num_traits::Signed;
use serde::Deserialize;

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "qdensity",
    version,
    about = "q-Stirling tables, q-Bell numbers, q-Poisson moments and q-product densities"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Triangle of q-Stirling coefficients C(r,s)
    Stirling,
    /// q-Bell numbers (row sums) with the q-Dobinski series
    Bell,
    /// q-Poisson moments: direct, Stirling-expanded and (with --samples) Monte Carlo
    Poisson,
    /// Moments from the (u D_q)^r operator against direct and Stirling sums
    OperatorCheck,
    /// Classical (q = 1) Monte Carlo of N points: range moments, f1 and f2
    Simulate,
    /// Product densities rebuilt from q-Poisson Janossy densities
    Janossy,
    /// Run the full identity validation grid
    IdentityCheck,
}

#[derive(ValueEnum, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    #[default]
    Table,
}

/// One-particle density on the unit interval.
#[derive(ValueEnum, Deserialize, Debug, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum DensityArg {
    #[default]
    Uniform,
    Tent,
}

#[derive(Args, Debug, Default)]
pub struct Options {
    /// Deformation parameter: a positive number (decimal or fraction) or "symbolic"
    #[arg(
        long,
        global = true,
        value_name = "NUMBER|symbolic",
        allow_hyphen_values = true
    )]
    pub q: Option<String>,
    /// q-Poisson mean parameter
    #[arg(long, global = true, value_name = "NUMBER", allow_hyphen_values = true)]
    pub lambda: Option<String>,
    /// Largest order r (largest degree h for janossy)
    #[arg(long, global = true, value_name = "R")]
    pub rmax: Option<usize>,
    /// Number of particles for simulate
    #[arg(long, global = true, value_name = "N")]
    pub n: Option<usize>,
    /// Energy sub-range "a,b" for simulate (repeatable)
    #[arg(long, global = true, value_name = "A,B", allow_hyphen_values = true)]
    pub range: Vec<String>,
    /// Monte Carlo sample count
    #[arg(long, global = true, value_name = "COUNT")]
    pub samples: Option<usize>,
    /// Master seed for every random stream
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// One-particle density on [0, 1]
    #[arg(long, global = true, value_enum)]
    pub density: Option<DensityArg>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Write the report here instead of standard output
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Flat TOML file with the same keys as the flags
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(untagged)]
enum Scalar {
    Integer(i64),
    Float(f64),
    Text(String),
}

impl Scalar {
    fn into_string(self) -> String {
        match self {
            Scalar::Integer(i) => i.to_string(),
            Scalar::Float(x) => x.to_string(),
            Scalar::Text(s) => s,
        }
    }
}

#[derive(Deserialize, Debug, Clone)]
#[serde(untagged)]
enum RangeSpec {
    Pair([f64; 2]),
    Text(String),
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    q: Option<Scalar>,
    lambda: Option<Scalar>,
    rmax: Option<usize>,
    n: Option<usize>,
    range: Option<Vec<RangeSpec>>,
    samples: Option<usize>,
    seed: Option<u64>,
    density: Option<DensityArg>,
    format: Option<Format>,
    out: Option<PathBuf>,
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}

/// Deformation parameter as given on the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum QArg {
    Symbolic,
    Value(BigRational),
}

impl QArg {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim() == "symbolic" {
            return Ok(QArg::Symbolic);
        }
        let q = qdensity::scalar::parse_rational(text).ok_or_else(|| {
            CliError::Usage(format!(
                "--q expects a number or \"symbolic\" (got {text:?})"
            ))
        })?;
        if !q.is_positive() {
            return Err(CliError::Domain(format!("q must be positive (got {text})")));
        }
        Ok(QArg::Value(q))
    }
}

/// Flags merged over the config file, with defaults still unresolved
/// where they depend on the subcommand.
#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub q: Option<QArg>,
    pub lambda: Option<f64>,
    pub rmax: Option<usize>,
    pub n: Option<usize>,
    pub ranges: Vec<(f64, f64)>,
    pub samples: Option<usize>,
    pub seed: u64,
    pub density: DensityArg,
    pub format: Format,
    pub out: Option<PathBuf>,
}

fn parse_range(text: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("--range expects \"a,b\" (got {text:?})"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    let a = a.trim().parse::<f64>().map_err(|_| bad())?;
    let b = b.trim().parse::<f64>().map_err(|_| bad())?;
    Ok((a, b))
}

fn parse_lambda(text: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| CliError::Usage(format!("--lambda expects a number (got {text:?})")))
}

impl Settings {
    pub fn resolve(options: Options) -> Result<Self, CliError> {
        let config = match &options.config {
            Some(path) => read_config(path)?,
            None => ConfigFile::default(),
        };
        let q = options.q.or_else(|| config.q.map(Scalar::into_string));
        let lambda = options
            .lambda
            .or_else(|| config.lambda.map(Scalar::into_string));
        let range_texts: Vec<String> = if options.range.is_empty() {
            config
                .range
                .unwrap_or_default()
                .into_iter()
                .map(|r| match r {
                    RangeSpec::Pair([a, b]) => format!("{a},{b}"),
                    RangeSpec::Text(s) => s,
                })
                .collect()
        } else {
            options.range
        };
        Ok(Settings {
            q: q.as_deref().map(QArg::parse).transpose()?,
            lambda: lambda.as_deref().map(parse_lambda).transpose()?,
            rmax: options.rmax.or(config.rmax),
            n: options.n.or(config.n),
            ranges: range_texts
                .iter()
                .map(|s| parse_range(s))
                .collect::<Result<_, _>>()?,
            samples: options.samples.or(config.samples),
            seed: options
                .seed
                .or(config.seed)
                .unwrap_or(qdensity::DEFAULT_SEED),
            density: options.density.or(config.density).unwrap_or_default(),
            format: options.format.or(config.format).unwrap_or_default(),
            out: options.out.or(config.out),
        })
    }
}
