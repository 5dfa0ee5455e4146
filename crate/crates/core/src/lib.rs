//! q-deformed product densities for stochastic point processes.
//!
//! The crate is layered bottom-up:
//!
//! * [`qcalc`]: q-numbers, q-factorials, q-binomials, the q-exponentials
//!   `e_q` and `e_{1/q}`, and the q-derivative on truncated power series.
//! * [`qcomb`]: the q-Stirling coefficients of the falling-q-factorial
//!   expansion `[N]^r = sum_s C(r,s) [N]!/[N-s]!`, q-Bell numbers and the
//!   q-Dobinski series.
//! * [`qdist`]: the q-Poisson distribution, its moments, generating series
//!   and a seedable sampler.
//! * [`pointproc`]: product densities on an energy axis, Monte Carlo
//!   estimation at `q = 1`, and the q-Janossy reconstruction.
//!
//! Scalars are generic: `f64`, exact [`num_rational::BigRational`], or
//! [`QPoly`] when a result is a polynomial in `q`.

pub mod error;
pub mod pointproc;
pub mod poly;
pub mod qcalc;
pub mod qcomb;
pub mod qdist;
pub mod scalar;
pub mod series;
pub mod validate;

pub use error::{Error, Result};
pub use poly::QPoly;
pub use qcalc::QContext;
pub use scalar::{Backend, QField, QRing};
pub use series::PowerSeries;

/// Seed used whenever the caller does not supply one.
pub const DEFAULT_SEED: u64 = 20_240_611;
