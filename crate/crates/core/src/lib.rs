//! Multifractal analysis of oscillating Bernoulli measures on the dyadic
//! symbolic space: coarse partition functions, numerical Legendre
//! transforms, Hölder-exponent sampling and the closed-form spectra they
//! are checked against.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Reference constants keep all 21 digits of the high-precision evaluation.
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod analytic;
pub mod config;
pub mod error;
pub mod legendre;
pub mod measure;
pub mod oracle;
pub mod output;
pub mod partition;
pub mod sampling;
pub mod spectrum;
pub mod symbolic;
pub mod verify;

pub use error::{Error, Result};
