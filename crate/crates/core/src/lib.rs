//! Robust Wald-type tests for composite hypotheses under independent
//! non-homogeneous models, built on the density power divergence.
//!
//! The crate covers minimum density power divergence estimation (plain and
//! under restrictions), the divergence-based test statistic, the weighted
//! chi-square mixture law of that statistic, power approximations,
//! influence functions and a Monte Carlo harness for size and power studies.

pub mod chisq_mixture;
pub mod dpd;
pub mod error;
pub mod estimators;
pub mod inh_model;
pub mod io;
pub mod linalg;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod robustness;
pub mod sim;

pub use error::{DpdError, Result};
pub use inh_model::{InhModel, LinearRegression, ObservationSet, ParamPoint, Restriction};
