//! Fully modified OLS for triangular cointegrated systems whose long-run
//! error covariance may be singular.
//!
//! Modules follow the estimation pipeline: [`series`] holds the data,
//! [`kernels`] and [`lrcov`] build the long-run covariance estimates,
//! [`fmols`] applies the corrections, [`inference`] tests restrictions.
//! [`dgp`] and [`montecarlo`] simulate designs with known population
//! quantities, and [`fiscal`] runs the sustainability regression on FRED
//! data.

pub mod dgp;
pub mod error;
pub mod fiscal;
pub mod fmols;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod lrcov;
pub mod montecarlo;
pub mod series;

pub use error::{Error, Result};
pub use fmols::{fm_ols, FmolsFit};
pub use kernels::{BandwidthRule, KernelFamily, KernelSpec};
pub use lrcov::LongRunEstimates;
pub use series::{SystemData, TimeSeriesMatrix};
