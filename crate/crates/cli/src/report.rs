//! JSON documents written by `estimate` and read back by `test`.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use fmols::inference::RankDiagnosis;
use fmols::linalg::{from_rows, sym_eigen_desc, to_rows};
use fmols::lrcov::DEFAULT_RANK_TOL;
use fmols::{BandwidthRule, FmolsFit, KernelSpec};

pub const FIT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub nobs: usize,
    pub ycols: Vec<String>,
    pub xcols: Vec<String>,
    pub kernel: KernelSpec,
    pub bandwidth_rule: BandwidthRule,
    pub bandwidth: f64,
    pub intercept: bool,
    pub a_plus: Vec<Vec<f64>>,
    pub a_ols: Vec<Vec<f64>>,
    pub xtx: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
    pub omega_cond: Vec<Vec<f64>>,
    pub f_hat: Vec<Vec<f64>>,
    pub delta_plus_0x: Vec<Vec<f64>>,
    pub omega_eigenvalues: Vec<f64>,
    pub omega_cond_eigenvalues: Vec<f64>,
    /// Numerical rank of `Ω̂₀₀.ₓ` under the default cutoff.
    pub omega_cond_rank: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_restriction_rank: Option<RankDiagnosis>,
}

impl FitReport {
    pub fn new(
        fit: &FmolsFit,
        rule: BandwidthRule,
        ycols: Vec<String>,
        xcols: Vec<String>,
    ) -> Result<Self> {
        let sd = fit.lr.singular_directions(DEFAULT_RANK_TOL)?;
        Ok(Self {
            schema_version: FIT_SCHEMA_VERSION,
            nobs: fit.nobs(),
            ycols,
            xcols,
            kernel: fit.kernel,
            bandwidth_rule: rule,
            bandwidth: fit.bandwidth,
            intercept: fit.intercept_used,
            a_plus: to_rows(&fit.a_plus),
            a_ols: to_rows(&fit.a_ols),
            xtx: to_rows(&fit.xtx),
            omega: to_rows(&fit.lr.omega),
            delta: to_rows(&fit.lr.delta),
            omega_cond: to_rows(fit.omega_cond()),
            f_hat: to_rows(fit.f_hat()),
            delta_plus_0x: to_rows(&fit.delta_plus_0x),
            omega_eigenvalues: sym_eigen_desc(&fit.lr.omega).0,
            omega_cond_eigenvalues: sd.eigenvalues,
            omega_cond_rank: sd.rank,
            full_restriction_rank: None,
        })
    }

    pub fn parts(&self) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)> {
        let a = from_rows(&self.a_plus).context("a_plus")?;
        let oc = from_rows(&self.omega_cond).context("omega_cond")?;
        let xtx = from_rows(&self.xtx).context("xtx")?;
        Ok((a, oc, xtx))
    }
}
