//! Fully modified OLS.
//!
//! The pipeline is: optional demeaning, OLS, kernel estimates from
//! `(û_{0t}', Δx_t')'`, the endogeneity correction
//! `ŷ⁺_t = y_t − F̂ Δx_t` with `F̂ = Ω̂₀ₓ Ω̂ₓₓ⁻¹`, the serial correlation
//! correction `Δ̂⁺₀ₓ = Δ̂₀ₓ − F̂ Δ̂ₓₓ`, and finally
//! `Â⁺ = (Ŷ⁺'X − T Δ̂⁺₀ₓ)(X'X)⁻¹`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::lrcov::LongRunEstimates;
use crate::series::{ols, SystemData, TimeSeriesMatrix};

#[derive(Debug, Clone)]
pub struct FmolsFit {
    /// `Â⁺`, `m0 x mx`.
    pub a_plus: DMatrix<f64>,
    /// Plain OLS estimate used to seed the kernel estimates.
    pub a_ols: DMatrix<f64>,
    pub lr: LongRunEstimates,
    pub delta_plus_0x: DMatrix<f64>,
    /// `ŷ⁺_t`, `T x m0`.
    pub y_plus: DMatrix<f64>,
    /// OLS residuals `û_{0t}`.
    pub residuals_ols: DMatrix<f64>,
    /// `Δx_t`, `T x mx`.
    pub dx: DMatrix<f64>,
    /// Regressor matrix actually used (demeaned when `intercept_used`).
    pub x: DMatrix<f64>,
    pub xtx: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
    pub intercept_used: bool,
    pub bandwidth: f64,
    pub kernel: KernelSpec,
}

impl FmolsFit {
    pub fn nobs(&self) -> usize {
        self.y_plus.nrows()
    }

    pub fn m0(&self) -> usize {
        self.a_plus.nrows()
    }

    pub fn mx(&self) -> usize {
        self.a_plus.ncols()
    }

    /// `Ω̂₀₀.ₓ`.
    pub fn omega_cond(&self) -> &DMatrix<f64> {
        &self.lr.omega_cond
    }

    /// `F̂ = Ω̂₀ₓ Ω̂ₓₓ⁻¹`.
    pub fn f_hat(&self) -> &DMatrix<f64> {
        &self.lr.f
    }

    /// `û_{0.x,t} = û_{0t} − F̂ Δx_t`.
    pub fn conditional_residuals(&self) -> Result<TimeSeriesMatrix> {
        TimeSeriesMatrix::new(&self.residuals_ols - &self.dx * self.lr.f.transpose())
    }
}

/// Column means removed.
fn demean(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.nrows() as f64;
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / t;
        col.add_scalar_mut(-mean);
    }
    out
}

/// Applies given corrections: `Â⁺ = ((y − Δx F')'X − T Δ⁺)(X'X)⁻¹`.
/// With `f = 0` and `delta_plus_0x = 0` this is OLS.
pub fn apply_corrections(
    y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    dx: &DMatrix<f64>,
    xtx_inv: &DMatrix<f64>,
    f: &DMatrix<f64>,
    delta_plus_0x: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = y.nrows() as f64;
    let y_plus = y - dx * f.transpose();
    let a_plus = (y_plus.transpose() * x - delta_plus_0x * t) * xtx_inv;
    (a_plus, y_plus)
}

pub fn fm_ols(
    data: &SystemData,
    kernel: KernelSpec,
    bandwidth: f64,
    intercept: bool,
) -> Result<FmolsFit> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    let t = data.nobs();
    let mx = data.mx();
    let m0 = data.m0();
    if t <= mx + usize::from(intercept) {
        return Err(Error::Dimension(format!(
            "T = {t} too small for {mx} regressors{}",
            if intercept { " plus intercept" } else { "" }
        )));
    }
    let dx = data.dx();
    let (y, x) = if intercept {
        (demean(data.y.data()), demean(data.x.data()))
    } else {
        (data.y.data().clone(), data.x.data().clone())
    };

    let first = ols(&y, &x)?;
    let mut u = DMatrix::zeros(t, m0 + mx);
    u.columns_mut(0, m0).copy_from(&first.residuals);
    u.columns_mut(m0, mx).copy_from(&dx);
    let lr = LongRunEstimates::estimate(&u, m0, kernel, bandwidth)?;

    let delta_plus_0x = lr.delta_0x() - &lr.f * lr.delta_xx();
    let (a_plus, y_plus) = apply_corrections(&y, &x, &dx, &first.xtx_inv, &lr.f, &delta_plus_0x);
    if a_plus.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("FM-OLS estimate is not finite".into()));
    }

    Ok(FmolsFit {
        a_plus,
        a_ols: first.coef,
        lr,
        delta_plus_0x,
        y_plus,
        residuals_ols: first.residuals,
        dx,
        x,
        xtx: first.xtx,
        xtx_inv: first.xtx_inv,
        intercept_used: intercept,
        bandwidth,
        kernel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::TimeSeriesMatrix;

    fn toy_system(t: usize) -> SystemData {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut x = Vec::with_capacity(t);
        let mut y = Vec::with_capacity(t);
        let mut level = 0.0;
        for _ in 0..t {
            level += next();
            x.push(level);
            y.push(2.0 * level + next());
        }
        SystemData::new(
            TimeSeriesMatrix::from_column(&y).unwrap(),
            TimeSeriesMatrix::from_column(&x).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_corrections_reduce_to_ols() {
        let data = toy_system(120);
        let fit = fm_ols(&data, KernelSpec::PARZEN, 3.0, false).unwrap();
        let zero_f = DMatrix::zeros(1, 1);
        let zero_d = DMatrix::zeros(1, 1);
        let (a, _) = apply_corrections(
            data.y.data(),
            data.x.data(),
            &fit.dx,
            &fit.xtx_inv,
            &zero_f,
            &zero_d,
        );
        assert_eq!(a, fit.a_ols);
    }

    #[test]
    fn conditional_residuals_with_zero_f() {
        let data = toy_system(60);
        let mut fit = fm_ols(&data, KernelSpec::PARZEN, 3.0, false).unwrap();
        fit.lr.f = DMatrix::zeros(1, 1);
        let r = fit.conditional_residuals().unwrap();
        assert_eq!(r.data(), &fit.residuals_ols);
    }

    #[test]
    fn rejects_bad_bandwidth_and_short_samples() {
        let data = toy_system(20);
        assert!(fm_ols(&data, KernelSpec::PARZEN, 0.0, false).is_err());
        assert!(fm_ols(&data, KernelSpec::PARZEN, -1.0, false).is_err());
        let tiny = SystemData::new(
            TimeSeriesMatrix::from_column(&[1.0, 2.0]).unwrap(),
            TimeSeriesMatrix::from_column(&[1.0, 3.0]).unwrap(),
        )
        .unwrap();
        assert!(fm_ols(&tiny, KernelSpec::PARZEN, 1.0, true).is_err());
    }

    #[test]
    fn intercept_demeans() {
        let data = toy_system(80);
        let shifted = SystemData::new(
            TimeSeriesMatrix::new(data.y.data().add_scalar(5.0)).unwrap(),
            data.x.clone(),
        )
        .unwrap();
        let a = fm_ols(&data, KernelSpec::PARZEN, 3.0, true).unwrap();
        let b = fm_ols(&shifted, KernelSpec::PARZEN, 3.0, true).unwrap();
        assert!((a.a_plus[(0, 0)] - b.a_plus[(0, 0)]).abs() < 1e-10);
        assert!(a.intercept_used);
    }
}
