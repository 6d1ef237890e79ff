//! Kernel estimates of long-run and one-sided long-run covariance matrices,
//! their partition into equation (`0`) and regressor (`x`) blocks, and the
//! eigen-analysis of the conditional long-run covariance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{self, serde_matrix, spd_inverse, sym_eigen_desc};
use crate::series::{autocovariance_nonneg, TimeSeriesMatrix};

/// Relative eigenvalue cutoff used to count the rank of `Ω₀₀.ₓ`.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Below this largest eigenvalue the conditional covariance counts as zero.
pub const RANK_ABS_FLOOR: f64 = 1e-12;

/// `Δ̂ = Σ_{j≥0} w(j/K) Γ̂(j)` and `Γ̂(0)` in one pass.
fn onesided_with_gamma0(
    u: &DMatrix<f64>,
    kernel: KernelSpec,
    bandwidth: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let t = u.nrows();
    let gamma0 = autocovariance_nonneg(u, 0);
    let mut delta = gamma0.clone();
    for j in 1..=kernel.max_lag(bandwidth, t) {
        let w = kernel.weight(j as f64 / bandwidth);
        if w != 0.0 {
            delta += autocovariance_nonneg(u, j) * w;
        }
    }
    (delta, gamma0)
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )))
    }
}

/// `Ω̂ = Σ_{|j|<T} w(j/K) Γ̂(j)`.
pub fn longrun_cov(u: &TimeSeriesMatrix, kernel: KernelSpec, bandwidth: f64) -> Result<DMatrix<f64>> {
    check_bandwidth(bandwidth)?;
    let (delta, gamma0) = onesided_with_gamma0(u.data(), kernel, bandwidth);
    Ok(&delta + delta.transpose() - gamma0)
}

/// `Δ̂ = Σ_{0≤j<T} w(j/K) Γ̂(j)`.
pub fn onesided_longrun_cov(
    u: &TimeSeriesMatrix,
    kernel: KernelSpec,
    bandwidth: f64,
) -> Result<DMatrix<f64>> {
    check_bandwidth(bandwidth)?;
    Ok(onesided_with_gamma0(u.data(), kernel, bandwidth).0)
}

/// Kernel estimates for `u_t = (u_{0t}', u_{xt}')'` partitioned after the
/// first `m0` coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LongRunEstimates {
    #[serde(with = "serde_matrix")]
    pub omega: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub delta: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub gamma0: DMatrix<f64>,
    pub m0: usize,
    /// `Ω̂₀₀.ₓ = Ω̂₀₀ − Ω̂₀ₓ Ω̂ₓₓ⁻¹ Ω̂ₓ₀`.
    #[serde(with = "serde_matrix")]
    pub omega_cond: DMatrix<f64>,
    /// `F̂ = Ω̂₀ₓ Ω̂ₓₓ⁻¹`.
    #[serde(with = "serde_matrix")]
    pub f: DMatrix<f64>,
}

impl LongRunEstimates {
    /// Estimates `Ω̂`, `Δ̂` and the conditional blocks from raw data.
    /// `Ω̂` is assembled as `Δ̂ + Δ̂' − Γ̂(0)`.
    pub fn estimate(u: &DMatrix<f64>, m0: usize, kernel: KernelSpec, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let m = u.ncols();
        if m0 == 0 || m0 >= m {
            return Err(Error::Dimension(format!(
                "partition m0 = {m0} invalid for {m} columns"
            )));
        }
        let (delta, gamma0) = onesided_with_gamma0(u, kernel, bandwidth);
        let omega = &delta + delta.transpose() - &gamma0;
        Self::from_parts(omega, delta, gamma0, m0)
    }

    pub fn from_parts(
        omega: DMatrix<f64>,
        delta: DMatrix<f64>,
        gamma0: DMatrix<f64>,
        m0: usize,
    ) -> Result<Self> {
        let (omega_cond, f) = conditional_lrcov(&omega, m0)?;
        Ok(Self {
            omega,
            delta,
            gamma0,
            m0,
            omega_cond,
            f,
        })
    }

    pub fn mx(&self) -> usize {
        self.omega.nrows() - self.m0
    }

    pub fn omega_00(&self) -> DMatrix<f64> {
        self.omega.view((0, 0), (self.m0, self.m0)).into_owned()
    }

    pub fn omega_0x(&self) -> DMatrix<f64> {
        self.omega.view((0, self.m0), (self.m0, self.mx())).into_owned()
    }

    pub fn omega_x0(&self) -> DMatrix<f64> {
        self.omega.view((self.m0, 0), (self.mx(), self.m0)).into_owned()
    }

    pub fn omega_xx(&self) -> DMatrix<f64> {
        self.omega.view((self.m0, self.m0), (self.mx(), self.mx())).into_owned()
    }

    pub fn delta_0x(&self) -> DMatrix<f64> {
        self.delta.view((0, self.m0), (self.m0, self.mx())).into_owned()
    }

    pub fn delta_xx(&self) -> DMatrix<f64> {
        self.delta.view((self.m0, self.m0), (self.mx(), self.mx())).into_owned()
    }

    pub fn singular_directions(&self, tol: f64) -> Result<SingularDirections> {
        singular_directions(&self.omega_cond, tol)
    }
}

/// Schur complement of the `xx` block: returns `(Ω₀₀.ₓ, F = Ω₀ₓ Ωₓₓ⁻¹)`.
pub fn conditional_lrcov(omega: &DMatrix<f64>, m0: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let m = omega.nrows();
    if omega.ncols() != m || m0 == 0 || m0 >= m {
        return Err(Error::Dimension(format!(
            "cannot partition a {}x{} matrix at m0 = {m0}",
            omega.nrows(),
            omega.ncols()
        )));
    }
    let mx = m - m0;
    let o00 = omega.view((0, 0), (m0, m0));
    let o0x = omega.view((0, m0), (m0, mx));
    let ox0 = omega.view((m0, 0), (mx, m0));
    let oxx = omega.view((m0, m0), (mx, mx)).into_owned();
    let oxx_inv = spd_inverse(&oxx, "Ω_xx")?;
    let f = o0x * oxx_inv;
    let cond = o00 - &f * ox0;
    Ok((linalg::symmetrize(&cond), f))
}

/// Eigen-split of `Ω₀₀.ₓ` into retained directions `R` (scaled so that
/// `RR' ≈ Ω₀₀.ₓ`) and orthonormal null directions `R_⊥`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SingularDirections {
    pub rank: usize,
    #[serde(with = "serde_matrix")]
    pub r: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub r_perp: DMatrix<f64>,
    /// Descending eigenvalues of `Ω₀₀.ₓ`.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors matching `eigenvalues`.
    #[serde(with = "serde_matrix")]
    pub eigenvectors: DMatrix<f64>,
}

impl SingularDirections {
    pub fn nullity(&self) -> usize {
        self.r_perp.ncols()
    }
}

/// Counts eigenvalues above `tol * λ_max` (none if `λ_max` is below
/// [`RANK_ABS_FLOOR`]). The true rank is not observable; this is a
/// diagnostic threshold.
pub fn singular_directions(omega_cond: &DMatrix<f64>, tol: f64) -> Result<SingularDirections> {
    let n = omega_cond.nrows();
    if omega_cond.ncols() != n || n == 0 {
        return Err(Error::Dimension("conditional covariance must be square".into()));
    }
    let scale = omega_cond.amax().max(1.0);
    let asym = linalg::max_asymmetry(omega_cond);
    if asym > 1e-8 * scale {
        return Err(Error::Asymmetric(asym));
    }
    let (values, vectors) = sym_eigen_desc(omega_cond);
    let max = values[0];
    let rank = if max <= RANK_ABS_FLOOR {
        0
    } else {
        values.iter().filter(|&&v| v > tol * max).count()
    };
    let r = DMatrix::from_fn(n, rank, |i, j| vectors[(i, j)] * values[j].sqrt());
    let r_perp = vectors.columns(rank, n - rank).into_owned();
    Ok(SingularDirections {
        rank,
        r,
        r_perp,
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelFamily;

    fn lcg_matrix(rows: usize, cols: usize, mut state: u64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    /// Independent loop oracle for Σ_j w(j/K) Γ̂(j) over every admissible lag.
    fn brute_force(u: &DMatrix<f64>, kernel: KernelSpec, bw: f64, two_sided: bool) -> DMatrix<f64> {
        let t = u.nrows() as isize;
        let m = u.ncols();
        let mut out = DMatrix::zeros(m, m);
        let lo = if two_sided { -(t - 1) } else { 0 };
        for j in lo..t {
            let w = kernel.weight(j as f64 / bw);
            for a in 0..m {
                for b in 0..m {
                    let mut s = 0.0;
                    for tt in 0..t {
                        let lead = tt + j;
                        if lead >= 0 && lead < t {
                            s += u[(lead as usize, a)] * u[(tt as usize, b)];
                        }
                    }
                    out[(a, b)] += w * s / t as f64;
                }
            }
        }
        out
    }

    #[test]
    fn matches_loop_oracle() {
        let u = lcg_matrix(50, 2, 7);
        let ts = TimeSeriesMatrix::new(u.clone()).unwrap();
        for fam in [
            KernelFamily::Parzen,
            KernelFamily::TukeyHanning,
            KernelFamily::Bartlett,
            KernelFamily::QuadraticSpectral,
        ] {
            let k = KernelSpec::new(fam);
            for bw in [3.0, 3.7] {
                let om = longrun_cov(&ts, k, bw).unwrap();
                let de = onesided_longrun_cov(&ts, k, bw).unwrap();
                assert!((&om - brute_force(&u, k, bw, true)).amax() < 1e-12, "{fam:?}");
                assert!((&de - brute_force(&u, k, bw, false)).amax() < 1e-12, "{fam:?}");
            }
        }
    }

    #[test]
    fn orthogonal_design_keeps_only_lag_zero() {
        // a single nonzero row has no lagged cross products
        let rows: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, -2.0], vec![0.0, 0.0], vec![0.0, 0.0]];
        let ts = TimeSeriesMatrix::from_rows(&rows).unwrap();
        for j in 1..4 {
            assert_eq!(ts.lag_autocovariance(j).unwrap().amax(), 0.0);
        }
        let g0 = ts.lag_autocovariance(0).unwrap();
        let k = KernelSpec::PARZEN;
        assert_eq!(longrun_cov(&ts, k, 10.0).unwrap(), g0);
        assert_eq!(onesided_longrun_cov(&ts, k, 10.0).unwrap(), g0);
    }

    #[test]
    fn omega_identity() {
        let u = lcg_matrix(80, 3, 11);
        let est = LongRunEstimates::estimate(&u, 1, KernelSpec::PARZEN, 4.2).unwrap();
        let rebuilt = &est.delta + est.delta.transpose() - &est.gamma0;
        assert_eq!(est.omega, rebuilt);
        assert!(linalg::max_asymmetry(&est.omega) < 1e-12);
    }

    #[test]
    fn block_diagonal_conditional() {
        let omega = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.3, 0.0, 0.3, 1.0]);
        let (cond, f) = conditional_lrcov(&omega, 1).unwrap();
        assert_eq!(cond[(0, 0)], 2.0);
        assert_eq!(f.amax(), 0.0);
    }

    #[test]
    fn singular_omega_xx_is_error() {
        let omega = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            conditional_lrcov(&omega, 1),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn dgp2_singular_conditional() {
        let omega = DMatrix::from_row_slice(2, 2, &[2.37, 9.48, 9.48, 37.92]);
        let (cond, f) = conditional_lrcov(&omega, 1).unwrap();
        assert!((f[(0, 0)] - 0.25).abs() < 1e-14);
        assert!(cond[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_directions() {
        let sd = singular_directions(&DMatrix::zeros(2, 2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(sd.rank, 0);
        assert_eq!(sd.r.ncols(), 0);
        let p = &sd.r_perp * sd.r_perp.transpose();
        assert!((p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
    }

    #[test]
    fn diag_directions() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]);
        let sd = singular_directions(&m, 1e-6).unwrap();
        assert_eq!(sd.rank, 1);
        assert!((&sd.r * sd.r.transpose() - &m).amax() < 1e-14);
        assert!((sd.r_perp[(1, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(sd.r_perp[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn recovers_constructed_rank() {
        let g = lcg_matrix(3, 2, 99);
        let m = &g * g.transpose();
        let sd = singular_directions(&m, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(sd.rank, 2);
        assert!((&sd.r * sd.r.transpose() - &m).norm() < 1e-9);
        let full = DMatrix::from_fn(3, 3, |i, j| if j < 2 { sd.eigenvectors[(i, j)] } else { sd.r_perp[(i, 0)] });
        assert!((full.transpose() * &full - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            singular_directions(&m, DEFAULT_RANK_TOL),
            Err(Error::Asymmetric(_))
        ));
    }

    #[test]
    fn nonpositive_bandwidth() {
        let ts = TimeSeriesMatrix::new(lcg_matrix(10, 1, 1)).unwrap();
        assert!(longrun_cov(&ts, KernelSpec::PARZEN, 0.0).is_err());
    }
}
