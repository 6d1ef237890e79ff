//! t and Wald statistics built on FM-OLS, with rank-condition diagnostics
//! for singular conditional long-run covariance.
//!
//! Coefficients are vectorized by rows: `vec(A) = (A_{11}, A_{12}, ...,
//! A_{21}, ...)'`. Under that convention the estimated covariance of
//! `vec(Â⁺)` is `Ω̂₀₀.ₓ ⊗ (X'X)⁻¹`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fmols::FmolsFit;
use crate::linalg::{self, numerical_rank, sym_pinv, vec_rows};
use crate::lrcov::{DEFAULT_RANK_TOL, RANK_ABS_FLOOR};

/// Rate `δ(T)` at which FM-OLS converges along null directions of
/// `Ω₀₀.ₓ` when the bandwidth grows like `T^k`.
pub fn delta_rate(t: usize, k: f64) -> Result<f64> {
    if !(k > 0.0 && k < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth exponent must lie in (0, 1), got {k}"
        )));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    let t = t as f64;
    Ok(if k < 0.25 {
        t.powf(1.0 + 2.0 * k)
    } else if k <= 0.5 {
        t.powf(1.5)
    } else {
        t.powf(2.0 - k)
    })
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(stat: f64) -> f64 {
    let n = Normal::standard();
    2.0 * (1.0 - n.cdf(stat.abs()))
}

/// Two-sided critical value `z_{1-α/2}`.
pub fn normal_critical(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - level / 2.0)
}

fn chi2_upper(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return if stat > 0.0 { 0.0 } else { 1.0 };
    }
    let chi = ChiSquared::new(df as f64).expect("positive df");
    (1.0 - chi.cdf(stat.max(0.0))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TStatistic {
    pub statistic: f64,
    pub std_error: f64,
}

/// `t = (Â⁺ − A⁰) / {Ω̂₀₀.ₓ / Σ x_t²}^{1/2}` for a scalar regression.
pub fn t_statistic(fit: &FmolsFit, a0: f64) -> Result<TStatistic> {
    if fit.m0() != 1 || fit.mx() != 1 {
        return Err(Error::Dimension(format!(
            "t-statistic needs a scalar coefficient, have {}x{}",
            fit.m0(),
            fit.mx()
        )));
    }
    t_from_moments(fit.a_plus[(0, 0)], fit.omega_cond()[(0, 0)], fit.xtx[(0, 0)], a0)
}

/// Same statistic from its ingredients: estimate, `Ω̂₀₀.ₓ`, `Σ x_t²`.
pub fn t_from_moments(a_plus: f64, omega_cond: f64, sum_x2: f64, a0: f64) -> Result<TStatistic> {
    if !(omega_cond > 0.0) {
        return Err(Error::DegenerateVariance { value: omega_cond });
    }
    let std_error = (omega_cond / sum_x2).sqrt();
    Ok(TStatistic {
        statistic: t_ratio(a_plus, std_error, a0),
        std_error,
    })
}

pub fn t_ratio(estimate: f64, std_error: f64, a0: f64) -> f64 {
    (estimate - a0) / std_error
}

type PhiFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Null hypothesis on the `m0 x mx` coefficient matrix.
#[derive(Clone)]
pub enum RestrictionSpec {
    /// `Q vec(A) = r0`.
    Linear { q: DMatrix<f64>, r0: DVector<f64> },
    /// `R1 A R2 = R3` with `R1: q1 x m0`, `R2: mx x q2`, `R3: q1 x q2`.
    Tensor {
        r1: DMatrix<f64>,
        r2: DMatrix<f64>,
        r3: DMatrix<f64>,
    },
    /// `φ(vec A) = 0`. Without a Jacobian a central difference with step
    /// `1e-6 · max(1, |a_i|)` is used.
    General { phi: PhiFn, jacobian: Option<JacFn> },
}

impl fmt::Debug for RestrictionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { q, r0 } => f
                .debug_struct("Linear")
                .field("q", q)
                .field("r0", r0)
                .finish(),
            Self::Tensor { r1, r2, r3 } => f
                .debug_struct("Tensor")
                .field("r1", r1)
                .field("r2", r2)
                .field("r3", r3)
                .finish(),
            Self::General { jacobian, .. } => f
                .debug_struct("General")
                .field("analytic_jacobian", &jacobian.is_some())
                .finish(),
        }
    }
}

impl RestrictionSpec {
    /// `A = A⁰` in every coordinate.
    pub fn full(a0: &DMatrix<f64>) -> Self {
        Self::Tensor {
            r1: DMatrix::identity(a0.nrows(), a0.nrows()),
            r2: DMatrix::identity(a0.ncols(), a0.ncols()),
            r3: a0.clone(),
        }
    }

    pub fn general<F>(phi: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::General {
            phi: Arc::new(phi),
            jacobian: None,
        }
    }

    pub fn general_with_jacobian<F, J>(phi: F, jacobian: J) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::General {
            phi: Arc::new(phi),
            jacobian: Some(Arc::new(jacobian)),
        }
    }

    /// `φ(a)` and `Φ(a)` at a row-vectorized coefficient. The flag reports
    /// whether a numerical Jacobian was used.
    fn evaluate(&self, a: &DVector<f64>, m0: usize, mx: usize) -> Result<(DVector<f64>, DMatrix<f64>, bool)> {
        let p = m0 * mx;
        if a.len() != p {
            return Err(Error::Dimension("coefficient length mismatch".into()));
        }
        match self {
            Self::Linear { q, r0 } => {
                if q.ncols() != p || q.nrows() != r0.len() || q.nrows() == 0 {
                    return Err(Error::Dimension(format!(
                        "Q is {}x{}, r0 has {} entries, expected {p} columns",
                        q.nrows(),
                        q.ncols(),
                        r0.len()
                    )));
                }
                Ok((q * a - r0, q.clone(), false))
            }
            Self::Tensor { r1, r2, r3 } => {
                if r1.ncols() != m0 || r2.nrows() != mx || r3.nrows() != r1.nrows() || r3.ncols() != r2.ncols() {
                    return Err(Error::Dimension(format!(
                        "tensor restriction shapes R1 {}x{}, R2 {}x{}, R3 {}x{} do not fit A {m0}x{mx}",
                        r1.nrows(),
                        r1.ncols(),
                        r2.nrows(),
                        r2.ncols(),
                        r3.nrows(),
                        r3.ncols()
                    )));
                }
                let q = tensor_matrix(r1, r2);
                Ok((&q * a - vec_rows(r3), q, false))
            }
            Self::General { phi, jacobian } => {
                let value = phi(a);
                let (jac, numeric) = match jacobian {
                    Some(j) => (j(a), false),
                    None => (numeric_jacobian(phi.as_ref(), a), true),
                };
                if jac.nrows() != value.len() || jac.ncols() != p || value.is_empty() {
                    return Err(Error::Dimension("φ and its Jacobian disagree in shape".into()));
                }
                Ok((value, jac, numeric))
            }
        }
    }
}

/// `R1 ⊗ R2'`, the row-vectorized form of `A ↦ R1 A R2`.
pub fn tensor_matrix(r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::kron(r1, &r2.transpose())
}

fn numeric_jacobian(phi: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync), a: &DVector<f64>) -> DMatrix<f64> {
    let q = phi(a).len();
    let mut jac = DMatrix::zeros(q, a.len());
    for i in 0..a.len() {
        let h = 1e-6 * a[i].abs().max(1.0);
        let mut up = a.clone();
        let mut dn = a.clone();
        up[i] += h;
        dn[i] -= h;
        let col = (phi(&up) - phi(&dn)) / (2.0 * h);
        jac.set_column(i, &col);
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankDiagnosis {
    pub q_nominal: usize,
    pub q_effective: usize,
    pub satisfied: bool,
}

/// Rank of the restricted covariance `Φ (Ω₀₀.ₓ ⊗ (X'X)⁻¹) Φ'`. Tensor
/// restrictions use the factorization `rank(R1 Ω₀₀.ₓ R1') · q2`.
/// `estimate` is only consulted for general restrictions.
pub fn rank_condition_check(
    restriction: &RestrictionSpec,
    omega_cond: &DMatrix<f64>,
    xtx: &DMatrix<f64>,
    tol: f64,
    estimate: &DMatrix<f64>,
) -> Result<RankDiagnosis> {
    let m0 = omega_cond.nrows();
    let mx = xtx.nrows();
    if estimate.shape() != (m0, mx) {
        return Err(Error::Dimension("estimate shape does not match Ω₀₀.ₓ and X'X".into()));
    }
    if let RestrictionSpec::Tensor { r1, r2, .. } = restriction {
        if r1.ncols() != m0 || r2.nrows() != mx {
            return Err(Error::Dimension("tensor restriction does not fit A".into()));
        }
        let q1 = r1.nrows();
        let q2 = r2.ncols();
        let inner = r1 * omega_cond * r1.transpose();
        let q_eff = numerical_rank(&inner, tol, RANK_ABS_FLOOR) * q2;
        return Ok(RankDiagnosis {
            q_nominal: q1 * q2,
            q_effective: q_eff,
            satisfied: q_eff == q1 * q2,
        });
    }
    let (_, jac, _) = restriction.evaluate(&vec_rows(estimate), m0, mx)?;
    let xtx_inv = linalg::spd_inverse(xtx, "X'X")?;
    let middle = &jac * linalg::kron(omega_cond, &xtx_inv) * jac.transpose();
    let q = jac.nrows();
    let q_eff = numerical_rank(&middle, tol, RANK_ABS_FLOOR);
    Ok(RankDiagnosis {
        q_nominal: q,
        q_effective: q_eff,
        satisfied: q_eff == q,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct WaldOptions {
    /// Pseudo-invert a singular middle matrix instead of failing.
    pub allow_degenerate: bool,
    /// Relative eigenvalue cutoff for rank decisions.
    pub rank_tol: f64,
}

impl Default for WaldOptions {
    fn default() -> Self {
        Self {
            allow_degenerate: false,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub q_nominal: usize,
    pub q_effective: usize,
    pub p_nominal: f64,
    /// Upper tail against `χ²` with `q_effective` degrees of freedom.
    pub p_effective: f64,
    pub degenerate: bool,
    pub notes: Vec<String>,
}

/// Wald statistic `φ' {Φ (Ω̂₀₀.ₓ ⊗ (X'X)⁻¹) Φ'}⁻¹ φ` at the FM-OLS estimate.
pub fn wald(fit: &FmolsFit, restriction: &RestrictionSpec, opts: WaldOptions) -> Result<WaldResult> {
    wald_from_parts(&fit.a_plus, fit.omega_cond(), &fit.xtx, restriction, opts)
}

/// [`wald`] from the estimate, `Ω̂₀₀.ₓ` and `X'X` alone.
pub fn wald_from_parts(
    a_plus: &DMatrix<f64>,
    omega_cond: &DMatrix<f64>,
    xtx: &DMatrix<f64>,
    restriction: &RestrictionSpec,
    opts: WaldOptions,
) -> Result<WaldResult> {
    let (m0, mx) = a_plus.shape();
    if omega_cond.shape() != (m0, m0) || xtx.shape() != (mx, mx) {
        return Err(Error::Dimension("Ω₀₀.ₓ or X'X does not match the estimate".into()));
    }
    let a = vec_rows(a_plus);
    let (value, jac, numeric) = restriction.evaluate(&a, m0, mx)?;
    let q = value.len();
    let xtx_inv = linalg::spd_inverse(xtx, "X'X")?;
    let middle = &jac * linalg::kron(omega_cond, &xtx_inv) * jac.transpose();
    let middle = linalg::symmetrize(&middle);

    let mut notes = Vec::new();
    if numeric {
        notes.push("Jacobian by central finite differences".to_string());
    }
    let middle_rank = numerical_rank(&middle, opts.rank_tol, RANK_ABS_FLOOR);
    let inverse = if middle_rank < q {
        if !opts.allow_degenerate {
            return Err(Error::DegenerateWald {
                q,
                effective_rank: middle_rank,
            });
        }
        notes.push(format!(
            "middle matrix has rank {middle_rank} < {q}; pseudo-inverse used"
        ));
        sym_pinv(&middle, opts.rank_tol).0
    } else {
        linalg::spd_inverse(&middle, "Wald middle matrix").or_else(|_| {
            if opts.allow_degenerate {
                Ok(sym_pinv(&middle, opts.rank_tol).0)
            } else {
                Err(Error::DegenerateWald {
                    q,
                    effective_rank: middle_rank,
                })
            }
        })?
    };
    let statistic = value.dot(&(&inverse * &value)).max(0.0);

    let diag = rank_condition_check(restriction, omega_cond, xtx, opts.rank_tol, a_plus)?;
    let degenerate = !diag.satisfied;
    if degenerate {
        notes.push(format!(
            "rank condition fails: effective rank {} < {}; nominal χ² test is conservative",
            diag.q_effective, diag.q_nominal
        ));
    }
    Ok(WaldResult {
        statistic,
        q_nominal: q,
        q_effective: diag.q_effective.min(q),
        p_nominal: chi2_upper(statistic, q),
        p_effective: chi2_upper(statistic, diag.q_effective.min(q)),
        degenerate,
        notes,
    })
}

/// Trace form of the full-restriction statistic,
/// `tr{(X'X)(Â⁺ − A⁰)' Ω̂₀₀.ₓ⁻¹ (Â⁺ − A⁰)}`.
pub fn wald_full_trace(fit: &FmolsFit, a0: &DMatrix<f64>) -> Result<f64> {
    let d = &fit.a_plus - a0;
    let inv = linalg::spd_inverse(fit.omega_cond(), "Ω₀₀.ₓ")?;
    Ok((&fit.xtx * d.transpose() * inv * d).trace())
}
