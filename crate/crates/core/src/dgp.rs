//! Triangular systems driven by vector MA(q) errors, with closed-form
//! population moments.
//!
//! `u_t = η_t + D_1 η_{t-1} + ... + D_q η_{t-q}`, `η_t ~ iid N(0, Σ)`,
//! `x_t = x_{t-1} + u_{xt}`, `y_t = A x_t + u_{0t}`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, numerical_rank, serde_matrix, serde_matrix_vec, serde_vector};
use crate::lrcov::{conditional_lrcov, DEFAULT_RANK_TOL, RANK_ABS_FLOOR};
use crate::series::{SystemData, TimeSeriesMatrix};

/// Name of the generator behind [`simulate`]; part of the reproducibility
/// contract together with the crate versions pinned in the manifest.
pub const RNG_NAME: &str = "chacha20 (rand_chacha 0.9) + ziggurat normal (rand_distr 0.5)";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpSpec {
    /// Cointegrating matrix, `m0 x mx`.
    #[serde(with = "serde_matrix")]
    pub a: DMatrix<f64>,
    /// `D_1, ..., D_q`; `D_0 = I` is implicit.
    #[serde(with = "serde_matrix_vec")]
    pub ma: Vec<DMatrix<f64>>,
    /// Innovation covariance.
    #[serde(with = "serde_matrix")]
    pub sigma: DMatrix<f64>,
    #[serde(with = "serde_vector")]
    pub x0: DVector<f64>,
}

impl DgpSpec {
    pub fn new(a: DMatrix<f64>, ma: Vec<DMatrix<f64>>, sigma: DMatrix<f64>) -> Result<Self> {
        let mx = a.ncols();
        let spec = Self {
            a,
            ma,
            sigma,
            x0: DVector::zeros(mx),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Bivariate design with `D_1 = [[p, 0], [0, 0]]`, `Σ = I`, `A = 2`.
    /// Singular at `p = -1`.
    pub fn dgp1(p: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, 2.0),
            vec![DMatrix::from_row_slice(2, 2, &[p, 0.0, 0.0, 0.0])],
            DMatrix::identity(2, 2),
        )
        .expect("valid preset")
    }

    /// Bivariate design with `D_1 = [[0.3, 0.4], [p, 0.6]]`,
    /// `Σ = [[1, 0.5], [0.5, 1]]`, `A = 2`. Singular at `p = 5.2`.
    pub fn dgp2(p: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, 2.0),
            vec![DMatrix::from_row_slice(2, 2, &[0.3, 0.4, p, 0.6])],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
        )
        .expect("valid preset")
    }

    pub fn preset(name: &str, p: f64) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "dgp1" => Ok(Self::dgp1(p)),
            "dgp2" => Ok(Self::dgp2(p)),
            other => Err(Error::InvalidArgument(format!(
                "unknown DGP preset '{other}' (expected dgp1|dgp2)"
            ))),
        }
    }

    pub fn m0(&self) -> usize {
        self.a.nrows()
    }

    pub fn mx(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.m0() + self.mx()
    }

    pub fn order(&self) -> usize {
        self.ma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if self.m0() == 0 || self.mx() == 0 {
            return Err(Error::Dimension("A must be at least 1x1".into()));
        }
        if self.sigma.shape() != (m, m) {
            return Err(Error::Dimension(format!("Σ must be {m}x{m}")));
        }
        if self.ma.iter().any(|d| d.shape() != (m, m)) {
            return Err(Error::Dimension(format!("every MA coefficient must be {m}x{m}")));
        }
        if self.x0.len() != self.mx() {
            return Err(Error::Dimension("x0 length must equal mx".into()));
        }
        if linalg::max_asymmetry(&self.sigma) > 1e-12 * self.sigma.amax().max(1.0) {
            return Err(Error::Asymmetric(linalg::max_asymmetry(&self.sigma)));
        }
        if self.sigma.clone().cholesky().is_none() {
            return Err(Error::InvalidArgument("Σ must be positive definite".into()));
        }
        Ok(())
    }

    /// `D_j` with `D_0 = I` and zero beyond `q`.
    pub fn coeff(&self, j: usize) -> DMatrix<f64> {
        let m = self.m();
        match j {
            0 => DMatrix::identity(m, m),
            j if j <= self.order() => self.ma[j - 1].clone(),
            _ => DMatrix::zeros(m, m),
        }
    }

    /// `D(1) = Σ_j D_j`.
    pub fn coeff_sum(&self) -> DMatrix<f64> {
        (0..=self.order()).map(|j| self.coeff(j)).fold(DMatrix::zeros(self.m(), self.m()), |acc, d| acc + d)
    }

    /// Population autocovariance `Γ(h) = E u_{t+h} u_t' = Σ_k D_{k+h} Σ D_k'`.
    pub fn autocovariance(&self, h: isize) -> DMatrix<f64> {
        let q = self.order();
        let m = self.m();
        let lag = h.unsigned_abs();
        let mut g = DMatrix::zeros(m, m);
        if lag <= q {
            for k in 0..=(q - lag) {
                g += self.coeff(k + lag) * &self.sigma * self.coeff(k).transpose();
            }
        }
        if h < 0 {
            g.transpose()
        } else {
            g
        }
    }
}

/// Simulates `T` periods using stream 0 of `seed`.
pub fn simulate(spec: &DgpSpec, t: usize, seed: u64) -> Result<SystemData> {
    simulate_stream(spec, t, seed, 0)
}

/// Simulates `T` periods from the ChaCha20 stream `(seed, stream)`.
/// `q` pre-sample innovations are drawn so `u_1` already has its
/// stationary law.
pub fn simulate_stream(spec: &DgpSpec, t: usize, seed: u64, stream: u64) -> Result<SystemData> {
    if t < 2 {
        return Err(Error::Dimension(format!("T must be at least 2, got {t}")));
    }
    let m = spec.m();
    let m0 = spec.m0();
    let mx = spec.mx();
    let q = spec.order();
    let chol = spec
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("Σ must be positive definite".into()))?
        .l();

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = t + q;
    let mut eta = DMatrix::zeros(n, m);
    let mut z = DVector::zeros(m);
    for s in 0..n {
        for i in 0..m {
            z[i] = rng.sample::<f64, _>(StandardNormal);
        }
        let e = &chol * &z;
        eta.row_mut(s).copy_from(&e.transpose());
    }

    let mut u = eta.rows(q, t).into_owned();
    for (j, d) in spec.ma.iter().enumerate() {
        let lag = j + 1;
        u += eta.rows(q - lag, t) * d.transpose();
    }

    let mut x = DMatrix::zeros(t, mx);
    let mut level = spec.x0.clone();
    for s in 0..t {
        for c in 0..mx {
            level[c] += u[(s, m0 + c)];
            x[(s, c)] = level[c];
        }
    }
    let y = &x * spec.a.transpose() + u.columns(0, m0);
    SystemData::with_x0(TimeSeriesMatrix::new(y)?, TimeSeriesMatrix::new(x)?, spec.x0.clone())
}

/// Closed-form population moments of a [`DgpSpec`].
#[derive(Debug, Clone, Serialize)]
pub struct PopulationQuantities {
    #[serde(with = "serde_matrix")]
    pub omega: DMatrix<f64>,
    /// `Γ⁺ = Σ_{h≥0} Γ(h)`.
    #[serde(with = "serde_matrix")]
    pub gamma_plus: DMatrix<f64>,
    /// `None` when `Ω_xx` is not positive definite.
    pub conditional: Option<ConditionalPopulation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalPopulation {
    #[serde(with = "serde_matrix")]
    pub omega_cond: DMatrix<f64>,
    #[serde(with = "serde_matrix")]
    pub f: DMatrix<f64>,
    /// `m − rank(Ω)`.
    pub mc_rank: usize,
    /// Orthonormal null directions of `Ω₀₀.ₓ`, one per column.
    #[serde(with = "serde_matrix")]
    pub r_perp: DMatrix<f64>,
    /// MA coefficients of `e_t = R_⊥' Σ_j D̃_{0.x,j} η_{t-j}`.
    #[serde(with = "serde_matrix_vec")]
    pub e_coeffs: Vec<DMatrix<f64>>,
    /// Long-run variance of `e_t`.
    #[serde(with = "serde_matrix")]
    pub omega_ee: DMatrix<f64>,
    /// `Σ_{j≥0} (j + 1/2) E e_{t+j} u_{xt}'`.
    #[serde(with = "serde_matrix")]
    pub phi0: DMatrix<f64>,
    /// Same sum over all integer `j`.
    #[serde(with = "serde_matrix")]
    pub phi_minus_inf: DMatrix<f64>,
}

impl PopulationQuantities {
    pub fn mc_rank(&self) -> Option<usize> {
        self.conditional.as_ref().map(|c| c.mc_rank)
    }
}

pub fn population(spec: &DgpSpec) -> PopulationQuantities {
    let q = spec.order();
    let m = spec.m();
    let m0 = spec.m0();
    let mx = spec.mx();
    let d1 = spec.coeff_sum();
    let omega = linalg::symmetrize(&(&d1 * &spec.sigma * d1.transpose()));
    let gamma_plus = (0..=q as isize)
        .map(|h| spec.autocovariance(h))
        .fold(DMatrix::zeros(m, m), |acc, g| acc + g);

    let conditional = conditional_lrcov(&omega, m0).ok().map(|(omega_cond, f)| {
        let mc_rank = m - numerical_rank(&omega, DEFAULT_RANK_TOL, RANK_ABS_FLOOR);
        let r_perp = null_directions(&omega_cond, omega_scale(&omega));

        // L = [I, −F]; D̃_j = L Σ_{i>j} D_i for j = 0..q-1
        let mut l = DMatrix::zeros(m0, m);
        l.view_mut((0, 0), (m0, m0)).fill_with_identity();
        l.view_mut((0, m0), (m0, mx)).copy_from(&(-&f));
        let e_coeffs: Vec<DMatrix<f64>> = (0..q)
            .map(|j| {
                let tail = ((j + 1)..=q).fold(DMatrix::zeros(m, m), |acc, i| acc + spec.coeff(i));
                r_perp.transpose() * &l * tail
            })
            .collect();
        let ns = r_perp.ncols();
        let e_sum = e_coeffs.iter().fold(DMatrix::zeros(ns, m), |acc, e| acc + e);
        let omega_ee = linalg::symmetrize(&(&e_sum * &spec.sigma * e_sum.transpose()));

        // C(j) = E e_{t+j} u_{xt}' = Σ_k E_{k+j} Σ D_{x,k}'
        let cross = |j: isize| -> DMatrix<f64> {
            let mut c = DMatrix::zeros(ns, mx);
            for k in 0..=q {
                let idx = k as isize + j;
                if idx < 0 || idx as usize >= e_coeffs.len() {
                    continue;
                }
                let dxk = spec.coeff(k).rows(m0, mx).into_owned();
                c += &e_coeffs[idx as usize] * &spec.sigma * dxk.transpose();
            }
            c
        };
        let span = q as isize;
        let mut phi0 = DMatrix::zeros(ns, mx);
        let mut phi_minus_inf = DMatrix::zeros(ns, mx);
        for j in -span..=span {
            let term = cross(j) * (j as f64 + 0.5);
            if j >= 0 {
                phi0 += &term;
            }
            phi_minus_inf += term;
        }
        ConditionalPopulation {
            omega_cond,
            f,
            mc_rank,
            r_perp,
            e_coeffs,
            omega_ee,
            phi0,
            phi_minus_inf,
        }
    });

    PopulationQuantities {
        omega,
        gamma_plus,
        conditional,
    }
}

fn omega_scale(omega: &DMatrix<f64>) -> f64 {
    linalg::sym_eigen_desc(omega).0[0].max(0.0)
}

/// Orthonormal eigenvectors of `cond` whose eigenvalues fall at or below
/// `DEFAULT_RANK_TOL * scale`, each signed so its largest entry is positive.
fn null_directions(cond: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let (values, vectors) = linalg::sym_eigen_desc(cond);
    let cut = (DEFAULT_RANK_TOL * scale).max(RANK_ABS_FLOOR);
    let idx: Vec<usize> = (0..values.len()).filter(|&i| values[i] <= cut).collect();
    let mut out = DMatrix::zeros(cond.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        let mut v = vectors.column(i).into_owned();
        let pivot = v.iter().copied().fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            v = -v;
        }
        out.set_column(c, &v);
    }
    out
}

/// Multicointegration rank `m − rank(Ω)`, cross-checked against
/// `m0 − rank(Ω₀₀.ₓ)`. Both ranks use the same threshold
/// `tol · λ_max(Ω)`.
pub fn multicoint_rank(omega: &DMatrix<f64>, m0: usize, tol: f64) -> Result<usize> {
    let m = omega.nrows();
    if omega.ncols() != m {
        return Err(Error::Dimension("Ω must be square".into()));
    }
    let scale = omega_scale(omega);
    let cut = (tol * scale).max(RANK_ABS_FLOOR);
    let count = |mat: &DMatrix<f64>| linalg::sym_eigen_desc(mat).0.iter().filter(|&&v| v > cut).count();
    let (cond, _) = conditional_lrcov(omega, m0)?;
    let via_full = m - count(omega);
    let via_cond = m0 - count(&cond);
    if via_full != via_cond {
        return Err(Error::Data(format!(
            "rank identity fails numerically: m − rank(Ω) = {via_full}, m0 − rank(Ω₀₀.ₓ) = {via_cond}"
        )));
    }
    Ok(via_full)
}
