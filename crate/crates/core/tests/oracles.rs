//! Independent reimplementations checked against the library.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use fmols::dgp::{population, simulate, DgpSpec};
use fmols::lrcov::{longrun_cov, onesided_longrun_cov};
use fmols::series::{autocovariance, ols, SystemData, TimeSeriesMatrix};
use fmols::{fm_ols, BandwidthRule, KernelFamily, KernelSpec};

fn random_matrix(rng: &mut ChaCha20Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn frob(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[test]
fn autocovariance_double_loop() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let u = random_matrix(&mut rng, 6, 2);
    let j = 2;
    let mut oracle = DMatrix::zeros(2, 2);
    for a in 0..2 {
        for b in 0..2 {
            let mut s = 0.0;
            for t in 0..6 {
                if t + j < 6 {
                    s += u[(t + j, a)] * u[(t, b)];
                }
            }
            oracle[(a, b)] = s / 6.0;
        }
    }
    let got = autocovariance(&u, j as isize).unwrap();
    assert!((got - oracle).amax() < 1e-15);
}

#[test]
fn partial_sum_cumsum_loop() {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let u = random_matrix(&mut rng, 5, 2);
    let ps = TimeSeriesMatrix::new(u.clone()).unwrap().partial_sum();
    for c in 0..2 {
        let mut acc = 0.0;
        for t in 0..5 {
            acc += u[(t, c)];
            assert_eq!(ps.data()[(t, c)], acc);
        }
    }
}

/// Solves `M z = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut z = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| m[row][k] * z[k]).sum();
        z[row] = (b[row] - s) / m[row][row];
    }
    z
}

#[test]
fn ols_matches_elimination() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let (t, m0, mx) = (40, 2, 3);
    let x = random_matrix(&mut rng, t, mx);
    let y = random_matrix(&mut rng, t, m0);
    let fit = ols(&y, &x).unwrap();
    let mut xtx = vec![vec![0.0; mx]; mx];
    for a in 0..mx {
        for b in 0..mx {
            xtx[a][b] = (0..t).map(|s| x[(s, a)] * x[(s, b)]).sum();
        }
    }
    for eq in 0..m0 {
        let xty: Vec<f64> = (0..mx).map(|a| (0..t).map(|s| x[(s, a)] * y[(s, eq)]).sum()).collect();
        let coef = gauss_solve(xtx.clone(), xty);
        for a in 0..mx {
            assert!((fit.coef[(eq, a)] - coef[a]).abs() < 1e-10);
        }
    }
}

#[test]
fn fmols_pipeline_duplication() {
    let data = simulate(&DgpSpec::dgp2(0.8), 100, 99).unwrap();
    let kernel = KernelSpec::PARZEN;
    let bw = BandwidthRule::power(1.0, 0.25).unwrap().bandwidth(100);
    let fit = fm_ols(&data, kernel, bw, false).unwrap();

    let t = 100;
    let y = data.y.column(0);
    let x = data.x.column(0);
    let mut dx = vec![0.0; t];
    let mut prev = data.x0[0];
    for s in 0..t {
        dx[s] = x[s] - prev;
        prev = x[s];
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let a_ols = sxy / sxx;
    let mut u = DMatrix::zeros(t, 2);
    for s in 0..t {
        u[(s, 0)] = y[s] - a_ols * x[s];
        u[(s, 1)] = dx[s];
    }
    let mut omega = DMatrix::zeros(2, 2);
    let mut delta = DMatrix::zeros(2, 2);
    for j in -(t as isize - 1)..t as isize {
        let w = kernel.weight(j as f64 / bw);
        let g = autocovariance(&u, j).unwrap();
        omega += &g * w;
        if j >= 0 {
            delta += &g * w;
        }
    }
    let f = omega[(0, 1)] / omega[(1, 1)];
    let delta_plus = delta[(0, 1)] - f * delta[(1, 1)];
    let num: f64 = (0..t).map(|s| (y[s] - f * dx[s]) * x[s]).sum::<f64>() - t as f64 * delta_plus;
    let a_plus = num / sxx;

    assert!((fit.a_ols[(0, 0)] - a_ols).abs() < 1e-10);
    assert!((fit.lr.omega.clone() - &omega).amax() < 1e-10);
    assert!((fit.f_hat()[(0, 0)] - f).abs() < 1e-10);
    assert!((fit.delta_plus_0x[(0, 0)] - delta_plus).abs() < 1e-10);
    assert!((fit.a_plus[(0, 0)] - a_plus).abs() < 1e-10, "{} vs {a_plus}", fit.a_plus[(0, 0)]);
}

#[test]
fn conditional_residuals_loop_oracle() {
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let t = 80;
    let mut x = DMatrix::zeros(t, 1);
    let mut y = DMatrix::zeros(t, 2);
    let mut level = 0.0;
    for s in 0..t {
        level += rng.random_range(-1.0..1.0);
        x[(s, 0)] = level;
        y[(s, 0)] = level + rng.random_range(-1.0..1.0);
        y[(s, 1)] = -2.0 * level + rng.random_range(-1.0..1.0);
    }
    let data = SystemData::new(TimeSeriesMatrix::new(y).unwrap(), TimeSeriesMatrix::new(x).unwrap()).unwrap();
    let fit = fm_ols(&data, KernelSpec::PARZEN, 3.0, false).unwrap();
    let r = fit.conditional_residuals().unwrap();
    for s in 0..t {
        for eq in 0..2 {
            let expect = fit.residuals_ols[(s, eq)] - fit.f_hat()[(eq, 0)] * fit.dx[(s, 0)];
            assert!((r.data()[(s, eq)] - expect).abs() < 1e-14);
        }
    }
}

fn innovations(data: &SystemData, a: f64) -> DMatrix<f64> {
    let t = data.nobs();
    let dx = data.dx();
    DMatrix::from_fn(t, 2, |s, c| {
        if c == 0 {
            data.y.data()[(s, 0)] - a * data.x.data()[(s, 0)]
        } else {
            dx[(s, 0)]
        }
    })
}

#[test]
fn lrcov_consistent_for_white_noise() {
    let t = 20_000;
    let data = simulate(&DgpSpec::dgp1(0.0), t, 5).unwrap();
    let u = TimeSeriesMatrix::new(innovations(&data, 2.0)).unwrap();
    let bw = BandwidthRule::power(1.0, 0.25).unwrap().bandwidth(t);
    let eye = DMatrix::<f64>::identity(2, 2);
    let omega = longrun_cov(&u, KernelSpec::PARZEN, bw).unwrap();
    let delta = onesided_longrun_cov(&u, KernelSpec::PARZEN, bw).unwrap();
    assert!(frob(&(omega - &eye)) / frob(&eye) < 0.05);
    assert!(frob(&(delta - &eye)) / frob(&eye) < 0.05);
}

#[test]
fn lrcov_error_shrinks_with_t() {
    let spec = DgpSpec::dgp2(0.8);
    let truth = population(&spec).omega;
    let a = spec.a[(0, 0)];
    let errs: Vec<f64> = [2000, 8000, 32_000]
        .iter()
        .map(|&t| {
            let bw = BandwidthRule::power(1.0, 0.25).unwrap().bandwidth(t);
            (0..20)
                .map(|seed| {
                    let data = simulate(&spec, t, 1000 + seed).unwrap();
                    let u = TimeSeriesMatrix::new(innovations(&data, a)).unwrap();
                    frob(&(longrun_cov(&u, KernelSpec::PARZEN, bw).unwrap() - &truth))
                })
                .sum::<f64>()
                / 20.0
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn white_noise_simulation_moments() {
    let spec = DgpSpec::new(
        DMatrix::zeros(1, 1),
        Vec::new(),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let t = 10_000;
    let data = simulate(&spec, t, 11).unwrap();
    let y = data.y.column(0);
    let mean = y.iter().sum::<f64>() / t as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1) as f64;
    // SE of a normal sample variance is sqrt(2/(T-1))
    assert!((var - 1.0).abs() < 3.0 * (2.0 / (t - 1) as f64).sqrt(), "{var}");
    let dx = data.dx();
    let dvar = dx.iter().map(|v| v * v).sum::<f64>() / t as f64;
    assert!((dvar - 1.0).abs() < 0.05);
}

#[test]
fn ma1_lag_one_autocovariance() {
    let spec = DgpSpec::dgp1(-0.5);
    let t = 100_000;
    let data = simulate(&spec, t, 12).unwrap();
    let u = innovations(&data, spec.a[(0, 0)]);
    let g1 = autocovariance(&u, 1).unwrap();
    let truth = spec.autocovariance(1);
    assert!(frob(&(&g1 - &truth)) / frob(&truth) < 0.02, "{g1} vs {truth}");
}

#[test]
fn population_one_sided_identity() {
    for spec in [DgpSpec::dgp1(-0.3), DgpSpec::dgp2(5.2), DgpSpec::dgp2(0.8)] {
        let pq = population(&spec);
        let g0 = spec.autocovariance(0);
        let lhs = &pq.gamma_plus + pq.gamma_plus.transpose() - g0;
        assert!((lhs - &pq.omega).amax() < 1e-12);
    }
}

#[test]
fn dgp1_population_oracles() {
    let white = population(&DgpSpec::dgp1(0.0));
    let eye = DMatrix::<f64>::identity(2, 2);
    assert!((&white.omega - &eye).amax() < 1e-15);
    assert!((&white.gamma_plus - &eye).amax() < 1e-15);
    let c = white.conditional.unwrap();
    assert!((c.omega_cond[(0, 0)] - 1.0).abs() < 1e-15);
    assert_eq!(c.mc_rank, 0);

    let sing = population(&DgpSpec::dgp1(-1.0)).conditional.unwrap();
    assert_eq!(sing.mc_rank, 1);
    assert!((sing.omega_ee[(0, 0)] - 1.0).abs() < 1e-12);
    assert!(sing.phi0.amax() < 1e-12);
    assert!(sing.phi_minus_inf.amax() < 1e-12);
    // e_t = −η_{0t}, up to the sign of the null direction
    let e0 = &sing.e_coeffs[0];
    assert!((e0[(0, 0)].abs() - 1.0).abs() < 1e-12 && e0[(0, 1)].abs() < 1e-12);
}

#[test]
fn conditional_residual_lrv_shrinks_under_singularity() {
    let spec = DgpSpec::dgp1(-1.0);
    let lrv: Vec<f64> = [500, 2000, 8000]
        .iter()
        .map(|&t| {
            let bw = BandwidthRule::power(1.0, 0.25).unwrap().bandwidth(t);
            (0..10)
                .map(|seed| {
                    let data = simulate(&spec, t, 500 + seed).unwrap();
                    let fit = fm_ols(&data, KernelSpec::PARZEN, bw, false).unwrap();
                    let r = fit.conditional_residuals().unwrap();
                    longrun_cov(&r, KernelSpec::PARZEN, bw).unwrap()[(0, 0)]
                })
                .sum::<f64>()
                / 10.0
        })
        .collect();
    assert!(lrv[0] > lrv[1] && lrv[1] > lrv[2], "{lrv:?}");
}

#[test]
fn truncated_sum_equals_full_sum() {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let u = random_matrix(&mut rng, 50, 2);
    for family in [KernelFamily::Parzen, KernelFamily::TukeyHanning, KernelFamily::Bartlett] {
        let k = KernelSpec::new(family);
        for bw in [0.7, 3.0, 7.5, 60.0] {
            let mut full = DMatrix::zeros(2, 2);
            for j in -49..50isize {
                full += autocovariance(&u, j).unwrap() * k.weight(j as f64 / bw);
            }
            let fast = longrun_cov(&TimeSeriesMatrix::new(u.clone()).unwrap(), k, bw).unwrap();
            assert!((fast - full).amax() < 1e-12, "{family:?} K={bw}");
        }
    }
}
