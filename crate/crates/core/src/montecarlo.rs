//! Monte Carlo experiments for FM-OLS: bias and precision of OLS and
//! FM-OLS, moments of the t-ratio, and empirical rejection rates.
//!
//! Replication `r` of every cell draws from ChaCha20 stream `(seed, r)`,
//! so results do not depend on the number of worker threads.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::dgp::{simulate_stream, DgpSpec};
use crate::error::{Error, Result};
use crate::fmols::fm_ols;
use crate::inference::{normal_critical, t_statistic};
use crate::kernels::{BandwidthRule, KernelSpec};

pub const DEFAULT_LEVELS: [f64; 3] = [0.10, 0.05, 0.01];

#[derive(Debug, Clone)]
pub struct McConfig {
    pub dgp: DgpSpec,
    pub t_list: Vec<usize>,
    pub reps: usize,
    pub kernel: KernelSpec,
    pub bandwidths: Vec<BandwidthRule>,
    /// Hypothesized scalar coefficient for the t-ratio.
    pub a0: f64,
    pub levels: Vec<f64>,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
    /// Keep density estimates of `Â⁺ − A` and `t` in each cell.
    pub densities: bool,
}

impl McConfig {
    /// Scalar design with `A⁰` equal to the true coefficient.
    pub fn new(dgp: DgpSpec, t_list: Vec<usize>, reps: usize, bandwidth: BandwidthRule, seed: u64) -> Self {
        let a0 = dgp.a[(0, 0)];
        Self {
            dgp,
            t_list,
            reps,
            kernel: KernelSpec::PARZEN,
            bandwidths: vec![bandwidth],
            a0,
            levels: DEFAULT_LEVELS.to_vec(),
            seed,
            workers: None,
            densities: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.t_list.is_empty() || self.bandwidths.is_empty() {
            return Err(Error::InvalidArgument("need at least one T and one bandwidth".into()));
        }
        if self.t_list.iter().any(|&t| t < 3) {
            return Err(Error::InvalidArgument("every T must be at least 3".into()));
        }
        if self.levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(Error::InvalidArgument("levels must lie in (0, 1)".into()));
        }
        if self.dgp.m0() != 1 || self.dgp.mx() != 1 {
            return Err(Error::Dimension(
                "the experiment runner reports t-ratios and needs a scalar coefficient".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        self.dgp.validate()
    }

    /// True when the kernel and every bandwidth rule meet the smoothness,
    /// support and `K ~ c T^k` conditions the rate theory relies on.
    pub fn assumption_k(&self) -> bool {
        self.kernel.satisfies_assumption_k() && self.bandwidths.iter().all(|b| b.exponent().is_some())
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replication {
    pub bias_ols: f64,
    /// `None` when FM-OLS itself failed (singular design).
    pub bias: Option<f64>,
    /// `None` when `Ω̂₀₀.ₓ ≤ 0` or FM-OLS failed.
    pub t: Option<f64>,
}

/// One simulate → OLS → FM-OLS → t chain.
pub fn replicate(
    dgp: &DgpSpec,
    t: usize,
    kernel: KernelSpec,
    bandwidth: f64,
    a0: f64,
    seed: u64,
    stream: u64,
) -> Result<Replication> {
    let data = simulate_stream(dgp, t, seed, stream)?;
    let a_true = dgp.a[(0, 0)];
    match fm_ols(&data, kernel, bandwidth, false) {
        Ok(fit) => {
            let tstat = t_statistic(&fit, a0).ok().map(|s| s.statistic);
            Ok(Replication {
                bias_ols: fit.a_ols[(0, 0)] - a_true,
                bias: Some(fit.a_plus[(0, 0)] - a_true),
                t: tstat,
            })
        }
        Err(Error::SingularDesign { what, .. }) if what != "X'X" => {
            let ols = crate::series::ols(data.y.data(), data.x.data())?;
            Ok(Replication {
                bias_ols: ols.coef[(0, 0)] - a_true,
                bias: None,
                t: None,
            })
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityGrid {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct McCell {
    pub t: usize,
    pub bandwidth_rule: BandwidthRule,
    /// Evaluated `K`.
    pub bandwidth: f64,
    pub reps: usize,
    pub bias_ols_mean: f64,
    pub bias_ols_sd: f64,
    pub bias_mean: f64,
    pub bias_sd: f64,
    pub t_mean: f64,
    pub t_sd: f64,
    /// Rejection rate per entry of `levels`.
    pub rejection: Vec<f64>,
    pub levels: Vec<f64>,
    /// Rejection counts matching `rejection`.
    pub rejections: Vec<usize>,
    /// Replications with a usable t-ratio (the rejection denominator).
    pub t_count: usize,
    /// Replications where `Ω̂₀₀.ₓ ≤ 0`.
    pub degenerate: usize,
    /// Replications where FM-OLS could not be computed.
    pub failed: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_bias: Option<DensityGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_t: Option<DensityGrid>,
}

impl McCell {
    pub fn rejection_at(&self, level: f64) -> Option<f64> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map(|i| self.rejection[i])
    }

    pub fn rejections_at(&self, level: f64) -> Option<usize> {
        self.levels
            .iter()
            .position(|&l| (l - level).abs() < 1e-12)
            .map(|i| self.rejections[i])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub cells: Vec<McCell>,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub assumption_k: bool,
    pub rng: &'static str,
}

impl McReport {
    pub fn cell(&self, t: usize) -> Option<&McCell> {
        self.cells.iter().find(|c| c.t == t)
    }
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, (ss / (n - 1) as f64).sqrt())
}

pub fn run_experiment(config: &McConfig) -> Result<McReport> {
    config.validate()?;
    match config.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| run_cells(config))
        }
        None => run_cells(config),
    }
}

fn run_cells(config: &McConfig) -> Result<McReport> {
    let crit: Vec<f64> = config.levels.iter().map(|&l| normal_critical(l)).collect();
    let mut cells = Vec::new();
    for &t in &config.t_list {
        for rule in &config.bandwidths {
            let bw = rule.bandwidth(t);
            let outcomes: Vec<Replication> = (0..config.reps as u64)
                .into_par_iter()
                .map(|r| replicate(&config.dgp, t, config.kernel, bw, config.a0, config.seed, r))
                .collect::<Result<_>>()?;
            cells.push(aggregate(t, *rule, bw, &outcomes, &config.levels, &crit, config.densities)?);
        }
    }
    Ok(McReport {
        cells,
        seed: config.seed,
        kernel: config.kernel,
        assumption_k: config.assumption_k(),
        rng: crate::dgp::RNG_NAME,
    })
}

fn aggregate(
    t: usize,
    rule: BandwidthRule,
    bw: f64,
    outcomes: &[Replication],
    levels: &[f64],
    crit: &[f64],
    densities: bool,
) -> Result<McCell> {
    let bias_ols: Vec<f64> = outcomes.iter().map(|o| o.bias_ols).collect();
    let bias: Vec<f64> = outcomes.iter().filter_map(|o| o.bias).collect();
    let tvals: Vec<f64> = outcomes.iter().filter_map(|o| o.t).collect();
    let failed = outcomes.len() - bias.len();
    let degenerate = bias.len() - tvals.len();

    let (bias_ols_mean, bias_ols_sd) = mean_sd(&bias_ols);
    let (bias_mean, bias_sd) = mean_sd(&bias);
    let (t_mean, t_sd) = mean_sd(&tvals);
    let rejections: Vec<usize> = crit
        .iter()
        .map(|&c| tvals.iter().filter(|v| v.abs() > c).count())
        .collect();
    let rejection = rejections
        .iter()
        .map(|&k| if tvals.is_empty() { f64::NAN } else { k as f64 / tvals.len() as f64 })
        .collect();

    let density = |xs: &[f64]| -> Result<Option<DensityGrid>> {
        if !densities || xs.len() < 2 {
            return Ok(None);
        }
        let bw = silverman_bandwidth(xs);
        let grid = default_grid(xs, 512);
        let values = density_estimate(xs, &grid, bw)?;
        Ok(Some(DensityGrid { grid, values, bandwidth: bw }))
    };

    Ok(McCell {
        t,
        bandwidth_rule: rule,
        bandwidth: bw,
        reps: outcomes.len(),
        bias_ols_mean,
        bias_ols_sd,
        bias_mean,
        bias_sd,
        t_mean,
        t_sd,
        rejection,
        levels: levels.to_vec(),
        rejections,
        t_count: tvals.len(),
        degenerate,
        failed,
        density_bias: density(&bias)?,
        density_t: density(&tvals)?,
    })
}

/// Gaussian kernel density estimate on `grid`.
pub fn density_estimate(samples: &[f64], grid: &[f64], bw: f64) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    if !(bw > 0.0 && bw.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bw}")));
    }
    let norm = 1.0 / (samples.len() as f64 * bw * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .par_iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&s| {
                    let z = (g - s) / bw;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect())
}

/// Silverman's rule `0.9 · min(sd, IQR/1.34) · n^{-1/5}`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let (_, sd) = mean_sd(samples);
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let spread = if spread > 0.0 { spread } else { sorted[0].abs().max(1.0) * 1e-3 };
    0.9 * spread * n.powf(-0.2)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `n` equally spaced points over mean ± 4 SD.
pub fn default_grid(samples: &[f64], n: usize) -> Vec<f64> {
    let (mean, sd) = mean_sd(samples);
    let half = if sd > 0.0 { 4.0 * sd } else { 1.0 };
    let lo = mean - half;
    let step = 2.0 * half / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    /// Least-squares slope of `log sd` on `log T`; the convergence rate is
    /// its negative.
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
}

pub fn rate_exponent(points: &[(usize, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::InvalidArgument("need at least three (T, sd) points".into()));
    }
    if points.iter().any(|&(t, sd)| t == 0 || !(sd > 0.0)) {
        return Err(Error::InvalidArgument("T and sd must be positive".into()));
    }
    let xs: Vec<f64> = points.iter().map(|&(t, _)| (t as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|&(_, sd)| sd.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let stderr = (rss / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        stderr,
        intercept,
    })
}

/// One-sided binomial test of `H0: size ≥ level`: true when observing at
/// most `rejections` out of `n` has probability below `1 − confidence`
/// at the nominal level.
pub fn size_below_nominal(rejections: usize, n: usize, level: f64, confidence: f64) -> bool {
    let binom = Binomial::new(level, n as u64).expect("valid binomial");
    binom.cdf(rejections as u64) < 1.0 - confidence
}

/// Writes cells as CSV with columns
/// `T,p,K,Bias-OLS,SD-OLS,Bias,SD,t-Bias,t-SD,0.10,0.05,0.01`.
pub fn write_table_csv<W: Write>(rows: &[(f64, &McCell)], mut w: W) -> Result<()> {
    writeln!(w, "T,p,K,Bias-OLS,SD-OLS,Bias,SD,t-Bias,t-SD,0.10,0.05,0.01")?;
    for (p, c) in rows {
        let rate = |l: f64| c.rejection_at(l).unwrap_or(f64::NAN);
        writeln!(
            w,
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.3},{:.3},{:.4},{:.4},{:.4}",
            c.t,
            p,
            c.bandwidth,
            c.bias_ols_mean,
            c.bias_ols_sd,
            c.bias_mean,
            c.bias_sd,
            c.t_mean,
            c.t_sd,
            rate(0.10),
            rate(0.05),
            rate(0.01)
        )?;
    }
    Ok(())
}

/// Writes a density grid as `grid,value` rows.
pub fn write_density_csv<W: Write>(d: &DensityGrid, mut w: W) -> Result<()> {
    writeln!(w, "grid,value")?;
    for (g, v) in d.grid.iter().zip(&d.values) {
        writeln!(w, "{g:?},{v:?}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_exponent_exact_powers() {
        let pts: Vec<(usize, f64)> = [100, 200, 400, 800].iter().map(|&t| (t, 3.0 / t as f64)).collect();
        let fit = rate_exponent(&pts).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-10);
        let pts: Vec<(usize, f64)> = [100, 200, 400].iter().map(|&t| (t, (t as f64).powf(-1.5))).collect();
        assert!((rate_exponent(&pts).unwrap().slope + 1.5).abs() < 1e-12);
        assert!(rate_exponent(&pts[..2]).is_err());
    }

    #[test]
    fn density_peaks_at_point_mass() {
        let samples = vec![1.5; 50];
        let grid: Vec<f64> = (0..31).map(|i| i as f64 * 0.1).collect();
        let d = density_estimate(&samples, &grid, 0.2).unwrap();
        let argmax = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((grid[argmax] - 1.5).abs() < 1e-12);
        assert!(density_estimate(&samples[..1], &grid, 0.2).is_err());
        assert!(density_estimate(&samples, &grid, 0.0).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let samples: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 25.0 - 2.0).collect();
        let bw = silverman_bandwidth(&samples);
        let grid = default_grid(&samples, 2001);
        let d = density_estimate(&samples, &grid, bw).unwrap();
        let step = grid[1] - grid[0];
        let integral: f64 = d.iter().sum::<f64>() * step;
        assert!((integral - 1.0).abs() < 0.01, "{integral}");
    }

    #[test]
    fn binomial_size_test() {
        // 400 rejections in 10,000 at 5% is clearly below nominal
        assert!(size_below_nominal(400, 10_000, 0.05, 0.99));
        assert!(!size_below_nominal(495, 10_000, 0.05, 0.99));
    }

    #[test]
    fn config_validation() {
        let rule = BandwidthRule::power(1.0, 0.25).unwrap();
        let mut cfg = McConfig::new(DgpSpec::dgp1(0.0), vec![50], 0, rule, 1);
        assert!(run_experiment(&cfg).is_err());
        cfg.reps = 2;
        cfg.levels = vec![1.5];
        assert!(run_experiment(&cfg).is_err());
        cfg.levels = DEFAULT_LEVELS.to_vec();
        assert!(cfg.assumption_k());
        cfg.bandwidths = vec![BandwidthRule::constant(5.0).unwrap()];
        assert!(!cfg.assumption_k());
        cfg.kernel = "bartlett".parse().unwrap();
        cfg.bandwidths = vec![rule];
        assert!(!cfg.assumption_k());
    }
}
