use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use fmols::dgp::{simulate, DgpSpec};
use fmols::fiscal::{load_fred_csv, run_fiscal, FiscalPaths, Quarter, TransformMode, Window};
use fmols::inference::{delta_rate, rank_condition_check, wald_from_parts, RestrictionSpec, WaldOptions};
use fmols::linalg::from_rows;
use fmols::lrcov::DEFAULT_RANK_TOL;
use fmols::montecarlo::{rate_exponent, run_experiment, write_density_csv, write_table_csv, McConfig, RateFit};
use fmols::series::{SystemData, TimeSeriesMatrix};
use fmols::{fm_ols, BandwidthRule, KernelSpec};

mod report;

use report::FitReport;

#[derive(Parser)]
#[command(name = "fmols", version, about = "FM-OLS estimation and inference for cointegrated systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit FM-OLS to columns of a CSV file.
    Estimate(EstimateArgs),
    /// Wald test of a restriction on a saved fit.
    Test(TestArgs),
    /// Simulate a preset or JSON-specified design to CSV.
    Simulate(SimulateArgs),
    /// Monte Carlo table of bias, SD, t-moments and rejection rates.
    McTable(McTableArgs),
    /// Kernel density of FM-OLS bias or t-ratio across replications.
    McDensity(McDensityArgs),
    /// Log-log slope of bias SD against T.
    RateCheck(RateCheckArgs),
    /// Sustainability regression of receipts on expenditures.
    Fiscal(FiscalArgs),
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// parzen | th | bartlett | qs
    #[arg(long, default_value = "parzen")]
    kernel: KernelSpec,
    /// Bandwidth rule such as "1*T^0.25" or "T^1/4".
    #[arg(long, conflicts_with = "bandwidth_const")]
    bandwidth: Option<BandwidthRule>,
    /// Fixed bandwidth K.
    #[arg(long)]
    bandwidth_const: Option<f64>,
}

impl KernelArgs {
    fn rule(&self, default: &str) -> Result<BandwidthRule> {
        Ok(match (self.bandwidth, self.bandwidth_const) {
            (Some(r), _) => r,
            (None, Some(k)) => BandwidthRule::constant(k)?,
            (None, None) => default.parse()?,
        })
    }
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated column names or 0-based indices for y.
    #[arg(long)]
    ycols: String,
    #[arg(long)]
    xcols: String,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the long-run covariance estimates as JSON.
    #[arg(long)]
    dump_lrcov: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// JSON written by `estimate`.
    #[arg(long)]
    fit: PathBuf,
    /// "A0=<matrix>", "Q=<matrix>;r0=<vector>" or "R1=..;R2=..;R3=..",
    /// matrices as JSON nested arrays.
    #[arg(long)]
    restriction: String,
    /// Pseudo-invert a singular middle matrix instead of failing.
    #[arg(long)]
    allow_degenerate: bool,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rank_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DgpArgs {
    /// dgp1 | dgp2
    #[arg(long, default_value = "dgp1")]
    dgp: String,
    /// JSON DgpSpec; overrides --dgp and --p.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl DgpArgs {
    fn build(&self, p: f64) -> Result<DgpSpec> {
        match &self.spec {
            Some(path) => {
                let spec: DgpSpec = serde_json::from_reader(File::open(path).with_context(|| path.display().to_string())?)?;
                spec.validate()?;
                Ok(spec)
            }
            None => Ok(DgpSpec::preset(&self.dgp, p)?),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    p: f64,
    #[arg(long = "T")]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Hypothesized coefficient; defaults to the true value.
    #[arg(long, allow_hyphen_values = true)]
    a0: Option<f64>,
    #[command(flatten)]
    kernel: KernelArgs,
}

impl McArgs {
    fn config(&self, p: f64, t_list: Vec<usize>) -> Result<McConfig> {
        let dgp = self.dgp.build(p)?;
        let mut cfg = McConfig::new(dgp, t_list, self.reps, self.kernel.rule("T^0.25")?, self.seed);
        cfg.kernel = self.kernel.kernel;
        cfg.workers = self.workers;
        if let Some(a0) = self.a0 {
            cfg.a0 = a0;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct McTableArgs {
    #[command(flatten)]
    mc: McArgs,
    /// Comma-separated values of the design parameter p.
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    p_list: String,
    /// Comma-separated sample sizes.
    #[arg(long = "T", default_value = "50,100")]
    t: String,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct McDensityArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    p: f64,
    #[arg(long = "T")]
    t: usize,
    /// bias | t
    #[arg(long, default_value = "t")]
    what: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateCheckArgs {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    p: f64,
    /// "lo:hi" doubles from lo up to hi; otherwise a comma-separated list.
    #[arg(long = "T-grid", default_value = "100:1600")]
    t_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FiscalArgs {
    #[arg(long)]
    expenditures: PathBuf,
    #[arg(long)]
    receipts: PathBuf,
    /// Price deflator (index, 100 = base year), for --mode real.
    #[arg(long)]
    deflator: Option<PathBuf>,
    /// Population, for --mode real.
    #[arg(long)]
    population: Option<PathBuf>,
    /// levels | logs | real
    #[arg(long, default_value = "levels")]
    mode: TransformMode,
    #[arg(long)]
    from: Option<Quarter>,
    #[arg(long)]
    to: Option<Quarter>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    intercept: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut w = output(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|_| anyhow::anyhow!("bad {what} entry {t:?}")))
        .collect()
}

fn resolve_columns(spec: &str, labels: Option<&[String]>, ncols: usize) -> Result<Vec<usize>> {
    spec.split(',')
        .map(|tok| {
            let tok = tok.trim();
            if let Some(i) = labels.and_then(|l| l.iter().position(|n| n == tok)) {
                return Ok(i);
            }
            match tok.parse::<usize>() {
                Ok(i) if i < ncols => Ok(i),
                _ => bail!("unknown column {tok:?}"),
            }
        })
        .collect()
}

fn estimate(args: &EstimateArgs) -> Result<()> {
    let ts = TimeSeriesMatrix::read_csv_path(&args.input)?;
    let labels = ts.labels().map(|l| l.to_vec());
    let ycols = resolve_columns(&args.ycols, labels.as_deref(), ts.ncols())?;
    let xcols = resolve_columns(&args.xcols, labels.as_deref(), ts.ncols())?;
    let pick = |cols: &[usize]| TimeSeriesMatrix::new(ts.data().select_columns(cols));
    let data = SystemData::new(pick(&ycols)?, pick(&xcols)?)?;
    let rule = args.kernel.rule("T^0.25")?;
    let fit = fm_ols(&data, args.kernel.kernel, rule.bandwidth(data.nobs()), args.intercept)?;

    let name = |i: &usize| labels.as_ref().map_or_else(|| i.to_string(), |l| l[*i].clone());
    let mut rep = FitReport::new(&fit, rule, ycols.iter().map(name).collect(), xcols.iter().map(name).collect())?;
    let full = RestrictionSpec::full(&fit.a_plus);
    rep.full_restriction_rank = Some(rank_condition_check(&full, fit.omega_cond(), &fit.xtx, DEFAULT_RANK_TOL, &fit.a_plus)?);
    if let Some(p) = &args.dump_lrcov {
        write_json(&fit.lr, Some(p))?;
    }
    write_json(&rep, args.out.as_deref())
}

fn parse_matrix(s: &str) -> Result<DMatrix<f64>> {
    let v: serde_json::Value = serde_json::from_str(s.trim()).with_context(|| format!("bad matrix {s:?}"))?;
    let rows: Vec<Vec<f64>> = match v {
        serde_json::Value::Number(n) => vec![vec![n.as_f64().unwrap()]],
        serde_json::Value::Array(ref items) if items.iter().all(|i| i.is_number()) => {
            vec![serde_json::from_value(v.clone())?]
        }
        other => serde_json::from_value(other)?,
    };
    Ok(from_rows(&rows)?)
}

fn parse_restriction(s: &str) -> Result<RestrictionSpec> {
    let mut parts = std::collections::BTreeMap::new();
    for piece in s.split([';', '|']) {
        if piece.trim().is_empty() {
            continue;
        }
        let (k, v) = piece.split_once('=').with_context(|| format!("expected key=value in {piece:?}"))?;
        parts.insert(k.trim().to_ascii_lowercase(), v.to_string());
    }
    let keys: Vec<&str> = parts.keys().map(String::as_str).collect();
    match keys.as_slice() {
        ["a0"] => Ok(RestrictionSpec::full(&parse_matrix(&parts["a0"])?)),
        ["q", "r0"] => {
            let q = parse_matrix(&parts["q"])?;
            let r0 = parse_matrix(&parts["r0"])?;
            Ok(RestrictionSpec::Linear {
                q,
                r0: DVector::from_iterator(r0.len(), r0.transpose().iter().copied()),
            })
        }
        ["r1", "r2", "r3"] => Ok(RestrictionSpec::Tensor {
            r1: parse_matrix(&parts["r1"])?,
            r2: parse_matrix(&parts["r2"])?,
            r3: parse_matrix(&parts["r3"])?,
        }),
        _ => bail!("restriction must be A0=..., Q=...;r0=... or R1=...;R2=...;R3=..."),
    }
}

fn test(args: &TestArgs) -> Result<()> {
    let rep: FitReport = serde_json::from_reader(File::open(&args.fit).with_context(|| args.fit.display().to_string())?)?;
    let (a, omega_cond, xtx) = rep.parts()?;
    let restriction = parse_restriction(&args.restriction)?;
    let opts = WaldOptions {
        allow_degenerate: args.allow_degenerate,
        rank_tol: args.rank_tol,
    };
    let result = wald_from_parts(&a, &omega_cond, &xtx, &restriction, opts)?;
    write_json(&result, args.out.as_deref())
}

fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let spec = args.dgp.build(args.p)?;
    let data = simulate(&spec, args.t, args.seed)?;
    let (m0, mx) = (data.m0(), data.mx());
    let mut both = DMatrix::zeros(args.t, m0 + mx);
    both.columns_mut(0, m0).copy_from(data.y.data());
    both.columns_mut(m0, mx).copy_from(data.x.data());
    let labels = (0..m0).map(|i| format!("y{i}")).chain((0..mx).map(|i| format!("x{i}"))).collect();
    let ts = TimeSeriesMatrix::new(both)?.with_labels(labels)?;
    let mut w = output(args.out.as_deref())?;
    ts.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn mc_table(args: &McTableArgs) -> Result<()> {
    let ps: Vec<f64> = parse_list(&args.p_list, "p")?;
    let ts: Vec<usize> = parse_list(&args.t, "T")?;
    let mut reports = Vec::new();
    for &p in &ps {
        let cfg = args.mc.config(p, ts.clone())?;
        reports.push((p, run_experiment(&cfg)?));
    }
    let rows: Vec<(f64, &fmols::montecarlo::McCell)> = reports
        .iter()
        .flat_map(|(p, r)| r.cells.iter().map(move |c| (*p, c)))
        .collect();
    let mut w = output(args.out.as_deref())?;
    write_table_csv(&rows, &mut w)?;
    w.flush()?;
    if let Some(path) = &args.json {
        let tagged: Vec<_> = reports
            .iter()
            .map(|(p, r)| serde_json::json!({ "p": p, "report": r }))
            .collect();
        write_json(&tagged, Some(path))?;
    }
    Ok(())
}

fn mc_density(args: &McDensityArgs) -> Result<()> {
    let mut cfg = args.mc.config(args.p, vec![args.t])?;
    cfg.densities = true;
    let report = run_experiment(&cfg)?;
    let cell = &report.cells[0];
    let density = match args.what.as_str() {
        "bias" => cell.density_bias.as_ref(),
        "t" => cell.density_t.as_ref(),
        other => bail!("--what must be bias or t, got {other:?}"),
    }
    .context("too few usable replications for a density")?;
    let mut w = output(args.out.as_deref())?;
    write_density_csv(density, &mut w)?;
    w.flush()?;
    Ok(())
}

fn parse_grid(s: &str) -> Result<Vec<usize>> {
    if let Some((lo, hi)) = s.split_once(':') {
        let (lo, hi): (usize, usize) = (lo.trim().parse()?, hi.trim().parse()?);
        if lo < 3 || hi < lo {
            bail!("bad grid {s:?}");
        }
        let mut out = vec![lo];
        while out.last().unwrap() * 2 <= hi {
            out.push(out.last().unwrap() * 2);
        }
        Ok(out)
    } else {
        parse_list(s, "T")
    }
}

#[derive(Serialize)]
struct RatePoint {
    t: usize,
    bandwidth: f64,
    bias_sd: f64,
    bias_ols_sd: f64,
}

#[derive(Serialize)]
struct RateReport {
    points: Vec<RatePoint>,
    fmols: RateFit,
    ols: RateFit,
    /// Slope implied by the null-direction rate for the bandwidth exponent,
    /// when the rule has one.
    singular_direction_slope: Option<f64>,
    assumption_k: bool,
    seed: u64,
    reps: usize,
}

fn rate_check(args: &RateCheckArgs) -> Result<()> {
    let grid = parse_grid(&args.t_grid)?;
    let cfg = args.mc.config(args.p, grid)?;
    let report = run_experiment(&cfg)?;
    let points: Vec<RatePoint> = report
        .cells
        .iter()
        .map(|c| RatePoint {
            t: c.t,
            bandwidth: c.bandwidth,
            bias_sd: c.bias_sd,
            bias_ols_sd: c.bias_ols_sd,
        })
        .collect();
    let fm = rate_exponent(&points.iter().map(|p| (p.t, p.bias_sd)).collect::<Vec<_>>())?;
    let ols = rate_exponent(&points.iter().map(|p| (p.t, p.bias_ols_sd)).collect::<Vec<_>>())?;
    let singular_direction_slope = match cfg.bandwidths[0].exponent() {
        Some(k) => Some(-delta_rate(10, k)?.ln() / 10f64.ln()),
        None => None,
    };
    write_json(
        &RateReport {
            points,
            fmols: fm,
            ols,
            singular_direction_slope,
            assumption_k: report.assumption_k,
            seed: cfg.seed,
            reps: cfg.reps,
        },
        args.out.as_deref(),
    )
}

fn fiscal(args: &FiscalArgs) -> Result<()> {
    let ds = load_fred_csv(&FiscalPaths {
        expenditures: args.expenditures.clone(),
        receipts: args.receipts.clone(),
        deflator: args.deflator.clone(),
        population: args.population.clone(),
    })?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    let rule = args.kernel.rule("3*T^0.2")?;
    let window = Window {
        from: args.from,
        to: args.to,
    };
    let report = run_fiscal(&ds, args.mode, window, args.kernel.kernel, rule, args.intercept)?;
    write_json(&report, args.out.as_deref())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => test(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::McTable(a) => mc_table(a),
        Command::McDensity(a) => mc_density(a),
        Command::RateCheck(a) => rate_check(a),
        Command::Fiscal(a) => fiscal(a),
    }
}
