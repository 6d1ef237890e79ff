//! Fiscal sustainability regressions on FRED quarterly series: receipts
//! on expenditures, with a t-test of `H₀: A = 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmols::fm_ols;
use crate::inference::{normal_critical, normal_two_sided_p, t_statistic};
use crate::kernels::{BandwidthRule, KernelSpec};
use crate::linalg;
use crate::series::{SystemData, TimeSeriesMatrix};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A calendar quarter, written `1947Q1` or `1947:Q1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Quarter {
    pub year: i32,
    pub q: u8,
}

impl Quarter {
    pub fn new(year: i32, q: u8) -> Result<Self> {
        if !(1..=4).contains(&q) {
            return Err(Error::InvalidArgument(format!("quarter must be 1-4, got {q}")));
        }
        Ok(Self { year, q })
    }

    /// Quarter containing a first-of-quarter date; `None` for any other day.
    pub fn from_date(d: NaiveDate) -> Option<Self> {
        if d.day() != 1 || !(d.month() - 1).is_multiple_of(3) {
            return None;
        }
        Some(Self {
            year: d.year(),
            q: ((d.month() - 1) / 3 + 1) as u8,
        })
    }

    pub fn start_date(&self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, 3 * (self.q as u32 - 1) + 1, 1).expect("valid quarter")
    }

    pub fn next(&self) -> Self {
        if self.q == 4 {
            Self { year: self.year + 1, q: 1 }
        } else {
            Self { year: self.year, q: self.q + 1 }
        }
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

impl FromStr for Quarter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse quarter {s:?}; expected e.g. 1947Q1"));
        let upper = s.trim().to_ascii_uppercase();
        let (y, q) = upper.split_once('Q').ok_or_else(bad)?;
        let year: i32 = y.trim_end_matches(':').parse().map_err(|_| bad())?;
        let q: u8 = q.parse().map_err(|_| bad())?;
        Quarter::new(year, q)
    }
}

/// One FRED series as read from disk.
#[derive(Debug, Clone)]
pub struct FredSeries {
    pub name: String,
    pub quarters: Vec<Quarter>,
    pub values: Vec<f64>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a two-column `DATE,VALUE` CSV (FRED's `fredgraph.csv` layout).
/// Dates must be first-of-quarter, strictly increasing and gap free.
pub fn read_fred_series(path: impl AsRef<Path>) -> Result<FredSeries> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    if headers.len() != 2 {
        return Err(parse_err(path, 1, format!("expected 2 columns, found {}", headers.len())));
    }
    let name = headers[1].to_string();

    let mut quarters: Vec<Quarter> = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|_| parse_err(path, line, format!("bad date {:?}, expected YYYY-MM-DD", &rec[0])))?;
        let quarter = Quarter::from_date(date)
            .ok_or_else(|| parse_err(path, line, format!("{date} is not the first day of a quarter")))?;
        let value: f64 = rec[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad value {:?} on {date}", &rec[1])))?;
        if !value.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value on {date}")));
        }
        if let Some(prev) = quarters.last() {
            if quarter == *prev {
                return Err(parse_err(path, line, format!("duplicate date {date}")));
            }
            if quarter < *prev {
                return Err(parse_err(path, line, format!("date {date} out of order")));
            }
            if quarter != prev.next() {
                return Err(parse_err(
                    path,
                    line,
                    format!("gap: {} follows {prev}, expected {}", quarter, prev.next()),
                ));
            }
        }
        quarters.push(quarter);
        values.push(value);
    }
    if quarters.is_empty() {
        return Err(parse_err(path, 1, "no observations"));
    }
    Ok(FredSeries { name, quarters, values })
}

/// Input files for [`load_fred_csv`]. Deflator and population are only
/// needed for the real per-capita transform.
#[derive(Debug, Clone)]
pub struct FiscalPaths {
    pub expenditures: PathBuf,
    pub receipts: PathBuf,
    pub deflator: Option<PathBuf>,
    pub population: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiscalDataset {
    pub quarters: Vec<Quarter>,
    pub gexpnd: Vec<f64>,
    pub grecpt: Vec<f64>,
    pub deflator: Option<Vec<f64>>,
    pub population: Option<Vec<f64>>,
    /// Dates dropped by the inner join, one message per series.
    pub warnings: Vec<String>,
}

impl FiscalDataset {
    pub fn nobs(&self) -> usize {
        self.quarters.len()
    }
}

pub fn load_fred_csv(paths: &FiscalPaths) -> Result<FiscalDataset> {
    let mut series = vec![read_fred_series(&paths.expenditures)?, read_fred_series(&paths.receipts)?];
    if let Some(p) = &paths.deflator {
        series.push(read_fred_series(p)?);
    }
    if let Some(p) = &paths.population {
        series.push(read_fred_series(p)?);
    }
    let (quarters, mut columns, warnings) = inner_join(&series)?;
    let population = paths.population.as_ref().map(|_| columns.pop().expect("column"));
    let deflator = paths.deflator.as_ref().map(|_| columns.pop().expect("column"));
    let grecpt = columns.pop().expect("column");
    let gexpnd = columns.pop().expect("column");
    Ok(FiscalDataset {
        quarters,
        gexpnd,
        grecpt,
        deflator,
        population,
        warnings,
    })
}

type Joined = (Vec<Quarter>, Vec<Vec<f64>>, Vec<String>);

/// Inner join on quarter. The overlap must itself be gap free.
pub fn inner_join(series: &[FredSeries]) -> Result<Joined> {
    let maps: Vec<BTreeMap<Quarter, f64>> = series
        .iter()
        .map(|s| s.quarters.iter().copied().zip(s.values.iter().copied()).collect())
        .collect();
    let common: BTreeSet<Quarter> = maps
        .iter()
        .skip(1)
        .fold(maps[0].keys().copied().collect(), |acc: BTreeSet<Quarter>, m| {
            acc.into_iter().filter(|q| m.contains_key(q)).collect()
        });
    let quarters: Vec<Quarter> = common.into_iter().collect();
    if quarters.is_empty() {
        return Err(Error::Data("series have no dates in common".into()));
    }
    for w in quarters.windows(2) {
        if w[1] != w[0].next() {
            return Err(Error::Data(format!(
                "aligned series have a gap between {} and {}",
                w[0], w[1]
            )));
        }
    }

    let mut warnings = Vec::new();
    for (s, m) in series.iter().zip(&maps) {
        let dropped: Vec<String> = m
            .keys()
            .filter(|q| quarters.binary_search(q).is_err())
            .map(|q| q.start_date().to_string())
            .collect();
        if !dropped.is_empty() {
            warnings.push(format!(
                "{}: dropped {} date(s) not present in every series: {}",
                s.name,
                dropped.len(),
                dropped.join(", ")
            ));
        }
    }
    let columns = maps
        .iter()
        .map(|m| quarters.iter().map(|q| m[q]).collect())
        .collect();
    Ok((quarters, columns, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformMode {
    Levels,
    Logs,
    /// Nominal series divided by `deflator / 100` and by population.
    RealPerCapita,
}

impl fmt::Display for TransformMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransformMode::Levels => "levels",
            TransformMode::Logs => "logs",
            TransformMode::RealPerCapita => "real",
        })
    }
}

impl FromStr for TransformMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "levels" | "level" => Ok(TransformMode::Levels),
            "logs" | "log" => Ok(TransformMode::Logs),
            "real" | "real_percapita" | "real-percapita" => Ok(TransformMode::RealPerCapita),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?}; expected levels, logs or real"
            ))),
        }
    }
}

/// Inclusive quarter range; either end may be open.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Window {
    pub from: Option<Quarter>,
    pub to: Option<Quarter>,
}

impl Window {
    pub fn contains(&self, q: Quarter) -> bool {
        self.from.is_none_or(|f| q >= f) && self.to.is_none_or(|t| q <= t)
    }
}

/// Transformed and windowed sample ready for estimation.
#[derive(Debug, Clone)]
pub struct FiscalSample {
    pub quarters: Vec<Quarter>,
    /// `y` = receipts, `x` = expenditures. `Δx₁` is set to zero since the
    /// pre-sample level is not observed.
    pub data: SystemData,
}

pub fn transform(ds: &FiscalDataset, mode: TransformMode, window: Window) -> Result<FiscalSample> {
    if let (Some(f), Some(t)) = (window.from, window.to) {
        if f > t {
            return Err(Error::InvalidArgument(format!("window start {f} is after end {t}")));
        }
    }
    let idx: Vec<usize> = (0..ds.nobs()).filter(|&i| window.contains(ds.quarters[i])).collect();
    if idx.len() < 3 {
        return Err(Error::Data(format!(
            "window leaves {} observation(s); need at least 3",
            idx.len()
        )));
    }

    let mut y = Vec::with_capacity(idx.len());
    let mut x = Vec::with_capacity(idx.len());
    for &i in &idx {
        let q = ds.quarters[i];
        let (r, g) = (ds.grecpt[i], ds.gexpnd[i]);
        let (yv, xv) = match mode {
            TransformMode::Levels => (r, g),
            TransformMode::Logs => {
                if !(r > 0.0) || !(g > 0.0) {
                    return Err(Error::Data(format!(
                        "nonpositive value on {} cannot be logged",
                        q.start_date()
                    )));
                }
                (r.ln(), g.ln())
            }
            TransformMode::RealPerCapita => {
                let (Some(defl), Some(pop)) = (&ds.deflator, &ds.population) else {
                    return Err(Error::InvalidArgument(
                        "real per-capita mode needs deflator and population series".into(),
                    ));
                };
                let scale = defl[i] / 100.0 * pop[i];
                if !(scale > 0.0) {
                    return Err(Error::Data(format!(
                        "nonpositive deflator or population on {}",
                        q.start_date()
                    )));
                }
                (r / scale, g / scale)
            }
        };
        y.push(yv);
        x.push(xv);
    }
    let x0 = DVector::from_element(1, x[0]);
    let data = SystemData::with_x0(TimeSeriesMatrix::from_column(&y)?, TimeSeriesMatrix::from_column(&x)?, x0)?;
    Ok(FiscalSample {
        quarters: idx.iter().map(|&i| ds.quarters[i]).collect(),
        data,
    })
}

const CONSERVATIVE_CAVEAT: &str = "If the long-run conditional variance is singular (multicointegration), \
the t-test of A = 1 is asymptotically conservative: its true size is below the nominal level, so a \
rejection remains valid while a non-rejection is weak evidence.";

#[derive(Debug, Clone, Serialize)]
pub struct SustainabilityReport {
    pub schema_version: u32,
    pub nobs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<(Quarter, Quarter)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<TransformMode>,
    pub kernel: KernelSpec,
    pub bandwidth_rule: BandwidthRule,
    pub bandwidth: f64,
    pub intercept: bool,
    pub a_plus: f64,
    pub a_ols: f64,
    pub std_error: f64,
    pub null_value: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub reject_5pct: bool,
    /// `Ω̂₀₀.ₓ`.
    pub omega_cond: f64,
    /// `Ω̂` as rows, receipts first.
    pub omega: Vec<Vec<f64>>,
    pub omega_eigenvalues: Vec<f64>,
    /// `Ω̂₀₀.ₓ / Ω̂₀₀`: share of the receipts long-run variance left after
    /// conditioning on expenditures.
    pub conditional_share: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub singularity_warning: Option<String>,
    pub caveat: &'static str,
    pub warnings: Vec<String>,
}

/// Conditional share below which the report flags near singularity.
pub const NEAR_SINGULAR_SHARE: f64 = 1e-3;

/// FM-OLS of receipts on expenditures and the t-test of `A = 1`.
pub fn sustainability_report(
    data: &SystemData,
    kernel: KernelSpec,
    rule: BandwidthRule,
    intercept: bool,
) -> Result<SustainabilityReport> {
    if data.m0() != 1 || data.mx() != 1 {
        return Err(Error::Dimension("sustainability regression is scalar".into()));
    }
    let bandwidth = rule.bandwidth(data.nobs());
    let fit = fm_ols(data, kernel, bandwidth, intercept)?;
    let null_value = 1.0;
    let ts = t_statistic(&fit, null_value)?;
    let omega = fit.lr.omega.clone();
    let (eig, _) = linalg::sym_eigen_desc(&omega);
    let omega_cond = fit.omega_cond()[(0, 0)];
    let conditional_share = omega_cond / omega[(0, 0)];
    let singularity_warning = (conditional_share < NEAR_SINGULAR_SHARE).then(|| {
        format!(
            "conditional long-run variance is {conditional_share:.2e} of the unconditional one; \
             the system is close to multicointegrated"
        )
    });
    Ok(SustainabilityReport {
        schema_version: REPORT_SCHEMA_VERSION,
        nobs: data.nobs(),
        sample: None,
        mode: None,
        kernel,
        bandwidth_rule: rule,
        bandwidth,
        intercept,
        a_plus: fit.a_plus[(0, 0)],
        a_ols: fit.a_ols[(0, 0)],
        std_error: ts.std_error,
        null_value,
        t_statistic: ts.statistic,
        p_value: normal_two_sided_p(ts.statistic),
        reject_5pct: ts.statistic.abs() > normal_critical(0.05),
        omega_cond,
        omega: linalg::to_rows(&omega),
        omega_eigenvalues: eig,
        conditional_share,
        singularity_warning,
        caveat: CONSERVATIVE_CAVEAT,
        warnings: Vec::new(),
    })
}

/// Transform, estimate and label the report with the sample and mode.
pub fn run_fiscal(
    ds: &FiscalDataset,
    mode: TransformMode,
    window: Window,
    kernel: KernelSpec,
    rule: BandwidthRule,
    intercept: bool,
) -> Result<SustainabilityReport> {
    let sample = transform(ds, mode, window)?;
    let mut report = sustainability_report(&sample.data, kernel, rule, intercept)?;
    report.sample = Some((sample.quarters[0], *sample.quarters.last().expect("nonempty")));
    report.mode = Some(mode);
    report.warnings = ds.warnings.clone();
    Ok(report)
}
