//! Time-series containers, sample autocovariances, partial sums and OLS.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;

/// A `T x m` block of observations, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    data: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

impl TimeSeriesMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "need at least 2 observations, got {}",
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::Dimension("need at least one column".into()));
        }
        for c in 0..data.ncols() {
            for r in 0..data.nrows() {
                if !data[(r, c)].is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Self { data, labels: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(crate::linalg::from_rows(rows)?)
    }

    pub fn from_column(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_column_slice(values.len(), 1, values))
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.ncols() {
            return Err(Error::Dimension(format!(
                "{} labels for {} columns",
                labels.len(),
                self.ncols()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Number of periods `T`.
    pub fn nobs(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }

    /// Sample autocovariance `T^{-1} Σ u_{t+j} u_t'` without demeaning.
    pub fn lag_autocovariance(&self, j: isize) -> Result<DMatrix<f64>> {
        autocovariance(&self.data, j)
    }

    /// Running column sums: row `t` holds `u_1 + ... + u_t`.
    pub fn partial_sum(&self) -> TimeSeriesMatrix {
        let mut out = self.data.clone();
        for c in 0..out.ncols() {
            let mut acc = 0.0;
            for r in 0..out.nrows() {
                acc += out[(r, c)];
                out[(r, c)] = acc;
            }
        }
        TimeSeriesMatrix {
            data: out,
            labels: self.labels.clone(),
        }
    }

    /// First differences with `initial` as the value before period 1
    /// (zero when `None`), so the result keeps `T` rows.
    pub fn first_difference(&self, initial: Option<&[f64]>) -> Result<TimeSeriesMatrix> {
        let m = self.ncols();
        if let Some(init) = initial {
            if init.len() != m {
                return Err(Error::Dimension(format!(
                    "initial value has {} entries, series has {m} columns",
                    init.len()
                )));
            }
        }
        let init = DVector::from_fn(m, |c, _| initial.map_or(0.0, |v| v[c]));
        Ok(TimeSeriesMatrix {
            data: difference(&self.data, &init),
            labels: self.labels.clone(),
        })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        read_matrix_csv(reader, "<input>")
    }

    pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        read_matrix_csv(file, &path.display().to_string())
    }

    /// Writes one row per period using the shortest representation that
    /// parses back to the identical `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        if let Some(labels) = &self.labels {
            w.write_record(labels).map_err(csv_err)?;
        }
        for r in 0..self.nobs() {
            let rec: Vec<String> = (0..self.ncols())
                .map(|c| format!("{:?}", self.data[(r, c)]))
                .collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn read_matrix_csv<R: Read>(reader: R, name: &str) -> Result<TimeSeriesMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut labels = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            path: name.into(),
            line,
            msg: e.to_string(),
        })?;
        let parsed: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => labels = Some(rec.iter().map(str::to_owned).collect()),
            Err(e) => {
                return Err(Error::Parse {
                    path: name.into(),
                    line,
                    msg: e.to_string(),
                })
            }
        }
    }
    let ts = TimeSeriesMatrix::from_rows(&rows)?;
    match labels {
        Some(l) => ts.with_labels(l),
        None => Ok(ts),
    }
}

/// `T^{-1} Σ_{1 ≤ t, t+j ≤ T} u_{t+j} u_t'` on a raw data matrix. The
/// divisor is always `T`.
pub fn autocovariance(u: &DMatrix<f64>, j: isize) -> Result<DMatrix<f64>> {
    let t = u.nrows();
    let lag = j.unsigned_abs();
    if lag >= t {
        return Err(Error::LagOutOfRange { lag: j, len: t });
    }
    let g = autocovariance_nonneg(u, lag);
    Ok(if j < 0 { g.transpose() } else { g })
}

/// Unchecked nonnegative-lag version used by the kernel estimators.
pub(crate) fn autocovariance_nonneg(u: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let t = u.nrows();
    let n = t - lag;
    let lead = u.rows(lag, n);
    let base = u.rows(0, n);
    (lead.transpose() * base) / t as f64
}

/// Differences with an explicit pre-sample row.
pub(crate) fn difference(x: &DMatrix<f64>, initial: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for c in 0..x.ncols() {
        let mut prev = initial[c];
        for r in 0..x.nrows() {
            let cur = x[(r, c)];
            out[(r, c)] = cur - prev;
            prev = cur;
        }
    }
    out
}

/// Triangular system data: `y_t = A x_t + u_{0t}`, `x_t = x_{t-1} + u_{xt}`.
#[derive(Debug, Clone)]
pub struct SystemData {
    pub y: TimeSeriesMatrix,
    pub x: TimeSeriesMatrix,
    /// Value of `x` at `t = 0`, used to form `Δx_1`.
    pub x0: DVector<f64>,
}

impl SystemData {
    pub fn new(y: TimeSeriesMatrix, x: TimeSeriesMatrix) -> Result<Self> {
        let mx = x.ncols();
        Self::with_x0(y, x, DVector::zeros(mx))
    }

    pub fn with_x0(y: TimeSeriesMatrix, x: TimeSeriesMatrix, x0: DVector<f64>) -> Result<Self> {
        if y.nobs() != x.nobs() {
            return Err(Error::Dimension(format!(
                "y has {} rows, x has {}",
                y.nobs(),
                x.nobs()
            )));
        }
        if x0.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "x0 has {} entries, x has {} columns",
                x0.len(),
                x.ncols()
            )));
        }
        Ok(Self { y, x, x0 })
    }

    pub fn nobs(&self) -> usize {
        self.y.nobs()
    }

    pub fn m0(&self) -> usize {
        self.y.ncols()
    }

    pub fn mx(&self) -> usize {
        self.x.ncols()
    }

    /// `Δx_t` for `t = 1..T`, using `x0` for the first row.
    pub fn dx(&self) -> DMatrix<f64> {
        difference(self.x.data(), &self.x0)
    }
}

/// Least-squares fit of `y` on `x` without intercept.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// `m0 x mx` coefficient matrix `Y'X (X'X)^{-1}`.
    pub coef: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub xtx: DMatrix<f64>,
    pub xtx_inv: DMatrix<f64>,
}

pub fn ols(y: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<OlsFit> {
    if y.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "y has {} rows, x has {}",
            y.nrows(),
            x.nrows()
        )));
    }
    if x.nrows() <= x.ncols() {
        return Err(Error::Dimension(format!(
            "need more observations ({}) than regressors ({})",
            x.nrows(),
            x.ncols()
        )));
    }
    let xtx = x.transpose() * x;
    let xtx_inv = spd_inverse(&xtx, "X'X")?;
    let coef = (y.transpose() * x) * &xtx_inv;
    let residuals = y - x * coef.transpose();
    Ok(OlsFit {
        coef,
        residuals,
        xtx,
        xtx_inv,
    })
}
