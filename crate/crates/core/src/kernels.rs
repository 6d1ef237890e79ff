//! Lag-window kernels and bandwidth rules.
//!
//! Parzen and Tukey-Hanning are twice differentiable at the origin with
//! compact support on `[-1, 1]`, which is what the singular-case rate
//! results need. Bartlett and quadratic spectral are provided for
//! comparison and flagged via [`KernelSpec::satisfies_assumption_k`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Parzen,
    TukeyHanning,
    Bartlett,
    QuadraticSpectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const PARZEN: KernelSpec = KernelSpec {
        family: KernelFamily::Parzen,
    };

    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    /// Kernel weight `w(x)`.
    pub fn weight(&self, x: f64) -> f64 {
        let a = x.abs();
        match self.family {
            KernelFamily::Parzen => {
                if a <= 0.5 {
                    1.0 - 6.0 * a * a + 6.0 * a * a * a
                } else if a < 1.0 {
                    let d = 1.0 - a;
                    2.0 * d * d * d
                } else {
                    0.0
                }
            }
            KernelFamily::TukeyHanning => {
                if a < 1.0 {
                    0.5 * (1.0 + (PI * a).cos())
                } else {
                    0.0
                }
            }
            KernelFamily::Bartlett => {
                if a < 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            KernelFamily::QuadraticSpectral => {
                let z = 6.0 * PI * a / 5.0;
                if z < 1e-3 {
                    // Taylor expansion; the closed form cancels badly near 0
                    let z2 = z * z;
                    1.0 - z2 / 10.0 + z2 * z2 / 280.0
                } else {
                    3.0 / (z * z) * (z.sin() / z - z.cos())
                }
            }
        }
    }

    /// `w''(0)`, or `None` for Bartlett whose second derivative does not
    /// exist at the origin.
    pub fn curvature_at_zero(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Parzen => Some(-12.0),
            KernelFamily::TukeyHanning => Some(-PI * PI / 2.0),
            KernelFamily::QuadraticSpectral => Some(-36.0 * PI * PI / 125.0),
            KernelFamily::Bartlett => None,
        }
    }

    pub fn satisfies_assumption_k(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::Parzen | KernelFamily::TukeyHanning
        )
    }

    /// Half-width of the support, `None` for unbounded support.
    pub fn support(&self) -> Option<f64> {
        match self.family {
            KernelFamily::QuadraticSpectral => None,
            _ => Some(1.0),
        }
    }

    /// Largest lag `j` with a possibly nonzero weight `w(j/K)` in a sample
    /// of length `t`.
    pub fn max_lag(&self, bandwidth: f64, t: usize) -> usize {
        let full = t.saturating_sub(1);
        match self.support() {
            Some(s) => {
                let cut = (bandwidth * s).ceil();
                if cut < 1.0 {
                    0
                } else {
                    (cut as usize - 1).min(full)
                }
            }
            None => full,
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self::PARZEN
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.family {
            KernelFamily::Parzen => "parzen",
            KernelFamily::TukeyHanning => "th",
            KernelFamily::Bartlett => "bartlett",
            KernelFamily::QuadraticSpectral => "qs",
        };
        f.write_str(s)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let family = match s.trim().to_ascii_lowercase().as_str() {
            "parzen" => KernelFamily::Parzen,
            "th" | "tukey-hanning" | "tukey_hanning" => KernelFamily::TukeyHanning,
            "bartlett" => KernelFamily::Bartlett,
            "qs" | "quadratic-spectral" | "quadratic_spectral" => KernelFamily::QuadraticSpectral,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown kernel '{other}' (expected parzen|th|bartlett|qs)"
                )))
            }
        };
        Ok(Self { family })
    }
}

/// Bandwidth `K` as a function of the sample size. `K` stays real-valued.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `K = c * T^k` with `c > 0`, `0 < k < 1`.
    Power { c: f64, k: f64 },
    /// Fixed `K` regardless of `T`.
    Constant { value: f64 },
}

impl BandwidthRule {
    pub fn power(c: f64, k: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth constant must be positive, got {c}"
            )));
        }
        if !(k > 0.0 && k < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth exponent must lie in (0, 1), got {k}"
            )));
        }
        Ok(Self::Power { c, k })
    }

    pub fn constant(value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {value}"
            )));
        }
        Ok(Self::Constant { value })
    }

    pub fn bandwidth(&self, t: usize) -> f64 {
        match *self {
            Self::Power { c, k } => c * (t as f64).powf(k),
            Self::Constant { value } => value,
        }
    }

    /// Growth exponent `k`, if the rule has one.
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            Self::Power { k, .. } => Some(k),
            Self::Constant { .. } => None,
        }
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Power { c, k } => write!(f, "{c}*T^{k}"),
            Self::Constant { value } => write!(f, "{value}"),
        }
    }
}

/// Parses `c*T^k`, `T^k`, or a bare number (constant bandwidth).
impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bad = || Error::InvalidArgument(format!("cannot parse bandwidth '{s}'"));
        if let Ok(v) = compact.parse::<f64>() {
            return Self::constant(v);
        }
        let (c, rest) = match compact.split_once('*') {
            Some((c, rest)) => (c.parse::<f64>().map_err(|_| bad())?, rest),
            None => (1.0, compact.as_str()),
        };
        let k = rest
            .strip_prefix("T^")
            .or_else(|| rest.strip_prefix("t^"))
            .ok_or_else(bad)?;
        let k = match k.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n.trim_matches(['(', ')']).parse().map_err(|_| bad())?;
                let d: f64 = d.trim_matches(['(', ')']).parse().map_err(|_| bad())?;
                n / d
            }
            None => k.trim_matches(['(', ')']).parse().map_err(|_| bad())?,
        };
        Self::power(c, k)
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn even_and_bounded(x in -20.0f64..20.0, f in 0usize..4) {
            let fam = [KernelFamily::Parzen, KernelFamily::TukeyHanning,
                       KernelFamily::Bartlett, KernelFamily::QuadraticSpectral][f];
            let k = KernelSpec::new(fam);
            prop_assert_eq!(k.weight(x), k.weight(-x));
            prop_assert!(k.weight(x).abs() <= 1.0);
            if let Some(s) = k.support() {
                if x.abs() >= s {
                    prop_assert_eq!(k.weight(x), 0.0);
                }
            }
        }
    }
}
