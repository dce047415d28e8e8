//! Pass/fail checks over run and scaling reports, read from a TOML file:
//!
//! ```toml
//! [[rmse]]
//! task = "F"
//! max = 0.5            # every controller unless `controller` is given
//!
//! [[rmse_ratio]]
//! task = "T2"
//! numerator = "uf"
//! denominator = "tsid"
//! min = 10.0
//!
//! [[faster]]
//! fast = "tsid"
//! slow = "wbcf"
//!
//! [[exponent]]
//! controller = "tsid"
//! max = 1.5
//! ```

use std::path::Path;

use serde::Deserialize;
use taskdyn::controllers::ControllerKind;

use crate::report::MetricsReport;
use crate::scaling::ScalingReport;
use crate::BenchError;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Criteria {
    #[serde(default)]
    pub rmse: Vec<RmseBound>,
    #[serde(default)]
    pub rmse_ratio: Vec<RmseRatio>,
    #[serde(default)]
    pub faster: Vec<Faster>,
    #[serde(default)]
    pub exponent: Vec<ExponentBound>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseBound {
    pub controller: Option<String>,
    pub task: String,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseRatio {
    pub task: String,
    pub numerator: String,
    pub denominator: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Median-of-means step time of `fast` below that of `slow`.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Faster {
    pub fast: String,
    pub slow: String,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentBound {
    pub controller: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    fn new(description: String, passed: bool, detail: String) -> Self {
        Self { description, passed, detail }
    }
}

fn kind(name: &str) -> Result<ControllerKind, BenchError> {
    name.parse().map_err(|e: taskdyn::Error| BenchError::Usage(e.to_string()))
}

fn in_range(v: f64, min: Option<f64>, max: Option<f64>) -> bool {
    min.is_none_or(|m| v >= m) && max.is_none_or(|m| v <= m)
}

fn range_text(min: Option<f64>, max: Option<f64>) -> String {
    match (min, max) {
        (Some(a), Some(b)) => format!("in [{a}, {b}]"),
        (Some(a), None) => format!(">= {a}"),
        (None, Some(b)) => format!("<= {b}"),
        (None, None) => "finite".into(),
    }
}

impl Criteria {
    /// Parses and validates criteria; malformed files are usage errors.
    pub fn from_toml(text: &str) -> Result<Self, BenchError> {
        let c: Criteria = toml::from_str(text).map_err(|e| BenchError::Usage(format!("criteria: {e}")))?;
        for r in &c.rmse {
            if let Some(name) = &r.controller {
                kind(name)?;
            }
        }
        for r in &c.rmse_ratio {
            kind(&r.numerator)?;
            kind(&r.denominator)?;
        }
        for f in &c.faster {
            kind(&f.fast)?;
            kind(&f.slow)?;
        }
        for e in &c.exponent {
            kind(&e.controller)?;
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn is_empty(&self) -> bool {
        self.rmse.is_empty() && self.rmse_ratio.is_empty() && self.faster.is_empty() && self.exponent.is_empty()
    }

    /// Evaluates every check. A check whose data is missing fails.
    pub fn evaluate(&self, metrics: &[MetricsReport], scaling: Option<&ScalingReport>) -> Vec<Outcome> {
        let report = |name: &str| {
            let k = kind(name).ok()?;
            metrics.iter().find(|m| m.controller == k)
        };
        let mut out = Vec::new();
        for b in &self.rmse {
            let selected: Vec<&MetricsReport> = match &b.controller {
                Some(name) => report(name).into_iter().collect(),
                None => metrics.iter().collect(),
            };
            let who = b.controller.clone().unwrap_or_else(|| "all".into());
            let description = format!("rmse {} ({who}) <= {:e}", b.task, b.max);
            let values: Vec<(ControllerKind, Option<f64>)> = selected.iter().map(|m| (m.controller, m.rmse(&b.task))).collect();
            let passed = !values.is_empty() && values.iter().all(|(_, v)| v.is_some_and(|v| v <= b.max));
            let detail = if values.is_empty() {
                "no matching run".into()
            } else {
                values.iter().map(|(c, v)| format!("{c}={}", v.map_or("missing".into(), |v| format!("{v:e}")))).collect::<Vec<_>>().join(" ")
            };
            out.push(Outcome::new(description, passed, detail));
        }
        for r in &self.rmse_ratio {
            let description = format!("rmse {} {}/{} {}", r.task, r.numerator, r.denominator, range_text(r.min, r.max));
            let num = report(&r.numerator).and_then(|m| m.rmse(&r.task));
            let den = report(&r.denominator).and_then(|m| m.rmse(&r.task));
            let (passed, detail) = match (num, den) {
                (Some(a), Some(b)) if b > 0.0 => {
                    let ratio = a / b;
                    (in_range(ratio, r.min, r.max), format!("ratio {ratio:e} ({a:e} / {b:e})"))
                }
                (Some(a), Some(b)) => (false, format!("zero denominator ({a:e} / {b:e})")),
                _ => (false, "missing run or task".into()),
            };
            out.push(Outcome::new(description, passed, detail));
        }
        for f in &self.faster {
            let description = format!("step time {} < {}", f.fast, f.slow);
            let fast = report(&f.fast).and_then(MetricsReport::step_time);
            let slow = report(&f.slow).and_then(MetricsReport::step_time);
            let (passed, detail) = match (fast, slow) {
                (Some(a), Some(b)) => (a < b, format!("{a:e} s vs {b:e} s")),
                _ => (false, "missing timing".into()),
            };
            out.push(Outcome::new(description, passed, detail));
        }
        for e in &self.exponent {
            let description = format!("exponent {} {}", e.controller, range_text(e.min, e.max));
            let value = scaling.zip(kind(&e.controller).ok()).and_then(|(s, k)| s.exponent(k));
            let (passed, detail) = match value {
                Some(v) => (v.is_finite() && in_range(v, e.min, e.max), format!("{v:.3}")),
                None => (false, "no scaling data".into()),
            };
            out.push(Outcome::new(description, passed, detail));
        }
        out
    }
}
