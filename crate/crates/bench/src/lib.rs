//! Scenario runs, controller comparisons and scaling studies on top of
//! `taskdyn`, with CSV reports and checkable criteria.

pub mod criteria;
pub mod output;
pub mod report;
pub mod scaling;

use std::path::{Path, PathBuf};

use taskdyn::controllers::ControllerKind;
use taskdyn::sim::{run_scenario, ScenarioConfig, SimResult};
use thiserror::Error;

pub use report::{MetricsReport, TaskMetric, TimingSummary};
pub use scaling::{ScalingReport, ScalingRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] taskdyn::Error),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
}

impl BenchError {
    /// Process exit code: 1 for usage errors, 2 for everything that goes
    /// wrong while loading or running a scenario.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::Usage(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        BenchError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub sigma_min: Option<f64>,
    pub dt: Option<f64>,
    pub seed: Option<u64>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if self.lambda.is_some() || self.sigma_min.is_some() {
            cfg.set_pinv(self.lambda, self.sigma_min);
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
    }
}

pub fn parse_controllers(names: &[String]) -> Result<Vec<ControllerKind>, BenchError> {
    let mut kinds = Vec::new();
    for name in names {
        let kind: ControllerKind = name.parse().map_err(|e: taskdyn::Error| BenchError::Usage(e.to_string()))?;
        if kinds.contains(&kind) {
            return Err(BenchError::Usage(format!("controller `{kind}` listed twice")));
        }
        kinds.push(kind);
    }
    Ok(kinds)
}

/// Runs the scenario once per controller, one after another so that the
/// timings do not compete for the CPU. Results follow the given order.
pub fn simulate(cfg: &ScenarioConfig, controllers: &[ControllerKind]) -> Result<Vec<SimResult>, BenchError> {
    controllers
        .iter()
        .map(|kind| {
            let mut cfg = cfg.clone();
            cfg.controller = kind.as_str().into();
            Ok(run_scenario(&cfg)?)
        })
        .collect()
}

/// Writes `metrics.csv`, `trace.csv`, `timing.csv` and `step_times.csv`
/// into `dir` and returns the reports.
pub fn write_outputs(dir: &Path, results: &[SimResult]) -> Result<Vec<MetricsReport>, BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let reports: Vec<MetricsReport> = results.iter().map(MetricsReport::from_result).collect();
    output::write_file(&dir.join("metrics.csv"), |w| output::write_metrics(w, &reports))?;
    output::write_file(&dir.join("timing.csv"), |w| output::write_timing(w, &reports))?;
    output::write_file(&dir.join("trace.csv"), |w| output::write_trace(w, results))?;
    output::write_file(&dir.join("step_times.csv"), |w| output::write_step_times(w, results))?;
    Ok(reports)
}
