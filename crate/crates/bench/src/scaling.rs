//! Controller cost as a function of the number of joints, measured on
//! generated serial chains.

use std::hint::black_box;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use taskdyn::controllers::{ControllerKind, HierarchyInput};
use taskdyn::model::serial_chain;
use taskdyn::numlin::{PinvConfig, WeightSpec};
use taskdyn::tasks::{resolve_hierarchy, RefSample, Selection, TaskHierarchy, TaskSpec};
use taskdyn::{RobotModel, RobotState};

use crate::report::{median_of_means, WARMUP_STEPS};
use crate::BenchError;

pub const LINK_LENGTH: f64 = 0.1;
pub const LINK_MASS: f64 = 1.0;
/// Smallest chain with distinct tip and mid-chain links.
pub const MIN_SIZE: usize = 4;

/// How long to measure one callable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingPlan {
    pub warmup: usize,
    pub blocks: usize,
    /// Target wall time of one block, seconds.
    pub block_seconds: f64,
}

impl Default for TimingPlan {
    fn default() -> Self {
        Self { warmup: WARMUP_STEPS, blocks: 10, block_seconds: 0.02 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub samples: usize,
    pub mean: f64,
    pub median_of_means: f64,
}

/// Times `f` per call: `plan.warmup` discarded calls, then `plan.blocks`
/// blocks of equal size, each averaged; reports the median of the block
/// means.
pub fn measure(mut f: impl FnMut(), plan: &TimingPlan) -> Measurement {
    let start = Instant::now();
    for _ in 0..plan.warmup {
        f();
    }
    let per_call = start.elapsed().as_secs_f64() / plan.warmup.max(1) as f64;
    let reps = if per_call > 0.0 { ((plan.block_seconds / per_call) as usize).clamp(1, 1_000_000) } else { 1000 };
    let blocks = plan.blocks.max(1);
    let means: Vec<f64> = (0..blocks)
        .map(|_| {
            let start = Instant::now();
            for _ in 0..reps {
                f();
            }
            start.elapsed().as_secs_f64() / reps as f64
        })
        .collect();
    Measurement {
        samples: reps * blocks,
        mean: means.iter().sum::<f64>() / blocks as f64,
        median_of_means: median_of_means(&means, blocks),
    }
}

/// Chain of `n` links with a tip position task above a mid-chain position
/// task and the posture, at a fixed generic state.
pub struct ChainProblem {
    pub model: RobotModel,
    pub state: RobotState,
    pub hierarchy: TaskHierarchy,
    pub references: Vec<Option<RefSample>>,
}

impl ChainProblem {
    pub fn new(n: usize) -> Result<Self, BenchError> {
        if n < MIN_SIZE {
            return Err(BenchError::Usage(format!("chain size {n} is below the minimum of {MIN_SIZE}")));
        }
        let model = serial_chain(n, LINK_LENGTH, LINK_MASS);
        let q = DVector::from_fn(n, |i, _| 0.3 * (i as f64 * 1.3).sin());
        let qd = DVector::from_fn(n, |i, _| 0.2 * (i as f64 * 0.7).cos());
        let point = Vector3::new(LINK_LENGTH, 0.0, 0.0);
        let hierarchy = TaskHierarchy::new(vec![
            TaskSpec::motion("tip", 2, n - 1, point, Selection::all()),
            TaskSpec::motion("mid", 1, n / 2, point, Selection::all()),
            TaskSpec::postural(q.clone()),
        ])?;
        let target = || Some(RefSample::hold(DVector::from_element(3, 0.1)));
        Ok(Self { model, state: RobotState::new(q, qd), hierarchy, references: vec![target(), target(), None] })
    }

    pub fn input(&self, pinv: PinvConfig) -> Result<HierarchyInput<'_>, BenchError> {
        Ok(resolve_hierarchy(&self.model, &self.state, &self.hierarchy, &self.references, pinv, WeightSpec::Identity)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub controller: ControllerKind,
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    pub median_of_means: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingReport {
    /// Strictly increasing.
    pub sizes: Vec<usize>,
    pub rows: Vec<ScalingRow>,
    /// Slope of log(time) against log(n), per controller.
    pub exponents: Vec<(ControllerKind, f64)>,
}

impl ScalingReport {
    pub fn exponent(&self, controller: ControllerKind) -> Option<f64> {
        self.exponents.iter().find(|(c, _)| *c == controller).map(|(_, e)| *e)
    }
}

/// Least-squares slope of log(y) against log(x).
pub fn fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Sorted, de-duplicated sizes; at least three are required for a fit.
pub fn check_sizes(sizes: &[usize]) -> Result<Vec<usize>, BenchError> {
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(BenchError::Usage("need ≥3 sizes".into()));
    }
    if let Some(&n) = sizes.iter().find(|&&n| n < MIN_SIZE) {
        return Err(BenchError::Usage(format!("chain size {n} is below the minimum of {MIN_SIZE}")));
    }
    Ok(sizes)
}

/// Times controller evaluation alone (hierarchy resolved once per size, no
/// integration) and fits one exponent per controller over the
/// median-of-means times.
pub fn run_scaling(sizes: &[usize], controllers: &[ControllerKind], pinv: PinvConfig, plan: &TimingPlan) -> Result<ScalingReport, BenchError> {
    let sizes = check_sizes(sizes)?;
    if controllers.is_empty() {
        return Err(BenchError::Usage("no controllers given".into()));
    }
    let mut rows = Vec::new();
    for &kind in controllers {
        for &n in &sizes {
            let problem = ChainProblem::new(n)?;
            let input = problem.input(pinv)?;
            kind.compute(&input)?;
            let m = measure(
                || {
                    black_box(kind.compute(black_box(&input)).ok());
                },
                plan,
            );
            rows.push(ScalingRow { controller: kind, n, samples: m.samples, mean: m.mean, median_of_means: m.median_of_means });
        }
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let exponents = controllers
        .iter()
        .map(|&kind| {
            let ys: Vec<f64> = rows.iter().filter(|r| r.controller == kind).map(|r| r.median_of_means).collect();
            (kind, fit_exponent(&xs, &ys))
        })
        .collect();
    Ok(ScalingReport { sizes, rows, exponents })
}
