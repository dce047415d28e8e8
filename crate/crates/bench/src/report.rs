use taskdyn::controllers::ControllerKind;
use taskdyn::sim::{SeriesKind, SimResult, TaskSeries};

/// Leading steps excluded from timing statistics.
pub const WARMUP_STEPS: usize = 100;
/// Number of contiguous blocks for the median-of-means estimate.
pub const TIMING_BLOCKS: usize = 10;

/// Statistics of per-step controller times, seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingSummary {
    pub samples: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub median_of_means: f64,
}

impl TimingSummary {
    /// Drops the first `warmup` samples (all are kept when the run is not
    /// longer than the warm-up) and summarizes the rest.
    pub fn from_samples(times: &[f64], warmup: usize) -> Option<Self> {
        let kept = if times.len() > warmup { &times[warmup..] } else { times };
        if kept.is_empty() {
            return None;
        }
        let n = kept.len();
        let mut sorted = kept.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p95 = sorted[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Some(Self {
            samples: n,
            mean: kept.iter().sum::<f64>() / n as f64,
            median: median_of_sorted(&sorted),
            p95,
            median_of_means: median_of_means(kept, TIMING_BLOCKS),
        })
    }
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median of the means of `blocks` contiguous, nearly equal blocks.
pub fn median_of_means(samples: &[f64], blocks: usize) -> f64 {
    let n = samples.len();
    let k = blocks.clamp(1, n.max(1));
    let mut means: Vec<f64> = (0..k)
        .map(|i| {
            let block = &samples[i * n / k..(i + 1) * n / k];
            block.iter().sum::<f64>() / block.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    median_of_sorted(&means)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskMetric {
    pub task: String,
    pub kind: SeriesKind,
    pub priority: i32,
    /// Root-mean-square of ‖x − x_r‖ over the horizon, in the task's unit.
    pub rmse: f64,
}

/// Per-task RMSE and controller timing of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub scenario: String,
    pub controller: ControllerKind,
    pub steps: usize,
    pub tasks: Vec<TaskMetric>,
    pub timing: Option<TimingSummary>,
}

impl MetricsReport {
    pub fn from_result(result: &SimResult) -> Self {
        Self::from_series(&result.scenario, result.controller, &result.tasks, &result.controller_time)
    }

    /// Builds the report from task series and per-step times; tasks with an
    /// empty series have no RMSE and are left out.
    pub fn from_series(scenario: &str, controller: ControllerKind, tasks: &[TaskSeries], step_times: &[f64]) -> Self {
        Self {
            scenario: scenario.to_string(),
            controller,
            steps: tasks.first().map_or(step_times.len(), |t| t.x.len()),
            tasks: tasks
                .iter()
                .filter_map(|t| t.rmse().map(|rmse| TaskMetric { task: t.name.clone(), kind: t.kind, priority: t.priority, rmse }))
                .collect(),
            timing: TimingSummary::from_samples(step_times, WARMUP_STEPS),
        }
    }

    pub fn rmse(&self, task: &str) -> Option<f64> {
        self.tasks.iter().find(|t| t.task == task).map(|t| t.rmse)
    }

    /// Median-of-means step time, seconds.
    pub fn step_time(&self) -> Option<f64> {
        self.timing.as_ref().map(|t| t.median_of_means)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_is_dropped() {
        let mut times = vec![1.0; WARMUP_STEPS];
        times.extend([2.0, 4.0]);
        let s = TimingSummary::from_samples(&times, WARMUP_STEPS).unwrap();
        assert_eq!(s.samples, 2);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert_eq!(s.p95, 4.0);
    }

    #[test]
    fn short_runs_keep_every_sample() {
        let s = TimingSummary::from_samples(&[3.0, 1.0, 2.0], WARMUP_STEPS).unwrap();
        assert_eq!((s.samples, s.median, s.p95), (3, 2.0, 3.0));
        assert!(TimingSummary::from_samples(&[], WARMUP_STEPS).is_none());
    }

    #[test]
    fn median_of_means_resists_outliers() {
        let mut samples = vec![1.0; 100];
        samples[3] = 1e6;
        samples[57] = 1e6;
        assert_eq!(median_of_means(&samples, 10), 1.0);
        // fewer samples than blocks
        assert_eq!(median_of_means(&[1.0, 5.0, 3.0], 10), 3.0);
    }

    #[test]
    fn report_skips_empty_series() {
        let task = TaskSeries { name: "a".into(), kind: SeriesKind::Motion, priority: 1, x: vec![], x_r: vec![] };
        let r = MetricsReport::from_series("s", ControllerKind::Tsid, &[task], &[]);
        assert_eq!(r.steps, 0);
        assert!(r.tasks.is_empty());
        assert!(r.timing.is_none());
    }
}
