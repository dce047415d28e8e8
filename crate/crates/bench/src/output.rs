//! CSV reports. Every file starts with a header whose first field names the
//! schema and its version; each row repeats it in the same column. Numbers
//! are written in shortest round-trip scientific notation, so reading a
//! file back yields the exact values that were written.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DVector;
use taskdyn::controllers::ControllerKind;
use taskdyn::sim::{SeriesKind, SimResult, TaskSeries};

use crate::report::MetricsReport;
use crate::scaling::ScalingReport;
use crate::BenchError;

pub const METRICS_SCHEMA: &str = "taskdyn.metrics.v1";
pub const TIMING_SCHEMA: &str = "taskdyn.timing.v1";
pub const TRACE_SCHEMA: &str = "taskdyn.trace.v1";
pub const STEP_TIMES_SCHEMA: &str = "taskdyn.step_times.v1";
pub const SCALING_SCHEMA: &str = "taskdyn.scaling.v1";

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

fn csv_err(what: &str) -> impl Fn(csv::Error) -> BenchError + '_ {
    move |e| BenchError::Format { what: what.to_string(), message: e.to_string() }
}

fn bad(what: &str, message: impl Into<String>) -> BenchError {
    BenchError::Format { what: what.to_string(), message: message.into() }
}

pub fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), BenchError>) -> Result<(), BenchError> {
    let file = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| BenchError::io(path, e))
}

fn writer(w: &mut dyn Write) -> csv::Writer<&mut dyn Write> {
    csv::Writer::from_writer(w)
}

pub fn write_metrics(w: &mut dyn Write, reports: &[MetricsReport]) -> Result<(), BenchError> {
    let err = csv_err("metrics.csv");
    let mut out = writer(w);
    out.write_record([METRICS_SCHEMA, "scenario", "controller", "task", "kind", "priority", "unit", "steps", "rmse"]).map_err(&err)?;
    for r in reports {
        for t in &r.tasks {
            out.write_record([
                METRICS_SCHEMA,
                &r.scenario,
                r.controller.as_str(),
                &t.task,
                t.kind.as_str(),
                &t.priority.to_string(),
                t.kind.unit(),
                &r.steps.to_string(),
                &num(t.rmse),
            ])
            .map_err(&err)?;
        }
    }
    out.flush().map_err(|e| bad("metrics.csv", e.to_string()))
}

pub fn write_timing(w: &mut dyn Write, reports: &[MetricsReport]) -> Result<(), BenchError> {
    let err = csv_err("timing.csv");
    let mut out = writer(w);
    out.write_record([TIMING_SCHEMA, "scenario", "controller", "samples", "mean_s", "median_s", "p95_s", "median_of_means_s"]).map_err(&err)?;
    for r in reports {
        if let Some(t) = &r.timing {
            out.write_record([
                TIMING_SCHEMA,
                &r.scenario,
                r.controller.as_str(),
                &t.samples.to_string(),
                &num(t.mean),
                &num(t.median),
                &num(t.p95),
                &num(t.median_of_means),
            ])
            .map_err(&err)?;
        }
    }
    out.flush().map_err(|e| bad("timing.csv", e.to_string()))
}

pub fn write_step_times(w: &mut dyn Write, results: &[SimResult]) -> Result<(), BenchError> {
    let err = csv_err("step_times.csv");
    let mut out = writer(w);
    out.write_record([STEP_TIMES_SCHEMA, "scenario", "controller", "step", "controller_time_s"]).map_err(&err)?;
    for r in results {
        for (step, t) in r.controller_time.iter().enumerate() {
            out.write_record([STEP_TIMES_SCHEMA, &r.scenario, r.controller.as_str(), &step.to_string(), &num(*t)]).map_err(&err)?;
        }
    }
    out.flush().map_err(|e| bad("step_times.csv", e.to_string()))
}

/// Column names of the per-task values: `x:<kind>:<priority>:<i>:<task>`
/// for the measured value and `r:...` for the reference.
fn trace_columns(result: &SimResult) -> Vec<String> {
    let mut cols: Vec<String> = [TRACE_SCHEMA, "scenario", "controller", "step", "time"].iter().map(|s| s.to_string()).collect();
    for t in &result.tasks {
        let dim = t.x.first().map_or(0, |x| x.len());
        for field in ["x", "r"] {
            for i in 0..dim {
                cols.push(format!("{field}:{}:{}:{i}:{}", t.kind.as_str(), t.priority, t.name));
            }
        }
    }
    let contacts = result.contact_forces.first().map_or(0, |f| f.len());
    for c in 0..contacts {
        for axis in ["x", "y", "z"] {
            cols.push(format!("f:{c}:{axis}"));
        }
    }
    cols.push("min_sv".into());
    cols
}

/// One row per step and run; runs follow each other in the given order.
pub fn write_trace(w: &mut dyn Write, results: &[SimResult]) -> Result<(), BenchError> {
    let err = csv_err("trace.csv");
    let mut out = writer(w);
    let Some(first) = results.iter().find(|r| r.steps() > 0) else {
        out.write_record([TRACE_SCHEMA, "scenario", "controller", "step", "time"]).map_err(&err)?;
        return out.flush().map_err(|e| bad("trace.csv", e.to_string()));
    };
    let cols = trace_columns(first);
    out.write_record(&cols).map_err(&err)?;
    for r in results.iter().filter(|r| r.steps() > 0) {
        if trace_columns(r) != cols {
            return Err(bad("trace.csv", "runs with different task layouts cannot share a trace"));
        }
        for step in 0..r.steps() {
            let mut row = vec![TRACE_SCHEMA.to_string(), r.scenario.clone(), r.controller.as_str().into(), step.to_string(), num(r.time[step])];
            for t in &r.tasks {
                row.extend(t.x[step].iter().map(|v| num(*v)));
                row.extend(t.x_r[step].iter().map(|v| num(*v)));
            }
            for f in &r.contact_forces[step] {
                row.extend(f.iter().map(|v| num(*v)));
            }
            row.push(num(r.min_sv[step]));
            out.write_record(&row).map_err(&err)?;
        }
    }
    out.flush().map_err(|e| bad("trace.csv", e.to_string()))
}

/// Task series of one run, as recovered from `trace.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRun {
    pub scenario: String,
    pub controller: ControllerKind,
    pub tasks: Vec<TaskSeries>,
}

fn parse_kind(s: &str) -> Option<SeriesKind> {
    [SeriesKind::Motion, SeriesKind::Force, SeriesKind::Posture].into_iter().find(|k| k.as_str() == s)
}

fn parse_controller(s: &str, what: &str) -> Result<ControllerKind, BenchError> {
    s.parse().map_err(|e: taskdyn::Error| bad(what, e.to_string()))
}

fn parse_num(s: &str, what: &str) -> Result<f64, BenchError> {
    s.parse().map_err(|_| bad(what, format!("`{s}` is not a number")))
}

fn check_schema(headers: &csv::StringRecord, schema: &str, what: &str) -> Result<(), BenchError> {
    match headers.get(0) {
        Some(s) if s == schema => Ok(()),
        other => Err(bad(what, format!("expected schema {schema}, found {other:?}"))),
    }
}

struct Column {
    task: usize,
    reference: bool,
    component: usize,
}

pub fn read_trace(r: impl Read) -> Result<Vec<TraceRun>, BenchError> {
    const WHAT: &str = "trace.csv";
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(csv_err(WHAT))?.clone();
    check_schema(&headers, TRACE_SCHEMA, WHAT)?;

    let mut template: Vec<TaskSeries> = Vec::new();
    let mut columns: Vec<(usize, Column)> = Vec::new();
    for (idx, name) in headers.iter().enumerate().skip(5) {
        let mut parts = name.splitn(5, ':');
        let field = parts.next().unwrap_or_default();
        if field != "x" && field != "r" {
            continue;
        }
        let (Some(kind), Some(priority), Some(component), Some(task)) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad(WHAT, format!("bad column `{name}`")));
        };
        let kind = parse_kind(kind).ok_or_else(|| bad(WHAT, format!("bad task kind in `{name}`")))?;
        let priority = priority.parse().map_err(|_| bad(WHAT, format!("bad priority in `{name}`")))?;
        let component = component.parse().map_err(|_| bad(WHAT, format!("bad component in `{name}`")))?;
        let task = match template.iter().position(|t| t.name == task) {
            Some(i) => i,
            None => {
                template.push(TaskSeries { name: task.to_string(), kind, priority, x: vec![], x_r: vec![] });
                template.len() - 1
            }
        };
        columns.push((idx, Column { task, reference: field == "r", component }));
    }
    let dims: Vec<usize> =
        (0..template.len()).map(|t| columns.iter().filter(|(_, c)| c.task == t && !c.reference).count()).collect();

    let mut runs: Vec<TraceRun> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(WHAT))?;
        let scenario = &record[1];
        let controller = parse_controller(&record[2], WHAT)?;
        let step: usize = record[3].parse().map_err(|_| bad(WHAT, "bad step index"))?;
        let new_run = runs.last().is_none_or(|r| r.controller != controller || r.scenario != scenario);
        if new_run {
            runs.push(TraceRun { scenario: scenario.to_string(), controller, tasks: template.clone() });
        }
        let run = runs.last_mut().expect("run pushed above");
        if run.tasks.first().is_some_and(|t| t.x.len() != step) {
            return Err(bad(WHAT, format!("steps out of order at step {step}")));
        }
        let mut x: Vec<DVector<f64>> = dims.iter().map(|&d| DVector::zeros(d)).collect();
        let mut xr = x.clone();
        for (idx, col) in &columns {
            let v = parse_num(&record[*idx], WHAT)?;
            let target = if col.reference { &mut xr[col.task] } else { &mut x[col.task] };
            target[col.component] = v;
        }
        for ((task, x), xr) in run.tasks.iter_mut().zip(x).zip(xr) {
            task.x.push(x);
            task.x_r.push(xr);
        }
    }
    Ok(runs)
}

/// Per-step controller times of each run in `step_times.csv`.
pub fn read_step_times(r: impl Read) -> Result<Vec<(String, ControllerKind, Vec<f64>)>, BenchError> {
    const WHAT: &str = "step_times.csv";
    let mut rdr = csv::Reader::from_reader(r);
    check_schema(&rdr.headers().map_err(csv_err(WHAT))?.clone(), STEP_TIMES_SCHEMA, WHAT)?;
    let mut runs: Vec<(String, ControllerKind, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err(WHAT))?;
        let controller = parse_controller(&record[2], WHAT)?;
        if runs.last().is_none_or(|(s, c, _)| *c != controller || s != &record[1]) {
            runs.push((record[1].to_string(), controller, Vec::new()));
        }
        runs.last_mut().expect("run pushed above").2.push(parse_num(&record[4], WHAT)?);
    }
    Ok(runs)
}

/// Rebuilds the reports from a trace and the matching step times.
pub fn rederive_reports(trace: &[TraceRun], step_times: &[(String, ControllerKind, Vec<f64>)]) -> Vec<MetricsReport> {
    trace
        .iter()
        .map(|run| {
            let times = step_times
                .iter()
                .find(|(s, c, _)| *s == run.scenario && *c == run.controller)
                .map_or(&[][..], |(_, _, t)| t.as_slice());
            MetricsReport::from_series(&run.scenario, run.controller, &run.tasks, times)
        })
        .collect()
}

pub fn write_scaling(w: &mut dyn Write, report: &ScalingReport) -> Result<(), BenchError> {
    let err = csv_err("scaling.csv");
    let mut out = writer(w);
    out.write_record([SCALING_SCHEMA, "controller", "n", "samples", "mean_s", "median_of_means_s", "exponent"]).map_err(&err)?;
    for row in &report.rows {
        let exponent = report.exponent(row.controller).map_or(String::new(), num);
        out.write_record([
            SCALING_SCHEMA,
            row.controller.as_str(),
            &row.n.to_string(),
            &row.samples.to_string(),
            &num(row.mean),
            &num(row.median_of_means),
            &exponent,
        ])
        .map_err(&err)?;
    }
    out.flush().map_err(|e| bad("scaling.csv", e.to_string()))
}
