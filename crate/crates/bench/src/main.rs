use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bench::criteria::{Criteria, Outcome};
use bench::scaling::{run_scaling, TimingPlan};
use bench::{output, parse_controllers, simulate, write_outputs, BenchError, MetricsReport, Overrides, ScalingReport};
use clap::{Args, Parser, Subcommand};
use taskdyn::numlin::{validate_pinv_config, PinvConfig};
use taskdyn::sim::ScenarioConfig;

/// Runs controller scenarios, comparisons and scaling studies.
#[derive(Debug, Parser)]
#[command(name = "bench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory for the CSV files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Singular-value damping of the task pseudoinverses.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Projector truncation threshold.
    #[arg(long = "sigma-min", global = true)]
    sigma_min: Option<f64>,
    /// Simulation time step, s.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Criteria file; any failed check exits with status 3.
    #[arg(long = "assert", global = true, value_name = "CRITERIA")]
    criteria: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write metrics.csv and trace.csv.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Controller to use instead of the scenario's own.
        #[arg(long)]
        controller: Option<String>,
    },
    /// Run one scenario with several controllers.
    Compare {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "tsid,wbcf,uf")]
        controllers: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time controller evaluation on generated chains of several sizes.
    Scaling {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "tsid,wbcf")]
        controllers: Vec<String>,
    },
}

/// Reports produced by a command, for printing and checking.
struct Produced {
    metrics: Vec<MetricsReport>,
    scaling: Option<ScalingReport>,
}

fn load_scenario(path: &Path, overrides: &Overrides) -> Result<ScenarioConfig, BenchError> {
    let mut cfg = ScenarioConfig::load(path)?;
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Produced, BenchError> {
    let common = &cli.common;
    let overrides = |seed: Option<u64>| Overrides { lambda: common.lambda, sigma_min: common.sigma_min, dt: common.dt, seed };
    match &cli.command {
        Command::Run { scenario, seed, controller } => {
            let cfg = load_scenario(scenario, &overrides(*seed))?;
            let kind = match controller {
                Some(name) => parse_controllers(std::slice::from_ref(name))?[0],
                None => cfg.controller_kind()?,
            };
            let results = simulate(&cfg, &[kind])?;
            Ok(Produced { metrics: write_outputs(&common.out, &results)?, scaling: None })
        }
        Command::Compare { scenario, controllers, seed } => {
            let kinds = parse_controllers(controllers)?;
            if kinds.len() < 2 {
                return Err(BenchError::Usage("compare needs at least two controllers".into()));
            }
            let cfg = load_scenario(scenario, &overrides(*seed))?;
            let results = simulate(&cfg, &kinds)?;
            Ok(Produced { metrics: write_outputs(&common.out, &results)?, scaling: None })
        }
        Command::Scaling { sizes, controllers } => {
            let kinds = parse_controllers(controllers)?;
            if common.dt.is_some() {
                return Err(BenchError::Usage("--dt has no effect on scaling runs".into()));
            }
            let d = PinvConfig::default();
            let pinv = PinvConfig { lambda: common.lambda.unwrap_or(d.lambda), sigma_min: common.sigma_min.unwrap_or(d.sigma_min), z: d.z };
            validate_pinv_config(&pinv).map_err(|v| BenchError::Usage(v.message))?;
            let report = run_scaling(sizes, &kinds, pinv, &TimingPlan::default())?;
            std::fs::create_dir_all(&common.out).map_err(|e| BenchError::Io { path: common.out.clone(), message: e.to_string() })?;
            output::write_file(&common.out.join("scaling.csv"), |w| output::write_scaling(w, &report))?;
            Ok(Produced { metrics: vec![], scaling: Some(report) })
        }
    }
}

fn print_summary(produced: &Produced) {
    for m in &produced.metrics {
        let timing = m.timing.as_ref().map_or("no timing".into(), |t| {
            format!("step {:.3e} s (median of means), mean {:.3e}, p95 {:.3e}", t.median_of_means, t.mean, t.p95)
        });
        println!("{} / {}: {} steps, {timing}", m.scenario, m.controller, m.steps);
        for t in &m.tasks {
            println!("  {:<12} {:<8} rmse {:.6e} {}", t.task, t.kind.as_str(), t.rmse, t.kind.unit());
        }
    }
    if let Some(s) = &produced.scaling {
        for row in &s.rows {
            println!("{:<5} n={:<4} {:.3e} s", row.controller, row.n, row.median_of_means);
        }
        for (kind, e) in &s.exponents {
            println!("{kind} exponent {e:.3}");
        }
    }
}

fn print_outcomes(outcomes: &[Outcome]) {
    for o in outcomes {
        println!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.description, o.detail);
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    // read the criteria first so a bad file fails before any long run
    let criteria = match cli.common.criteria.as_deref().map(Criteria::load).transpose() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let produced = match execute(&cli) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    print_summary(&produced);
    if let Some(criteria) = criteria {
        let outcomes = criteria.evaluate(&produced.metrics, produced.scaling.as_ref());
        print_outcomes(&outcomes);
        if outcomes.iter().any(|o| !o.passed) {
            return ExitCode::from(3);
        }
    }
    ExitCode::SUCCESS
}
