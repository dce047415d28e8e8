//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use bench::scaling::{fit_exponent, measure, run_scaling, TimingPlan};
use bench::{simulate, MetricsReport};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskdyn::controllers::random::{random_level, random_problem};
use taskdyn::controllers::{
    tsid_control, tsid_force_control, uf_control, wbcf_control, ContactConstraint, ControlOutput, ControllerKind, HierarchyInput,
};
use taskdyn::dynamics::{crba, forward_dynamics, nonlinear_effects, rnea};
use taskdyn::model::{planar_chain, random_state, random_tree, serial_chain};
use taskdyn::numlin::{damped_pinv, svd, validate_pinv_config, PinvConfig};
use taskdyn::oracle::{constrained_dynamics_kkt, hierarchy_levels, lex_lsq};
use taskdyn::sim::{integrate_step, synchronized_energy, ScenarioConfig};
use taskdyn::{RobotModel, RobotState};

type Verdict = (bool, String);

fn motion_input<'a>(model: &'a RobotModel, state: &'a RobotState, levels: usize, rng: &mut ChaCha8Rng) -> HierarchyInput<'a> {
    let n = model.dof();
    let posture = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    let mut input = HierarchyInput::new(model, state, vec![], posture, PinvConfig::exact()).unwrap();
    for i in 0..levels {
        let m = rng.random_range(1..=3);
        let level = random_level(&format!("task{i}"), model, &input.kin, m, rng);
        input.levels.push(level);
    }
    input
}

fn realized(input: &HierarchyInput, out: &ControlOutput) -> DVector<f64> {
    forward_dynamics(input.model, &input.state.q, &input.state.qd, &out.tau, &input.expected_wrenches).unwrap()
}

/// Criteria 1 and 2 share their random instances.
fn optimality_and_equivalence() -> (Verdict, Verdict) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let trials = 120;
    let (mut worst_level, mut worst_tau) = (0.0f64, 0.0f64);
    for trial in 0..trials {
        let n = if trial % 2 == 0 { 4 } else { 6 };
        let (model, state) = random_problem(n, &mut rng);
        let count = rng.random_range(2..=3);
        let input = motion_input(&model, &state, count, &mut rng);
        let oracle = lex_lsq(&hierarchy_levels(&input)).unwrap();
        let tsid = tsid_control(&input).unwrap();
        let wbcf = wbcf_control(&input).unwrap();
        for out in [&tsid, &wbcf] {
            let qdd = realized(&input, out);
            for level in &input.levels {
                worst_level = worst_level.max((level.achieved(&qdd) - level.achieved(&oracle.x)).amax());
            }
        }
        worst_tau = worst_tau.max((&tsid.tau - &wbcf.tau).norm() / (1.0 + tsid.tau.norm()));
    }
    let secs = start.elapsed().as_secs_f64();
    (
        (worst_level < 1e-6 && secs < 60.0, format!("{trials} hierarchies, worst level error {worst_level:.2e}, {secs:.2} s")),
        (worst_tau <= 1e-8, format!("worst |tau_tsid - tau_wbcf| / (1 + |tau|) = {worst_tau:.2e}")),
    )
}

fn soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0f64;
    let trials = 100;
    type Controller = fn(&HierarchyInput) -> Result<ControlOutput, taskdyn::Error>;
    for _ in 0..trials {
        let n = rng.random_range(4..8);
        let (model, state) = random_problem(n, &mut rng);
        let count = rng.random_range(1..=3);
        let input = motion_input(&model, &state, count, &mut rng);
        let extra = random_level("extra", &model, &input.kin, rng.random_range(1..=3), &mut rng);
        let longer = input.with_level(extra);
        for control in [tsid_control as Controller, wbcf_control, uf_control] {
            let before = realized(&input, &control(&input).unwrap());
            let after = realized(&longer, &control(&longer).unwrap());
            for level in &input.levels {
                worst = worst.max((level.achieved(&before) - level.achieved(&after)).amax());
            }
        }
    }
    (worst < 1e-10, format!("{trials} stacks x 3 controllers, worst higher-level change {worst:.2e}"))
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))).unwrap()
}

fn reports(name: &str, controllers: &[ControllerKind]) -> Vec<MetricsReport> {
    simulate(&scenario(name), controllers).unwrap().iter().map(MetricsReport::from_result).collect()
}

fn find(reports: &[MetricsReport], kind: ControllerKind) -> &MetricsReport {
    reports.iter().find(|r| r.controller == kind).unwrap()
}

fn uf_suboptimality(test1: &[MetricsReport]) -> Verdict {
    let tsid = find(test1, ControllerKind::Tsid).rmse("T2").unwrap();
    let uf = find(test1, ControllerKind::Uf).rmse("T2").unwrap();
    let forces: Vec<f64> = test1.iter().map(|r| r.rmse("F").unwrap()).collect();
    let max_force = forces.iter().cloned().fold(0.0, f64::max);
    (
        uf >= 10.0 * tsid && max_force < 0.5,
        format!("T2 rmse uf {uf:.3e} m / tsid {tsid:.3e} m = {:.0}x; worst force rmse {max_force:.2e} N", uf / tsid),
    )
}

fn infeasible_hierarchy(test1: &[MetricsReport], test2: &[MetricsReport]) -> Verdict {
    let mut passed = true;
    let mut notes = Vec::new();
    // the error the task reaches when it is feasible, under the best controller
    let feasible = test1.iter().map(|r| r.rmse("T1").unwrap()).fold(f64::INFINITY, f64::min);
    for kind in [ControllerKind::Tsid, ControllerKind::Wbcf] {
        let (a, b) = (find(test1, kind), find(test2, kind));
        for task in ["F", "T2"] {
            let ratio = b.rmse(task).unwrap() / a.rmse(task).unwrap();
            passed &= ratio <= 2.0;
            notes.push(format!("{kind} {task} x{ratio:.2}"));
        }
        let t1 = b.rmse("T1").unwrap();
        passed &= t1 >= 10.0 * feasible;
        notes.push(format!("{kind} T1 {:.0}x feasible optimum ({:.0}x own test 1)", t1 / feasible, t1 / a.rmse("T1").unwrap()));
    }
    let t = find(test2, ControllerKind::Tsid).rmse("T1").unwrap();
    let w = find(test2, ControllerKind::Wbcf).rmse("T1").unwrap();
    let gap = (t - w).abs() / t.max(w);
    passed &= gap <= 0.10;
    notes.push(format!("T1 tsid {t:.3e} vs wbcf {w:.3e} ({:.1}%)", 100.0 * gap));
    (passed, notes.join(", "))
}

fn efficiency(test1: &[MetricsReport]) -> Verdict {
    let humanoid = reports("humanoid_test1", &[ControllerKind::Tsid, ControllerKind::Wbcf]);
    let mut passed = true;
    let mut notes = Vec::new();
    for (label, runs) in [("7 DoF", test1), ("23 DoF", &humanoid[..])] {
        let t = find(runs, ControllerKind::Tsid).step_time().unwrap();
        let w = find(runs, ControllerKind::Wbcf).step_time().unwrap();
        passed &= t < w;
        notes.push(format!("{label}: tsid {:.2} us, wbcf {:.2} us ({:.1}x)", t * 1e6, w * 1e6, w / t));
    }
    (passed, notes.join("; "))
}

fn scaling() -> Verdict {
    let start = Instant::now();
    let plan = TimingPlan { block_seconds: 0.05, ..TimingPlan::default() };
    let report = run_scaling(&[8, 16, 32, 64], &[ControllerKind::Tsid, ControllerKind::Wbcf], PinvConfig::default(), &plan).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let t = report.exponent(ControllerKind::Tsid).unwrap();
    let w = report.exponent(ControllerKind::Wbcf).unwrap();
    (t < 1.5 && w >= 2.0 && secs < 300.0, format!("exponents tsid {t:.2}, wbcf {w:.2}; {secs:.1} s"))
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

fn dynamics_core() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let (mut split, mut round_trip) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..12);
        let model = random_tree(n, &mut rng, true, true);
        let s = random_state(n, &mut rng);
        let qdd = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let tau = rnea(&model, &s.q, &s.qd, &qdd, &[]).unwrap();
        let mh = crba(&model, &s.q).unwrap() * &qdd + nonlinear_effects(&model, &s.q, &s.qd).unwrap();
        split = split.max(rel(&tau, &mh));
        let back = forward_dynamics(&model, &s.q, &s.qd, &tau, &[]).unwrap();
        round_trip = round_trip.max(rel(&back, &qdd));
    }

    let pendulum = planar_chain(&[1.0], &[2.0]).with_gravity(Vector3::new(0.0, -9.81, 0.0));
    let dt = 1e-3;
    let mut states = vec![RobotState::new(DVector::from_element(1, 0.8), DVector::zeros(1))];
    for _ in 0..=(1.0 / dt) as usize {
        let next = integrate_step(&pendulum, states.last().unwrap(), &DVector::zeros(1), &[], dt).unwrap();
        states.push(next);
    }
    let energy = synchronized_energy(&pendulum, &states).unwrap();
    let drift = energy.iter().map(|e| (e - energy[0]).abs()).fold(0.0, f64::max) / energy[0].abs();

    let sizes = [8usize, 16, 32, 64, 128];
    let plan = TimingPlan { block_seconds: 0.02, ..TimingPlan::default() };
    let times: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            let model = serial_chain(n, 0.1, 1.0);
            let q = DVector::from_fn(n, |i, _| 0.3 * (i as f64).sin());
            let qd = DVector::from_fn(n, |i, _| 0.2 * (i as f64).cos());
            measure(|| drop(std::hint::black_box(rnea(&model, &q, &qd, &qd, &[]))), &plan).median_of_means
        })
        .collect();
    let exponent = fit_exponent(&sizes.map(|n| n as f64), &times);

    (
        split < 1e-9 && round_trip < 1e-9 && drift < 1e-4 && exponent < 1.3,
        format!("rnea/crba {split:.1e}, round trip {round_trip:.1e}, pendulum energy drift {drift:.1e}, rnea exponent {exponent:.2}"),
    )
}

fn with_spectrum(m: usize, n: usize, rank: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let u = DMatrix::from_fn(m, rank, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let v = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    let s = DMatrix::from_diagonal(&DVector::from_fn(rank, |_, _| rng.random_range(lo..hi)));
    u * s * v.transpose()
}

fn numerics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let (mut penrose, mut gain) = (0.0f64, 0.0f64);
    for _ in 0..300 {
        let (m, n) = (rng.random_range(1..9), rng.random_range(1..9));
        let rank = rng.random_range(0..=m.min(n));
        let a = with_spectrum(m, n, rank, 0.1, 3.0, &mut rng);
        let p = damped_pinv(&a, 0.0).unwrap();
        let (ap, pa) = (&a * &p, &p * &a);
        for e in [(&ap * &a - &a).amax(), (&pa * &p - &p).amax(), (&ap - ap.transpose()).amax(), (&pa - pa.transpose()).amax()] {
            penrose = penrose.max(e);
        }
        let lambda = rng.random_range(1e-3..0.5);
        let b = with_spectrum(m, n, rank, 0.2 * lambda, 5.0 * lambda, &mut rng);
        let norm = svd(&damped_pinv(&b, lambda).unwrap()).singular_values.max();
        gain = gain.max(norm * 2.0 * lambda);
    }
    let accepted = validate_pinv_config(&PinvConfig { lambda: 0.02, sigma_min: 2.5e-8, z: 1e-4 }).is_ok();
    let violating = [
        PinvConfig { lambda: 0.02, sigma_min: 1e-2, z: 1e-4 },
        PinvConfig { lambda: 1e-6, sigma_min: 1e-6, z: 1e-4 },
        PinvConfig { lambda: 0.02, sigma_min: 2.5e-8, z: 1e-7 },
    ];
    let rejected = violating.iter().all(|c| validate_pinv_config(c).is_err());
    (
        penrose < 1e-10 && gain <= 1.0 + 1e-12 && accepted && rejected,
        format!(
            "Penrose residual {penrose:.1e}, max 2λ|A⁺_λ| = {gain:.15}, default triple {}, violating triples {}",
            if accepted { "accepted" } else { "REJECTED" },
            if rejected { "rejected" } else { "ACCEPTED" }
        ),
    )
}

fn rigid_force() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let (mut worst_f, mut worst_acc) = (0.0f64, 0.0f64);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(5..9);
        let (model, state) = random_problem(n, &mut rng);
        let mut input = motion_input(&model, &state, rng.random_range(0..=2), &mut rng);
        let k = rng.random_range(1..=3);
        let c = random_level("contact", &model, &input.kin, k, &mut rng);
        if svd(&c.jacobian).singular_values.min() < 1e-2 {
            continue;
        }
        let f_star = DVector::from_fn(k, |_, _| rng.random_range(-20.0..20.0));
        input.contact = Some(ContactConstraint { name: "contact".into(), jacobian: c.jacobian.clone(), bias: c.bias.clone(), f_star: f_star.clone() });
        let tau = tsid_force_control(&input).unwrap().tau;
        let b = -&c.bias;
        let (qdd, f) = constrained_dynamics_kkt(&model, &state.q, &state.qd, &tau, Some((&c.jacobian, &b)), &[]).unwrap();
        worst_f = worst_f.max((&f - &f_star).amax());
        worst_acc = worst_acc.max((&c.jacobian * &qdd + &c.bias).amax());
        checked += 1;
    }
    (worst_f < 1e-8 && worst_acc < 1e-8, format!("100 contacts, worst |f - f*| {worst_f:.1e} N, contact acceleration {worst_acc:.1e}"))
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        (false, format!("panicked: {}", msg.unwrap_or_default()))
    })
}

fn main() -> ExitCode {
    let mut lines: Vec<(&str, Verdict)> = Vec::new();
    let (optimal, equivalent) = catch_unwind(optimality_and_equivalence).unwrap_or_else(|_| {
        let failed = (false, "panicked".to_string());
        (failed.clone(), failed)
    });
    lines.push(("oracle optimality", optimal));
    lines.push(("tsid equals wbcf", equivalent));
    lines.push(("soundness", guarded(soundness)));

    let all = [ControllerKind::Tsid, ControllerKind::Wbcf, ControllerKind::Uf];
    let test1 = catch_unwind(|| reports("test1", &all)).ok();
    let test2 = catch_unwind(|| reports("test2", &all[..2])).ok();
    let missing = || (false, "scenario run failed".to_string());
    match &test1 {
        Some(t1) => lines.push(("uf suboptimality", guarded(|| uf_suboptimality(t1)))),
        None => lines.push(("uf suboptimality", missing())),
    }
    match (&test1, &test2) {
        (Some(t1), Some(t2)) => lines.push(("infeasible hierarchy", guarded(|| infeasible_hierarchy(t1, t2)))),
        _ => lines.push(("infeasible hierarchy", missing())),
    }
    match &test1 {
        Some(t1) => lines.push(("efficiency", guarded(|| efficiency(t1)))),
        None => lines.push(("efficiency", missing())),
    }
    lines.push(("scaling", guarded(scaling)));
    lines.push(("dynamics core", guarded(dynamics_core)));
    lines.push(("numerics", guarded(numerics)));
    lines.push(("rigid force control", guarded(rigid_force)));

    let failed = lines.iter().filter(|(_, (ok, _))| !ok).count();
    for (name, (ok, detail)) in &lines {
        println!("{} {name}: {detail}", if *ok { "PASS" } else { "FAIL" });
    }
    println!("{} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
