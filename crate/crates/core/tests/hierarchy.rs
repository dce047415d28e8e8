//! Controllers against the lexicographic and constrained-dynamics oracles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taskdyn::controllers::random::{random_level, random_problem};
use taskdyn::controllers::{
    tsid_control, tsid_control_weighted, tsid_force_control, tsid_rigid_force_single, uf_control, wbcf_control,
    ContactConstraint, ControlOutput, HierarchyInput,
};
use taskdyn::dynamics::forward_dynamics;
use taskdyn::numlin::{svd, PinvConfig, WeightSpec};
use taskdyn::oracle::{constrained_dynamics_kkt, hierarchy_levels, lex_leq, lex_lsq, LexLevel};
use taskdyn::{RobotModel, RobotState};

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

fn costs(levels: &[LexLevel], x: &DVector<f64>) -> Vec<f64> {
    levels.iter().map(|l| l.cost(x)).collect()
}

#[test]
fn tsid_and_wbcf_are_lexicographically_optimal() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..120 {
        let n = if trial % 2 == 0 { 4 } else { 6 };
        let (model, state) = random_problem(n, &mut rng);
        let count = rng.random_range(2..=3);
        let input = motion_input(&model, &state, count, &mut rng);
        let oracle = lex_lsq(&hierarchy_levels(&input)).unwrap();
        for out in [tsid_control(&input).unwrap(), wbcf_control(&input).unwrap()] {
            let qdd = realized(&input, &out);
            for level in &input.levels {
                let err = (level.achieved(&qdd) - level.achieved(&oracle.x)).amax();
                assert!(err < 1e-6, "trial {trial} level {}: {err:e}", level.name);
            }
        }
    }
}

#[test]
fn uf_is_never_better_than_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut strictly_worse = 0;
    for _ in 0..100 {
        let (model, state) = random_problem(5, &mut rng);
        let input = motion_input(&model, &state, 3, &mut rng);
        let levels = hierarchy_levels(&input);
        let oracle = lex_lsq(&levels).unwrap();
        let uf = costs(&levels, &realized(&input, &uf_control(&input).unwrap()));
        assert!(lex_leq(&oracle.costs, &uf, 1e-8));
        if uf.iter().zip(&oracle.costs).any(|(u, o)| u > &(o + 1e-6)) {
            strictly_worse += 1;
        }
    }
    assert!(strictly_worse > 0);
}

#[test]
fn appending_a_lower_task_is_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..80 {
        let n = rng.random_range(4..8);
        let (model, state) = random_problem(n, &mut rng);
        let input = motion_input(&model, &state, 2, &mut rng);
        let extra = random_level("extra", &model, &input.kin, rng.random_range(1..=3), &mut rng);
        let longer = input.with_level(extra);
        type Controller = fn(&HierarchyInput) -> Result<ControlOutput, taskdyn::Error>;
        for control in [tsid_control as Controller, wbcf_control, uf_control] {
            let before = realized(&input, &control(&input).unwrap());
            let after = realized(&longer, &control(&longer).unwrap());
            for level in &input.levels {
                assert!((level.achieved(&before) - level.achieved(&after)).amax() < 1e-10);
            }
        }
    }
}

#[test]
fn tsid_and_wbcf_agree_without_damping() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let n = rng.random_range(3..9);
        let (model, state) = random_problem(n, &mut rng);
        let count = rng.random_range(1..=3);
        let input = motion_input(&model, &state, count, &mut rng);
        let a = tsid_control(&input).unwrap().tau;
        let b = wbcf_control(&input).unwrap().tau;
        assert!((&a - &b).norm() <= 1e-8 * (1.0 + a.norm()));
    }
}

#[test]
fn tsid_weighted_form_ignores_the_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..40 {
        let (model, state) = random_problem(6, &mut rng);
        let mut input = motion_input(&model, &state, 2, &mut rng);
        let base = tsid_control(&input).unwrap().tau;
        let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        input.weight = WeightSpec::Explicit(&g * g.transpose() + DMatrix::identity(6, 6) * 0.2);
        let weighted = tsid_control_weighted(&input).unwrap().tau;
        let err = (&weighted - &base).norm() / (1.0 + base.norm());
        assert!(err < 1e-8);
    }
}

/// Random model, motion stack and a full-rank rigid contact.
fn contact_input<'a>(model: &'a RobotModel, state: &'a RobotState, levels: usize, rng: &mut ChaCha8Rng) -> Option<HierarchyInput<'a>> {
    let mut input = motion_input(model, state, levels, rng);
    let k = rng.random_range(1..=3);
    let lv = random_level("contact", model, &input.kin, k, rng);
    if svd(&lv.jacobian).singular_values.min() < 1e-2 {
        return None;
    }
    input.contact = Some(ContactConstraint {
        name: "contact".into(),
        jacobian: lv.jacobian,
        bias: lv.bias,
        f_star: DVector::from_fn(k, |_, _| rng.random_range(-20.0..20.0)),
    });
    Some(input)
}

fn contact_response(input: &HierarchyInput, tau: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let c = input.contact.as_ref().unwrap();
    let b = -&c.bias;
    constrained_dynamics_kkt(input.model, &input.state.q, &input.state.qd, tau, Some((&c.jacobian, &b)), &[]).unwrap()
}

#[test]
fn rigid_force_control_produces_the_desired_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut checked = 0;
    while checked < 100 {
        let n = rng.random_range(5..9);
        let (model, state) = random_problem(n, &mut rng);
        let levels = rng.random_range(0..=2);
        let Some(input) = contact_input(&model, &state, levels, &mut rng) else { continue };
        let out = tsid_force_control(&input).unwrap();
        let (qdd, f) = contact_response(&input, &out.tau);
        let c = input.contact.as_ref().unwrap();
        assert!((&f - &c.f_star).amax() < 1e-8, "{f} vs {}", c.f_star);
        assert!((&c.jacobian * &qdd + &c.bias).amax() < 1e-8);
        assert_eq!(out.qdd_levels.len(), input.levels.len() + 2);
        checked += 1;
    }
}

#[test]
fn contact_force_does_not_depend_on_null_space_motion() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    while checked < 40 {
        let (model, state) = random_problem(6, &mut rng);
        let Some(input) = contact_input(&model, &state, 0, &mut rng) else { continue };
        let b = -&input.contact.as_ref().unwrap().bias;
        let forces: Vec<DVector<f64>> = (0..3)
            .map(|_| {
                let qdd0 = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
                let out = tsid_rigid_force_single(&input, &b, &qdd0).unwrap();
                contact_response(&input, &out.tau).1
            })
            .collect();
        assert!((&forces[0] - &forces[1]).amax() < 1e-10 * (1.0 + forces[0].amax()));
        assert!((&forces[0] - &forces[2]).amax() < 1e-10 * (1.0 + forces[0].amax()));
        checked += 1;
    }
}

#[test]
fn contact_only_hierarchy_is_the_single_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let mut checked = 0;
    while checked < 20 {
        let (model, state) = random_problem(6, &mut rng);
        let Some(input) = contact_input(&model, &state, 0, &mut rng) else { continue };
        let b = -&input.contact.as_ref().unwrap().bias;
        let single = tsid_rigid_force_single(&input, &b, &input.posture_acc).unwrap();
        let full = tsid_force_control(&input).unwrap();
        assert!((&single.tau - &full.tau).amax() < 1e-9 * (1.0 + full.tau.amax()));
        checked += 1;
    }
}

#[test]
fn force_hierarchy_matches_the_oracle_below_the_contact() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut checked = 0;
    while checked < 50 {
        let (model, state) = random_problem(7, &mut rng);
        let Some(input) = contact_input(&model, &state, 2, &mut rng) else { continue };
        let out = tsid_force_control(&input).unwrap();
        let (qdd, _) = contact_response(&input, &out.tau);
        let oracle = lex_lsq(&hierarchy_levels(&input)).unwrap();
        for level in &input.levels {
            assert!((level.achieved(&qdd) - level.achieved(&oracle.x)).amax() < 1e-6);
        }
        checked += 1;
    }
}

#[test]
fn lex_lsq_beats_random_feasible_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let n = rng.random_range(3..=6);
        let levels: Vec<LexLevel> = (0..3)
            .map(|_| {
                let m = rng.random_range(1..=n);
                LexLevel::new(
                    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)),
                    DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let best = lex_lsq(&levels).unwrap();
        // moves that leave every higher level untouched span the null space
        // of the stacked higher rows
        let mut stacked = DMatrix::zeros(0, n);
        for (i, level) in levels.iter().enumerate() {
            let rows = stacked.nrows().max(n);
            let full = svd(&DMatrix::from_fn(rows, n, |r, c| if r < stacked.nrows() { stacked[(r, c)] } else { 0.0 }));
            let rank = full.singular_values.iter().filter(|&&s| s > 1e-10).count();
            let free = full.v_t.rows(rank, n - rank).transpose();
            for _ in 0..2_000 {
                if free.ncols() == 0 {
                    break;
                }
                let scale = 10f64.powi(rng.random_range(-6..1));
                let step = &free * DVector::from_fn(free.ncols(), |_, _| rng.random_range(-1.0..1.0)) * scale;
                let x = &best.x + step;
                for (higher, cost) in levels[..i].iter().zip(&best.costs) {
                    assert!((higher.cost(&x) - cost).abs() < 1e-9 * (1.0 + cost));
                }
                assert!(level.cost(&x) >= best.costs[i] - 1e-10 * (1.0 + best.costs[i]), "level {i}");
            }
            let k = stacked.nrows();
            stacked = stacked.resize_vertically(k + level.a.nrows(), 0.0);
            stacked.rows_mut(k, level.a.nrows()).copy_from(&level.a);
        }
    }
}

#[test]
fn lex_lsq_ignores_row_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let n = rng.random_range(3..=6);
        let mut levels: Vec<LexLevel> = (0..3)
            .map(|i| {
                let m = if i == 2 { n } else { rng.random_range(1..n) };
                LexLevel::new(
                    DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)),
                    DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let base = lex_lsq(&levels).unwrap().x;
        for level in &mut levels {
            let s = rng.random_range(0.01..100.0);
            level.a *= s;
            level.b *= s;
        }
        assert!((lex_lsq(&levels).unwrap().x - base).amax() < 1e-8);
    }
}

#[test]
fn constrained_dynamics_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut checked = 0;
    while checked < 50 {
        let (model, state) = random_problem(6, &mut rng);
        let Some(input) = contact_input(&model, &state, 0, &mut rng) else { continue };
        let tau = DVector::from_fn(6, |_, _| rng.random_range(-10.0..10.0));
        let (qdd, f) = contact_response(&input, &tau);
        let c = input.contact.as_ref().unwrap();
        let m = taskdyn::dynamics::crba(&model, &state.q).unwrap();
        let h = taskdyn::dynamics::nonlinear_effects(&model, &state.q, &state.qd).unwrap();
        assert!((m * &qdd + h - c.jacobian.transpose() * &f - &tau).amax() < 1e-9);
        assert!((&c.jacobian * &qdd + &c.bias).amax() < 1e-9);
        checked += 1;
    }
}
