//! Random robots, states and task levels for tests and benchmarks.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use super::MotionLevel;
use crate::kinematics::Kinematics;
use crate::model::{random_state, random_tree, RobotModel, RobotState};

/// Random point task on a random link (dimension `m` ≤ 3) or a random
/// linear combination of joints when `m` > 3.
pub fn random_level(name: &str, model: &RobotModel, kin: &Kinematics, m: usize, rng: &mut impl Rng) -> MotionLevel {
    let n = model.dof();
    let (jacobian, bias) = if m <= 3 {
        // a body moved by enough joints that the point rows can be independent
        let deep: Vec<usize> = (0..model.link_count()).filter(|&l| model.supporting_dofs(l).len() > m).collect();
        let body = if deep.is_empty() { model.link_count() - 1 } else { deep[rng.random_range(0..deep.len())] };
        let point = Vector3::from_fn(|_, _| rng.random_range(-0.3..0.3));
        let rows: Vec<usize> = (0..m).collect();
        let jb = kin.point_bias(body, &point);
        (kin.point_jacobian_rows(model, body, &point, &rows), DVector::from_fn(m, |i, _| jb[i]))
    } else {
        (DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0)), DVector::zeros(m))
    };
    MotionLevel { name: name.into(), jacobian, bias, acc_des: DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0)) }
}

pub fn random_problem(n: usize, rng: &mut impl Rng) -> (RobotModel, RobotState) {
    let model = random_tree(n, rng, true, false);
    let state = random_state(n, rng);
    (model, state)
}
