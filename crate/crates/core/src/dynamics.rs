//! Rigid-body dynamics: RNEA, CRBA and forward dynamics.
//!
//! Equation of motion, with gravity folded into `h`:
//! `M(q) q̈ + h(q, q̇) − Σ Jᵀ w = τ`, where `w` are external wrenches acting
//! on the robot.

use nalgebra::{Cholesky, DMatrix, DVector, Vector3, Vector6};

use crate::error::Error;
use crate::kinematics::Kinematics;
use crate::model::{check_finite, check_len, RobotModel};
use crate::spatial::{Force, Motion, SpatialInertia};

/// External wrench on a link, world frame, `(force, moment about the link origin)`.
pub type LinkWrench = (usize, Vector6<f64>);

/// Wrench produced by a force applied at a world point of `link`.
pub fn point_force_wrench(kin: &Kinematics, link: usize, world_point: &Vector3<f64>, force: &Vector3<f64>) -> LinkWrench {
    let origin = kin.placements[link].translation;
    let moment = (world_point - origin).cross(force);
    (link, Vector6::new(force.x, force.y, force.z, moment.x, moment.y, moment.z))
}

pub(crate) fn world_inertias(model: &RobotModel, kin: &Kinematics) -> Vec<SpatialInertia> {
    model
        .links()
        .iter()
        .zip(&kin.placements)
        .map(|(l, pl)| {
            let com = pl.transform_point(&l.com);
            let rot = pl.rotation * l.inertia * pl.rotation.transpose();
            SpatialInertia::from_body(l.mass, &com, &rot)
        })
        .collect()
}

fn check_wrenches(model: &RobotModel, wrenches: &[LinkWrench]) -> Result<(), Error> {
    for (link, w) in wrenches {
        model.check_link(*link)?;
        check_finite("external wrench", w.iter())?;
    }
    Ok(())
}

/// Recursive Newton–Euler inverse dynamics, τ = M q̈ + h − Σ Jᵀ w.
pub fn rnea(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    wrenches: &[LinkWrench],
) -> Result<DVector<f64>, Error> {
    let n = model.dof();
    check_len("qdd", qdd, n)?;
    check_finite("qdd", qdd.iter())?;
    check_wrenches(model, wrenches)?;
    let kin = Kinematics::new(model, q, Some(qd))?;
    Ok(rnea_with(model, &kin, qd, qdd, wrenches))
}

/// RNEA on precomputed kinematics (placements and velocities for `qd`).
pub fn rnea_with(
    model: &RobotModel,
    kin: &Kinematics,
    qd: &DVector<f64>,
    qdd: &DVector<f64>,
    wrenches: &[LinkWrench],
) -> DVector<f64> {
    let nl = model.link_count();
    let gravity_acc = Motion::new(Vector3::zeros(), -model.gravity);
    let mut acc: Vec<Motion> = Vec::with_capacity(nl);
    let mut force: Vec<Force> = Vec::with_capacity(nl);
    for (i, (link, pl)) in model.links().iter().zip(&kin.placements).enumerate() {
        let s = &kin.subspace[i];
        let (qdi, qddi) = model.dof_of_link(i).map_or((0.0, 0.0), |d| (qd[d], qdd[d]));
        let a_parent = model.joint(i).parent.map_or(gravity_acc, |p| acc[p]);
        let v = kin.velocity[i];
        let a = a_parent + *s * qddi + v.cross_motion(&(*s * qdi));
        let com = pl.transform_point(&link.com);
        let rot = pl.rotation * link.inertia * pl.rotation.transpose();
        let inertia = SpatialInertia::from_body(link.mass, &com, &rot);
        acc.push(a);
        force.push(inertia.apply(&a) + v.cross_force(&inertia.apply(&v)));
    }
    for (link, w) in wrenches {
        let origin = kin.placements[*link].translation;
        let f = Vector3::new(w[0], w[1], w[2]);
        let m = Vector3::new(w[3], w[4], w[5]);
        force[*link] -= Force::from_wrench_at(&f, &m, &origin);
    }
    let mut tau = DVector::zeros(model.dof());
    for i in (0..nl).rev() {
        if let Some(d) = model.dof_of_link(i) {
            tau[d] = kin.subspace[i].dot(&force[i]);
        }
        if let Some(p) = model.joint(i).parent {
            let fi = force[i];
            force[p] += fi;
        }
    }
    tau
}

/// Coriolis, centrifugal and gravity terms: h = rnea(q, q̇, 0).
pub fn nonlinear_effects(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<DVector<f64>, Error> {
    rnea(model, q, qd, &DVector::zeros(model.dof()), &[])
}

/// Composite-rigid-body joint-space mass matrix.
pub fn crba(model: &RobotModel, q: &DVector<f64>) -> Result<DMatrix<f64>, Error> {
    let kin = Kinematics::new(model, q, None)?;
    Ok(crba_with(model, &kin))
}

pub fn crba_with(model: &RobotModel, kin: &Kinematics) -> DMatrix<f64> {
    let n = model.dof();
    let mut composite = world_inertias(model, kin);
    for i in (0..model.link_count()).rev() {
        if let Some(p) = model.joint(i).parent {
            let ci = composite[i];
            composite[p] += ci;
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for di in 0..n {
        let li = model.link_of_dof(di);
        let f = composite[li].apply(&kin.subspace[li]);
        for lj in model.supporting_links(li) {
            let dj = model.dof_of_link(lj).expect("dof link");
            let v = kin.subspace[lj].dot(&f);
            m[(dj, di)] = v;
            m[(di, dj)] = v;
        }
    }
    m
}

/// q̈ from M q̈ = τ − h + Σ Jᵀ w, solved by Cholesky.
pub fn forward_dynamics(
    model: &RobotModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    tau: &DVector<f64>,
    wrenches: &[LinkWrench],
) -> Result<DVector<f64>, Error> {
    let n = model.dof();
    check_len("tau", tau, n)?;
    check_finite("tau", tau.iter())?;
    check_wrenches(model, wrenches)?;
    let kin = Kinematics::new(model, q, Some(qd))?;
    let bias = rnea_with(model, &kin, qd, &DVector::zeros(n), wrenches);
    let m = crba_with(model, &kin);
    let chol = Cholesky::new(m).ok_or(Error::SingularMassMatrix)?;
    let qdd = chol.solve(&(tau - bias));
    check_finite("forward dynamics result", qdd.iter()).map_err(|_| Error::SingularMassMatrix)?;
    Ok(qdd)
}

/// Sum of per-link spatial kinetic energies.
pub fn kinetic_energy(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>) -> Result<f64, Error> {
    let kin = Kinematics::new(model, q, Some(qd))?;
    Ok(world_inertias(model, &kin)
        .iter()
        .zip(&kin.velocity)
        .map(|(i, v)| i.kinetic_energy(v))
        .sum())
}

/// Gravitational potential energy relative to the world origin.
pub fn potential_energy(model: &RobotModel, q: &DVector<f64>) -> Result<f64, Error> {
    let kin = Kinematics::new(model, q, None)?;
    Ok(model
        .links()
        .iter()
        .zip(&kin.placements)
        .map(|(l, pl)| -l.mass * model.gravity.dot(&pl.transform_point(&l.com)))
        .sum())
}
