//! Forward kinematics, world-frame Jacobians and Jacobian bias terms.
//!
//! Point Jacobians are 3×n; frame Jacobians are 6×n with the linear rows
//! first. Everything is expressed in the world frame.

use nalgebra::{DMatrix, DVector, Vector3, Vector6};

use crate::error::Error;
use crate::model::{check_finite, check_len, FramePlacement, JointKind, RobotModel};
use crate::spatial::Motion;

/// Per-link kinematic quantities for one configuration (and optionally one
/// velocity). Built in a single O(n) pass and then queried per task.
#[derive(Clone, Debug)]
pub struct Kinematics {
    pub placements: Vec<FramePlacement>,
    /// World-frame motion subspace of each link's joint (zero for fixed).
    pub subspace: Vec<Motion>,
    /// Spatial velocity of each link.
    pub velocity: Vec<Motion>,
    /// Spatial acceleration of each link at zero joint acceleration and zero
    /// gravity.
    pub bias_acc: Vec<Motion>,
}

impl Kinematics {
    pub fn new(model: &RobotModel, q: &DVector<f64>, qd: Option<&DVector<f64>>) -> Result<Self, Error> {
        check_len("q", q, model.dof())?;
        check_finite("q", q.iter())?;
        if let Some(qd) = qd {
            check_len("qd", qd, model.dof())?;
            check_finite("qd", qd.iter())?;
        }
        let nl = model.link_count();
        let mut placements = Vec::with_capacity(nl);
        let mut subspace = Vec::with_capacity(nl);
        let mut velocity = Vec::with_capacity(nl);
        let mut bias_acc = Vec::with_capacity(nl);
        for (i, joint) in model.joints().iter().enumerate() {
            let parent_pl = joint.parent.map_or_else(FramePlacement::identity, |p| placements[p]);
            let joint_frame = parent_pl.compose(&joint.origin);
            let axis = joint_frame.transform_vector(&joint.axis);
            let qi = model.dof_of_link(i).map_or(0.0, |d| q[d]);
            let (placement, s) = match joint.kind {
                JointKind::Revolute => {
                    let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(joint.axis), qi);
                    let pl = FramePlacement {
                        rotation: joint_frame.rotation * rot.matrix(),
                        translation: joint_frame.translation,
                    };
                    (pl, Motion::new(axis, joint_frame.translation.cross(&axis)))
                }
                JointKind::Prismatic => {
                    let pl = FramePlacement {
                        rotation: joint_frame.rotation,
                        translation: joint_frame.translation + axis * qi,
                    };
                    (pl, Motion::new(Vector3::zeros(), axis))
                }
                JointKind::Fixed => (joint_frame, Motion::zero()),
            };
            placements.push(placement);
            subspace.push(s);

            let (v_parent, a_parent) = joint
                .parent
                .map_or((Motion::zero(), Motion::zero()), |p| (velocity[p], bias_acc[p]));
            let qdi = match (qd, model.dof_of_link(i)) {
                (Some(qd), Some(d)) => qd[d],
                _ => 0.0,
            };
            let vj = s * qdi;
            let v = v_parent + vj;
            velocity.push(v);
            bias_acc.push(a_parent + v.cross_motion(&vj));
        }
        Ok(Self { placements, subspace, velocity, bias_acc })
    }

    pub fn world_point(&self, body: usize, point: &Vector3<f64>) -> Vector3<f64> {
        self.placements[body].transform_point(point)
    }

    pub fn point_velocity(&self, body: usize, point: &Vector3<f64>) -> Vector3<f64> {
        self.velocity[body].point_velocity(&self.world_point(body, point))
    }

    /// 3×n Jacobian of a body-fixed point (given in link coordinates).
    pub fn point_jacobian(&self, model: &RobotModel, body: usize, point: &Vector3<f64>) -> DMatrix<f64> {
        let p = self.world_point(body, point);
        let mut j = DMatrix::zeros(3, model.dof());
        for link in model.supporting_links(body) {
            let d = model.dof_of_link(link).expect("dof link");
            let col = self.subspace[link].point_velocity(&p);
            j.fixed_view_mut::<3, 1>(0, d).copy_from(&col);
        }
        j
    }

    /// Selected rows of a point Jacobian, written into a fresh `rows.len()×n` matrix.
    pub fn point_jacobian_rows(&self, model: &RobotModel, body: usize, point: &Vector3<f64>, rows: &[usize]) -> DMatrix<f64> {
        let p = self.world_point(body, point);
        let mut j = DMatrix::zeros(rows.len(), model.dof());
        for link in model.supporting_links(body) {
            let d = model.dof_of_link(link).expect("dof link");
            let col = self.subspace[link].point_velocity(&p);
            for (r, &axis) in rows.iter().enumerate() {
                j[(r, d)] = col[axis];
            }
        }
        j
    }

    /// 6×n Jacobian of the link frame, linear rows (link origin) first.
    pub fn frame_jacobian(&self, model: &RobotModel, body: usize) -> DMatrix<f64> {
        let p = self.placements[body].translation;
        let mut j = DMatrix::zeros(6, model.dof());
        for link in model.supporting_links(body) {
            let d = model.dof_of_link(link).expect("dof link");
            let s = &self.subspace[link];
            j.fixed_view_mut::<3, 1>(0, d).copy_from(&s.point_velocity(&p));
            j.fixed_view_mut::<3, 1>(3, d).copy_from(&s.ang);
        }
        j
    }

    /// J̇·q̇ for a body-fixed point: its classical acceleration when q̈ = 0.
    pub fn point_bias(&self, body: usize, point: &Vector3<f64>) -> Vector3<f64> {
        let p = self.world_point(body, point);
        let v = &self.velocity[body];
        let a = &self.bias_acc[body];
        a.lin + a.ang.cross(&p) + v.ang.cross(&v.point_velocity(&p))
    }

    /// J̇·q̇ for the link frame: (linear acceleration of the origin, angular acceleration).
    pub fn frame_bias(&self, body: usize) -> Vector6<f64> {
        let lin = self.point_bias(body, &Vector3::zeros());
        let ang = self.bias_acc[body].ang;
        Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
    }
}

/// World placement of every link frame.
pub fn forward_kinematics(model: &RobotModel, q: &DVector<f64>) -> Result<Vec<FramePlacement>, Error> {
    Ok(Kinematics::new(model, q, None)?.placements)
}

pub fn point_jacobian(model: &RobotModel, q: &DVector<f64>, body: usize, point: &Vector3<f64>) -> Result<DMatrix<f64>, Error> {
    model.check_link(body)?;
    Ok(Kinematics::new(model, q, None)?.point_jacobian(model, body, point))
}

pub fn frame_jacobian(model: &RobotModel, q: &DVector<f64>, body: usize) -> Result<DMatrix<f64>, Error> {
    model.check_link(body)?;
    Ok(Kinematics::new(model, q, None)?.frame_jacobian(model, body))
}

/// J̇(q, q̇)·q̇ for a body-fixed point.
pub fn jdot_qdot(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>, body: usize, point: &Vector3<f64>) -> Result<Vector3<f64>, Error> {
    model.check_link(body)?;
    Ok(Kinematics::new(model, q, Some(qd))?.point_bias(body, point))
}

/// J̇(q, q̇)·q̇ for a link frame, linear part first.
pub fn frame_jdot_qdot(model: &RobotModel, q: &DVector<f64>, qd: &DVector<f64>, body: usize) -> Result<Vector6<f64>, Error> {
    model.check_link(body)?;
    Ok(Kinematics::new(model, q, Some(qd))?.frame_bias(body))
}
