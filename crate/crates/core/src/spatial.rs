//! World-frame spatial vectors.
//!
//! Motion and force vectors are expressed in Plücker coordinates at the world
//! origin, so propagating them along the tree needs no coordinate transforms:
//! a body velocity is the sum of its ancestors' joint contributions.

use nalgebra::{Matrix3, Vector3};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Spatial motion vector: angular part and the velocity of the body-fixed
/// point currently at the world origin.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Motion {
    pub ang: Vector3<f64>,
    pub lin: Vector3<f64>,
}

/// Spatial force vector: moment about the world origin and resultant force.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Force {
    pub ang: Vector3<f64>,
    pub lin: Vector3<f64>,
}

impl Motion {
    pub const fn new(ang: Vector3<f64>, lin: Vector3<f64>) -> Self {
        Self { ang, lin }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Motion cross product `self ×ₘ other`.
    pub fn cross_motion(&self, other: &Motion) -> Motion {
        Motion {
            ang: self.ang.cross(&other.ang),
            lin: self.ang.cross(&other.lin) + self.lin.cross(&other.ang),
        }
    }

    /// Force cross product `self ×* f`.
    pub fn cross_force(&self, f: &Force) -> Force {
        Force {
            ang: self.ang.cross(&f.ang) + self.lin.cross(&f.lin),
            lin: self.ang.cross(&f.lin),
        }
    }

    /// Power pairing with a force vector.
    pub fn dot(&self, f: &Force) -> f64 {
        self.ang.dot(&f.ang) + self.lin.dot(&f.lin)
    }

    /// Linear velocity of the body-fixed point at world position `p`.
    pub fn point_velocity(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.lin + self.ang.cross(p)
    }
}

impl Force {
    pub fn zero() -> Self {
        Self::default()
    }

    /// Spatial force of a wrench given as (force, moment about `p`).
    pub fn from_wrench_at(force: &Vector3<f64>, moment: &Vector3<f64>, p: &Vector3<f64>) -> Self {
        Force {
            ang: moment + p.cross(force),
            lin: *force,
        }
    }
}

macro_rules! impl_linear_ops {
    ($t:ty) => {
        impl Add for $t {
            type Output = $t;
            fn add(self, o: $t) -> $t {
                Self { ang: self.ang + o.ang, lin: self.lin + o.lin }
            }
        }
        impl Sub for $t {
            type Output = $t;
            fn sub(self, o: $t) -> $t {
                Self { ang: self.ang - o.ang, lin: self.lin - o.lin }
            }
        }
        impl AddAssign for $t {
            fn add_assign(&mut self, o: $t) {
                self.ang += o.ang;
                self.lin += o.lin;
            }
        }
        impl SubAssign for $t {
            fn sub_assign(&mut self, o: $t) {
                self.ang -= o.ang;
                self.lin -= o.lin;
            }
        }
        impl Neg for $t {
            type Output = $t;
            fn neg(self) -> $t {
                Self { ang: -self.ang, lin: -self.lin }
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, s: f64) -> $t {
                Self { ang: self.ang * s, lin: self.lin * s }
            }
        }
    };
}

impl_linear_ops!(Motion);
impl_linear_ops!(Force);

/// Rigid-body inertia about the world origin, stored in additive form:
/// mass, first moment `m·c`, and rotational inertia about the origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    pub first_moment: Vector3<f64>,
    pub rot: Matrix3<f64>,
}

impl SpatialInertia {
    pub fn zero() -> Self {
        Self {
            mass: 0.0,
            first_moment: Vector3::zeros(),
            rot: Matrix3::zeros(),
        }
    }

    /// Inertia of a body with mass `mass`, centre of mass `com` and
    /// rotational inertia `inertia_com` about the com (all in world frame).
    pub fn from_body(mass: f64, com: &Vector3<f64>, inertia_com: &Matrix3<f64>) -> Self {
        let cx = com.cross_matrix();
        Self {
            mass,
            first_moment: com * mass,
            rot: inertia_com - cx * cx * mass,
        }
    }

    pub fn apply(&self, v: &Motion) -> Force {
        Force {
            ang: self.rot * v.ang + self.first_moment.cross(&v.lin),
            lin: v.lin * self.mass - self.first_moment.cross(&v.ang),
        }
    }

    pub fn kinetic_energy(&self, v: &Motion) -> f64 {
        0.5 * v.dot(&self.apply(v))
    }
}

impl Add for SpatialInertia {
    type Output = SpatialInertia;
    fn add(self, o: SpatialInertia) -> SpatialInertia {
        SpatialInertia {
            mass: self.mass + o.mass,
            first_moment: self.first_moment + o.first_moment,
            rot: self.rot + o.rot,
        }
    }
}

impl AddAssign for SpatialInertia {
    fn add_assign(&mut self, o: SpatialInertia) {
        self.mass += o.mass;
        self.first_moment += o.first_moment;
        self.rot += o.rot;
    }
}
