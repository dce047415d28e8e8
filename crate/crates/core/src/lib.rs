//! Prioritized motion/force control workbench.
//!
//! * [`model`] and [`kinematics`]: kinematic-tree robots, Jacobians, bias terms.
//! * [`dynamics`]: RNEA, CRBA and forward dynamics.
//! * [`numlin`]: damped and weighted pseudoinverses, null-space projectors.
//! * [`tasks`]: task definitions, PD references, minimum-jerk references, RMSE.
//! * [`controllers`]: the UF, WBCF and TSID prioritized torque controllers.
//! * [`oracle`]: independent solvers used as ground truth in tests.
//! * [`sim`]: spring-damper contacts, integration and scenario execution.

pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod model;
pub mod numlin;
pub mod oracle;
pub mod sim;
pub mod spatial;
pub mod tasks;

pub use error::{Error, ParseError};
pub use model::{RobotModel, RobotState};
