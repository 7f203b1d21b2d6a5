//! In-air attitude control for ground vehicles.
//!
//! While airborne a car can only reorient itself through its wheels:
//! accelerating them pitches (and, when steered, rolls) the chassis, and
//! steering the spinning front wheel precesses it. This crate provides
//!
//! - an analytic model of those effects ([`oracle`]),
//! - a hybrid model that learns the angular accelerations with a small MLP and
//!   integrates them analytically ([`phli`], trained by [`training`]),
//! - a fixed-horizon sampling planner that lands at the goal attitude exactly
//!   when the airtime runs out ([`planner`]),
//! - a PID baseline ([`pid`]) and a scenario harness comparing both ([`scenario`]).

pub mod config;
pub mod dynamics;
pub mod error;
pub mod io;
mod kernels;
pub mod oracle;
pub mod phli;
pub mod pid;
pub mod planner;
pub mod scenario;
pub mod seeding;
pub mod training;
pub mod types;

pub use dynamics::ForwardModel;
pub use error::{Error, Result};
pub use kernels::act_tanh;
pub use oracle::{OracleModel, PhysicalParams};
pub use phli::PhliModel;
pub use types::{
    clamp_action, clamp_state, goal_residual, wrap_angle, Action, ActuationLimits, AngularAccel,
    GoalState, Trajectory, VehicleState,
};
