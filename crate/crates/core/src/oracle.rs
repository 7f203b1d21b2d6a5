//! Analytic airborne dynamics of the bicycle-model vehicle.
//!
//! Two effects move the chassis while airborne. Accelerating the wheels
//! produces an equal and opposite reaction torque (inertial effect,
//! proportional to the rpm rate). Steering the spinning front wheel rotates
//! its angular momentum and produces a precession torque (gyroscopic effect,
//! proportional to rpm times steering rate). Neither reaches yaw, which only
//! drifts under noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{integrate, ForwardModel};
use crate::error::{Error, Result};
use crate::types::{
    clamp_action, clamp_state, Action, ActuationLimits, AngularAccel, Trajectory, VehicleState,
};

/// Inertias and disturbance parameters of the analytic model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    /// Front wheel inertia about its spin axis, kg·m².
    pub i_fw: f64,
    /// Rear wheel inertia about its spin axis, kg·m².
    pub i_rw: f64,
    /// Chassis inertia about the roll axis, kg·m².
    pub i_chassis_roll: f64,
    /// Chassis inertia about the pitch axis, kg·m².
    pub i_chassis_pitch: f64,
    /// Standard deviation of the zero-mean yaw acceleration disturbance, rad/s².
    pub yaw_noise_std: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            i_fw: 0.05,
            i_rw: 0.05,
            i_chassis_roll: 0.8,
            i_chassis_pitch: 2.0,
            yaw_noise_std: 0.05,
            gravity: 9.81,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let inertias = [
            ("i_fw", self.i_fw),
            ("i_rw", self.i_rw),
            ("i_chassis_roll", self.i_chassis_roll),
            ("i_chassis_pitch", self.i_chassis_pitch),
        ];
        for (name, v) in inertias {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.yaw_noise_std >= 0.0) || !self.yaw_noise_std.is_finite() {
            return Err(Error::Config(format!(
                "yaw_noise_std must be >= 0, got {}",
                self.yaw_noise_std
            )));
        }
        if !(self.gravity > 0.0) || !self.gravity.is_finite() {
            return Err(Error::Config(format!(
                "gravity must be positive, got {}",
                self.gravity
            )));
        }
        Ok(())
    }

    /// Same parameters with the yaw disturbance switched off.
    pub fn noise_free(mut self) -> Self {
        self.yaw_noise_std = 0.0;
        self
    }
}

/// Reaction of the chassis to wheel acceleration: (roll_acc, pitch_acc).
pub fn inertial_accel(s: &VehicleState, a: &Action, p: &PhysicalParams) -> (f64, f64) {
    let (sin, cos) = s.steer.sin_cos();
    let roll = -p.i_fw * sin * 2.0 * PI / (p.i_chassis_roll * 60.0) * a.rpm_rate;
    // Front and rear torques average about the pitch axis through the centre
    // of gravity, hence π rather than 2π.
    let pitch = -(p.i_fw * cos + p.i_rw) * PI / (p.i_chassis_pitch * 60.0) * a.rpm_rate;
    (roll, pitch)
}

/// Precession of the steered front wheel: (roll_acc, pitch_acc).
pub fn gyroscopic_accel(s: &VehicleState, a: &Action, p: &PhysicalParams) -> (f64, f64) {
    let (sin, cos) = s.steer.sin_cos();
    let roll = cos * p.i_fw * 2.0 * PI / (p.i_chassis_roll * 60.0) * s.rpm * a.steer_rate;
    let pitch = sin * p.i_fw * PI / (p.i_chassis_pitch * 60.0) * s.rpm * a.steer_rate;
    (roll, pitch)
}

/// Combined roll and pitch acceleration plus the yaw disturbance.
///
/// Without an rng the yaw acceleration is exactly zero.
pub fn total_accel<R: Rng + ?Sized>(
    s: &VehicleState,
    a: &Action,
    p: &PhysicalParams,
    rng: Option<&mut R>,
) -> AngularAccel {
    let (ir, ip) = inertial_accel(s, a, p);
    let (gr, gp) = gyroscopic_accel(s, a, p);
    let yaw_acc = match rng {
        Some(rng) if p.yaw_noise_std > 0.0 => {
            let z: f64 = StandardNormal.sample(rng);
            z * p.yaw_noise_std
        }
        _ => 0.0,
    };
    AngularAccel {
        roll_acc: ir + gr,
        pitch_acc: ip + gp,
        yaw_acc,
    }
}

/// One oracle step of `dt` with zero-order hold on the action.
///
/// The state and action are clamped first. Returns the next state and the
/// action that was actually applied.
pub fn step_applied<R: Rng + ?Sized>(
    s: &VehicleState,
    a: &Action,
    dt: f64,
    p: &PhysicalParams,
    limits: &ActuationLimits,
    rng: Option<&mut R>,
) -> Result<(VehicleState, Action)> {
    let s = clamp_state(s, limits);
    let a = clamp_action(a, &s, limits, dt)?;
    let acc = total_accel(&s, &a, p, rng);
    Ok((integrate(&s, &acc, &a, dt, limits), a))
}

pub fn step<R: Rng + ?Sized>(
    s: &VehicleState,
    a: &Action,
    dt: f64,
    p: &PhysicalParams,
    limits: &ActuationLimits,
    rng: Option<&mut R>,
) -> Result<VehicleState> {
    step_applied(s, a, dt, p, limits, rng).map(|(s, _)| s)
}

/// Rolls the oracle through `actions`. With a seed the yaw disturbance is
/// drawn from a ChaCha stream so repeated calls are bitwise identical.
pub fn simulate(
    s0: &VehicleState,
    actions: &[Action],
    dt: f64,
    p: &PhysicalParams,
    limits: &ActuationLimits,
    seed: Option<u64>,
) -> Result<Trajectory> {
    if actions.is_empty() {
        return Err(Error::Argument("simulate needs at least one action".into()));
    }
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let mut traj = Trajectory::new(dt, clamp_state(s0, limits));
    for a in actions {
        let (next, applied) = step_applied(traj.last(), a, dt, p, limits, rng.as_mut())?;
        traj.push(applied, next);
    }
    Ok(traj)
}

/// Time until landing of a ballistic launch.
///
/// Solves `½·g·t² − v·sin(θ)·t − h = 0` for its non-negative root, where `h`
/// is the launch height above the landing point.
pub fn projectile_airtime(
    speed: f64,
    launch_angle: f64,
    height_delta: f64,
    gravity: f64,
) -> Result<f64> {
    if !speed.is_finite() || speed < 0.0 {
        return Err(Error::Argument(format!("speed must be >= 0, got {speed}")));
    }
    if !gravity.is_finite() || gravity <= 0.0 {
        return Err(Error::Argument(format!("gravity must be > 0, got {gravity}")));
    }
    if !launch_angle.is_finite() || !height_delta.is_finite() {
        return Err(Error::Argument("launch angle and height must be finite".into()));
    }
    let vz = speed * launch_angle.sin();
    let disc = vz * vz + 2.0 * gravity * height_delta;
    if disc < 0.0 {
        return Err(Error::InfeasibleTrajectory(format!(
            "landing point {} m above launch is never reached at vertical speed {vz} m/s",
            -height_delta
        )));
    }
    let t = (vz + disc.sqrt()) / gravity;
    if t < 0.0 {
        return Err(Error::InfeasibleTrajectory(format!(
            "no non-negative landing time (root {t} s)"
        )));
    }
    Ok(t)
}

/// The analytic dynamics behind the [`ForwardModel`] interface, noise-free.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleModel {
    pub params: PhysicalParams,
    pub dt: f64,
}

impl OracleModel {
    pub fn new(params: PhysicalParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Config(format!("model dt must be positive, got {dt}")));
        }
        Ok(OracleModel { params, dt })
    }
}

impl ForwardModel for OracleModel {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn accel(&self, s: &VehicleState, a: &Action) -> AngularAccel {
        total_accel::<ChaCha8Rng>(s, a, &self.params, None)
    }
}
