//! Shared constant-acceleration integrator and the model-agnostic forward
//! model interface used by the planner.

use crate::types::{
    clamp_action_unchecked, clamp_state, wrap, Action, ActuationLimits, AngularAccel,
    VehicleState,
};

/// Advances `s` by `dt` holding `acc` and the (already clamped) action constant.
///
/// Angles follow `x + ẋ·dt + ½·ẍ·dt²`, rates `ẋ + ẍ·dt`, and rpm and steer move
/// linearly with their commanded rates. The result is clamped and wrapped.
#[inline]
pub fn integrate(
    s: &VehicleState,
    acc: &AngularAccel,
    a: &Action,
    dt: f64,
    limits: &ActuationLimits,
) -> VehicleState {
    let half_dt2 = 0.5 * dt * dt;
    let next = VehicleState {
        roll: wrap(s.roll + s.roll_rate * dt + acc.roll_acc * half_dt2),
        roll_rate: s.roll_rate + acc.roll_acc * dt,
        pitch: wrap(s.pitch + s.pitch_rate * dt + acc.pitch_acc * half_dt2),
        pitch_rate: s.pitch_rate + acc.pitch_acc * dt,
        yaw: wrap(s.yaw + s.yaw_rate * dt + acc.yaw_acc * half_dt2),
        yaw_rate: s.yaw_rate + acc.yaw_acc * dt,
        rpm: s.rpm + a.rpm_rate * dt,
        steer: s.steer + a.steer_rate * dt,
    };
    clamp_state(&next, limits)
}

/// A discrete forward kinodynamic model `s_{t+1} = f(s_t, a_t)`.
///
/// Implementors supply angular accelerations; clamping and integration are
/// shared so every model obeys the same actuation limits.
pub trait ForwardModel: Sync {
    /// Integration interval of one model step.
    fn dt(&self) -> f64;

    /// Angular accelerations for an already clamped state and action.
    fn accel(&self, s: &VehicleState, a: &Action) -> AngularAccel;

    /// Batched [`ForwardModel::accel`]. Must produce bitwise the same values
    /// as calling `accel` element by element.
    fn accel_batch(&self, states: &[VehicleState], actions: &[Action], out: &mut [AngularAccel]) {
        for ((s, a), o) in states.iter().zip(actions).zip(out.iter_mut()) {
            *o = self.accel(s, a);
        }
    }

    /// One model step. Returns the next state and the applied action.
    fn step_applied(
        &self,
        s: &VehicleState,
        a: &Action,
        limits: &ActuationLimits,
    ) -> (VehicleState, Action) {
        let dt = self.dt();
        let s = clamp_state(s, limits);
        let a = clamp_action_unchecked(a, &s, limits, dt);
        let acc = self.accel(&s, &a);
        (integrate(&s, &acc, &a, dt, limits), a)
    }

    fn step(&self, s: &VehicleState, a: &Action, limits: &ActuationLimits) -> VehicleState {
        self.step_applied(s, a, limits).0
    }
}

impl<M: ForwardModel + ?Sized> ForwardModel for &M {
    fn dt(&self) -> f64 {
        (**self).dt()
    }

    fn accel(&self, s: &VehicleState, a: &Action) -> AngularAccel {
        (**self).accel(s, a)
    }

    fn accel_batch(&self, states: &[VehicleState], actions: &[Action], out: &mut [AngularAccel]) {
        (**self).accel_batch(states, actions, out)
    }
}

impl<M: ForwardModel + ?Sized + Send> ForwardModel for Box<M> {
    fn dt(&self) -> f64 {
        (**self).dt()
    }

    fn accel(&self, s: &VehicleState, a: &Action) -> AngularAccel {
        (**self).accel(s, a)
    }

    fn accel_batch(&self, states: &[VehicleState], actions: &[Action], out: &mut [AngularAccel]) {
        (**self).accel_batch(states, actions, out)
    }
}
