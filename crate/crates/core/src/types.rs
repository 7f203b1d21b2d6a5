//! State and action data model, actuation limits, angle wrapping and clamping.

use std::f64::consts::{PI, TAU};
use std::ops::Deref;

use crate::error::{Error, Result};

/// Number of state dimensions.
pub const STATE_DIM: usize = 8;

/// Column names of a state, in canonical order.
pub const STATE_COLUMNS: [&str; STATE_DIM] = [
    "roll",
    "roll_rate",
    "pitch",
    "pitch_rate",
    "yaw",
    "yaw_rate",
    "rpm",
    "steer",
];

/// Indices of the angle components inside the state array.
pub const ANGLE_INDICES: [usize; 3] = [0, 2, 4];

/// In-air vehicle state: attitude, attitude rates, wheel speed and steering.
///
/// Angles are radians wrapped to (-π, π], rates are rad/s, `rpm` is wheel
/// revolutions per minute and `steer` is the front steering angle in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VehicleState {
    pub roll: f64,
    pub roll_rate: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub rpm: f64,
    pub steer: f64,
}

impl VehicleState {
    /// Builds a state from its canonical 8-vector, rejecting non-finite
    /// entries and wrapping the angles.
    pub fn from_array(v: [f64; STATE_DIM]) -> Result<Self> {
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "state component {} is not finite ({})",
                STATE_COLUMNS[i], v[i]
            )));
        }
        Ok(Self::from_array_unchecked(v).wrapped())
    }

    pub(crate) fn from_array_unchecked(v: [f64; STATE_DIM]) -> Self {
        VehicleState {
            roll: v[0],
            roll_rate: v[1],
            pitch: v[2],
            pitch_rate: v[3],
            yaw: v[4],
            yaw_rate: v[5],
            rpm: v[6],
            steer: v[7],
        }
    }

    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.roll,
            self.roll_rate,
            self.pitch,
            self.pitch_rate,
            self.yaw,
            self.yaw_rate,
            self.rpm,
            self.steer,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|x| x.is_finite())
    }

    /// Copy with roll, pitch and yaw wrapped to (-π, π].
    pub fn wrapped(mut self) -> Self {
        self.roll = wrap(self.roll);
        self.pitch = wrap(self.pitch);
        self.yaw = wrap(self.yaw);
        self
    }
}

/// Control input: wheel rpm rate (rpm/s) and steering rate (rad/s).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Action {
    pub rpm_rate: f64,
    pub steer_rate: f64,
}

impl Action {
    pub const ZERO: Action = Action {
        rpm_rate: 0.0,
        steer_rate: 0.0,
    };

    pub fn new(rpm_rate: f64, steer_rate: f64) -> Self {
        Action {
            rpm_rate,
            steer_rate,
        }
    }
}

/// Angular accelerations of roll, pitch and yaw in rad/s².
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AngularAccel {
    pub roll_acc: f64,
    pub pitch_acc: f64,
    pub yaw_acc: f64,
}

impl AngularAccel {
    pub fn new(roll_acc: f64, pitch_acc: f64, yaw_acc: f64) -> Self {
        AngularAccel {
            roll_acc,
            pitch_acc,
            yaw_acc,
        }
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.roll_acc, self.pitch_acc, self.yaw_acc]
    }
}

/// Target state that should hold exactly at landing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GoalState(pub VehicleState);

impl GoalState {
    pub fn from_array(v: [f64; STATE_DIM]) -> Result<Self> {
        VehicleState::from_array(v).map(GoalState)
    }
}

impl Deref for GoalState {
    type Target = VehicleState;

    fn deref(&self) -> &VehicleState {
        &self.0
    }
}

impl From<VehicleState> for GoalState {
    fn from(s: VehicleState) -> Self {
        GoalState(s.wrapped())
    }
}

/// Position and rate limits of the two actuated channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuationLimits {
    pub rpm_min: f64,
    pub rpm_max: f64,
    pub rpm_rate_min: f64,
    pub rpm_rate_max: f64,
    pub steer_min: f64,
    pub steer_max: f64,
    pub steer_rate_min: f64,
    pub steer_rate_max: f64,
}

impl Default for ActuationLimits {
    /// Limits of the 1/5-scale buggy: forward-only wheels up to 1980 rpm,
    /// ±5000 rpm/s, ±0.65 rad steering at up to ±6.5 rad/s.
    fn default() -> Self {
        ActuationLimits {
            rpm_min: 0.0,
            rpm_max: 1980.0,
            rpm_rate_min: -5000.0,
            rpm_rate_max: 5000.0,
            steer_min: -0.65,
            steer_max: 0.65,
            steer_rate_min: -6.5,
            steer_rate_max: 6.5,
        }
    }
}

impl ActuationLimits {
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("rpm", self.rpm_min, self.rpm_max),
            ("rpm_rate", self.rpm_rate_min, self.rpm_rate_max),
            ("steer", self.steer_min, self.steer_max),
            ("steer_rate", self.steer_rate_min, self.steer_rate_max),
        ];
        for (name, lo, hi) in pairs {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("{name} limits must be finite")));
            }
            if lo > hi {
                return Err(Error::Config(format!(
                    "{name}_min ({lo}) exceeds {name}_max ({hi})"
                )));
            }
        }
        if self.rpm_min < 0.0 {
            return Err(Error::Config(format!(
                "rpm_min must be >= 0 (wheels only spin forward), got {}",
                self.rpm_min
            )));
        }
        Ok(())
    }

    /// Clips an action to the global rate limits only.
    pub fn clip_rates(&self, a: Action) -> Action {
        Action {
            rpm_rate: a.rpm_rate.clamp(self.rpm_rate_min, self.rpm_rate_max),
            steer_rate: a.steer_rate.clamp(self.steer_rate_min, self.steer_rate_max),
        }
    }
}

/// Sequence of states at a fixed interval plus the actions applied between them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<VehicleState>,
    /// `actions[k]` was applied from `states[k]` to `states[k + 1]`.
    pub actions: Vec<Action>,
}

impl Trajectory {
    pub fn new(dt: f64, s0: VehicleState) -> Self {
        Trajectory {
            dt,
            states: vec![s0],
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, action: Action, next: VehicleState) {
        self.actions.push(action);
        self.states.push(next);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &VehicleState {
        self.states.last().expect("trajectory holds at least one state")
    }
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::Domain(format!("cannot wrap non-finite angle {a}")));
    }
    Ok(wrap(a))
}

/// Infallible wrap for values already known to be finite.
#[inline]
pub(crate) fn wrap(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r += TAU;
    }
    if r > PI {
        r -= TAU;
    }
    r
}

/// Projects rpm and steer into their position limits and wraps the angles.
pub fn clamp_state(s: &VehicleState, limits: &ActuationLimits) -> VehicleState {
    let mut out = s.wrapped();
    out.rpm = s.rpm.clamp(limits.rpm_min, limits.rpm_max);
    out.steer = s.steer.clamp(limits.steer_min, limits.steer_max);
    out
}

/// Restricts an action to the rate limits intersected with the band that
/// keeps rpm and steer inside their position limits after one step of `dt`.
///
/// At `rpm_max` the rpm rate cannot be positive, at `rpm_min` it cannot be
/// negative; likewise for steering.
pub fn clamp_action(
    a: &Action,
    s: &VehicleState,
    limits: &ActuationLimits,
    dt: f64,
) -> Result<Action> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!(
            "clamp interval dt must be positive and finite, got {dt}"
        )));
    }
    Ok(clamp_action_unchecked(a, s, limits, dt))
}

#[inline]
pub(crate) fn clamp_action_unchecked(
    a: &Action,
    s: &VehicleState,
    limits: &ActuationLimits,
    dt: f64,
) -> Action {
    let rates = limits.clip_rates(*a);
    // Position limits win over rate limits if the two bands are disjoint.
    let rpm_rate = rates.rpm_rate.min((limits.rpm_max - s.rpm) / dt);
    let rpm_rate = rpm_rate.max((limits.rpm_min - s.rpm) / dt);
    let steer_rate = rates.steer_rate.min((limits.steer_max - s.steer) / dt);
    let steer_rate = steer_rate.max((limits.steer_min - s.steer) / dt);
    Action {
        rpm_rate,
        steer_rate,
    }
}

/// Per-dimension residual `s - g`, using the shortest arc for angles.
pub fn goal_residual(s: &VehicleState, g: &GoalState) -> [f64; STATE_DIM] {
    let a = s.to_array();
    let b = g.to_array();
    let mut r = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        r[i] = a[i] - b[i];
    }
    for i in ANGLE_INDICES {
        r[i] = wrap(r[i]);
    }
    r
}

/// Euclidean norm of the wrapped roll and pitch residuals.
pub fn attitude_error(s: &VehicleState, roll: f64, pitch: f64) -> f64 {
    let dr = wrap(s.roll - roll);
    let dp = wrap(s.pitch - pitch);
    dr.hypot(dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(rpm: f64, steer: f64) -> VehicleState {
        VehicleState {
            rpm,
            steer,
            ..Default::default()
        }
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(1.5 * PI).unwrap() + 0.5 * PI).abs() < 1e-15);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
        assert!(matches!(wrap_angle(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(wrap_angle(f64::INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn clamp_state_examples() {
        let l = ActuationLimits::default();
        assert_eq!(clamp_state(&state(2500.0, 0.0), &l).rpm, 1980.0);
        assert_eq!(clamp_state(&state(1000.0, 0.3), &l).steer, 0.3);
        assert_eq!(clamp_state(&state(1000.0, -0.9), &l).steer, -0.65);
    }

    #[test]
    fn clamp_action_examples() {
        let l = ActuationLimits::default();
        let a = clamp_action(&Action::new(3000.0, 0.0), &state(1980.0, 0.0), &l, 0.2).unwrap();
        assert_eq!(a.rpm_rate, 0.0);
        let a = clamp_action(&Action::new(0.0, -2.0), &state(1000.0, -0.65), &l, 0.2).unwrap();
        assert_eq!(a.steer_rate, 0.0);
        // min(5000, (1980 - 1000) / 0.2)
        let a = clamp_action(&Action::new(6000.0, 0.0), &state(1000.0, 0.0), &l, 0.2).unwrap();
        assert!((a.rpm_rate - 4900.0).abs() < 1e-9);
        assert!(matches!(
            clamp_action(&Action::ZERO, &state(0.0, 0.0), &l, 0.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn residual_examples() {
        let s = VehicleState {
            roll: 3.0,
            rpm: 1500.0,
            ..Default::default()
        };
        let g = GoalState(VehicleState {
            roll: -3.0,
            rpm: 1000.0,
            ..Default::default()
        });
        let r = goal_residual(&s, &g);
        assert!((r[0] - (6.0 - TAU)).abs() < 1e-12);
        assert!((r[0] + 0.2832).abs() < 1e-4);
        assert_eq!(r[6], 500.0);
        assert_eq!(goal_residual(&s, &GoalState(s)), [0.0; STATE_DIM]);
    }

    #[test]
    fn nonfinite_state_rejected() {
        let mut v = [0.0; STATE_DIM];
        v[3] = f64::NAN;
        assert!(VehicleState::from_array(v).is_err());
    }

    #[test]
    fn limits_validation() {
        let mut l = ActuationLimits::default();
        assert!(l.validate().is_ok());
        l.rpm_min = -1.0;
        assert!(l.validate().is_err());
        let mut l = ActuationLimits::default();
        l.steer_min = 1.0;
        assert!(l.validate().is_err());
    }

    fn arb_state() -> impl Strategy<Value = VehicleState> {
        (
            -10.0..10.0f64,
            -5.0..5.0f64,
            -10.0..10.0f64,
            -5.0..5.0f64,
            -10.0..10.0f64,
            -3000.0..4000.0f64,
            -1.5..1.5f64,
        )
            .prop_map(|(roll, rr, pitch, pr, yaw, rpm, steer)| VehicleState {
                roll,
                roll_rate: rr,
                pitch,
                pitch_rate: pr,
                yaw,
                yaw_rate: 0.1,
                rpm,
                steer,
            })
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_congruent(a in -1e6..1e6f64) {
            let w = wrap_angle(a).unwrap();
            prop_assert!(w > -PI && w <= PI);
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            let k = ((a - w) / TAU).round();
            prop_assert!((a - w - k * TAU).abs() < 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn clamp_state_is_projection(s in arb_state()) {
            let l = ActuationLimits::default();
            let c = clamp_state(&s, &l);
            prop_assert_eq!(clamp_state(&c, &l), c);
            prop_assert!(c.rpm >= l.rpm_min && c.rpm <= l.rpm_max);
            prop_assert!(c.steer >= l.steer_min && c.steer <= l.steer_max);
            prop_assert_eq!(c.roll_rate, s.roll_rate);
        }

        #[test]
        fn clamped_action_keeps_positions_in_limits(
            s in arb_state(), rr in -2e4..2e4f64, sr in -20.0..20.0f64, dt in 1e-3..1.0f64,
        ) {
            let l = ActuationLimits::default();
            let s = clamp_state(&s, &l);
            let a = clamp_action(&Action::new(rr, sr), &s, &l, dt).unwrap();
            prop_assert!(a.rpm_rate >= l.rpm_rate_min && a.rpm_rate <= l.rpm_rate_max);
            prop_assert!(a.steer_rate >= l.steer_rate_min && a.steer_rate <= l.steer_rate_max);
            let rpm = s.rpm + a.rpm_rate * dt;
            let steer = s.steer + a.steer_rate * dt;
            prop_assert!(rpm >= l.rpm_min - 1e-9 && rpm <= l.rpm_max + 1e-9);
            prop_assert!(steer >= l.steer_min - 1e-12 && steer <= l.steer_max + 1e-12);
        }

        #[test]
        fn residual_with_self_is_zero(s in arb_state()) {
            let s = s.wrapped();
            prop_assert_eq!(goal_residual(&s, &GoalState(s)), [0.0; STATE_DIM]);
        }
    }
}
