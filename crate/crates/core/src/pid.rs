//! Baseline controller: two independent PID loops, pitch error to rpm rate
//! and roll error to steering rate, with the same action clamping as the
//! planner.

use crate::error::{Error, Result};
use crate::types::{clamp_action, wrap, Action, ActuationLimits, GoalState, VehicleState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
}

impl LoopGains {
    pub fn validate(&self, name: &str) -> Result<()> {
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(Error::Config(format!("{name} gains must be finite")));
        }
        if !(self.integral_limit > 0.0) || !self.integral_limit.is_finite() {
            return Err(Error::Config(format!(
                "{name} integral_limit must be positive, got {}",
                self.integral_limit
            )));
        }
        Ok(())
    }
}

/// Gains carry their sign: more rpm pitches the body down, so the tuned
/// pitch gains are negative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PidGains {
    /// Pitch error to rpm rate.
    pub pitch: LoopGains,
    /// Roll error to steering rate.
    pub roll: LoopGains,
}

impl Default for PidGains {
    /// Result of the grid search in `tests/pid_tuning.rs` on the default
    /// trajectory-tracking scenario.
    fn default() -> Self {
        PidGains {
            pitch: LoopGains {
                kp: -500.0,
                ki: 0.0,
                kd: -100.0,
                integral_limit: 1.0,
            },
            roll: LoopGains {
                kp: 20.0,
                ki: 0.0,
                kd: 2.0,
                integral_limit: 1.0,
            },
        }
    }
}

impl PidGains {
    pub fn validate(&self) -> Result<()> {
        self.pitch.validate("pid pitch")?;
        self.roll.validate("pid roll")
    }
}

/// Integrator memory of both loops.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PidState {
    pub pitch_integral: f64,
    pub roll_integral: f64,
}

/// Unclamped loop outputs and the updated integrator state.
///
/// The error is `wrap(goal - state)`; its derivative is taken from the goal
/// and measured angular rates rather than by differencing.
pub fn pid_command(
    gains: &PidGains,
    s: &VehicleState,
    g: &GoalState,
    dt_control: f64,
    state: &PidState,
) -> (Action, PidState) {
    let e_pitch = wrap(g.pitch - s.pitch);
    let e_roll = wrap(g.roll - s.roll);
    let de_pitch = g.pitch_rate - s.pitch_rate;
    let de_roll = g.roll_rate - s.roll_rate;
    let lim_p = gains.pitch.integral_limit;
    let lim_r = gains.roll.integral_limit;
    let next = PidState {
        pitch_integral: (state.pitch_integral + e_pitch * dt_control).clamp(-lim_p, lim_p),
        roll_integral: (state.roll_integral + e_roll * dt_control).clamp(-lim_r, lim_r),
    };
    let out = |l: &LoopGains, e: f64, i: f64, d: f64| l.kp * e + l.ki * i + l.kd * d;
    let action = Action::new(
        out(&gains.pitch, e_pitch, next.pitch_integral, de_pitch),
        out(&gains.roll, e_roll, next.roll_integral, de_roll),
    );
    (action, next)
}

/// One controller step: loop outputs passed through the action clamp.
pub fn pid_step(
    gains: &PidGains,
    s: &VehicleState,
    g: &GoalState,
    dt_control: f64,
    limits: &ActuationLimits,
    state: &PidState,
) -> Result<(Action, PidState)> {
    if !(dt_control > 0.0) || !dt_control.is_finite() {
        return Err(Error::Config(format!(
            "control interval must be positive, got {dt_control}"
        )));
    }
    let (raw, next) = pid_command(gains, s, g, dt_control, state);
    Ok((clamp_action(&raw, s, limits, dt_control)?, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p_only(kp: f64) -> PidGains {
        let l = LoopGains {
            kp,
            ki: 0.0,
            kd: 0.0,
            integral_limit: 1.0,
        };
        PidGains { pitch: l, roll: l }
    }

    fn mid() -> VehicleState {
        VehicleState {
            rpm: 1000.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_error_gives_zero_action() {
        let s = mid();
        let (a, st) = pid_step(&PidGains::default(), &s, &GoalState(s), 0.02, &ActuationLimits::default(), &PidState::default()).unwrap();
        assert_eq!(a, Action::ZERO);
        assert_eq!(st, PidState::default());
    }

    #[test]
    fn proportional_example() {
        let s = mid();
        let mut g = GoalState(s);
        g.0.pitch = 0.5;
        let (a, _) = pid_command(&p_only(100.0), &s, &g, 0.02, &PidState::default());
        assert_eq!(a.rpm_rate, 50.0);
        assert_eq!(a.steer_rate, 0.0);
    }

    #[test]
    fn clamp_at_rpm_max() {
        let s = VehicleState {
            rpm: 1980.0,
            ..Default::default()
        };
        let mut g = GoalState(s);
        g.0.pitch = 0.5;
        let (a, _) = pid_step(&p_only(100.0), &s, &g, 0.02, &ActuationLimits::default(), &PidState::default()).unwrap();
        assert_eq!(a.rpm_rate, 0.0);
    }

    #[test]
    fn error_is_wrapped() {
        let s = VehicleState {
            pitch: 3.0,
            ..mid()
        };
        let mut g = GoalState(mid());
        g.0.pitch = -3.0;
        let (a, _) = pid_command(&p_only(1.0), &s, &g, 0.02, &PidState::default());
        let want = 2.0 * std::f64::consts::PI - 6.0;
        assert!((a.rpm_rate - want).abs() < 1e-12);
    }

    #[test]
    fn bad_interval_rejected() {
        let s = mid();
        assert!(pid_step(&PidGains::default(), &s, &GoalState(s), 0.0, &ActuationLimits::default(), &PidState::default()).is_err());
    }

    proptest! {
        #[test]
        fn p_only_is_proportional(e in -3.0f64..3.0, kp in -500.0f64..500.0) {
            let s = mid();
            let mut g = GoalState(s);
            g.0.pitch = e;
            g.0.roll = -e;
            let (a, _) = pid_command(&p_only(kp), &s, &g, 0.02, &PidState::default());
            prop_assert_eq!(a.rpm_rate, kp * e);
            prop_assert_eq!(a.steer_rate, kp * -e);
        }

        #[test]
        fn integral_stays_bounded(errs in proptest::collection::vec(-3.0f64..3.0, 1..200), lim in 0.01f64..2.0) {
            let mut gains = p_only(1.0);
            gains.pitch.ki = 5.0;
            gains.pitch.integral_limit = lim;
            gains.roll.integral_limit = lim;
            let s = mid();
            let mut st = PidState::default();
            for e in errs {
                let mut g = GoalState(s);
                g.0.pitch = e;
                g.0.roll = e;
                st = pid_command(&gains, &s, &g, 0.1, &st).1;
                prop_assert!(st.pitch_integral.abs() <= lim && st.roll_integral.abs() <= lim);
            }
        }

        #[test]
        fn pure_given_state(e in -1.0f64..1.0, i in -0.5f64..0.5) {
            let s = mid();
            let mut g = GoalState(s);
            g.0.pitch = e;
            let st = PidState { pitch_integral: i, roll_integral: -i };
            let gains = PidGains::default();
            prop_assert_eq!(pid_command(&gains, &s, &g, 0.02, &st), pid_command(&gains, &s, &g, 0.02, &st));
        }
    }
}
