use std::f64::consts::PI;

use proptest::prelude::*;

use inair::oracle::{self, gyroscopic_accel, inertial_accel, projectile_airtime, OracleModel, PhysicalParams};
use inair::phli::{h_xi_step, PhliModel, DEFAULT_HIDDEN};
use inair::pid::{pid_command, LoopGains, PidGains, PidState};
use inair::planner::{
    control_loop, plan_cycle, rollout, rollout_all, sample_actions, CostSchedule, PlannerConfig,
};
use inair::seeding::rng_for;
use inair::types::{
    clamp_action, clamp_state, goal_residual, wrap_angle, Action, ActuationLimits, GoalState,
    VehicleState,
};
use inair::ForwardModel;

fn limits() -> ActuationLimits {
    ActuationLimits::default()
}

prop_compose! {
    /// Any finite state, including rpm and steer outside their limits.
    fn any_state()(
        roll in -10.0..10.0f64, roll_rate in -5.0..5.0f64,
        pitch in -10.0..10.0f64, pitch_rate in -5.0..5.0f64,
        yaw in -10.0..10.0f64, yaw_rate in -2.0..2.0f64,
        rpm in -500.0..2500.0f64, steer in -1.0..1.0f64,
    ) -> VehicleState {
        VehicleState { roll, roll_rate, pitch, pitch_rate, yaw, yaw_rate, rpm, steer }
    }
}

prop_compose! {
    fn state_in_limits()(s in any_state()) -> VehicleState {
        clamp_state(&s, &limits())
    }
}

prop_compose! {
    fn any_action()(r in -8000.0..8000.0f64, s in -10.0..10.0f64) -> Action {
        Action::new(r, s)
    }
}

fn within_limits(s: &VehicleState, l: &ActuationLimits) -> bool {
    s.rpm >= l.rpm_min
        && s.rpm <= l.rpm_max
        && s.steer >= l.steer_min
        && s.steer <= l.steer_max
        && [s.roll, s.pitch, s.yaw].iter().all(|a| *a > -PI && *a <= PI)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wrap_is_idempotent_and_in_range(a in -1e6..1e6f64) {
        let w = wrap_angle(a).unwrap();
        prop_assert!(w > -PI && w <= PI);
        prop_assert_eq!(wrap_angle(w).unwrap(), w);
    }

    #[test]
    fn clamp_state_is_a_projection(s in any_state()) {
        let once = clamp_state(&s, &limits());
        prop_assert_eq!(clamp_state(&once, &limits()), once);
        prop_assert!(within_limits(&once, &limits()));
    }

    #[test]
    fn clamped_action_keeps_positions_in_limits(s in state_in_limits(), a in any_action(), dt in 0.001..0.5f64) {
        let l = limits();
        let c = clamp_action(&a, &s, &l, dt).unwrap();
        let eps = 1e-9;
        prop_assert!(c.rpm_rate >= l.rpm_rate_min && c.rpm_rate <= l.rpm_rate_max);
        prop_assert!(c.steer_rate >= l.steer_rate_min && c.steer_rate <= l.steer_rate_max);
        let rpm = s.rpm + c.rpm_rate * dt;
        let steer = s.steer + c.steer_rate * dt;
        prop_assert!(rpm >= l.rpm_min - eps && rpm <= l.rpm_max + eps, "rpm {}", rpm);
        prop_assert!(steer >= l.steer_min - eps && steer <= l.steer_max + eps, "steer {}", steer);
    }

    #[test]
    fn residual_to_itself_is_zero(s in any_state()) {
        prop_assert_eq!(goal_residual(&s, &GoalState(s)), [0.0; 8]);
    }

    #[test]
    fn zero_action_conserves_rates(s in state_in_limits(), n in 1usize..200) {
        let p = PhysicalParams::default().noise_free();
        let traj = oracle::simulate(&s, &vec![Action::ZERO; n], 0.02, &p, &limits(), None).unwrap();
        for x in &traj.states {
            prop_assert!((x.roll_rate - s.roll_rate).abs() < 1e-12);
            prop_assert!((x.pitch_rate - s.pitch_rate).abs() < 1e-12);
            prop_assert!((x.yaw_rate - s.yaw_rate).abs() < 1e-12);
        }
    }

    #[test]
    fn accelerations_scale_linearly(s in state_in_limits(), a in any_action(), e in -6i32..6) {
        let p = PhysicalParams::default();
        let k = 2f64.powi(e);
        let (ir, ip) = inertial_accel(&s, &a, &p);
        let (kr, kp) = inertial_accel(&s, &Action::new(a.rpm_rate * k, a.steer_rate), &p);
        prop_assert_eq!((kr, kp), (ir * k, ip * k));
        let (gr, gp) = gyroscopic_accel(&s, &a, &p);
        let (kr, kp) = gyroscopic_accel(&s, &Action::new(a.rpm_rate, a.steer_rate * k), &p);
        prop_assert_eq!((kr, kp), (gr * k, gp * k));
        let (kr, kp) = gyroscopic_accel(&VehicleState { rpm: s.rpm * k, ..s }, &a, &p);
        prop_assert_eq!((kr, kp), (gr * k, gp * k));
    }

    #[test]
    fn steer_symmetry(s in state_in_limits(), a in any_action()) {
        let p = PhysicalParams::default();
        let m = VehicleState { steer: -s.steer, ..s };
        let (ir, ip) = inertial_accel(&s, &a, &p);
        let (mr, mp) = inertial_accel(&m, &a, &p);
        prop_assert_eq!(mr, -ir);
        prop_assert_eq!(mp, ip);
        let (gr, gp) = gyroscopic_accel(&s, &a, &p);
        let (mr, mp) = gyroscopic_accel(&m, &a, &p);
        prop_assert_eq!(mr, gr);
        prop_assert_eq!(mp, -gp);
    }

    #[test]
    fn flat_airtime_is_closed_form(v in 0.0..40.0f64, th in 0.0..1.5f64, g in 1.0..20.0f64) {
        prop_assert_eq!(projectile_airtime(v, th, 0.0, g).unwrap(), 2.0 * v * th.sin() / g);
    }

    #[test]
    fn analytic_half_matches_oracle_step(s in any_state(), a in any_action(), dt in 0.001..0.3f64) {
        let p = PhysicalParams::default().noise_free();
        let l = limits();
        let sc = clamp_state(&s, &l);
        let ac = clamp_action(&a, &sc, &l, dt).unwrap();
        let acc = oracle::total_accel::<rand_chacha::ChaCha8Rng>(&sc, &ac, &p, None);
        let want = oracle::step::<rand_chacha::ChaCha8Rng>(&s, &a, dt, &p, &l, None).unwrap();
        prop_assert_eq!(h_xi_step(&acc, &s, &a, dt, &l).unwrap(), want);
    }

    #[test]
    fn proportional_pid_is_proportional(
        s in state_in_limits(), gr in -1.0..1.0f64, gp in -1.0..1.0f64,
        kr in -100.0..100.0f64, kp in -1000.0..1000.0f64,
    ) {
        let gains = PidGains {
            pitch: LoopGains { kp, ki: 0.0, kd: 0.0, integral_limit: 1.0 },
            roll: LoopGains { kp: kr, ki: 0.0, kd: 0.0, integral_limit: 1.0 },
        };
        let g = GoalState(VehicleState { roll: gr, pitch: gp, ..Default::default() });
        let (a, _) = pid_command(&gains, &s, &g, 0.02, &PidState::default());
        let r = goal_residual(&s, &g);
        prop_assert!((a.steer_rate - kr * -r[0]).abs() <= 1e-12 * (1.0 + a.steer_rate.abs()));
        prop_assert!((a.rpm_rate - kp * -r[2]).abs() <= 1e-12 * (1.0 + a.rpm_rate.abs()));
    }

    #[test]
    fn pid_integral_is_bounded(
        s in state_in_limits(), ki in -50.0..50.0f64, limit in 0.01..2.0f64, steps in 1usize..100,
    ) {
        let lg = LoopGains { kp: 1.0, ki, kd: 0.0, integral_limit: limit };
        let gains = PidGains { pitch: lg, roll: lg };
        let g = GoalState(VehicleState { roll: 0.5, pitch: -0.5, ..Default::default() });
        let mut st = PidState::default();
        for _ in 0..steps {
            let (_, next) = pid_command(&gains, &s, &g, 0.1, &st);
            prop_assert!(next.roll_integral.abs() <= limit && next.pitch_integral.abs() <= limit);
            st = next;
        }
        prop_assert_eq!(pid_command(&gains, &s, &g, 0.1, &st), pid_command(&gains, &s, &g, 0.1, &st));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn rollouts_stay_in_limits(s in any_state(), acts in prop::collection::vec(any_action(), 1..40), h in 1usize..12) {
        let l = limits();
        let m = OracleModel::new(PhysicalParams::default().noise_free(), 0.2).unwrap();
        let all = rollout_all(&acts, &s, h, &m, &l);
        for (i, a) in acts.iter().enumerate() {
            let single = rollout(a, &s, h, &m, &l);
            prop_assert_eq!(&all[i * (h + 1)..(i + 1) * (h + 1)], &single.states[..]);
            for (k, x) in single.states.iter().enumerate() {
                prop_assert!(within_limits(x, &l));
                if k < h {
                    let ap = single.actions[k];
                    prop_assert!(ap.rpm_rate >= l.rpm_rate_min && ap.rpm_rate <= l.rpm_rate_max);
                    prop_assert!(ap.steer_rate >= l.steer_rate_min && ap.steer_rate <= l.steer_rate_max);
                }
            }
        }
    }

    #[test]
    fn plan_cycle_is_deterministic_and_scale_invariant(
        s in state_in_limits(), gr in -0.5..0.5f64, gp in -0.5..0.5f64,
        t in 0.05..2.0f64, seed in any::<u64>(), k in 0.01..100.0f64,
    ) {
        let cfg = PlannerConfig { sample_count: 64, ..PlannerConfig::default() };
        let sched = CostSchedule::default_for(&cfg.limits);
        let m = OracleModel::new(PhysicalParams::default().noise_free(), cfg.dt).unwrap();
        let g = GoalState(VehicleState { roll: gr, pitch: gp, rpm: 1000.0, ..Default::default() });
        let run = |sched: &CostSchedule| {
            let mut rng = rng_for(seed, 0, 0);
            plan_cycle(&s, &g, t, &Action::ZERO, &m, &cfg, sched, &mut rng).unwrap()
        };
        let a = run(&sched);
        prop_assert_eq!(&a, &run(&sched));
        prop_assert_eq!(a.best_index, run(&sched.scaled(k)).best_index);
    }

    #[test]
    fn sampling_box_contains_warm_start(r in -5000.0..5000.0f64, st in -6.5..6.5f64, seed in any::<u64>()) {
        let cfg = PlannerConfig { sample_count: 256, ..PlannerConfig::default() };
        let last = Action::new(r, st);
        let mut rng = rng_for(seed, 0, 0);
        for a in sample_actions(&last, &cfg, &mut rng) {
            prop_assert!((a.rpm_rate - last.rpm_rate).abs() <= cfg.sigma_rpm_rate);
            prop_assert!((a.steer_rate - last.steer_rate).abs() <= cfg.sigma_steer_rate);
        }
    }

    #[test]
    fn model_file_round_trip(seed in any::<u64>()) {
        let mut m = PhliModel::zeros(DEFAULT_HIDDEN, 0.2).unwrap();
        let mut rng = rng_for(seed, 0, 0);
        for k in 0..m.mlp.param_count() {
            m.mlp.set_param(k, rand::Rng::random_range(&mut rng, -0.5..0.5));
        }
        let back = PhliModel::from_text(&m.to_text()).unwrap();
        for i in 0..20 {
            let s = VehicleState { roll: i as f64 * 0.1, rpm: 50.0 * i as f64, steer: 0.01 * i as f64, ..Default::default() };
            let a = Action::new(100.0 * i as f64, -0.2 * i as f64);
            prop_assert_eq!(m.accel(&s, &a), back.accel(&s, &a));
        }
    }
}

#[test]
fn learned_model_is_smooth() {
    let mut m = PhliModel::zeros(DEFAULT_HIDDEN, 0.2).unwrap();
    let mut rng = rng_for(9, 0, 0);
    for k in 0..m.mlp.param_count() {
        m.mlp.set_param(k, rand::Rng::random_range(&mut rng, -0.3..0.3));
    }
    let s = VehicleState { roll: 0.2, pitch: -0.1, rpm: 1.2, steer: 0.1, ..Default::default() };
    let a = Action::new(0.5, -0.4);
    let base = m.accel(&s, &a).to_array();
    for eps in [1e-3, 1e-5, 1e-7] {
        for j in 0..10 {
            let mut v = s.to_array();
            let mut act = a;
            match j {
                0..=7 => v[j] += eps,
                8 => act.rpm_rate += eps,
                _ => act.steer_rate += eps,
            }
            let moved = m.accel(&VehicleState::from_array(v).unwrap(), &act).to_array();
            for (x, y) in moved.iter().zip(&base) {
                assert!((x - y).abs() <= 100.0 * eps, "input {j}, eps {eps}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn horizon_never_grows_in_closed_loop() {
    let cfg = PlannerConfig { sample_count: 64, ..PlannerConfig::default() };
    let sched = CostSchedule::default_for(&cfg.limits);
    let p = PhysicalParams::default().noise_free();
    let m = OracleModel::new(p, cfg.dt).unwrap();
    let s0 = VehicleState { roll: 0.3, pitch: -0.2, rpm: 900.0, ..Default::default() };
    let g = GoalState(VehicleState { rpm: 1000.0, ..Default::default() });
    let l = cfg.limits;
    let env = |s: &VehicleState, a: &Action, dt: f64| oracle::step::<rand_chacha::ChaCha8Rng>(s, a, dt, &p, &l, None);
    let mut rng = rng_for(1, 0, 0);
    let run = control_loop(&s0, &g, 1.7, &m, &cfg, &sched, env, &mut rng).unwrap();
    assert!(run.cycles.windows(2).all(|w| w[1].plan.horizon <= w[0].plan.horizon));
    assert!(run.trajectory.states.iter().all(|s| within_limits(s, &l)));
}
