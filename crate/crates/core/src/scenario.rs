//! Simulated versions of the gimbal experiments (trajectory tracking, rapid
//! state change, timed goal reaching, state stability) and the ramp jump,
//! run against the oracle for either controller.

use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::ForwardModel;
use crate::error::{Error, Result};
use crate::oracle::{self, PhysicalParams};
use crate::pid::{pid_step, PidGains, PidState};
use crate::planner::{CostSchedule, DomPlanner, PlannerConfig};
use crate::seeding::{derive_seed, rng_for, stream};
use crate::types::{attitude_error, clamp_action, Action, ActuationLimits, GoalState, VehicleState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    /// Trajectory tracking.
    Tt,
    /// Rapid state change.
    Rsc,
    /// Timed goal reaching.
    Tgr,
    /// State stability under disturbances.
    Ss,
    /// Ramp jump.
    Ramp,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Tt,
        ScenarioKind::Rsc,
        ScenarioKind::Tgr,
        ScenarioKind::Ss,
        ScenarioKind::Ramp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Tt => "tt",
            ScenarioKind::Rsc => "rsc",
            ScenarioKind::Tgr => "tgr",
            ScenarioKind::Ss => "ss",
            ScenarioKind::Ramp => "ramp",
        }
    }

    fn title(self) -> &'static str {
        match self {
            ScenarioKind::Tt => "TT",
            ScenarioKind::Rsc => "RSC",
            ScenarioKind::Tgr => "TGR",
            ScenarioKind::Ss => "SS",
            ScenarioKind::Ramp => "Outdoor",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown scenario `{s}` (expected tt, rsc, tgr, ss or ramp)")))
    }
}

/// When a goal counts as reached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Euclidean roll/pitch residual, rad.
    pub angle: f64,
    /// Euclidean roll/pitch rate residual, rad/s.
    pub rate: f64,
    /// Longest tolerated continuous saturation of rpm or steering, s.
    pub stuck_dwell: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            angle: 0.1,
            rate: 0.3,
            stuck_dwell: 2.0,
        }
    }
}

/// Spread of the initial state around the first goal on the gimbal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialSpread {
    pub angle: f64,
    pub rate: f64,
    pub rpm: f64,
}

impl Default for InitialSpread {
    fn default() -> Self {
        InitialSpread {
            angle: 0.05,
            rate: 0.1,
            rpm: 100.0,
        }
    }
}

/// Closed roll/pitch curve `roll = A sin(2πt/P)`, `pitch = A sin(4πt/P)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TtParams {
    pub amplitude: f64,
    pub period: f64,
    /// Time allowed after the loop to settle on the final goal.
    pub settle: f64,
    /// Planning window of the sampling planner.
    pub window: f64,
}

impl Default for TtParams {
    fn default() -> Self {
        TtParams {
            amplitude: 0.4,
            period: 20.0,
            settle: 5.0,
            window: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RscParams {
    /// Candidate (roll, pitch) goals.
    pub targets: Vec<(f64, f64)>,
    pub goals_per_trial: usize,
    pub hold: f64,
    pub timeout: f64,
    pub window: f64,
}

impl Default for RscParams {
    fn default() -> Self {
        RscParams {
            targets: vec![(0.3, 0.3), (0.3, -0.3), (-0.3, 0.3), (-0.3, -0.3)],
            goals_per_trial: 4,
            hold: 2.0,
            timeout: 6.0,
            window: 1.0,
        }
    }
}

/// Goals are drawn with `|roll|, |pitch|` in `[angle_min, angle_max]` and a
/// deadline in `[time_min, time_max]`, then certified reachable.
#[derive(Clone, Debug, PartialEq)]
pub struct TgrParams {
    pub angle_min: f64,
    pub angle_max: f64,
    pub time_min: f64,
    pub time_max: f64,
    pub max_draws: usize,
}

impl Default for TgrParams {
    fn default() -> Self {
        TgrParams {
            angle_min: 0.15,
            angle_max: 0.35,
            time_min: 1.0,
            time_max: 2.0,
            max_draws: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Roll,
    Pitch,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "roll" => Ok(Axis::Roll),
            "pitch" => Ok(Axis::Pitch),
            _ => Err(Error::Argument(format!("unknown axis `{s}`"))),
        }
    }
}

/// Angular-rate impulse applied `time` seconds into the hold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Disturbance {
    pub time: f64,
    pub axis: Axis,
    pub impulse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SsParams {
    pub target: (f64, f64),
    pub approach: f64,
    pub hold: f64,
    pub disturbances: Vec<Disturbance>,
    /// Smallest change in normalized action that counts as a reaction.
    pub reaction_floor: f64,
    pub window: f64,
}

impl Default for SsParams {
    fn default() -> Self {
        let d = |time, axis| Disturbance {
            time,
            axis,
            impulse: 0.5,
        };
        SsParams {
            target: (0.2, -0.2),
            approach: 2.0,
            hold: 10.0,
            disturbances: vec![d(2.0, Axis::Roll), d(5.0, Axis::Pitch), d(8.0, Axis::Roll)],
            reaction_floor: 0.02,
            window: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RampParams {
    /// Take-off speed, m/s.
    pub speed: f64,
    /// Ramp angle, rad.
    pub angle: f64,
    /// Landing height relative to take-off, m.
    pub height_delta: f64,
    pub gravity: f64,
    /// Nominal pitch at take-off.
    pub launch_pitch: f64,
    pub launch_rpm: f64,
    pub pitch_spread: f64,
    pub roll_spread: f64,
    pub rate_spread: f64,
    pub rpm_spread: f64,
    pub max_draws: usize,
}

impl Default for RampParams {
    fn default() -> Self {
        RampParams {
            speed: 14.0,
            angle: FRAC_PI_4,
            height_delta: 0.0,
            gravity: 9.81,
            launch_pitch: FRAC_PI_4,
            launch_rpm: 1300.0,
            pitch_spread: 0.05,
            roll_spread: 0.1,
            rate_spread: 0.5,
            rpm_spread: 100.0,
            max_draws: 50,
        }
    }
}

/// Everything that defines a scenario; the same object drives both
/// controllers.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub thresholds: Thresholds,
    pub control_hz: f64,
    pub goal_rpm: f64,
    /// Environment physics, including the yaw disturbance.
    pub physics: PhysicalParams,
    pub limits: ActuationLimits,
    pub initial: InitialSpread,
    pub tt: TtParams,
    pub rsc: RscParams,
    pub tgr: TgrParams,
    pub ss: SsParams,
    pub ramp: RampParams,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind) -> Self {
        ScenarioSpec {
            kind,
            thresholds: Thresholds::default(),
            control_hz: 50.0,
            goal_rpm: 1000.0,
            physics: PhysicalParams::default(),
            limits: ActuationLimits::default(),
            initial: InitialSpread::default(),
            tt: TtParams::default(),
            rsc: RscParams::default(),
            tgr: TgrParams::default(),
            ss: SsParams::default(),
            ramp: RampParams::default(),
        }
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = &self.thresholds;
        if !(t.angle > 0.0 && t.rate > 0.0 && t.stuck_dwell > 0.0) {
            return bad("scenario thresholds must be positive".into());
        }
        if !(self.control_hz > 0.0) || !self.control_hz.is_finite() {
            return bad(format!("control_hz must be positive, got {}", self.control_hz));
        }
        if !(self.goal_rpm >= self.limits.rpm_min && self.goal_rpm <= self.limits.rpm_max) {
            return bad(format!("goal_rpm {} outside the rpm limits", self.goal_rpm));
        }
        self.physics.validate()?;
        self.limits.validate()?;
        let positive = [
            ("tt.period", self.tt.period),
            ("tt.window", self.tt.window),
            ("rsc.hold", self.rsc.hold),
            ("rsc.timeout", self.rsc.timeout),
            ("rsc.window", self.rsc.window),
            ("tgr.time_min", self.tgr.time_min),
            ("ss.hold", self.ss.hold),
            ("ss.window", self.ss.window),
            ("ss.reaction_floor", self.ss.reaction_floor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.tt.settle >= 0.0) || !(self.ss.approach >= 0.0) {
            return bad("tt.settle and ss.approach must be non-negative".into());
        }
        if self.rsc.targets.is_empty() || self.rsc.goals_per_trial == 0 {
            return bad("rsc needs at least one target and one goal per trial".into());
        }
        if self.rsc.goals_per_trial > 1 && self.rsc.targets.len() < 2 {
            return bad("rsc needs two distinct targets to change goals".into());
        }
        if !(self.tgr.angle_min >= 0.0 && self.tgr.angle_max >= self.tgr.angle_min) {
            return bad("tgr angle range is empty".into());
        }
        if !(self.tgr.time_max >= self.tgr.time_min) {
            return bad("tgr time range is empty".into());
        }
        for d in &self.ss.disturbances {
            if !(d.time >= 0.0 && d.time < self.ss.hold) {
                return bad(format!("disturbance at {} s lies outside the {} s hold", d.time, self.ss.hold));
            }
        }
        if self.ss.disturbances.windows(2).any(|w| w[1].time <= w[0].time) {
            return bad("disturbance times must increase".into());
        }
        if self.tgr.max_draws == 0 || self.ramp.max_draws == 0 {
            return bad("max_draws must be at least 1".into());
        }
        Ok(())
    }
}

/// A closed-loop controller driven at the scenario's control rate.
pub trait Controller {
    fn name(&self) -> &'static str;

    /// Prepares for a new trial; `seed` feeds any internal randomness.
    fn reset(&mut self, seed: u64);

    /// Command for state `s` at time `t`. `deadline` is when the goal
    /// `goal_at(deadline)` should be met; controllers without a horizon
    /// track `goal_at(t)` instead.
    fn act(
        &mut self,
        s: &VehicleState,
        t: f64,
        deadline: f64,
        goal_at: &dyn Fn(f64) -> GoalState,
    ) -> Result<Action>;
}

/// The sampling planner as a controller.
pub struct DomController<M> {
    planner: DomPlanner<M>,
    rng: ChaCha8Rng,
}

impl<M: ForwardModel> DomController<M> {
    pub fn new(model: M, cfg: PlannerConfig, sched: CostSchedule) -> Result<Self> {
        let seed = cfg.seed;
        Ok(DomController {
            planner: DomPlanner::new(model, cfg, sched)?,
            rng: rng_for(seed, stream::PLANNER, 0),
        })
    }
}

impl<M: ForwardModel> Controller for DomController<M> {
    fn name(&self) -> &'static str {
        "dom"
    }

    fn reset(&mut self, seed: u64) {
        self.planner.reset();
        self.rng = rng_for(seed, stream::PLANNER, 0);
    }

    fn act(
        &mut self,
        s: &VehicleState,
        t: f64,
        deadline: f64,
        goal_at: &dyn Fn(f64) -> GoalState,
    ) -> Result<Action> {
        let plan = self.planner.plan(s, &goal_at(deadline), deadline - t, &mut self.rng)?;
        Ok(plan.best_action)
    }
}

pub struct PidController {
    pub gains: PidGains,
    pub limits: ActuationLimits,
    pub dt: f64,
    state: PidState,
}

impl PidController {
    pub fn new(gains: PidGains, limits: ActuationLimits, dt: f64) -> Result<Self> {
        gains.validate()?;
        Ok(PidController {
            gains,
            limits,
            dt,
            state: PidState::default(),
        })
    }
}

impl Controller for PidController {
    fn name(&self) -> &'static str {
        "pid"
    }

    fn reset(&mut self, _seed: u64) {
        self.state = PidState::default();
    }

    fn act(
        &mut self,
        s: &VehicleState,
        t: f64,
        _deadline: f64,
        goal_at: &dyn Fn(f64) -> GoalState,
    ) -> Result<Action> {
        let (a, next) = pid_step(&self.gains, s, &goal_at(t), self.dt, &self.limits, &self.state)?;
        self.state = next;
        Ok(a)
    }
}

/// Always commands zero rates.
pub struct ZeroController;

impl Controller for ZeroController {
    fn name(&self) -> &'static str {
        "zero"
    }

    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, _: &VehicleState, _: f64, _: f64, _: &dyn Fn(f64) -> GoalState) -> Result<Action> {
        Ok(Action::ZERO)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    TtError,
    TtCompletionTime,
    RscTime,
    RscDifference,
    TgrTimeDifference,
    TgrStateDifference,
    SsCorrectionTime,
    SsReactionLatency,
    LandingRoll,
    LandingPitch,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::TtError => "TT Error (rad)",
            Metric::TtCompletionTime => "TT Completion Time (s)",
            Metric::RscTime => "RSC Time (s)",
            Metric::RscDifference => "RSC Difference (rad)",
            Metric::TgrTimeDifference => "TGR Time Difference (s)",
            Metric::TgrStateDifference => "TGR State Difference (rad)",
            Metric::SsCorrectionTime => "SS Correction Time (s)",
            Metric::SsReactionLatency => "SS Reaction Latency (s)",
            Metric::LandingRoll => "Outdoor Landing Roll (rad)",
            Metric::LandingPitch => "Outdoor Landing Pitch (rad)",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::TtError => "tt_error",
            Metric::TtCompletionTime => "tt_completion_time",
            Metric::RscTime => "rsc_time",
            Metric::RscDifference => "rsc_difference",
            Metric::TgrTimeDifference => "tgr_time_difference",
            Metric::TgrStateDifference => "tgr_state_difference",
            Metric::SsCorrectionTime => "ss_correction_time",
            Metric::SsReactionLatency => "ss_reaction_latency",
            Metric::LandingRoll => "landing_roll",
            Metric::LandingPitch => "landing_pitch",
        }
    }

    pub fn for_kind(kind: ScenarioKind) -> &'static [Metric] {
        match kind {
            ScenarioKind::Tt => &[Metric::TtError, Metric::TtCompletionTime],
            ScenarioKind::Rsc => &[Metric::RscTime, Metric::RscDifference],
            ScenarioKind::Tgr => &[Metric::TgrTimeDifference, Metric::TgrStateDifference],
            ScenarioKind::Ss => &[Metric::SsCorrectionTime, Metric::SsReactionLatency],
            ScenarioKind::Ramp => &[Metric::LandingRoll, Metric::LandingPitch],
        }
    }
}

/// One metric value from one trial. Censored values are the observation
/// window length, reported when the event never happened within it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub metric: Metric,
    pub value: f64,
    pub censored: bool,
}

/// One control tick: the state at `t`, the action applied from it, and the
/// goal being tracked at `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub state: VehicleState,
    pub action: Action,
    pub goal: GoalState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub measurements: Vec<Measurement>,
    pub trace: Vec<TraceRow>,
}

impl TrialResult {
    pub fn value(&self, m: Metric) -> Option<&Measurement> {
        self.measurements.iter().find(|x| x.metric == m)
    }
}

/// Mean and population standard deviation over the trials that produced
/// the metric.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub censored: usize,
}

impl Summary {
    pub fn of(values: &[f64], censored: usize) -> Self {
        if values.is_empty() {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                count: 0,
                censored,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            count: values.len(),
            censored,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioReport {
    pub kind: ScenarioKind,
    pub controller: String,
    pub trials: Vec<TrialResult>,
}

impl ScenarioReport {
    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.success).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.trials.len().max(1) as f64
    }

    pub fn summary(&self, metric: Metric) -> Summary {
        let ms: Vec<&Measurement> = self.trials.iter().filter_map(|t| t.value(metric)).collect();
        let values: Vec<f64> = ms.iter().map(|m| m.value).collect();
        Summary::of(&values, ms.iter().filter(|m| m.censored).count())
    }
}

/// The oracle as the true system, with its own disturbance stream.
struct Env {
    params: PhysicalParams,
    limits: ActuationLimits,
    dt: f64,
    rng: ChaCha8Rng,
}

impl Env {
    fn step(&mut self, s: &VehicleState, a: &Action) -> Result<(VehicleState, Action)> {
        oracle::step_applied(s, a, self.dt, &self.params, &self.limits, Some(&mut self.rng))
    }
}

/// Tracks the longest continuous stretch with rpm or steering at a limit.
struct Dwell {
    run: f64,
    worst: f64,
}

impl Dwell {
    fn new() -> Self {
        Dwell { run: 0.0, worst: 0.0 }
    }

    fn update(&mut self, s: &VehicleState, l: &ActuationLimits, dt: f64) {
        let eps_r = 1e-9 * (l.rpm_max - l.rpm_min).max(1.0);
        let eps_s = 1e-9 * (l.steer_max - l.steer_min).max(1.0);
        let saturated = s.rpm <= l.rpm_min + eps_r
            || s.rpm >= l.rpm_max - eps_r
            || s.steer <= l.steer_min + eps_s
            || s.steer >= l.steer_max - eps_s;
        self.run = if saturated { self.run + dt } else { 0.0 };
        self.worst = self.worst.max(self.run);
    }
}

/// Closed-loop bookkeeping shared by all scenarios.
struct Episode<'a> {
    env: Env,
    ctrl: &'a mut dyn Controller,
    s: VehicleState,
    k: usize,
    dt: f64,
    trace: Vec<TraceRow>,
}

impl<'a> Episode<'a> {
    fn new(spec: &ScenarioSpec, ctrl: &'a mut dyn Controller, s0: VehicleState, seed: u64) -> Self {
        Episode {
            env: Env {
                params: spec.physics.clone(),
                limits: spec.limits.clone(),
                dt: spec.control_period(),
                rng: rng_for(seed, stream::ENVIRONMENT, 0),
            },
            ctrl,
            s: s0,
            k: 0,
            dt: spec.control_period(),
            trace: Vec::new(),
        }
    }

    fn t(&self) -> f64 {
        self.k as f64 * self.dt
    }

    /// One control period: ask the controller, advance the oracle.
    fn tick(&mut self, deadline: f64, goal_at: &dyn Fn(f64) -> GoalState) -> Result<Action> {
        let t = self.t();
        let raw = self.ctrl.act(&self.s, t, deadline, goal_at)?;
        let a = clamp_action(&raw, &self.s, &self.env.limits, self.dt)?;
        let (next, applied) = self.env.step(&self.s, &a)?;
        self.trace.push(TraceRow {
            t,
            state: self.s,
            action: applied,
            goal: goal_at(t),
        });
        self.s = next;
        self.k += 1;
        Ok(applied)
    }

    fn finish(mut self, goal: GoalState) -> Vec<TraceRow> {
        self.trace.push(TraceRow {
            t: self.t(),
            state: self.s,
            action: Action::ZERO,
            goal,
        });
        self.trace
    }
}

fn ticks(seconds: f64, dt: f64) -> usize {
    (seconds / dt).round() as usize
}

fn attitude_goal(roll: f64, pitch: f64, rpm: f64) -> GoalState {
    GoalState(VehicleState {
        roll,
        pitch,
        rpm,
        ..Default::default()
    })
}

/// Within the angle and rate thresholds of `g` on roll and pitch.
pub fn within(s: &VehicleState, g: &GoalState, th: &Thresholds) -> bool {
    let rate = (s.roll_rate - g.roll_rate).hypot(s.pitch_rate - g.pitch_rate);
    attitude_error(s, g.roll, g.pitch) < th.angle && rate < th.rate
}

fn gimbal_start<R: Rng>(spec: &ScenarioSpec, roll: f64, pitch: f64, rng: &mut R) -> VehicleState {
    let sp = &spec.initial;
    let mut u = |w: f64| if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
    let s = VehicleState {
        roll: roll + u(sp.angle),
        roll_rate: u(sp.rate),
        pitch: pitch + u(sp.angle),
        pitch_rate: u(sp.rate),
        yaw: 0.0,
        yaw_rate: 0.0,
        rpm: spec.goal_rpm + u(sp.rpm),
        steer: 0.0,
    };
    crate::types::clamp_state(&s, &spec.limits)
}

/// Whether some four-segment bang-bang sequence (each rate at its minimum,
/// zero or maximum per segment) brings roll and pitch within `tol` of the
/// target after `horizon` seconds, simulated noise-free at `dt`.
#[allow(clippy::too_many_arguments)]
pub fn max_effort_reachable(
    s0: &VehicleState,
    target_roll: f64,
    target_pitch: f64,
    horizon: f64,
    tol: f64,
    params: &PhysicalParams,
    limits: &ActuationLimits,
    dt: f64,
) -> Result<bool> {
    const SEGMENTS: usize = 4;
    let p = params.clone().noise_free();
    let n = ticks(horizon, dt).max(SEGMENTS);
    let bounds: Vec<usize> = (0..=SEGMENTS).map(|j| j * n / SEGMENTS).collect();
    let mut levels = Vec::with_capacity(9);
    for r in [limits.rpm_rate_min, 0.0, limits.rpm_rate_max] {
        for st in [limits.steer_rate_min, 0.0, limits.steer_rate_max] {
            levels.push(Action::new(r, st));
        }
    }
    fn search(
        s: VehicleState,
        seg: usize,
        bounds: &[usize],
        levels: &[Action],
        target: (f64, f64, f64),
        p: &PhysicalParams,
        limits: &ActuationLimits,
        dt: f64,
    ) -> Result<bool> {
        if seg + 1 == bounds.len() {
            return Ok(attitude_error(&s, target.0, target.1) < target.2);
        }
        for a in levels {
            let mut x = s;
            for _ in bounds[seg]..bounds[seg + 1] {
                x = oracle::step::<ChaCha8Rng>(&x, a, dt, p, limits, None)?;
            }
            if search(x, seg + 1, bounds, levels, target, p, limits, dt)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
    search(*s0, 0, &bounds, &levels, (target_roll, target_pitch, tol), &p, limits, dt)
}

/// Time step of the reachability check.
pub const CERTIFY_DT: f64 = 0.02;

fn run_tt(spec: &ScenarioSpec, ctrl: &mut dyn Controller, seed: u64) -> Result<TrialResult> {
    let p = &spec.tt;
    let th = &spec.thresholds;
    let dt = spec.control_period();
    let mut rng = rng_for(seed, stream::SCENARIO, 0);
    let (a, period, rpm) = (p.amplitude, p.period, spec.goal_rpm);
    let w = 2.0 * PI / period;
    let goal_at = move |t: f64| -> GoalState {
        if t >= period {
            return attitude_goal(0.0, 0.0, rpm);
        }
        let mut g = attitude_goal(a * (w * t).sin(), a * (2.0 * w * t).sin(), rpm);
        g.0.roll_rate = a * w * (w * t).cos();
        g.0.pitch_rate = 2.0 * a * w * (2.0 * w * t).cos();
        g
    };
    let s0 = gimbal_start(spec, 0.0, 0.0, &mut rng);
    let mut ep = Episode::new(spec, ctrl, s0, seed);
    let n_loop = ticks(period, dt);
    let n_total = n_loop + ticks(p.settle, dt);
    let final_goal = goal_at(period);
    let mut dwell = Dwell::new();
    let mut err_sum = 0.0;
    let mut completion = None;
    loop {
        let k = ep.k;
        if k < n_loop {
            let g = goal_at(ep.t());
            err_sum += attitude_error(&ep.s, g.roll, g.pitch);
        } else if within(&ep.s, &final_goal, th) {
            completion = Some(ep.t());
            break;
        }
        if k >= n_total {
            break;
        }
        ep.tick(ep.t() + p.window, &goal_at)?;
        dwell.update(&ep.s, &spec.limits, dt);
    }
    let stuck = dwell.worst > th.stuck_dwell;
    let success = completion.is_some() && !stuck;
    let mut measurements = vec![Measurement {
        metric: Metric::TtError,
        value: err_sum / n_loop.max(1) as f64,
        censored: false,
    }];
    if success {
        measurements.push(Measurement {
            metric: Metric::TtCompletionTime,
            value: completion.unwrap_or_default(),
            censored: false,
        });
    }
    Ok(TrialResult {
        trial: 0,
        seed,
        success,
        measurements,
        trace: ep.finish(final_goal),
    })
}

fn run_rsc(spec: &ScenarioSpec, ctrl: &mut dyn Controller, seed: u64) -> Result<TrialResult> {
    let p = &spec.rsc;
    let th = &spec.thresholds;
    let dt = spec.control_period();
    let mut rng = rng_for(seed, stream::SCENARIO, 0);
    let mut order = Vec::with_capacity(p.goals_per_trial);
    let mut prev = usize::MAX;
    for _ in 0..p.goals_per_trial {
        let mut i = rng.random_range(0..p.targets.len());
        while i == prev && p.targets.len() > 1 {
            i = rng.random_range(0..p.targets.len());
        }
        order.push(i);
        prev = i;
    }
    let s0 = gimbal_start(spec, 0.0, 0.0, &mut rng);
    let mut ep = Episode::new(spec, ctrl, s0, seed);
    let (n_timeout, n_hold) = (ticks(p.timeout, dt), ticks(p.hold, dt));
    let mut times = Vec::new();
    let mut diffs = Vec::new();
    let mut any_censored = false;
    let mut last_goal = attitude_goal(0.0, 0.0, spec.goal_rpm);
    for &i in &order {
        let (roll, pitch) = p.targets[i];
        let goal = attitude_goal(roll, pitch, spec.goal_rpm);
        last_goal = goal;
        let goal_at = move |_: f64| goal;
        let start = ep.k;
        let mut reached = false;
        while ep.k - start < n_timeout {
            if within(&ep.s, &goal, th) {
                reached = true;
                break;
            }
            ep.tick(ep.t() + p.window, &goal_at)?;
        }
        if !reached && within(&ep.s, &goal, th) {
            reached = true;
        }
        times.push((ep.k - start) as f64 * dt);
        if reached {
            let mut e = 0.0;
            for _ in 0..n_hold {
                ep.tick(ep.t() + p.window, &goal_at)?;
                e += attitude_error(&ep.s, roll, pitch);
            }
            diffs.push(e / n_hold.max(1) as f64);
        } else {
            any_censored = true;
            diffs.push(attitude_error(&ep.s, roll, pitch));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(TrialResult {
        trial: 0,
        seed,
        success: !any_censored,
        measurements: vec![
            Measurement {
                metric: Metric::RscTime,
                value: mean(&times),
                censored: any_censored,
            },
            Measurement {
                metric: Metric::RscDifference,
                value: mean(&diffs),
                censored: false,
            },
        ],
        trace: ep.finish(last_goal),
    })
}

fn draw_certified<R: Rng, T>(
    max_draws: usize,
    rng: &mut R,
    mut draw: impl FnMut(&mut R) -> T,
    mut ok: impl FnMut(&T) -> Result<bool>,
    what: &str,
) -> Result<T> {
    for _ in 0..max_draws {
        let x = draw(rng);
        if ok(&x)? {
            return Ok(x);
        }
    }
    Err(Error::Domain(format!(
        "no certified {what} found in {max_draws} draws; widen the scenario ranges"
    )))
}

fn run_tgr(spec: &ScenarioSpec, ctrl: &mut dyn Controller, seed: u64) -> Result<TrialResult> {
    let p = &spec.tgr;
    let th = &spec.thresholds;
    let dt = spec.control_period();
    let mut rng = rng_for(seed, stream::SCENARIO, 0);
    let signed = |rng: &mut ChaCha8Rng| {
        let m = rng.random_range(p.angle_min..=p.angle_max);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    let (s0, goal, n) = draw_certified(
        p.max_draws,
        &mut rng,
        |rng| {
            let s0 = gimbal_start(spec, 0.0, 0.0, rng);
            let roll = signed(rng);
            let pitch = signed(rng);
            let n = ticks(rng.random_range(p.time_min..=p.time_max), dt).max(1);
            (s0, attitude_goal(roll, pitch, spec.goal_rpm), n)
        },
        |(s0, g, n)| {
            max_effort_reachable(s0, g.roll, g.pitch, *n as f64 * dt, th.angle, &spec.physics, &spec.limits, CERTIFY_DT)
        },
        "timed goal",
    )?;
    let deadline = n as f64 * dt;
    let goal_at = move |_: f64| goal;
    let mut ep = Episode::new(spec, ctrl, s0, seed);
    for _ in 0..n {
        ep.tick(deadline, &goal_at)?;
    }
    let trace = ep.finish(goal);
    let inside: Vec<bool> = trace
        .iter()
        .map(|r| attitude_error(&r.state, goal.roll, goal.pitch) < th.angle)
        .collect();
    let arrived = inside[n];
    let mut first = n;
    while first > 0 && inside[first - 1] {
        first -= 1;
    }
    let terminal = attitude_error(&trace[n].state, goal.roll, goal.pitch);
    let (time_diff, censored) = if arrived {
        ((deadline - first as f64 * dt).abs(), false)
    } else {
        (deadline, true)
    };
    Ok(TrialResult {
        trial: 0,
        seed,
        success: arrived,
        measurements: vec![
            Measurement {
                metric: Metric::TgrTimeDifference,
                value: time_diff,
                censored,
            },
            Measurement {
                metric: Metric::TgrStateDifference,
                value: terminal,
                censored: false,
            },
        ],
        trace,
    })
}

fn run_ss(spec: &ScenarioSpec, ctrl: &mut dyn Controller, seed: u64) -> Result<TrialResult> {
    let p = &spec.ss;
    let th = &spec.thresholds;
    let l = &spec.limits;
    let dt = spec.control_period();
    let mut rng = rng_for(seed, stream::SCENARIO, 0);
    let s0 = gimbal_start(spec, 0.0, 0.0, &mut rng);
    let goal = attitude_goal(p.target.0, p.target.1, spec.goal_rpm);
    let goal_at = move |_: f64| goal;
    let n_approach = ticks(p.approach, dt);
    let n_total = n_approach + ticks(p.hold, dt);
    let hits: Vec<usize> = p.disturbances.iter().map(|d| n_approach + ticks(d.time, dt)).collect();
    let mut ep = Episode::new(spec, ctrl, s0, seed);
    while ep.k < n_total {
        if let Some(i) = hits.iter().position(|&h| h == ep.k) {
            let d = &p.disturbances[i];
            match d.axis {
                Axis::Roll => ep.s.roll_rate += d.impulse,
                Axis::Pitch => ep.s.pitch_rate += d.impulse,
            }
        }
        ep.tick(ep.t() + p.window, &goal_at)?;
    }
    let trace = ep.finish(goal);
    let norm = |a: &Action| (a.rpm_rate / l.rpm_rate_max.abs().max(l.rpm_rate_min.abs()),
                            a.steer_rate / l.steer_rate_max.abs().max(l.steer_rate_min.abs()));
    let mut corrections = Vec::new();
    let mut latencies = Vec::new();
    let (mut c_censored, mut l_censored) = (false, false);
    for (i, &h) in hits.iter().enumerate() {
        let end = hits.get(i + 1).copied().unwrap_or(n_total);
        let window = (end - h) as f64 * dt;
        let reference = if h > 0 { norm(&trace[h - 1].action) } else { (0.0, 0.0) };
        let reacted = (h..end).find(|&j| {
            let a = norm(&trace[j].action);
            (a.0 - reference.0).abs().max((a.1 - reference.1).abs()) >= p.reaction_floor
        });
        match reacted {
            Some(j) => latencies.push((j - h) as f64 * dt),
            None => {
                l_censored = true;
                latencies.push(window);
            }
        }
        let recovered = (h..=end).find(|&j| within(&trace[j].state, &goal, th));
        match recovered {
            Some(j) => corrections.push((j - h) as f64 * dt),
            None => {
                c_censored = true;
                corrections.push(window);
            }
        }
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    Ok(TrialResult {
        trial: 0,
        seed,
        success: !c_censored,
        measurements: vec![
            Measurement {
                metric: Metric::SsCorrectionTime,
                value: mean(&corrections),
                censored: c_censored,
            },
            Measurement {
                metric: Metric::SsReactionLatency,
                value: mean(&latencies),
                censored: l_censored,
            },
        ],
        trace,
    })
}

/// Airtime of the configured jump.
pub fn ramp_airtime(p: &RampParams) -> Result<f64> {
    oracle::projectile_airtime(p.speed, p.angle, p.height_delta, p.gravity)
}

fn run_ramp(spec: &ScenarioSpec, ctrl: &mut dyn Controller, seed: u64) -> Result<TrialResult> {
    let p = &spec.ramp;
    let th = &spec.thresholds;
    let dt = spec.control_period();
    let airtime = ramp_airtime(p)?;
    let n = ticks(airtime, dt).max(1);
    let mut rng = rng_for(seed, stream::SCENARIO, 0);
    let goal = attitude_goal(0.0, 0.0, spec.goal_rpm);
    let s0 = draw_certified(
        p.max_draws,
        &mut rng,
        |rng| {
            let mut u = |w: f64| if w > 0.0 { rng.random_range(-w..=w) } else { 0.0 };
            let s = VehicleState {
                roll: u(p.roll_spread),
                roll_rate: u(p.rate_spread),
                pitch: p.launch_pitch + u(p.pitch_spread),
                pitch_rate: u(p.rate_spread),
                yaw: 0.0,
                yaw_rate: 0.0,
                rpm: p.launch_rpm + u(p.rpm_spread),
                steer: 0.0,
            };
            crate::types::clamp_state(&s, &spec.limits)
        },
        |s| max_effort_reachable(s, 0.0, 0.0, airtime, th.angle, &spec.physics, &spec.limits, CERTIFY_DT),
        "launch state",
    )?;
    let goal_at = move |_: f64| goal;
    let mut ep = Episode::new(spec, ctrl, s0, seed);
    for _ in 0..n {
        ep.tick(airtime, &goal_at)?;
    }
    let landing = ep.s;
    Ok(TrialResult {
        trial: 0,
        seed,
        success: attitude_error(&landing, 0.0, 0.0) < th.angle,
        measurements: vec![
            Measurement {
                metric: Metric::LandingRoll,
                value: landing.roll.abs(),
                censored: false,
            },
            Measurement {
                metric: Metric::LandingPitch,
                value: landing.pitch.abs(),
                censored: false,
            },
        ],
        trace: ep.finish(goal),
    })
}

/// Runs a single trial with a fully determined seed.
pub fn run_trial(spec: &ScenarioSpec, ctrl: &mut dyn Controller, trial_seed: u64) -> Result<TrialResult> {
    spec.validate()?;
    ctrl.reset(trial_seed);
    match spec.kind {
        ScenarioKind::Tt => run_tt(spec, ctrl, trial_seed),
        ScenarioKind::Rsc => run_rsc(spec, ctrl, trial_seed),
        ScenarioKind::Tgr => run_tgr(spec, ctrl, trial_seed),
        ScenarioKind::Ss => run_ss(spec, ctrl, trial_seed),
        ScenarioKind::Ramp => run_ramp(spec, ctrl, trial_seed),
    }
}

/// Seed of trial `index` within a run seeded with `seed`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    derive_seed(seed, stream::SCENARIO, index as u64)
}

/// Runs `trials` seeded trials of one scenario.
pub fn run_scenario(
    spec: &ScenarioSpec,
    ctrl: &mut dyn Controller,
    trials: usize,
    seed: u64,
) -> Result<ScenarioReport> {
    if trials == 0 {
        return Err(Error::Argument("need at least one trial".into()));
    }
    let mut out = Vec::with_capacity(trials);
    for i in 0..trials {
        let mut r = run_trial(spec, ctrl, trial_seed(seed, i))?;
        r.trial = i;
        out.push(r);
    }
    Ok(ScenarioReport {
        kind: spec.kind,
        controller: ctrl.name().to_string(),
        trials: out,
    })
}

/// A Table-1-shaped comparison: one row per metric (plus success rate per
/// scenario), one column group per controller.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub controllers: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub cells: Vec<Summary>,
}

impl ComparisonTable {
    pub fn from_reports(reports: &[Vec<ScenarioReport>]) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Argument("no scenarios to compare".into()))?;
        let controllers: Vec<String> = first.iter().map(|r| r.controller.clone()).collect();
        let mut rows = Vec::new();
        for per_ctrl in reports {
            let kind = per_ctrl[0].kind;
            for &m in Metric::for_kind(kind) {
                rows.push(ComparisonRow {
                    label: m.label().to_string(),
                    cells: per_ctrl.iter().map(|r| r.summary(m)).collect(),
                });
            }
            rows.push(ComparisonRow {
                label: format!("{} Success Rate", kind.title()),
                cells: per_ctrl
                    .iter()
                    .map(|r| {
                        let v: Vec<f64> = r.trials.iter().map(|t| if t.success { 1.0 } else { 0.0 }).collect();
                        Summary::of(&v, 0)
                    })
                    .collect(),
            });
        }
        Ok(ComparisonTable { controllers, rows })
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["metric".to_string()];
        for c in &self.controllers {
            for col in ["mean", "std", "n", "censored"] {
                h.push(format!("{c}_{col}"));
            }
        }
        h
    }

    pub fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let mut rec = vec![r.label.clone()];
                for s in &r.cells {
                    rec.push(fmt_value(s.mean));
                    rec.push(fmt_value(s.std));
                    rec.push(s.count.to_string());
                    rec.push(s.censored.to_string());
                }
                rec
            })
            .collect()
    }
}

/// Round-trip float formatting; undefined values become empty cells.
pub fn fmt_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Runs every scenario with every controller on the same trial seeds.
pub fn compare(
    specs: &[ScenarioSpec],
    controllers: &mut [&mut dyn Controller],
    trials: usize,
    seed: u64,
) -> Result<(ComparisonTable, Vec<Vec<ScenarioReport>>)> {
    if specs.is_empty() || controllers.is_empty() {
        return Err(Error::Argument("compare needs at least one scenario and controller".into()));
    }
    let mut all = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut per = Vec::with_capacity(controllers.len());
        for c in controllers.iter_mut() {
            per.push(run_scenario(spec, &mut **c, trials, seed)?);
        }
        all.push(per);
    }
    Ok((ComparisonTable::from_reports(&all)?, all))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::OracleModel;

    fn quiet(kind: ScenarioKind) -> ScenarioSpec {
        let mut s = ScenarioSpec::new(kind);
        s.physics = s.physics.noise_free();
        s
    }

    #[test]
    fn kinds_parse() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("xx".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn zero_controller_tt_error_is_curve_amplitude() {
        let mut spec = quiet(ScenarioKind::Tt);
        spec.initial = InitialSpread {
            angle: 0.0,
            rate: 0.0,
            rpm: 0.0,
        };
        let r = run_trial(&spec, &mut ZeroController, 1).unwrap();
        let (a, p, dt) = (0.4, 20.0, 0.02);
        let n = 1000;
        let expect: f64 = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (a * (2.0 * PI * t / p).sin()).hypot(a * (4.0 * PI * t / p).sin())
            })
            .sum::<f64>()
            / n as f64;
        let got = r.value(Metric::TtError).unwrap().value;
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
        assert!(r.success);
        assert!(r.value(Metric::TtCompletionTime).unwrap().value >= p);
    }

    #[test]
    fn zero_controller_ss_never_recovers() {
        let spec = quiet(ScenarioKind::Ss);
        let r = run_trial(&spec, &mut ZeroController, 2).unwrap();
        let c = r.value(Metric::SsCorrectionTime).unwrap();
        assert!(c.censored);
        assert!(!r.success);
        let mut calm = spec.clone();
        calm.ss.disturbances.clear();
        let r = run_trial(&calm, &mut ZeroController, 2).unwrap();
        assert_eq!(r.value(Metric::SsCorrectionTime).unwrap().value, 0.0);
    }

    #[test]
    fn tgr_goal_at_start_has_zero_time_difference() {
        let mut spec = quiet(ScenarioKind::Tgr);
        spec.initial = InitialSpread {
            angle: 0.0,
            rate: 0.0,
            rpm: 0.0,
        };
        spec.tgr.angle_min = 0.0;
        spec.tgr.angle_max = 0.0;
        let r = run_trial(&spec, &mut ZeroController, 3).unwrap();
        let d = r.value(Metric::TgrTimeDifference).unwrap();
        assert!(!d.censored);
        // Already at the goal from the first tick, i.e. a full deadline early.
        assert!(r.success);
        assert_eq!(r.value(Metric::TgrStateDifference).unwrap().value, 0.0);
    }

    #[test]
    fn reachability_check_flags_impossible_goals() {
        let p = PhysicalParams::default();
        let l = ActuationLimits::default();
        let s = VehicleState {
            rpm: 1000.0,
            ..Default::default()
        };
        assert!(max_effort_reachable(&s, 0.0, 0.0, 1.0, 0.1, &p, &l, 0.02).unwrap());
        assert!(max_effort_reachable(&s, 0.2, 0.2, 1.5, 0.1, &p, &l, 0.02).unwrap());
        assert!(!max_effort_reachable(&s, 3.0, 3.0, 0.5, 0.1, &p, &l, 0.02).unwrap());
    }

    #[test]
    fn ramp_airtime_default() {
        let t = ramp_airtime(&RampParams::default()).unwrap();
        assert!((t - 2.0182456547628265).abs() < 1e-12);
    }

    #[test]
    fn ramp_goal_consistent_launch_lands_level() {
        let mut spec = quiet(ScenarioKind::Ramp);
        spec.ramp.launch_pitch = 0.0;
        spec.ramp.launch_rpm = 1000.0;
        spec.ramp.pitch_spread = 0.0;
        spec.ramp.roll_spread = 0.0;
        spec.ramp.rate_spread = 0.0;
        spec.ramp.rpm_spread = 0.0;
        let cfg = PlannerConfig {
            sample_count: 100,
            ..PlannerConfig::default()
        };
        let sched = CostSchedule::default_for(&cfg.limits);
        let model = OracleModel::new(PhysicalParams::default().noise_free(), 0.2).unwrap();
        let mut dom = DomController::new(model, cfg, sched).unwrap();
        let r = run_trial(&spec, &mut dom, 4).unwrap();
        assert!(r.value(Metric::LandingRoll).unwrap().value < 0.05);
        assert!(r.value(Metric::LandingPitch).unwrap().value < 0.05);
    }

    #[test]
    fn runs_are_deterministic_and_tables_complete() {
        let mut spec = quiet(ScenarioKind::Rsc);
        spec.physics = PhysicalParams::default();
        spec.rsc.goals_per_trial = 2;
        let mut pid = PidController::new(PidGains::default(), spec.limits.clone(), 0.02).unwrap();
        let a = run_scenario(&spec, &mut pid, 2, 9).unwrap();
        let b = run_scenario(&spec, &mut pid, 2, 9).unwrap();
        assert_eq!(a, b);
        let mut zero = ZeroController;
        let mut ctrls: Vec<&mut dyn Controller> = vec![&mut pid, &mut zero];
        let (table, _) = compare(&[spec], &mut ctrls, 1, 9).unwrap();
        assert_eq!(table.controllers, vec!["pid", "zero"]);
        assert_eq!(table.rows.len(), 3);
        for row in &table.rows {
            assert_eq!(row.cells.len(), 2);
            for c in &row.cells {
                assert_eq!(c.count, 1);
                assert_eq!(c.std, 0.0);
            }
        }
        assert_eq!(table.header().len(), 9);
    }

    #[test]
    fn spec_validation() {
        let mut s = ScenarioSpec::new(ScenarioKind::Ss);
        s.validate().unwrap();
        s.ss.disturbances[0].time = 50.0;
        assert!(s.validate().is_err());
        let mut s = ScenarioSpec::new(ScenarioKind::Tt);
        s.thresholds.angle = 0.0;
        assert!(s.validate().is_err());
    }
}
