//! Fixed-horizon sampling planner: every cycle draws constant action pairs
//! around the previous best, rolls each to the landing time through a forward
//! model, and keeps the cheapest trajectory under time-varying weights.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;

use crate::dynamics::{integrate, ForwardModel};
use crate::error::{Error, Result};
use crate::types::{
    clamp_action, clamp_action_unchecked, clamp_state, attitude_error, goal_residual, Action, ActuationLimits,
    AngularAccel, GoalState, Trajectory, VehicleState, STATE_DIM,
};

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Model integration interval.
    pub dt: f64,
    pub sample_count: usize,
    pub sigma_rpm_rate: f64,
    pub sigma_steer_rate: f64,
    pub limits: ActuationLimits,
    pub replan_hz: f64,
    /// Largest terminal residual per state dimension for a plan to count as
    /// feasible. Infinite entries are not checked.
    pub feasibility_tolerance: [f64; STATE_DIM],
    pub seed: u64,
}

/// Terminal tolerance: 0.03 rad on roll and pitch, 0.3 rad/s on their rates.
pub const DEFAULT_FEASIBILITY_TOLERANCE: [f64; STATE_DIM] = [
    0.03,
    0.3,
    0.03,
    0.3,
    f64::INFINITY,
    f64::INFINITY,
    f64::INFINITY,
    f64::INFINITY,
];

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            dt: 0.2,
            sample_count: 4000,
            sigma_rpm_rate: 2000.0,
            sigma_steer_rate: 0.2,
            limits: ActuationLimits::default(),
            replan_hz: 50.0,
            feasibility_tolerance: DEFAULT_FEASIBILITY_TOLERANCE,
            seed: 0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("planner dt must be positive, got {}", self.dt));
        }
        if self.sample_count < 1 {
            return bad("sample_count must be at least 1".into());
        }
        if !(self.sigma_rpm_rate > 0.0) || !(self.sigma_steer_rate > 0.0) {
            return bad("sampling sigmas must be positive".into());
        }
        if !(self.replan_hz > 0.0) || !self.replan_hz.is_finite() {
            return bad(format!("replan_hz must be positive, got {}", self.replan_hz));
        }
        if self.feasibility_tolerance.iter().any(|t| !(*t >= 0.0)) {
            return bad("feasibility tolerances must be non-negative".into());
        }
        self.limits.validate()
    }

    pub fn control_period(&self) -> f64 {
        1.0 / self.replan_hz
    }
}

/// Per-dimension weights as piecewise-constant functions of normalized time
/// `u = k / H`, plus residual scale factors.
#[derive(Clone, Debug, PartialEq)]
pub struct CostSchedule {
    /// For each dimension, `(u_breakpoint, weight)` pairs sorted by
    /// breakpoint, the first at `u = 0`. A weight holds until the next
    /// breakpoint.
    pub segments: [Vec<(f64, f64)>; STATE_DIM],
    pub scales: [f64; STATE_DIM],
}

impl CostSchedule {
    /// Pose first, then rates; a light rpm and steer term in the final
    /// quarter.
    pub fn default_for(limits: &ActuationLimits) -> Self {
        use std::f64::consts::PI;
        let angle = vec![(0.0, 1.0), (0.5, 0.3)];
        let rate = vec![(0.0, 0.1), (0.5, 1.0)];
        let late = vec![(0.0, 0.0), (0.75, 0.01)];
        CostSchedule {
            segments: [
                angle.clone(),
                rate.clone(),
                angle.clone(),
                rate.clone(),
                angle,
                rate,
                late.clone(),
                late,
            ],
            scales: [
                1.0 / PI,
                1.0 / (2.0 * PI),
                1.0 / PI,
                1.0 / (2.0 * PI),
                1.0 / PI,
                1.0 / (2.0 * PI),
                1.0 / limits.rpm_max,
                1.0 / limits.steer_max,
            ],
        }
    }

    /// Same weight `w` on every dimension at all times, unit scales.
    pub fn uniform(w: f64) -> Self {
        CostSchedule {
            segments: std::array::from_fn(|_| vec![(0.0, w)]),
            scales: [1.0; STATE_DIM],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.first().map(|s| s.0) != Some(0.0) {
                return Err(Error::Config(format!(
                    "weight schedule for dimension {i} must start at u = 0"
                )));
            }
            for w in seg.windows(2) {
                if !(w[1].0 > w[0].0) {
                    return Err(Error::Config(format!(
                        "weight breakpoints for dimension {i} must increase"
                    )));
                }
            }
            if seg.iter().any(|&(u, w)| !(0.0..=1.0).contains(&u) || !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::Config(format!(
                    "weights for dimension {i} must be finite and non-negative with breakpoints in [0, 1]"
                )));
            }
            if !(self.scales[i] > 0.0) || !self.scales[i].is_finite() {
                return Err(Error::Config(format!("scale for dimension {i} must be positive")));
            }
        }
        let mut points: Vec<f64> = self.segments.iter().flatten().map(|s| s.0).collect();
        points.sort_by(f64::total_cmp);
        for u in points {
            if (0..STATE_DIM).all(|i| self.weight(i, u) == 0.0) {
                return Err(Error::Config(format!("all weights are zero at u = {u}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn weight(&self, dim: usize, u: f64) -> f64 {
        let seg = &self.segments[dim];
        let mut w = seg[0].1;
        for &(b, v) in &seg[1..] {
            if u >= b {
                w = v;
            } else {
                break;
            }
        }
        w
    }

    /// Every weight multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut out = self.clone();
        out.segments
            .iter_mut()
            .flatten()
            .for_each(|s| s.1 *= k);
        out
    }

    /// Weights for all dimensions at each of the `h + 1` steps.
    fn table(&self, h: usize) -> Vec<[f64; STATE_DIM]> {
        (0..=h)
            .map(|k| {
                let u = k as f64 / h as f64;
                std::array::from_fn(|i| self.weight(i, u))
            })
            .collect()
    }
}

/// The target the cost was computed against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GoalKind {
    Original,
    /// Angle targets kept, rate targets relaxed to the best plan's terminal
    /// rates, and rpm only penalized below the goal rpm.
    Alternate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveGoal {
    pub goal: GoalState,
    pub kind: GoalKind,
}

impl EffectiveGoal {
    pub fn original(goal: GoalState) -> Self {
        EffectiveGoal {
            goal,
            kind: GoalKind::Original,
        }
    }

    #[inline]
    fn residual(&self, s: &VehicleState) -> [f64; STATE_DIM] {
        let mut r = goal_residual(s, &self.goal);
        if self.kind == GoalKind::Alternate {
            r[6] = r[6].min(0.0);
        }
        r
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub best_trajectory: Trajectory,
    pub best_action: Action,
    pub best_cost: f64,
    pub best_index: usize,
    pub horizon: usize,
    pub feasible: bool,
    pub effective_goal: EffectiveGoal,
}

/// Steps to the landing time: `max(1, round(T / dt))`, halves rounded up.
pub fn horizon(t_remaining: f64, dt: f64) -> usize {
    // The tolerance keeps exact halves such as 1.9 / 0.2 from rounding down
    // on representation error.
    let x = t_remaining / dt;
    ((x + 0.5 + 1e-9).floor() as usize).max(1)
}

/// Uniform samples around `last_best`, clipped to the rate limits.
pub fn sample_actions<R: Rng + ?Sized>(
    last_best: &Action,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Vec<Action> {
    let rpm = Uniform::new_inclusive(
        last_best.rpm_rate - cfg.sigma_rpm_rate,
        last_best.rpm_rate + cfg.sigma_rpm_rate,
    )
    .expect("finite sampling box");
    let steer = Uniform::new_inclusive(
        last_best.steer_rate - cfg.sigma_steer_rate,
        last_best.steer_rate + cfg.sigma_steer_rate,
    )
    .expect("finite sampling box");
    (0..cfg.sample_count)
        .map(|_| {
            let a = Action::new(rpm.sample(rng), steer.sample(rng));
            cfg.limits.clip_rates(a)
        })
        .collect()
}

/// Holds `sample` for `h` model steps from `s0`, clamping every step.
pub fn rollout<M: ForwardModel + ?Sized>(
    sample: &Action,
    s0: &VehicleState,
    h: usize,
    model: &M,
    limits: &ActuationLimits,
) -> Trajectory {
    let mut traj = Trajectory::new(model.dt(), clamp_state(s0, limits));
    let mut s = *traj.last();
    for _ in 0..h {
        let (next, applied) = model.step_applied(&s, sample, limits);
        traj.push(applied, next);
        s = next;
    }
    traj
}

/// Rolls out every sample in lockstep and returns all states, sample-major:
/// sample `n`, step `k` is at `n * (h + 1) + k`. Bitwise identical to calling
/// [`rollout`] per sample.
pub fn rollout_all<M: ForwardModel + ?Sized>(
    samples: &[Action],
    s0: &VehicleState,
    h: usize,
    model: &M,
    limits: &ActuationLimits,
) -> Vec<VehicleState> {
    const CHUNK: usize = 128;
    let stride = h + 1;
    let dt = model.dt();
    let start = clamp_state(s0, limits);
    let mut out = vec![start; samples.len() * stride];
    out.par_chunks_mut(CHUNK * stride)
        .zip(samples.par_chunks(CHUNK))
        .for_each(|(block, acts)| {
            let n = acts.len();
            let mut states = vec![start; n];
            let mut applied = vec![Action::ZERO; n];
            let mut acc = vec![AngularAccel::default(); n];
            for k in 1..=h {
                for j in 0..n {
                    states[j] = clamp_state(&states[j], limits);
                    applied[j] = clamp_action_unchecked(&acts[j], &states[j], limits, dt);
                }
                model.accel_batch(&states, &applied, &mut acc);
                for j in 0..n {
                    states[j] = integrate(&states[j], &acc[j], &applied[j], dt, limits);
                    block[j * stride + k] = states[j];
                }
            }
        });
    out
}

fn cost_of(states: &[VehicleState], goal: &EffectiveGoal, weights: &[[f64; STATE_DIM]], sched: &CostSchedule) -> f64 {
    let mut total = 0.0;
    for (s, w) in states.iter().zip(weights) {
        let r = goal.residual(s);
        for i in 0..STATE_DIM {
            let x = sched.scales[i] * r[i];
            total += w[i] * x * x;
        }
    }
    total
}

/// Sum over the trajectory of weighted squared scaled residuals, with the
/// weights evaluated at `u = k / H`.
pub fn calculate_cost(traj: &Trajectory, g: &GoalState, sched: &CostSchedule) -> f64 {
    calculate_cost_for(traj, &EffectiveGoal::original(*g), sched)
}

pub fn calculate_cost_for(traj: &Trajectory, g: &EffectiveGoal, sched: &CostSchedule) -> f64 {
    let h = traj.len().saturating_sub(1).max(1);
    cost_of(&traj.states, g, &sched.table(h), sched)
}

/// Index of the smallest finite cost, lowest index on ties.
fn argmin(costs: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in costs.iter().enumerate() {
        if c.is_finite() && best.is_none_or(|b| c < costs[b]) {
            best = Some(i);
        }
    }
    best
}

fn is_feasible(terminal: &VehicleState, goal: &GoalState, tol: &[f64; STATE_DIM]) -> bool {
    let r = goal_residual(terminal, goal);
    r.iter().zip(tol).all(|(r, t)| r.abs() <= *t)
}

fn check_model_dt<M: ForwardModel + ?Sized>(model: &M, cfg: &PlannerConfig) -> Result<()> {
    if (model.dt() - cfg.dt).abs() > 1e-12 * cfg.dt.max(1.0) {
        return Err(Error::Config(format!(
            "planner dt {} does not match the forward model interval {}",
            cfg.dt,
            model.dt()
        )));
    }
    Ok(())
}

/// One planning cycle over a given sample set. [`plan_cycle`] draws the
/// samples; this entry point lets callers supply them directly.
pub fn plan_with_samples<M: ForwardModel + ?Sized>(
    s0: &VehicleState,
    g: &GoalState,
    t_remaining: f64,
    samples: &[Action],
    model: &M,
    cfg: &PlannerConfig,
    sched: &CostSchedule,
) -> Result<PlanResult> {
    if !(t_remaining > 0.0) {
        return Err(Error::PlanningWindowExpired(t_remaining));
    }
    if samples.is_empty() {
        return Err(Error::Argument("no samples to evaluate".into()));
    }
    check_model_dt(model, cfg)?;
    let h = horizon(t_remaining, cfg.dt);
    let stride = h + 1;
    let states = rollout_all(samples, s0, h, model, &cfg.limits);
    let weights = sched.table(h);
    let costs_against = |goal: &EffectiveGoal| -> Vec<f64> {
        states
            .chunks_exact(stride)
            .map(|tr| cost_of(tr, goal, &weights, sched))
            .collect()
    };

    let original = EffectiveGoal::original(*g);
    let costs = costs_against(&original);
    let mut best = argmin(&costs).ok_or_else(|| {
        Error::Domain("every sampled trajectory has a non-finite cost".into())
    })?;
    let terminal = states[best * stride + h];
    let feasible = is_feasible(&terminal, g, &cfg.feasibility_tolerance);
    let mut effective = original;
    let mut best_cost = costs[best];
    if !feasible {
        // Rate targets come from the sample whose terminal pose lands
        // closest to the goal pose.
        let pose_best = states
            .chunks_exact(stride)
            .map(|tr| attitude_error(&tr[h], g.roll, g.pitch))
            .collect::<Vec<_>>();
        let p = argmin(&pose_best).unwrap_or(best);
        let terminal = states[p * stride + h];
        let mut alt = *g;
        alt.0.roll_rate = terminal.roll_rate;
        alt.0.pitch_rate = terminal.pitch_rate;
        alt.0.yaw_rate = terminal.yaw_rate;
        effective = EffectiveGoal {
            goal: alt,
            kind: GoalKind::Alternate,
        };
        let alt_costs = costs_against(&effective);
        if let Some(b) = argmin(&alt_costs) {
            best = b;
            best_cost = alt_costs[b];
        }
    }
    let best_trajectory = rollout(&samples[best], s0, h, model, &cfg.limits);
    let best_action = best_trajectory.actions[0];
    Ok(PlanResult {
        best_trajectory,
        best_action,
        best_cost,
        best_index: best,
        horizon: h,
        feasible,
        effective_goal: effective,
    })
}

/// One planning cycle: sample around `last_best`, roll out, score, select.
#[allow(clippy::too_many_arguments)]
pub fn plan_cycle<M: ForwardModel + ?Sized, R: Rng + ?Sized>(
    s0: &VehicleState,
    g: &GoalState,
    t_remaining: f64,
    last_best: &Action,
    model: &M,
    cfg: &PlannerConfig,
    sched: &CostSchedule,
    rng: &mut R,
) -> Result<PlanResult> {
    if !(t_remaining > 0.0) {
        return Err(Error::PlanningWindowExpired(t_remaining));
    }
    let samples = sample_actions(last_best, cfg, rng);
    plan_with_samples(s0, g, t_remaining, &samples, model, cfg, sched)
}

/// A stateful planner that carries the warm start between cycles.
pub struct DomPlanner<M> {
    pub model: M,
    pub cfg: PlannerConfig,
    pub sched: CostSchedule,
    last_best: Action,
}

impl<M: ForwardModel> DomPlanner<M> {
    pub fn new(model: M, cfg: PlannerConfig, sched: CostSchedule) -> Result<Self> {
        cfg.validate()?;
        sched.validate()?;
        check_model_dt(&model, &cfg)?;
        Ok(DomPlanner {
            model,
            cfg,
            sched,
            last_best: Action::ZERO,
        })
    }

    pub fn last_best(&self) -> Action {
        self.last_best
    }

    /// Forgets the warm start, as at the beginning of a new aerial phase.
    pub fn reset(&mut self) {
        self.last_best = Action::ZERO;
    }

    pub fn plan<R: Rng + ?Sized>(
        &mut self,
        s: &VehicleState,
        g: &GoalState,
        t_remaining: f64,
        rng: &mut R,
    ) -> Result<PlanResult> {
        let r = plan_cycle(s, g, t_remaining, &self.last_best, &self.model, &self.cfg, &self.sched, rng)?;
        self.last_best = r.best_action;
        Ok(r)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub t_remaining: f64,
    pub plan: PlanResult,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlRun {
    /// Realized closed-loop trajectory at the control period.
    pub trajectory: Trajectory,
    pub cycles: Vec<CycleRecord>,
}

/// Number of replanning cycles for a window of `t_total` seconds.
pub fn cycle_count(t_total: f64, replan_hz: f64) -> usize {
    (t_total * replan_hz).round() as usize
}

/// Closed-loop execution: replan every control period against the shrinking
/// time to landing and apply the first action of each plan through `env`.
///
/// `env(state, action, period)` advances the true system by one period.
#[allow(clippy::too_many_arguments)]
pub fn control_loop<M, R, E>(
    s0: &VehicleState,
    g: &GoalState,
    t_total: f64,
    model: &M,
    cfg: &PlannerConfig,
    sched: &CostSchedule,
    mut env: E,
    rng: &mut R,
) -> Result<ControlRun>
where
    M: ForwardModel + ?Sized,
    R: Rng + ?Sized,
    E: FnMut(&VehicleState, &Action, f64) -> Result<VehicleState>,
{
    if !(t_total > 0.0) || !t_total.is_finite() {
        return Err(Error::Argument(format!("t_total must be positive, got {t_total}")));
    }
    cfg.validate()?;
    sched.validate()?;
    let period = cfg.control_period();
    let n = cycle_count(t_total, cfg.replan_hz);
    let mut s = clamp_state(s0, &cfg.limits);
    let mut trajectory = Trajectory::new(period, s);
    let mut cycles = Vec::with_capacity(n);
    let mut last_best = Action::ZERO;
    for cycle in 0..n {
        let t_remaining = t_total - cycle as f64 * period;
        if t_remaining <= 1e-12 {
            break;
        }
        let plan = plan_cycle(&s, g, t_remaining, &last_best, model, cfg, sched, rng)?;
        last_best = plan.best_action;
        let applied = clamp_action(&plan.best_action, &s, &cfg.limits, period)?;
        s = clamp_state(&env(&s, &applied, period)?, &cfg.limits);
        trajectory.push(applied, s);
        cycles.push(CycleRecord {
            cycle,
            t_remaining,
            plan,
        });
    }
    Ok(ControlRun { trajectory, cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{OracleModel, PhysicalParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle() -> OracleModel {
        OracleModel::new(PhysicalParams::default().noise_free(), 0.2).unwrap()
    }

    fn small_cfg(n: usize) -> PlannerConfig {
        PlannerConfig {
            sample_count: n,
            ..PlannerConfig::default()
        }
    }

    #[test]
    fn horizon_examples() {
        assert_eq!(horizon(2.0, 0.2), 10);
        assert_eq!(horizon(0.05, 0.2), 1);
        assert_eq!(horizon(1.9, 0.2), 10);
        assert_eq!(horizon(1.89, 0.2), 9);
        assert_eq!(horizon(0.0, 0.2), 1);
    }

    #[test]
    fn samples_respect_box_and_limits() {
        let cfg = small_cfg(2000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_actions(&Action::new(4900.0, 0.0), &cfg, &mut rng);
        assert_eq!(s.len(), 2000);
        for a in &s {
            assert!(a.rpm_rate >= 2900.0 && a.rpm_rate <= 5000.0);
            assert!(a.steer_rate.abs() <= 0.2);
        }
        assert!(s.iter().any(|a| a.rpm_rate == 5000.0));
        let again = sample_actions(&Action::new(4900.0, 0.0), &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(s, again);
    }

    #[test]
    fn rollout_examples() {
        let m = oracle();
        let l = ActuationLimits::default();
        let rest = VehicleState {
            rpm: 800.0,
            ..Default::default()
        };
        let t = rollout(&Action::ZERO, &rest, 5, &m, &l);
        assert_eq!(t.len(), 6);
        assert!(t.states.iter().all(|s| *s == rest));

        let s0 = VehicleState {
            rpm: 1500.0,
            ..Default::default()
        };
        let t = rollout(&Action::new(5000.0, 0.0), &s0, 4, &m, &l);
        let rpm: Vec<f64> = t.states.iter().map(|s| s.rpm).collect();
        assert_eq!(rpm, vec![1500.0, 1980.0, 1980.0, 1980.0, 1980.0]);
        assert_eq!(t.actions[0].rpm_rate, 2400.0);
        assert_eq!(t.actions[1].rpm_rate, 0.0);
    }

    #[test]
    fn batched_rollouts_match_single() {
        let m = oracle();
        let cfg = small_cfg(300);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = sample_actions(&Action::new(0.0, 1.0), &cfg, &mut rng);
        let s0 = VehicleState {
            roll: 0.3,
            pitch_rate: -0.5,
            rpm: 1200.0,
            steer: 0.5,
            ..Default::default()
        };
        let all = rollout_all(&samples, &s0, 7, &m, &cfg.limits);
        for (n, a) in samples.iter().enumerate() {
            let t = rollout(a, &s0, 7, &m, &cfg.limits);
            assert_eq!(&all[n * 8..(n + 1) * 8], &t.states[..]);
        }
    }

    #[test]
    fn cost_examples() {
        let g = GoalState(VehicleState::default());
        let mut t = Trajectory::new(0.2, VehicleState::default());
        for _ in 0..4 {
            t.push(Action::ZERO, VehicleState::default());
        }
        let sched = CostSchedule::default_for(&ActuationLimits::default());
        assert_eq!(calculate_cost(&t, &g, &sched), 0.0);

        let off = VehicleState {
            roll: 0.25,
            ..Default::default()
        };
        let mut t = Trajectory::new(0.2, off);
        for _ in 0..6 {
            t.push(Action::ZERO, off);
        }
        let mut one = CostSchedule::uniform(0.0);
        one.segments[0] = vec![(0.0, 3.0)];
        let c = calculate_cost(&t, &g, &one);
        assert!((c - 7.0 * 3.0 * 0.0625).abs() < 1e-15);
        assert!((calculate_cost(&t, &g, &one.scaled(2.0)) - 2.0 * c).abs() < 1e-15);
    }

    #[test]
    fn schedule_weights_switch_at_breakpoints() {
        let s = CostSchedule::default_for(&ActuationLimits::default());
        assert_eq!(s.weight(0, 0.0), 1.0);
        assert_eq!(s.weight(0, 0.49), 1.0);
        assert_eq!(s.weight(0, 0.5), 0.3);
        assert_eq!(s.weight(1, 0.2), 0.1);
        assert_eq!(s.weight(1, 0.9), 1.0);
        assert_eq!(s.weight(6, 0.7), 0.0);
        assert_eq!(s.weight(7, 0.75), 0.01);
        s.validate().unwrap();
        let mut bad = s.clone();
        bad.segments[3] = vec![(0.2, 1.0)];
        assert!(bad.validate().is_err());
        assert!(CostSchedule::uniform(0.0).validate().is_err());
    }

    #[test]
    fn staying_put_is_optimal_at_goal() {
        let m = oracle();
        let cfg = small_cfg(4000);
        let sched = CostSchedule::default_for(&cfg.limits);
        let s0 = VehicleState {
            rpm: 1000.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = plan_cycle(&s0, &GoalState(s0), 1.0, &Action::ZERO, &m, &cfg, &sched, &mut rng).unwrap();
        assert_eq!(r.best_trajectory.len(), 6);
        assert!(r.best_cost < 1e-3, "{}", r.best_cost);
        assert!(r.best_action.rpm_rate.abs() < 100.0, "{:?}", r.best_action);
        assert!(r.best_action.steer_rate.abs() < 0.02, "{:?}", r.best_action);
        assert!(r.feasible);
    }

    #[test]
    fn degenerate_sample_set_selects_that_sample() {
        let m = oracle();
        let mut cfg = small_cfg(50);
        cfg.sigma_rpm_rate = 1e-12;
        cfg.sigma_steer_rate = 1e-12;
        let sched = CostSchedule::default_for(&cfg.limits);
        let s0 = VehicleState {
            rpm: 1000.0,
            roll: 0.5,
            ..Default::default()
        };
        let last = Action::new(300.0, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = plan_cycle(&s0, &GoalState::default(), 0.6, &last, &m, &cfg, &sched, &mut rng).unwrap();
        assert!((r.best_action.rpm_rate - 300.0).abs() < 1e-9);
        assert!((r.best_action.steer_rate - 0.4).abs() < 1e-9);
    }

    #[test]
    fn expired_window_rejected() {
        let m = oracle();
        let cfg = small_cfg(5);
        let sched = CostSchedule::default_for(&cfg.limits);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = VehicleState::default();
        let r = plan_cycle(&s, &GoalState(s), 0.0, &Action::ZERO, &m, &cfg, &sched, &mut rng);
        assert!(matches!(r, Err(Error::PlanningWindowExpired(_))));
    }

    #[test]
    fn infeasible_plan_retargets_alternate_goal() {
        let m = oracle();
        let cfg = small_cfg(200);
        let sched = CostSchedule::default_for(&cfg.limits);
        let s0 = VehicleState {
            roll: 2.5,
            roll_rate: 3.0,
            rpm: 100.0,
            ..Default::default()
        };
        let g = GoalState(VehicleState {
            rpm: 1000.0,
            ..Default::default()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = plan_cycle(&s0, &g, 0.4, &Action::ZERO, &m, &cfg, &sched, &mut rng).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.effective_goal.kind, GoalKind::Alternate);
        assert_eq!(r.effective_goal.goal.roll, 0.0);
        assert!(r.best_cost.is_finite());
        let recomputed = calculate_cost_for(&r.best_trajectory, &r.effective_goal, &sched);
        assert_eq!(recomputed, r.best_cost);
    }

    #[test]
    fn control_loop_schedule() {
        let m = oracle();
        let cfg = small_cfg(300);
        let sched = CostSchedule::default_for(&cfg.limits);
        let s0 = VehicleState {
            rpm: 1000.0,
            ..Default::default()
        };
        let p = PhysicalParams::default().noise_free();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let env = |s: &VehicleState, a: &Action, dt: f64| {
            crate::oracle::step::<ChaCha8Rng>(s, a, dt, &p, &cfg.limits, None)
        };
        let run = control_loop(&s0, &GoalState(s0), 2.0, &m, &cfg, &sched, env, &mut rng).unwrap();
        assert_eq!(run.cycles.len(), 100);
        assert_eq!(run.trajectory.len(), 101);
        assert_eq!(run.cycles[0].plan.horizon, 10);
        assert_eq!(run.cycles.last().unwrap().plan.horizon, 1);
        for w in run.cycles.windows(2) {
            assert!(w[1].plan.horizon <= w[0].plan.horizon);
        }
        let end = run.trajectory.last();
        assert!(end.roll.abs() < 0.05 && end.pitch.abs() < 0.05, "{end:?}");
    }
}
