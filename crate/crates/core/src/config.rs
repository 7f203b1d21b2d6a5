//! Run configuration read from a flat INI file.
//!
//! ```ini
//! # comments start with '#' or ';'; ' #' also starts a trailing comment
//! [physics]
//! i_fw = 0.05
//! [cost]
//! weight.roll = 0:1.0 0.5:0.3
//! ```
//!
//! Every key is optional and falls back to the default listed in
//! [`RunConfig::documented_defaults`]. Unknown sections and keys are errors
//! naming the file, line and key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::oracle::PhysicalParams;
use crate::pid::{LoopGains, PidGains};
use crate::planner::{CostSchedule, PlannerConfig};
use crate::scenario::{Axis, Disturbance, ScenarioKind, ScenarioSpec};
use crate::training::TrainConfig;
use crate::types::{ActuationLimits, STATE_COLUMNS, STATE_DIM};

/// Which forward model the planner uses in `compare`.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelChoice {
    Oracle,
    Phli(PathBuf),
}

impl ModelChoice {
    pub fn parse(s: &str) -> Self {
        if s == "oracle" {
            ModelChoice::Oracle
        } else {
            ModelChoice::Phli(PathBuf::from(s))
        }
    }
}

/// Everything a command may need. The scenario fields hold every
/// scenario's parameters; the kind is chosen per run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub physics: PhysicalParams,
    pub limits: ActuationLimits,
    pub planner: PlannerConfig,
    pub cost: CostSchedule,
    pub pid: PidGains,
    pub scenario: ScenarioSpec,
    pub train: TrainConfig,
    /// Scenarios run by `compare`, in table order.
    pub compare_scenarios: Vec<ScenarioKind>,
    /// Planner model for `compare`.
    pub compare_model: ModelChoice,
    /// Hex SHA-256 of the file contents, or of the empty string for defaults.
    pub hash: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let limits = ActuationLimits::default();
        let scenario = ScenarioSpec::new(ScenarioKind::Tt);
        RunConfig {
            physics: PhysicalParams::default(),
            planner: PlannerConfig::default(),
            cost: CostSchedule::default_for(&limits),
            pid: PidGains::default(),
            scenario,
            train: TrainConfig::default(),
            compare_scenarios: ScenarioKind::ALL.to_vec(),
            compare_model: ModelChoice::Oracle,
            hash: sha256_hex(b""),
            limits,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Parsed `section -> key -> value` with line numbers for diagnostics.
struct Ini {
    file: PathBuf,
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Ini {
    fn parse(file: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, key: &str, message: &str| Error::Parse {
            file: file.to_path_buf(),
            line,
            key: key.to_string(),
            message: message.to_string(),
        };
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            // A '#' preceded by whitespace starts a trailing comment.
            let l = match raw.find(" #").or_else(|| raw.find("\t#")) {
                Some(i) => raw[..i].trim(),
                None => raw.trim(),
            };
            if l.is_empty() || l.starts_with('#') || l.starts_with(';') {
                continue;
            }
            if let Some(rest) = l.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err(line, l, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(err(line, l, "empty section name"));
                }
                if !KNOWN_SECTIONS.contains(&name) {
                    return Err(err(line, name, "unknown section"));
                }
                sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| err(line, l, "expected `key = value`"))?;
            let k = k.trim();
            let sec = current
                .as_ref()
                .ok_or_else(|| err(line, k, "key outside of any section"))?;
            let entries = sections.get_mut(sec).expect("section inserted");
            let full = format!("{sec}.{k}");
            if entries.contains_key(k) {
                return Err(err(line, &full, "duplicate key"));
            }
            entries.insert(
                k.to_string(),
                Entry {
                    line,
                    value: v.trim().to_string(),
                    used: false,
                },
            );
        }
        Ok(Ini {
            file: file.to_path_buf(),
            sections,
        })
    }

    fn error(&self, line: usize, key: String, message: String) -> Error {
        Error::Parse {
            file: self.file.clone(),
            line,
            key,
            message,
        }
    }

    /// Applies `parse` to `section.key` if present.
    fn with<T>(&mut self, section: &str, key: &str, parse: impl FnOnce(&str) -> Result<T, String>) -> Result<Option<T>> {
        let Some(e) = self.sections.get_mut(section).and_then(|s| s.get_mut(key)) else {
            return Ok(None);
        };
        e.used = true;
        let (line, value) = (e.line, e.value.clone());
        parse(&value)
            .map(Some)
            .map_err(|m| self.error(line, format!("{section}.{key}"), m))
    }

    fn f64(&mut self, section: &str, key: &str, slot: &mut f64) -> Result<()> {
        if let Some(v) = self.with(section, key, parse_f64)? {
            *slot = v;
        }
        Ok(())
    }

    fn usize(&mut self, section: &str, key: &str, slot: &mut usize) -> Result<()> {
        if let Some(v) = self.with(section, key, |s| s.parse::<usize>().map_err(|e| format!("`{s}`: {e}")))? {
            *slot = v;
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        for (sec, entries) in &self.sections {
            if let Some((k, e)) = entries.iter().filter(|(_, e)| !e.used).min_by_key(|(_, e)| e.line) {
                return Err(self.error(e.line, format!("{sec}.{k}"), "unknown key".into()));
            }
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: [&str; 13] = [
    "physics",
    "limits",
    "planner",
    "cost",
    "pid",
    "train",
    "scenario",
    "scenario.tt",
    "scenario.rsc",
    "scenario.tgr",
    "scenario.ss",
    "scenario.ramp",
    "compare",
];

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(v)
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split_whitespace().map(parse_f64).collect()
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("`{s}`: expected `a,b`"))?;
    Ok((parse_f64(a.trim())?, parse_f64(b.trim())?))
}

/// `u:w u:w ...` breakpoint lists.
fn parse_segments(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split_whitespace()
        .map(|tok| {
            let (u, w) = tok.split_once(':').ok_or_else(|| format!("`{tok}`: expected `u:weight`"))?;
            Ok((parse_f64(u)?, parse_f64(w)?))
        })
        .collect()
}

/// `time:axis:impulse ...`
fn parse_disturbances(s: &str) -> Result<Vec<Disturbance>, String> {
    s.split_whitespace()
        .map(|tok| {
            let parts: Vec<&str> = tok.split(':').collect();
            if parts.len() != 3 {
                return Err(format!("`{tok}`: expected `time:axis:impulse`"));
            }
            Ok(Disturbance {
                time: parse_f64(parts[0])?,
                axis: parts[1].parse::<Axis>().map_err(|e| e.to_string())?,
                impulse: parse_f64(parts[2])?,
            })
        })
        .collect()
}

impl RunConfig {
    /// Defaults overridden by the file at `path`, validated.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse {
            file: path.to_path_buf(),
            line: 0,
            key: String::new(),
            message: "file is not UTF-8".into(),
        })?;
        let mut cfg = Self::from_ini(path, &text)?;
        cfg.hash = sha256_hex(&bytes);
        Ok(cfg)
    }

    /// Parses INI text; `path` is used only in error messages.
    pub fn from_ini(path: &Path, text: &str) -> Result<Self> {
        let mut ini = Ini::parse(path, text)?;
        let mut c = RunConfig::default();
        c.hash = sha256_hex(text.as_bytes());

        let p = &mut c.physics;
        ini.f64("physics", "i_fw", &mut p.i_fw)?;
        ini.f64("physics", "i_rw", &mut p.i_rw)?;
        ini.f64("physics", "i_chassis_roll", &mut p.i_chassis_roll)?;
        ini.f64("physics", "i_chassis_pitch", &mut p.i_chassis_pitch)?;
        ini.f64("physics", "yaw_noise_std", &mut p.yaw_noise_std)?;
        ini.f64("physics", "gravity", &mut p.gravity)?;

        let l = &mut c.limits;
        ini.f64("limits", "rpm_min", &mut l.rpm_min)?;
        ini.f64("limits", "rpm_max", &mut l.rpm_max)?;
        ini.f64("limits", "rpm_rate_min", &mut l.rpm_rate_min)?;
        ini.f64("limits", "rpm_rate_max", &mut l.rpm_rate_max)?;
        ini.f64("limits", "steer_min", &mut l.steer_min)?;
        ini.f64("limits", "steer_max", &mut l.steer_max)?;
        ini.f64("limits", "steer_rate_min", &mut l.steer_rate_min)?;
        ini.f64("limits", "steer_rate_max", &mut l.steer_rate_max)?;

        // Scales default to the (possibly overridden) limits.
        c.cost = CostSchedule::default_for(&c.limits);

        let pl = &mut c.planner;
        pl.limits = c.limits.clone();
        ini.f64("planner", "dt", &mut pl.dt)?;
        ini.usize("planner", "sample_count", &mut pl.sample_count)?;
        ini.f64("planner", "sigma_rpm_rate", &mut pl.sigma_rpm_rate)?;
        ini.f64("planner", "sigma_steer_rate", &mut pl.sigma_steer_rate)?;
        ini.f64("planner", "replan_hz", &mut pl.replan_hz)?;
        if let Some(v) = ini.with("planner", "feasibility_tolerance", |s| {
            let v = parse_list(s)?;
            <[f64; STATE_DIM]>::try_from(v).map_err(|v| format!("expected {STATE_DIM} values, got {}", v.len()))
        })? {
            pl.feasibility_tolerance = v;
        }

        for (i, name) in STATE_COLUMNS.iter().enumerate() {
            if let Some(seg) = ini.with("cost", &format!("weight.{name}"), parse_segments)? {
                c.cost.segments[i] = seg;
            }
            ini.f64("cost", &format!("scale.{name}"), &mut c.cost.scales[i])?;
        }

        for (name, g) in [("pitch", &mut c.pid.pitch), ("roll", &mut c.pid.roll)] {
            let LoopGains {
                kp,
                ki,
                kd,
                integral_limit,
            } = g;
            ini.f64("pid", &format!("{name}.kp"), kp)?;
            ini.f64("pid", &format!("{name}.ki"), ki)?;
            ini.f64("pid", &format!("{name}.kd"), kd)?;
            ini.f64("pid", &format!("{name}.integral_limit"), integral_limit)?;
        }

        let t = &mut c.train;
        ini.usize("train", "epochs", &mut t.epochs)?;
        ini.usize("train", "batch_size", &mut t.batch_size)?;
        ini.f64("train", "learning_rate", &mut t.learning_rate)?;
        ini.f64("train", "momentum", &mut t.momentum)?;
        ini.f64("train", "val_fraction", &mut t.val_fraction)?;
        ini.f64("train", "model_dt", &mut t.model_dt)?;
        if let Some(h) = ini.with("train", "hidden", |s| {
            s.split_whitespace()
                .map(|x| x.parse::<usize>().map_err(|_| format!("`{x}` is not a layer width")))
                .collect::<Result<Vec<_>, _>>()
                .and_then(|v| <[usize; 3]>::try_from(v).map_err(|v| format!("expected 3 hidden widths, got {}", v.len())))
        })? {
            t.hidden = h;
        }

        let s = &mut c.scenario;
        s.physics = c.physics.clone();
        s.limits = c.limits.clone();
        ini.f64("scenario", "angle_threshold", &mut s.thresholds.angle)?;
        ini.f64("scenario", "rate_threshold", &mut s.thresholds.rate)?;
        ini.f64("scenario", "stuck_dwell", &mut s.thresholds.stuck_dwell)?;
        ini.f64("scenario", "control_hz", &mut s.control_hz)?;
        ini.f64("scenario", "goal_rpm", &mut s.goal_rpm)?;
        ini.f64("scenario", "init_angle_spread", &mut s.initial.angle)?;
        ini.f64("scenario", "init_rate_spread", &mut s.initial.rate)?;
        ini.f64("scenario", "init_rpm_spread", &mut s.initial.rpm)?;

        ini.f64("scenario.tt", "amplitude", &mut s.tt.amplitude)?;
        ini.f64("scenario.tt", "period", &mut s.tt.period)?;
        ini.f64("scenario.tt", "settle", &mut s.tt.settle)?;
        ini.f64("scenario.tt", "window", &mut s.tt.window)?;

        if let Some(v) = ini.with("scenario.rsc", "targets", |x| x.split_whitespace().map(parse_pair).collect())? {
            s.rsc.targets = v;
        }
        ini.usize("scenario.rsc", "goals_per_trial", &mut s.rsc.goals_per_trial)?;
        ini.f64("scenario.rsc", "hold", &mut s.rsc.hold)?;
        ini.f64("scenario.rsc", "timeout", &mut s.rsc.timeout)?;
        ini.f64("scenario.rsc", "window", &mut s.rsc.window)?;

        ini.f64("scenario.tgr", "angle_min", &mut s.tgr.angle_min)?;
        ini.f64("scenario.tgr", "angle_max", &mut s.tgr.angle_max)?;
        ini.f64("scenario.tgr", "time_min", &mut s.tgr.time_min)?;
        ini.f64("scenario.tgr", "time_max", &mut s.tgr.time_max)?;
        ini.usize("scenario.tgr", "max_draws", &mut s.tgr.max_draws)?;

        if let Some(v) = ini.with("scenario.ss", "target", parse_pair)? {
            s.ss.target = v;
        }
        ini.f64("scenario.ss", "approach", &mut s.ss.approach)?;
        ini.f64("scenario.ss", "hold", &mut s.ss.hold)?;
        if let Some(v) = ini.with("scenario.ss", "disturbances", parse_disturbances)? {
            s.ss.disturbances = v;
        }
        ini.f64("scenario.ss", "reaction_floor", &mut s.ss.reaction_floor)?;
        ini.f64("scenario.ss", "window", &mut s.ss.window)?;

        let r = &mut s.ramp;
        ini.f64("scenario.ramp", "speed", &mut r.speed)?;
        ini.f64("scenario.ramp", "angle", &mut r.angle)?;
        ini.f64("scenario.ramp", "height_delta", &mut r.height_delta)?;
        ini.f64("scenario.ramp", "launch_pitch", &mut r.launch_pitch)?;
        ini.f64("scenario.ramp", "launch_rpm", &mut r.launch_rpm)?;
        ini.f64("scenario.ramp", "pitch_spread", &mut r.pitch_spread)?;
        ini.f64("scenario.ramp", "roll_spread", &mut r.roll_spread)?;
        ini.f64("scenario.ramp", "rate_spread", &mut r.rate_spread)?;
        ini.f64("scenario.ramp", "rpm_spread", &mut r.rpm_spread)?;
        ini.usize("scenario.ramp", "max_draws", &mut r.max_draws)?;
        r.gravity = c.physics.gravity;

        if let Some(v) = ini.with("compare", "scenarios", |x| {
            x.split_whitespace()
                .map(|k| k.parse::<ScenarioKind>().map_err(|e| e.to_string()))
                .collect::<Result<Vec<_>, _>>()
        })? {
            c.compare_scenarios = v;
        }
        if let Some(v) = ini.with("compare", "model", |x| Ok(ModelChoice::parse(x)))? {
            c.compare_model = v;
        }

        ini.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.limits.validate()?;
        self.planner.validate()?;
        self.cost.validate()?;
        self.pid.validate()?;
        self.train.validate()?;
        self.scenario.validate()?;
        if self.compare_scenarios.is_empty() {
            return Err(Error::Config("compare.scenarios is empty".into()));
        }
        Ok(())
    }

    /// The scenario parameters for one kind.
    pub fn scenario_spec(&self, kind: ScenarioKind) -> ScenarioSpec {
        ScenarioSpec {
            kind,
            ..self.scenario.clone()
        }
    }

    /// A complete configuration file listing every key with its default
    /// value, unit and meaning.
    pub fn documented_defaults() -> String {
        DEFAULTS_INI.to_string()
    }
}

const DEFAULTS_INI: &str = r#"# Every key is optional; the values below are the defaults.

[physics]
i_fw = 0.05              # front wheel spin inertia, kg m^2
i_rw = 0.05              # rear wheel spin inertia, kg m^2
i_chassis_roll = 0.8     # chassis roll inertia, kg m^2
i_chassis_pitch = 2.0    # chassis pitch inertia, kg m^2
yaw_noise_std = 0.05     # yaw acceleration disturbance std, rad/s^2
gravity = 9.81           # m/s^2

[limits]
rpm_min = 0              # wheel speed, rpm
rpm_max = 1980
rpm_rate_min = -5000     # rpm/s
rpm_rate_max = 5000
steer_min = -0.65        # rad
steer_max = 0.65
steer_rate_min = -6.5    # rad/s
steer_rate_max = 6.5

[planner]
dt = 0.2                 # model integration step, s
sample_count = 4000      # candidate action pairs per cycle
sigma_rpm_rate = 2000    # half-width of the rpm-rate sampling box, rpm/s
sigma_steer_rate = 0.2   # half-width of the steering-rate sampling box, rad/s
replan_hz = 50           # replanning frequency, Hz
# terminal residual bounds per state dimension (inf = unchecked)
feasibility_tolerance = 0.03 0.3 0.03 0.3 inf inf inf inf

[cost]
# weight.<dim> = u:w ... piecewise-constant weight over normalized time u = k/H
weight.roll = 0:1 0.5:0.3
weight.roll_rate = 0:0.1 0.5:1
weight.pitch = 0:1 0.5:0.3
weight.pitch_rate = 0:0.1 0.5:1
weight.yaw = 0:1 0.5:0.3
weight.yaw_rate = 0:0.1 0.5:1
weight.rpm = 0:0 0.75:0.01
weight.steer = 0:0 0.75:0.01
# scale.<dim> multiplies the residual before squaring
scale.roll = 0.3183098861837907          # 1/pi
scale.roll_rate = 0.15915494309189535    # 1/(2 pi)
scale.pitch = 0.3183098861837907
scale.pitch_rate = 0.15915494309189535
scale.yaw = 0.3183098861837907
scale.yaw_rate = 0.15915494309189535
scale.rpm = 0.000505050505050505         # 1/rpm_max
scale.steer = 1.5384615384615383         # 1/steer_max

[pid]
pitch.kp = -500          # pitch error (rad) to rpm rate
pitch.ki = 0
pitch.kd = -100
pitch.integral_limit = 1
roll.kp = 20             # roll error (rad) to steering rate
roll.ki = 0
roll.kd = 2
roll.integral_limit = 1

[train]
epochs = 100
batch_size = 64
learning_rate = 0.03
momentum = 0.9
val_fraction = 0.15
hidden = 64 64 64        # hidden layer widths
model_dt = 0.2           # integration step stored in the model, s

[scenario]
angle_threshold = 0.1    # reach threshold on the roll/pitch residual, rad
rate_threshold = 0.3     # reach threshold on the roll/pitch rate residual, rad/s
stuck_dwell = 2.0        # longest tolerated saturation, s
control_hz = 50
goal_rpm = 1000
init_angle_spread = 0.05 # uniform half-widths of the initial state
init_rate_spread = 0.1
init_rpm_spread = 100

[scenario.tt]
amplitude = 0.4          # rad
period = 20              # s
settle = 5               # s allowed to settle after the loop
window = 0.4             # planner window, s

[scenario.rsc]
targets = 0.3,0.3 0.3,-0.3 -0.3,0.3 -0.3,-0.3
goals_per_trial = 4
hold = 2                 # s
timeout = 6              # s
window = 1               # s

[scenario.tgr]
angle_min = 0.15         # rad
angle_max = 0.35
time_min = 1             # s
time_max = 2
max_draws = 50

[scenario.ss]
target = 0.2,-0.2
approach = 2             # s
hold = 10                # s
disturbances = 2:roll:0.5 5:pitch:0.5 8:roll:0.5   # time into hold : axis : rad/s
reaction_floor = 0.02    # normalized action change counted as a reaction
window = 1               # s

[scenario.ramp]
speed = 14               # m/s
angle = 0.7853981633974483  # rad
height_delta = 0         # landing minus take-off height, m
launch_pitch = 0.7853981633974483
launch_rpm = 1300
pitch_spread = 0.05
roll_spread = 0.1
rate_spread = 0.5
rpm_spread = 100
max_draws = 50

[compare]
scenarios = tt rsc tgr ss ramp
model = oracle           # or a path to a trained model file
"#;
