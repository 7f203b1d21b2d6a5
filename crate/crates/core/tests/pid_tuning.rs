//! Grid search that produced `PidGains::default()`. Run with
//! `cargo test -p inair --test pid_tuning -- --ignored --nocapture`.

use inair::pid::{LoopGains, PidGains};
use inair::scenario::{run_scenario, Metric, PidController, ScenarioKind, ScenarioSpec};

const KP: [f64; 7] = [10.0, 20.0, 50.0, 100.0, 200.0, 300.0, 500.0];
const KD: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
const TRIALS: usize = 3;
const SEED: u64 = 2024;

fn loop_gains(kp: f64, kd: f64, sign: f64) -> LoopGains {
    LoopGains {
        kp: sign * kp,
        ki: 0.0,
        kd: sign * kd,
        integral_limit: 1.0,
    }
}

fn tt_error(gains: PidGains, spec: &ScenarioSpec) -> f64 {
    let mut pid = PidController::new(gains, spec.limits.clone(), spec.control_period()).unwrap();
    let report = run_scenario(spec, &mut pid, TRIALS, SEED).unwrap();
    let s = report.summary(Metric::TtError);
    // Trials that end stuck or unsettled count against the candidate.
    s.mean + (TRIALS - report.successes()) as f64
}

#[test]
#[ignore]
fn grid_search_tt_error() {
    let spec = ScenarioSpec::new(ScenarioKind::Tt);
    let mut best = (f64::INFINITY, PidGains::default());
    for &pkp in &KP {
        for &pkd in &KD {
            for &rkp in &KP {
                for &rkd in &KD {
                    let g = PidGains {
                        pitch: loop_gains(pkp, pkd, -1.0),
                        roll: loop_gains(rkp, rkd, 1.0),
                    };
                    let e = tt_error(g, &spec);
                    if e < best.0 {
                        best = (e, g);
                    }
                }
            }
        }
    }
    println!("best score {} with {:?}", best.0, best.1);
    let current = tt_error(PidGains::default(), &spec);
    println!("default gains score {current}");
    assert!(current <= best.0 + 1e-12, "defaults are not the grid optimum");
}
