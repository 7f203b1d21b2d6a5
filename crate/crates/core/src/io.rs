//! CSV files exchanged between commands. Every file starts with one
//! `# ...` provenance comment; readers skip comment lines. Floats are
//! written in shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::planner::CycleRecord;
use crate::scenario::{fmt_value, ComparisonTable, Metric, ScenarioReport, TraceRow};
use crate::training::{EpochLoss, Sample};
use crate::types::{Action, AngularAccel, Trajectory, VehicleState, STATE_COLUMNS, STATE_DIM};

pub const DATASET_COLUMNS: [&str; 13] = [
    "roll",
    "roll_rate",
    "pitch",
    "pitch_rate",
    "yaw",
    "yaw_rate",
    "rpm",
    "steer",
    "rpm_rate_cmd",
    "steer_rate_cmd",
    "roll_acc",
    "pitch_acc",
    "yaw_acc",
];

/// The provenance comment: invocation and configuration hash.
pub fn provenance(invocation: &str, config_hash: &str) -> String {
    format!("# {invocation} | config sha256 {config_hash}")
}

/// Writes `comment`, then the CSV produced by `body`.
fn write_csv(
    path: &Path,
    comment: &str,
    body: impl FnOnce(&mut csv::Writer<&mut BufWriter<File>>) -> csv::Result<()>,
) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", comment.trim_end()).map_err(io_err)?;
    {
        let mut w = csv::Writer::from_writer(&mut out);
        body(&mut w).map_err(|e| csv_to_io(path, e))?;
        w.flush().map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn csv_to_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn state_fields(s: &VehicleState) -> impl Iterator<Item = String> {
    s.to_array().into_iter().map(f)
}

pub fn write_dataset(path: &Path, comment: &str, samples: &[Sample]) -> Result<()> {
    write_csv(path, comment, |w| {
        w.write_record(DATASET_COLUMNS)?;
        for s in samples {
            let rec = state_fields(&s.state)
                .chain([f(s.action.rpm_rate), f(s.action.steer_rate)])
                .chain(s.label.to_array().map(f));
            w.write_record(rec)?;
        }
        Ok(())
    })
}

/// Reads a dataset, checking the header and every value. Errors name the
/// file, line and column.
pub fn read_dataset(path: &Path) -> Result<Vec<Sample>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(std::io::BufReader::new(file));
    let parse_err = |line: u64, key: &str, message: String| Error::Parse {
        file: path.to_path_buf(),
        line: line as usize,
        key: key.to_string(),
        message,
    };
    let headers = r
        .headers()
        .map_err(|e| parse_err(e.position().map_or(1, |p| p.line()), "header", e.to_string()))?
        .clone();
    if headers.iter().ne(DATASET_COLUMNS.iter().copied()) {
        return Err(parse_err(
            1,
            "header",
            format!("expected `{}`", DATASET_COLUMNS.join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), "record", e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 13];
        for (i, (field, name)) in rec.iter().zip(DATASET_COLUMNS).enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| parse_err(line, name, format!("`{field}` is not a number")))?;
            if !x.is_finite() {
                return Err(parse_err(line, name, format!("`{field}` is not finite")));
            }
            v[i] = x;
        }
        let mut st = [0.0; STATE_DIM];
        st.copy_from_slice(&v[..STATE_DIM]);
        let state = VehicleState::from_array(st).map_err(|e| parse_err(line, "state", e.to_string()))?;
        out.push(Sample {
            state,
            action: Action::new(v[8], v[9]),
            label: AngularAccel::new(v[10], v[11], v[12]),
        });
    }
    if out.is_empty() {
        return Err(parse_err(1, "records", "dataset has no rows".into()));
    }
    Ok(out)
}

pub fn write_loss_history(path: &Path, comment: &str, history: &[EpochLoss]) -> Result<()> {
    write_csv(path, comment, |w| {
        w.write_record(["epoch", "train_mse", "val_mse"])?;
        for h in history {
            w.write_record([h.epoch.to_string(), f(h.train_mse), f(h.val_mse)])?;
        }
        Ok(())
    })
}

fn trajectory_header() -> Vec<&'static str> {
    let mut h = vec!["t"];
    h.extend(STATE_COLUMNS);
    h.extend(["rpm_rate", "steer_rate"]);
    h
}

/// State rows with the action applied from each state; the final state has
/// no action and its action cells are empty.
pub fn write_trajectory(path: &Path, comment: &str, traj: &Trajectory) -> Result<()> {
    write_csv(path, comment, |w| {
        w.write_record(trajectory_header())?;
        for (k, s) in traj.states.iter().enumerate() {
            let (ar, asr) = match traj.actions.get(k) {
                Some(a) => (f(a.rpm_rate), f(a.steer_rate)),
                None => (String::new(), String::new()),
            };
            let rec = std::iter::once(format!("{:.6}", k as f64 * traj.dt))
                .chain(state_fields(s))
                .chain([ar, asr]);
            w.write_record(rec)?;
        }
        Ok(())
    })
}

/// Scenario traces: trajectory columns followed by the goal being tracked.
pub fn write_trace(path: &Path, comment: &str, trace: &[TraceRow]) -> Result<()> {
    write_csv(path, comment, |w| {
        let mut h = trajectory_header();
        h.extend(["goal_roll", "goal_roll_rate", "goal_pitch", "goal_pitch_rate"]);
        w.write_record(h)?;
        let last = trace.len().saturating_sub(1);
        for (k, r) in trace.iter().enumerate() {
            let (ar, asr) = if k == last {
                (String::new(), String::new())
            } else {
                (f(r.action.rpm_rate), f(r.action.steer_rate))
            };
            let rec = std::iter::once(format!("{:.6}", r.t))
                .chain(state_fields(&r.state))
                .chain([ar, asr])
                .chain([r.goal.roll, r.goal.roll_rate, r.goal.pitch, r.goal.pitch_rate].map(f));
            w.write_record(rec)?;
        }
        Ok(())
    })
}

pub fn write_cycle_log(path: &Path, comment: &str, cycles: &[CycleRecord]) -> Result<()> {
    write_csv(path, comment, |w| {
        w.write_record([
            "cycle",
            "t_remaining",
            "H",
            "best_rpm_rate",
            "best_steer_rate",
            "best_cost",
            "feasible",
        ])?;
        for c in cycles {
            w.write_record([
                c.cycle.to_string(),
                f(c.t_remaining),
                c.plan.horizon.to_string(),
                f(c.plan.best_action.rpm_rate),
                f(c.plan.best_action.steer_rate),
                f(c.plan.best_cost),
                c.plan.feasible.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Summary rows named like the comparison table, plus the success rate.
pub fn write_metrics(path: &Path, comment: &str, report: &ScenarioReport) -> Result<()> {
    let table = ComparisonTable::from_reports(std::slice::from_ref(&vec![report.clone()]))?;
    write_csv(path, comment, |w| {
        w.write_record(["metric", "mean", "std", "n", "censored"])?;
        for row in &table.rows {
            let s = &row.cells[0];
            w.write_record([
                row.label.clone(),
                fmt_value(s.mean),
                fmt_value(s.std),
                s.count.to_string(),
                s.censored.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// One row per trial with every metric and its censoring flag.
pub fn write_trials(path: &Path, comment: &str, report: &ScenarioReport) -> Result<()> {
    let metrics = Metric::for_kind(report.kind);
    write_csv(path, comment, |w| {
        let mut h = vec!["trial".to_string(), "seed".into(), "success".into()];
        for m in metrics {
            h.push(m.key().into());
            h.push(format!("{}_censored", m.key()));
        }
        w.write_record(&h)?;
        for t in &report.trials {
            let mut rec = vec![t.trial.to_string(), t.seed.to_string(), t.success.to_string()];
            for &m in metrics {
                match t.value(m) {
                    Some(x) => {
                        rec.push(f(x.value));
                        rec.push(x.censored.to_string());
                    }
                    None => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

pub fn write_table(path: &Path, comment: &str, table: &ComparisonTable) -> Result<()> {
    write_csv(path, comment, |w| {
        w.write_record(table.header())?;
        for rec in table.records() {
            w.write_record(&rec)?;
        }
        Ok(())
    })
}

/// Plain key/value report lines (`key,value`), used for evaluation output.
pub fn write_key_values(path: &Path, comment: &str, rows: &[(String, f64)]) -> Result<()> {
    write_csv(path, comment, |w| {
        w.write_record(["key", "value"])?;
        for (k, v) in rows {
            w.write_record([k.clone(), f(*v)])?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(i: f64) -> Sample {
        Sample {
            state: VehicleState {
                roll: 0.1 * i,
                roll_rate: -0.2,
                pitch: 0.3,
                pitch_rate: 1.0 / 3.0,
                yaw: -1.0,
                yaw_rate: 0.0,
                rpm: 1234.5,
                steer: 0.01,
            },
            action: Action::new(100.0, -0.5),
            label: AngularAccel::new(1e-17, 2.5, -3.0),
        }
    }

    #[test]
    fn dataset_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let data: Vec<Sample> = (0..5).map(|i| sample(i as f64)).collect();
        write_dataset(&p, &provenance("inair gen-data", "abc"), &data).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# inair gen-data | config sha256 abc\n"));
        assert_eq!(text.lines().nth(1).unwrap(), DATASET_COLUMNS.join(","));
        assert_eq!(read_dataset(&p).unwrap(), data);
    }

    #[test]
    fn bad_dataset_cell_names_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        write_dataset(&p, "# x", &[sample(0.0), sample(1.0)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap().replacen("1234.5", "12x", 2);
        std::fs::write(&p, text).unwrap();
        let e = read_dataset(&p).unwrap_err().to_string();
        assert!(e.contains(":3:") && e.contains("rpm"), "{e}");

        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(read_dataset(&p).unwrap_err().to_string().contains("header"));
    }

    #[test]
    fn trajectory_rows_and_time_format() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let mut t = Trajectory::new(0.02, VehicleState::default());
        t.push(Action::new(1.0, 2.0), VehicleState::default());
        write_trajectory(&p, "# x", &t).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "t,roll,roll_rate,pitch,pitch_rate,yaw,yaw_rate,rpm,steer,rpm_rate,steer_rate");
        assert_eq!(lines[2], "0.000000,0,0,0,0,0,0,0,0,1,2");
        assert_eq!(lines[3], "0.020000,0,0,0,0,0,0,0,0,,");
    }
}
