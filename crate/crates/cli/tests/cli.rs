use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn inair(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inair"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn inair")
}

#[test]
fn gen_data_row_count_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let out = inair(dir.path(), &["gen-data", "--duration", "60", "--seed", "1", "--out", "d.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# inair gen-data --duration 60 --seed 1 --out d.csv | config sha256 "));
    assert!(lines.next().unwrap().starts_with("roll,roll_rate,"));
    assert_eq!(lines.count(), 3000);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(inair(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(inair(dir.path(), &["--workers", "0", "defaults"]).status.code(), Some(2));
    let out = inair(dir.path(), &["scenario", "--name", "loop", "--controller", "pid", "--out", "s"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_3_with_location() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.ini"), "[planner]\nsample_count = many\n").unwrap();
    let out = inair(dir.path(), &["gen-data", "--config", "run.ini", "--duration", "1", "--out", "d.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.ini:2"));
}

#[test]
fn missing_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = inair(dir.path(), &["train", "--data", "absent.csv", "--out", "m.txt"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn defaults_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = inair(dir.path(), &["defaults"]);
    assert!(out.status.success());
    fs::write(dir.path().join("all.ini"), &out.stdout).unwrap();
    let out = inair(dir.path(), &["gen-data", "--config", "all.ini", "--duration", "1", "--out", "d.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
