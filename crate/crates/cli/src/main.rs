use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inair::config::{ModelChoice, RunConfig};
use inair::io;
use inair::oracle::{self, OracleModel};
use inair::planner::control_loop;
use inair::scenario::{
    compare, run_scenario, ComparisonTable, Controller, DomController, PidController, ScenarioKind,
};
use inair::seeding::{rng_for, stream};
use inair::training::{evaluate, generate_dataset, normalized_mse, split_indices, train, Sample};
use inair::types::{GoalState, VehicleState, STATE_COLUMNS, STATE_DIM};
use inair::{Error, ForwardModel, PhliModel, Result};

#[derive(Parser)]
#[command(name = "inair", version, about = "In-air attitude control: simulate, learn, plan, compare")]
struct Cli {
    /// Worker threads for rollouts (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// INI run configuration; defaults are used for anything not set.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate excitation flights and write an acceleration-labelled dataset.
    GenData {
        #[command(flatten)]
        config: ConfigArg,
        /// Total simulated seconds.
        #[arg(long)]
        duration: f64,
        /// Sensor sampling interval, s.
        #[arg(long = "dt-sensor", default_value_t = 0.02)]
        dt_sensor: f64,
        /// Angular-rate measurement noise std, rad/s.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the acceleration network; writes the model and its loss history.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Loss history CSV (default: `<out>.loss.csv`).
        #[arg(long)]
        loss: Option<PathBuf>,
    },
    /// Per-axis error of a model against dataset labels (and the oracle
    /// when a config is given).
    EvalModel {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Evaluate only the validation split drawn by `train --seed N`.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One closed-loop landing against the oracle.
    Plan {
        #[command(flatten)]
        config: ConfigArg,
        /// `oracle` or a model file.
        #[arg(long, default_value = "oracle")]
        model: String,
        /// Initial state, 8 comma-separated values in state column order.
        #[arg(long, allow_hyphen_values = true)]
        state: String,
        /// Goal state, same layout.
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
        /// Time until landing, s.
        #[arg(long)]
        airtime: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trajectory CSV; the cycle log goes next to it as `<stem>.cycles.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario with one controller.
    Scenario {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        name: ScenarioKind,
        #[arg(long, value_parser = ["dom", "pid"])]
        controller: String,
        #[arg(long, default_value = "oracle")]
        model: String,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Both controllers on every configured scenario; writes a comparison table.
    Compare {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Overrides `compare.model` from the config.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a configuration file documenting every key and its default.
    Defaults,
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig> {
    match &arg.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn load_model(choice: &ModelChoice, cfg: &RunConfig) -> Result<Box<dyn ForwardModel + Send>> {
    Ok(match choice {
        ModelChoice::Oracle => Box::new(OracleModel::new(cfg.physics.clone().noise_free(), cfg.planner.dt)?),
        ModelChoice::Phli(p) => Box::new(PhliModel::load(p)?),
    })
}

fn parse_state(flag: &str, s: &str) -> Result<VehicleState> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Argument(format!("--{flag}: `{x}` is not a number")))
        })
        .collect::<Result<_>>()?;
    let arr: [f64; STATE_DIM] = v.try_into().map_err(|v: Vec<f64>| {
        Error::Argument(format!(
            "--{flag}: expected {STATE_DIM} values ({}), got {}",
            STATE_COLUMNS.join(","),
            v.len()
        ))
    })?;
    VehicleState::from_array(arr)
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn make_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn controller_for(
    name: &str,
    model: &ModelChoice,
    cfg: &RunConfig,
    seed: u64,
) -> Result<Box<dyn Controller>> {
    Ok(match name {
        "pid" => Box::new(PidController::new(cfg.pid, cfg.limits.clone(), 1.0 / cfg.scenario.control_hz)?),
        _ => {
            let mut pc = cfg.planner.clone();
            pc.seed = seed;
            Box::new(DomController::new(load_model(model, cfg)?, pc, cfg.cost.clone())?)
        }
    })
}

fn run(cli: Cli, invocation: &str) -> Result<()> {
    let header = |cfg: &RunConfig| io::provenance(invocation, &cfg.hash);
    match cli.cmd {
        Command::GenData {
            config,
            duration,
            dt_sensor,
            noise,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let data = generate_dataset(&cfg.physics, &cfg.limits, duration, dt_sensor, noise, seed)?;
            io::write_dataset(&out, &header(&cfg), &data)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
        Command::Train {
            config,
            data,
            out,
            epochs,
            lr,
            batch,
            seed,
            loss,
        } => {
            let cfg = load_config(&config)?;
            let mut tc = cfg.train.clone();
            tc.epochs = epochs.unwrap_or(tc.epochs);
            tc.learning_rate = lr.unwrap_or(tc.learning_rate);
            tc.batch_size = batch.unwrap_or(tc.batch_size);
            tc.seed = seed;
            tc.validate()?;
            let samples = io::read_dataset(&data)?;
            let (model, history) = train(&samples, &tc, seed)?;
            model.save(&out)?;
            let loss_path = loss.unwrap_or_else(|| with_suffix(&out, ".loss.csv"));
            io::write_loss_history(&loss_path, &header(&cfg), &history)?;
            let best = history.iter().map(|h| h.val_mse).fold(f64::INFINITY, f64::min);
            println!("best val_mse {best}");
            println!("wrote {} and {}", out.display(), loss_path.display());
        }
        Command::EvalModel {
            config,
            model,
            data,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let m = PhliModel::load(&model)?;
            let all = io::read_dataset(&data)?;
            let samples: Vec<Sample> = match seed {
                Some(s) => split_indices(all.len(), cfg.train.val_fraction, s).1.into_iter().map(|i| all[i]).collect(),
                None => all,
            };
            let rep = evaluate(&m, &samples);
            let mut rows = vec![("samples".to_string(), samples.len() as f64)];
            rows.push(("val_mse".into(), normalized_mse(&m, &samples)));
            for (i, axis) in ["roll", "pitch", "yaw"].iter().enumerate() {
                rows.push((format!("{axis}_rms"), rep.rms_error[i]));
                rows.push((format!("{axis}_label_std"), rep.label_std[i]));
            }
            if config.config.is_some() {
                let o = OracleModel::new(cfg.physics.clone().noise_free(), cfg.planner.dt)?;
                let mut sq = [0.0; 3];
                for smp in &samples {
                    let (y, o) = (m.accel(&smp.state, &smp.action), o.accel(&smp.state, &smp.action));
                    for (k, (a, b)) in y.to_array().iter().zip(o.to_array()).enumerate() {
                        sq[k] += (a - b).powi(2);
                    }
                }
                for (i, axis) in ["roll", "pitch", "yaw"].iter().enumerate() {
                    rows.push((format!("{axis}_rms_vs_oracle"), (sq[i] / samples.len() as f64).sqrt()));
                }
            }
            for (k, v) in &rows {
                println!("{k} {v}");
            }
            if let Some(o) = out {
                io::write_key_values(&o, &header(&cfg), &rows)?;
            }
        }
        Command::Plan {
            config,
            model,
            state,
            goal,
            airtime,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let s0 = parse_state("state", &state)?;
            let g = GoalState(parse_state("goal", &goal)?);
            let m = load_model(&ModelChoice::parse(&model), &cfg)?;
            let mut pc = cfg.planner.clone();
            pc.seed = seed;
            let mut env_rng = rng_for(seed, stream::ENVIRONMENT, 0);
            let mut plan_rng = rng_for(seed, stream::PLANNER, 0);
            let (phys, limits) = (cfg.physics.clone(), cfg.limits.clone());
            let env = |s: &VehicleState, a: &inair::Action, dt: f64| {
                oracle::step(s, a, dt, &phys, &limits, Some(&mut env_rng))
            };
            let run = control_loop(&s0, &g, airtime, &m, &pc, &cfg.cost, env, &mut plan_rng)?;
            io::write_trajectory(&out, &header(&cfg), &run.trajectory)?;
            let cycles = with_suffix(&out, ".cycles.csv");
            io::write_cycle_log(&cycles, &header(&cfg), &run.cycles)?;
            let last = run.trajectory.last();
            let r = inair::goal_residual(last, &g);
            println!(
                "terminal residual roll {} pitch {} roll_rate {} pitch_rate {}",
                r[0], r[2], r[1], r[3]
            );
            println!("wrote {} and {}", out.display(), cycles.display());
        }
        Command::Scenario {
            config,
            name,
            controller,
            model,
            trials,
            seed,
            out,
        } => {
            let cfg = load_config(&config)?;
            let spec = cfg.scenario_spec(name);
            let mut ctrl = controller_for(&controller, &ModelChoice::parse(&model), &cfg, seed)?;
            let report = run_scenario(&spec, ctrl.as_mut(), trials, seed)?;
            make_dir(&out)?;
            let h = header(&cfg);
            io::write_metrics(&out.join("metrics.csv"), &h, &report)?;
            io::write_trials(&out.join("trials.csv"), &h, &report)?;
            for t in &report.trials {
                io::write_trace(&out.join(format!("trial_{:03}.csv", t.trial)), &h, &t.trace)?;
            }
            println!(
                "{} {}: {}/{} successful; wrote {}",
                name,
                controller,
                report.successes(),
                trials,
                out.display()
            );
        }
        Command::Compare {
            config,
            trials,
            seed,
            model,
            out,
        } => {
            let cfg = load_config(&config)?;
            let choice = model.map(|m| ModelChoice::parse(&m)).unwrap_or_else(|| cfg.compare_model.clone());
            let specs: Vec<_> = cfg.compare_scenarios.iter().map(|&k| cfg.scenario_spec(k)).collect();
            let mut dom = controller_for("dom", &choice, &cfg, seed)?;
            let mut pid = controller_for("pid", &choice, &cfg, seed)?;
            let mut ctrls: Vec<&mut dyn Controller> = vec![dom.as_mut(), pid.as_mut()];
            let (table, _) = compare(&specs, &mut ctrls, trials, seed)?;
            io::write_table(&out, &header(&cfg), &table)?;
            print_table(&table);
        }
        Command::Defaults => print!("{}", RunConfig::documented_defaults()),
    }
    Ok(())
}

fn print_table(t: &ComparisonTable) {
    println!("{}", t.header().join(","));
    for r in t.records() {
        println!("{}", r.join(","));
    }
}

/// The command line as recorded in output headers. `--workers` only changes
/// scheduling, never results, so it is left out.
fn invocation(args: &[String]) -> String {
    let mut out = vec!["inair".to_string()];
    let mut rest = args.iter().skip(1);
    while let Some(a) = rest.next() {
        if a == "--workers" {
            rest.next();
        } else if !a.starts_with("--workers=") {
            out.push(a.clone());
        }
    }
    out.join(" ")
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    }
    let invocation = invocation(&args);
    match run(cli, &invocation) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match &e {
                Error::Argument(_) => 2,
                e if e.is_config() => 3,
                _ => 4,
            })
        }
    }
}
