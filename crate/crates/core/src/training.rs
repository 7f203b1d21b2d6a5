//! Dataset generation from the oracle, acceleration labels from rate
//! measurements, and supervised training of the acceleration network.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::oracle::{self, PhysicalParams};
use crate::kernels;
use crate::phli::{features, Mlp, Normalization, PhliModel, INPUT_DIM, INPUT_NAMES, OUTPUT_DIM};
use crate::seeding::{derive_seed, rng_for, stream};
use crate::types::{clamp_action, Action, ActuationLimits, AngularAccel, VehicleState};

/// One training tuple: state, applied action and the measured acceleration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub state: VehicleState,
    pub action: Action,
    pub label: AngularAccel,
}

impl Sample {
    pub fn features(&self) -> [f64; INPUT_DIM] {
        features(&self.state, &self.action)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub hidden: [usize; 3],
    /// Integration interval stored in the trained model.
    pub model_dt: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 3e-2,
            momentum: 0.9,
            seed: 0,
            val_fraction: 0.15,
            hidden: crate::phli::DEFAULT_HIDDEN,
            model_dt: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::TrainingConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!("val_fraction must be in (0, 1), got {}", self.val_fraction));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.model_dt > 0.0) || !self.model_dt.is_finite() {
            return bad(format!("model_dt must be positive, got {}", self.model_dt));
        }
        Ok(())
    }
}

/// Per-epoch losses, in normalized target units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Differentiates a rate series sampled every `dt_sensor` seconds.
///
/// Interior points use central differences; the two ends use second-order
/// one-sided differences.
pub fn derive_accel_labels(rates: &[[f64; 3]], dt_sensor: f64) -> Result<Vec<AngularAccel>> {
    if rates.len() < 3 {
        return Err(Error::Argument(format!(
            "need at least 3 rate samples, got {}",
            rates.len()
        )));
    }
    if !(dt_sensor > 0.0) {
        return Err(Error::Argument(format!("dt_sensor must be positive, got {dt_sensor}")));
    }
    let n = rates.len();
    let h2 = 2.0 * dt_sensor;
    let diff = |k: usize| -> [f64; 3] {
        let mut d = [0.0; 3];
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = if k == 0 {
                (4.0 * (rates[1][j] - rates[0][j]) - (rates[2][j] - rates[0][j])) / h2
            } else if k == n - 1 {
                (4.0 * (rates[n - 1][j] - rates[n - 2][j]) - (rates[n - 1][j] - rates[n - 3][j])) / h2
            } else {
                (rates[k + 1][j] - rates[k - 1][j]) / h2
            };
        }
        d
    };
    Ok((0..n)
        .map(|k| {
            let d = diff(k);
            AngularAccel::new(d[0], d[1], d[2])
        })
        .collect())
}

fn tick_count(duration: f64, dt_sensor: f64) -> Result<usize> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Argument(format!("duration must be positive, got {duration}")));
    }
    if !(dt_sensor > 0.0) || !dt_sensor.is_finite() {
        return Err(Error::Argument(format!("dt_sensor must be positive, got {dt_sensor}")));
    }
    Ok((duration / dt_sensor).round() as usize)
}

/// Random piecewise-constant excitation: segments of 0.1 to 0.5 s with
/// uniform rates, one in ten segments pinned to an extreme of one rate.
pub fn excite_policy(
    duration: f64,
    dt_sensor: f64,
    limits: &ActuationLimits,
    seed: u64,
) -> Result<Vec<Action>> {
    let n = tick_count(duration, dt_sensor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let seconds = rng.random_range(0.1..=0.5);
        let ticks = ((seconds / dt_sensor).round() as usize).max(1);
        let mut a = Action::new(
            rng.random_range(limits.rpm_rate_min..=limits.rpm_rate_max),
            rng.random_range(limits.steer_rate_min..=limits.steer_rate_max),
        );
        if rng.random_bool(0.1) {
            let high = rng.random_bool(0.5);
            if rng.random_bool(0.5) {
                a.rpm_rate = if high { limits.rpm_rate_max } else { limits.rpm_rate_min };
            } else {
                a.steer_rate = if high { limits.steer_rate_max } else { limits.steer_rate_min };
            }
        }
        let take = ticks.min(n - out.len());
        out.extend(std::iter::repeat_n(a, take));
    }
    Ok(out)
}

/// Length of one simulated logging episode, each from a fresh random state.
pub const EPISODE_SECONDS: f64 = 5.0;
/// Oracle integration steps per sensor tick.
pub const SUBSTEPS: usize = 10;

fn random_initial_state<R: Rng>(rng: &mut R, limits: &ActuationLimits) -> VehicleState {
    let pi = std::f64::consts::PI;
    VehicleState {
        roll: rng.random_range(-pi..pi),
        roll_rate: rng.random_range(-1.0..1.0),
        pitch: rng.random_range(-pi..pi),
        pitch_rate: rng.random_range(-1.0..1.0),
        yaw: rng.random_range(-pi..pi),
        yaw_rate: rng.random_range(-0.5..0.5),
        rpm: rng.random_range(limits.rpm_min..=limits.rpm_max),
        steer: rng.random_range(limits.steer_min..=limits.steer_max),
    }
}

/// Simulated logging: excites the oracle from random initial states, records
/// states at `dt_sensor` with noisy rates, and derives acceleration labels.
///
/// Labels come from differentiating the recorded rates over each run of
/// constant applied action, so the derivative never straddles an action
/// change. Every sensor tick yields one sample.
pub fn generate_dataset(
    params: &PhysicalParams,
    limits: &ActuationLimits,
    duration: f64,
    dt_sensor: f64,
    rate_noise_std: f64,
    seed: u64,
) -> Result<Vec<Sample>> {
    params.validate()?;
    limits.validate()?;
    let total = tick_count(duration, dt_sensor)?;
    if total < 3 {
        return Err(Error::Argument(format!(
            "duration covers {total} sensor ticks, need at least 3"
        )));
    }
    if !(rate_noise_std >= 0.0) || !rate_noise_std.is_finite() {
        return Err(Error::Argument(format!(
            "rate_noise_std must be non-negative, got {rate_noise_std}"
        )));
    }
    let per_episode = ((EPISODE_SECONDS / dt_sensor).round() as usize).max(3);
    let noise = Normal::new(0.0, rate_noise_std).map_err(|e| Error::Argument(e.to_string()))?;
    let dt_sub = dt_sensor / SUBSTEPS as f64;
    let mut samples = Vec::with_capacity(total);
    let mut episode = 0u64;
    let mut done = 0usize;
    while done < total {
        let ticks = per_episode.min(total - done);
        done += ticks;
        let mut init_rng = rng_for(seed, stream::DATASET, episode);
        let mut env_rng = rng_for(seed, stream::ENVIRONMENT, episode);
        let mut sensor_rng = rng_for(seed, stream::SENSOR, episode);
        let commands = excite_policy(
            ticks as f64 * dt_sensor,
            dt_sensor,
            limits,
            derive_seed(seed, stream::EXCITATION, episode),
        )?;
        episode += 1;

        let mut s = random_initial_state(&mut init_rng, limits);
        let mut states = Vec::with_capacity(ticks + 1);
        let mut applied = Vec::with_capacity(ticks);
        states.push(s);
        for cmd in &commands {
            let a = clamp_action(cmd, &s, limits, dt_sensor)?;
            for _ in 0..SUBSTEPS {
                s = oracle::step_applied(&s, &a, dt_sub, params, limits, Some(&mut env_rng))?.0;
            }
            applied.push(a);
            states.push(s);
        }
        let measured: Vec<VehicleState> = states
            .iter()
            .map(|s| {
                let mut m = *s;
                if rate_noise_std > 0.0 {
                    m.roll_rate += noise.sample(&mut sensor_rng);
                    m.pitch_rate += noise.sample(&mut sensor_rng);
                    m.yaw_rate += noise.sample(&mut sensor_rng);
                }
                m
            })
            .collect();

        let mut k0 = 0;
        while k0 < applied.len() {
            let mut k1 = k0 + 1;
            while k1 < applied.len() && applied[k1] == applied[k0] {
                k1 += 1;
            }
            let rates: Vec<[f64; 3]> = measured[k0..=k1]
                .iter()
                .map(|m| [m.roll_rate, m.pitch_rate, m.yaw_rate])
                .collect();
            let labels = if rates.len() >= 3 {
                derive_accel_labels(&rates, dt_sensor)?
            } else {
                // A single tick between action changes only supports a
                // first-order difference.
                let d: [f64; 3] = std::array::from_fn(|j| (rates[1][j] - rates[0][j]) / dt_sensor);
                vec![AngularAccel::new(d[0], d[1], d[2])]
            };
            for k in k0..k1 {
                samples.push(Sample {
                    state: measured[k],
                    action: applied[k],
                    label: labels[k - k0],
                });
            }
            k0 = k1;
        }
    }
    Ok(samples)
}

/// Deterministic shuffled train/validation partition of `n` indices.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, stream::DATASET, u64::MAX));
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let train = idx.split_off(n_val);
    (train, idx)
}

fn target(s: &Sample) -> [f64; OUTPUT_DIM] {
    s.label.to_array()
}

fn input_normalization(data: &[Sample], idx: &[usize]) -> Result<Normalization> {
    let n = idx.len() as f64;
    let mut mean = vec![0.0; INPUT_DIM];
    for &i in idx {
        for (m, x) in mean.iter_mut().zip(data[i].features()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; INPUT_DIM];
    for &i in idx {
        for ((v, x), m) in var.iter_mut().zip(data[i].features()).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let mut std = Vec::with_capacity(INPUT_DIM);
    for (j, v) in var.iter().enumerate() {
        let sd = (v / n).sqrt();
        if !(sd > 1e-12 * mean[j].abs().max(1.0)) {
            return Err(Error::TrainingConfig(format!(
                "feature `{}` has zero variance in the training split",
                INPUT_NAMES[j]
            )));
        }
        std.push(sd);
    }
    Ok(Normalization { mean, std })
}

fn output_normalization(data: &[Sample], idx: &[usize]) -> Normalization {
    let n = idx.len() as f64;
    let mut mean = vec![0.0; OUTPUT_DIM];
    for &i in idx {
        for (m, y) in mean.iter_mut().zip(target(&data[i])) {
            *m += y;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut std = vec![0.0; OUTPUT_DIM];
    for &i in idx {
        for ((v, y), m) in std.iter_mut().zip(target(&data[i])).zip(&mean) {
            *v += (y - m) * (y - m);
        }
    }
    // A constant target keeps unit scale.
    std.iter_mut().for_each(|v| {
        let sd = (*v / n).sqrt();
        *v = if sd > 1e-12 { sd } else { 1.0 };
    });
    Normalization { mean, std }
}

/// Parameter gradients shaped like the network.
#[derive(Clone, Debug)]
struct Grads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros(mlp: &Mlp) -> Self {
        Grads {
            w: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn clear(&mut self) {
        self.w.iter_mut().chain(self.b.iter_mut()).for_each(|v| v.fill(0.0));
    }

    fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Activation storage for one mini-batch.
struct Tape {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Tape {
    fn new(mlp: &Mlp, batch: usize) -> Self {
        let width = *mlp.dims.iter().max().unwrap();
        Tape {
            acts: mlp.dims.iter().map(|&d| vec![0.0; batch * d]).collect(),
            delta: vec![0.0; batch * width],
            delta_prev: vec![0.0; batch * width],
        }
    }
}

/// Forward pass over `batch` rows already placed in `tape.acts[0]`.
fn forward_cached(mlp: &Mlp, tape: &mut Tape, batch: usize) {
    let last = mlp.layers() - 1;
    for l in 0..mlp.layers() {
        let (head, tail) = tape.acts.split_at_mut(l + 1);
        let x = &head[l][..batch * mlp.dims[l]];
        let y = &mut tail[0][..batch * mlp.dims[l + 1]];
        mlp.affine(l, x, y);
        if l != last {
            kernels::tanh_in_place(y);
        }
    }
}

/// Accumulates parameter gradients given `tape.delta` holding dLoss/dOutput.
fn backward(mlp: &Mlp, tape: &mut Tape, batch: usize, grads: &mut Grads) {
    for l in (0..mlp.layers()).rev() {
        let (fi, fo) = (mlp.dims[l], mlp.dims[l + 1]);
        let a_in = &tape.acts[l][..batch * fi];
        let delta = &tape.delta[..batch * fo];
        kernels::accumulate_grads(fi, fo, delta, a_in, &mut grads.w[l], &mut grads.b[l]);
        if l == 0 {
            break;
        }
        kernels::backprop(fi, fo, delta, &mlp.weights[l], a_in, &mut tape.delta_prev[..batch * fi]);
        std::mem::swap(&mut tape.delta, &mut tape.delta_prev);
    }
}

/// Loss and output gradient of the batch in the tape against normalized targets.
fn output_delta(tape: &mut Tape, y: &[f64], batch: usize) -> f64 {
    let out = tape.acts.last().unwrap();
    let scale = 1.0 / (batch * OUTPUT_DIM) as f64;
    let mut loss = 0.0;
    for k in 0..batch * OUTPUT_DIM {
        let r = out[k] - y[k];
        loss += r * r;
        tape.delta[k] = 2.0 * scale * r;
    }
    loss * scale
}

fn normalized_rows(m: &PhliModel, data: &[Sample], idx: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; idx.len() * INPUT_DIM];
    let mut y = vec![0.0; idx.len() * OUTPUT_DIM];
    for (r, &i) in idx.iter().enumerate() {
        m.normalize_into(&data[i].features(), &mut x[r * INPUT_DIM..(r + 1) * INPUT_DIM]);
        for (j, t) in target(&data[i]).iter().enumerate() {
            y[r * OUTPUT_DIM + j] = (t - m.output_norm.mean[j]) / m.output_norm.std[j];
        }
    }
    (x, y)
}

/// Mean squared prediction error in the model's normalized output units.
/// This is the loss reported during training for the validation split.
pub fn normalized_mse(m: &PhliModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let inputs: Vec<_> = samples.iter().map(Sample::features).collect();
    let mut pred = vec![AngularAccel::default(); samples.len()];
    m.predict_batch(&inputs, &mut pred);
    let mut sum = 0.0;
    for (p, s) in pred.iter().zip(samples) {
        let (p, t) = (p.to_array(), target(s));
        for j in 0..OUTPUT_DIM {
            let r = (p[j] - t[j]) / m.output_norm.std[j];
            sum += r * r;
        }
    }
    sum / (samples.len() * OUTPUT_DIM) as f64
}

/// Per-axis error summary of a model on a sample set, in physical units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisReport {
    pub rms_error: [f64; OUTPUT_DIM],
    pub label_std: [f64; OUTPUT_DIM],
    pub normalized_mse: f64,
}

impl AxisReport {
    /// Label spread pooled over the three axes.
    pub fn pooled_label_std(&self) -> f64 {
        (self.label_std.iter().map(|s| s * s).sum::<f64>() / OUTPUT_DIM as f64).sqrt()
    }
}

pub fn evaluate(m: &PhliModel, samples: &[Sample]) -> AxisReport {
    let n = samples.len().max(1) as f64;
    let inputs: Vec<_> = samples.iter().map(Sample::features).collect();
    let mut pred = vec![AngularAccel::default(); samples.len()];
    m.predict_batch(&inputs, &mut pred);
    let mut se = [0.0; OUTPUT_DIM];
    let mut mean = [0.0; OUTPUT_DIM];
    for (p, s) in pred.iter().zip(samples) {
        let (p, t) = (p.to_array(), target(s));
        for j in 0..OUTPUT_DIM {
            se[j] += (p[j] - t[j]).powi(2);
            mean[j] += t[j] / n;
        }
    }
    let mut var = [0.0; OUTPUT_DIM];
    for s in samples {
        for (j, t) in target(s).iter().enumerate() {
            var[j] += (t - mean[j]).powi(2) / n;
        }
    }
    AxisReport {
        rms_error: se.map(|v| (v / n).sqrt()),
        label_std: var.map(f64::sqrt),
        normalized_mse: normalized_mse(m, samples),
    }
}

fn glorot_init(mlp: &mut Mlp, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for l in 0..mlp.layers() {
        let (fi, fo) = (mlp.dims[l], mlp.dims[l + 1]);
        let bound = (6.0 / (fi + fo) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).unwrap();
        mlp.weights[l].iter_mut().for_each(|w| *w = dist.sample(&mut rng));
        mlp.biases[l].fill(0.0);
    }
    mlp.refresh();
}

/// Fits the acceleration network by mini-batch SGD with momentum and returns
/// the parameters with the lowest validation loss plus the loss history.
pub fn train(
    data: &[Sample],
    cfg: &TrainConfig,
    model_init_seed: u64,
) -> Result<(PhliModel, Vec<EpochLoss>)> {
    cfg.validate()?;
    if data.len() < 10 {
        return Err(Error::TrainingConfig(format!(
            "need at least 10 samples, got {}",
            data.len()
        )));
    }
    if let Some(k) = data
        .iter()
        .position(|s| !s.state.is_finite() || !s.label.to_array().iter().all(|v| v.is_finite()))
    {
        return Err(Error::TrainingConfig(format!("sample {k} is not finite")));
    }
    let (train_idx, val_idx) = split_indices(data.len(), cfg.val_fraction, cfg.seed);
    let mut model = PhliModel::zeros(cfg.hidden, cfg.model_dt)?;
    model.input_norm = input_normalization(data, &train_idx)?;
    model.output_norm = output_normalization(data, &train_idx);
    glorot_init(&mut model.mlp, model_init_seed);

    let (x, y) = normalized_rows(&model, data, &train_idx);
    let val: Vec<Sample> = val_idx.iter().map(|&i| data[i]).collect();
    let n = train_idx.len();
    let bs = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = rng_for(cfg.seed, stream::DATASET, 0);
    let mut tape = Tape::new(&model.mlp, bs);
    let mut grads = Grads::zeros(&model.mlp);
    let mut velocity = Grads::zeros(&model.mlp);
    let mut yb = vec![0.0; bs * OUTPUT_DIM];

    let mut best = (normalized_mse(&model, &val), model.mlp.clone());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(bs) {
            let b = chunk.len();
            for (r, &i) in chunk.iter().enumerate() {
                tape.acts[0][r * INPUT_DIM..(r + 1) * INPUT_DIM]
                    .copy_from_slice(&x[i * INPUT_DIM..(i + 1) * INPUT_DIM]);
                yb[r * OUTPUT_DIM..(r + 1) * OUTPUT_DIM]
                    .copy_from_slice(&y[i * OUTPUT_DIM..(i + 1) * OUTPUT_DIM]);
            }
            forward_cached(&model.mlp, &mut tape, b);
            loss_sum += output_delta(&mut tape, &yb[..b * OUTPUT_DIM], b) * b as f64;
            grads.clear();
            backward(&model.mlp, &mut tape, b, &mut grads);
            sgd_update(&mut model.mlp, &grads, &mut velocity, cfg);
        }
        let val_mse = normalized_mse(&model, &val);
        if !val_mse.is_finite() {
            return Err(Error::TrainingConfig(format!(
                "training diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        if val_mse < best.0 {
            best = (val_mse, model.mlp.clone());
        }
        history.push(EpochLoss {
            epoch,
            train_mse: loss_sum / n as f64,
            val_mse,
        });
    }
    model.mlp = best.1;
    Ok((model, history))
}

fn sgd_update(mlp: &mut Mlp, grads: &Grads, velocity: &mut Grads, cfg: &TrainConfig) {
    let (lr, mu) = (cfg.learning_rate, cfg.momentum);
    let params = mlp.weights.iter_mut().chain(mlp.biases.iter_mut());
    let g = grads.w.iter().chain(&grads.b);
    let v = velocity.w.iter_mut().chain(velocity.b.iter_mut());
    for ((p, g), v) in params.zip(g).zip(v) {
        for ((p, g), v) in p.iter_mut().zip(g).zip(v.iter_mut()) {
            *v = mu * *v + g;
            *p -= lr * *v;
        }
    }
    mlp.refresh();
}

/// Training loss and its analytic gradient (flat parameter order) for a set
/// of samples under the model's own normalization.
pub fn loss_and_gradient(m: &PhliModel, samples: &[Sample]) -> (f64, Vec<f64>) {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (x, y) = normalized_rows(m, samples, &idx);
    let mut tape = Tape::new(&m.mlp, samples.len());
    tape.acts[0].copy_from_slice(&x);
    forward_cached(&m.mlp, &mut tape, samples.len());
    let loss = output_delta(&mut tape, &y, samples.len());
    let mut grads = Grads::zeros(&m.mlp);
    backward(&m.mlp, &mut tape, samples.len(), &mut grads);
    (loss, grads.flat())
}

fn loss_only(m: &PhliModel, samples: &[Sample]) -> f64 {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let (x, y) = normalized_rows(m, samples, &idx);
    let mut tape = Tape::new(&m.mlp, samples.len());
    tape.acts[0].copy_from_slice(&x);
    forward_cached(&m.mlp, &mut tape, samples.len());
    output_delta(&mut tape, &y, samples.len())
}

/// Largest relative disagreement between backprop and central finite
/// differences over every network parameter.
pub fn gradient_check(m: &PhliModel, sample: &Sample, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Argument(format!(
            "epsilon must be in [1e-7, 1e-3], got {epsilon}"
        )));
    }
    let batch = std::slice::from_ref(sample);
    let (_, analytic) = loss_and_gradient(m, batch);
    let mut probe = m.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let p0 = m.mlp.param(k);
        probe.mlp.set_param(k, p0 + epsilon);
        let up = loss_only(&probe, batch);
        probe.mlp.set_param(k, p0 - epsilon);
        let down = loss_only(&probe, batch);
        probe.mlp.set_param(k, p0);
        let numeric = (up - down) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
