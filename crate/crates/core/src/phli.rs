//! Hybrid forward model: a learned angular-acceleration predictor composed
//! with the analytic constant-acceleration integrator.

use std::fmt::Write as _;
use std::path::Path;

use crate::dynamics::{integrate, ForwardModel};
use crate::kernels;
use crate::error::{Error, Result};
use crate::types::{
    clamp_action, clamp_state, Action, ActuationLimits, AngularAccel, VehicleState,
    STATE_COLUMNS,
};

pub const INPUT_DIM: usize = 10;
pub const OUTPUT_DIM: usize = 3;
const FILE_MAGIC: &str = "phli-v1";

/// Names of the network inputs, in order.
pub const INPUT_NAMES: [&str; INPUT_DIM] = [
    STATE_COLUMNS[0],
    STATE_COLUMNS[1],
    STATE_COLUMNS[2],
    STATE_COLUMNS[3],
    STATE_COLUMNS[4],
    STATE_COLUMNS[5],
    STATE_COLUMNS[6],
    STATE_COLUMNS[7],
    "rpm_rate",
    "steer_rate",
];

pub const OUTPUT_NAMES: [&str; OUTPUT_DIM] = ["roll_acc", "pitch_acc", "yaw_acc"];

/// Network input for a state/action pair.
#[inline]
pub fn features(s: &VehicleState, a: &Action) -> [f64; INPUT_DIM] {
    [
        s.roll,
        s.roll_rate,
        s.pitch,
        s.pitch_rate,
        s.yaw,
        s.yaw_rate,
        s.rpm,
        s.steer,
        a.rpm_rate,
        a.steer_rate,
    ]
}

/// Fully connected network with tanh on hidden layers and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub(crate) dims: Vec<usize>,
    /// Per layer, `dims[l + 1] x dims[l]` row-major (one row per output unit).
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
    /// Per layer, `dims[l] x dims[l + 1]`; the forward pass streams over rows
    /// of this copy.
    transposed: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::ModelFormat(format!("invalid layer dims {dims:?}")));
        }
        let weights = dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        let mut mlp = Mlp {
            dims: dims.to_vec(),
            weights,
            biases,
            transposed: Vec::new(),
        };
        mlp.refresh();
        Ok(mlp)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Parameter `k` in the flat order: layer by layer, weights then biases.
    pub fn param(&self, k: usize) -> f64 {
        let (l, is_w, i) = self.locate(k);
        if is_w {
            self.weights[l][i]
        } else {
            self.biases[l][i]
        }
    }

    pub fn set_param(&mut self, k: usize, v: f64) {
        let (l, is_w, i) = self.locate(k);
        if is_w {
            self.weights[l][i] = v;
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (row, col) = (i / fan_in, i % fan_in);
            self.transposed[l][col * fan_out + row] = v;
        } else {
            self.biases[l][i] = v;
        }
    }

    fn locate(&self, mut k: usize) -> (usize, bool, usize) {
        for l in 0..self.layers() {
            if k < self.weights[l].len() {
                return (l, true, k);
            }
            k -= self.weights[l].len();
            if k < self.biases[l].len() {
                return (l, false, k);
            }
            k -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    /// Rebuilds the transposed weights after the row-major copy changed.
    pub(crate) fn refresh(&mut self) {
        self.transposed = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                let mut t = vec![0.0; w.len()];
                for o in 0..fan_out {
                    for i in 0..fan_in {
                        t[i * fan_out + o] = w[o * fan_in + i];
                    }
                }
                t
            })
            .collect();
    }

    /// Affine map of one layer over a batch: `out[b] = W·x[b] + bias`.
    #[inline]
    pub(crate) fn affine(&self, layer: usize, x: &[f64], out: &mut [f64]) {
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        kernels::affine(fan_in, fan_out, &self.transposed[layer], &self.biases[layer], x, out);
    }

    /// Batched forward pass over `x` (`batch x dims[0]`, row-major) into `out`.
    pub fn forward_batch(&self, x: &[f64], out: &mut [f64]) {
        let batch = x.len() / self.dims[0];
        let width = *self.dims.iter().max().unwrap();
        let mut a = vec![0.0; batch * width];
        let mut b = vec![0.0; batch * width];
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let n_out = batch * self.dims[l + 1];
            let src: &[f64] = if l == 0 { x } else { &a[..batch * self.dims[l]] };
            if l == last {
                self.affine(l, src, &mut out[..n_out]);
            } else {
                self.affine(l, src, &mut b[..n_out]);
                kernels::tanh_in_place(&mut b[..n_out]);
                std::mem::swap(&mut a, &mut b);
            }
        }
    }

    fn check_shapes(&self) -> Result<()> {
        if self.weights.len() + 1 != self.dims.len() || self.biases.len() + 1 != self.dims.len() {
            return Err(Error::ModelFormat("layer count does not match dims".into()));
        }
        for l in 0..self.layers() {
            if self.weights[l].len() != self.dims[l] * self.dims[l + 1] {
                return Err(Error::ModelFormat(format!(
                    "layer {l} weights hold {} values, expected {}x{}",
                    self.weights[l].len(),
                    self.dims[l + 1],
                    self.dims[l]
                )));
            }
            if self.biases[l].len() != self.dims[l + 1] {
                return Err(Error::ModelFormat(format!(
                    "layer {l} biases hold {} values, expected {}",
                    self.biases[l].len(),
                    self.dims[l + 1]
                )));
            }
        }
        Ok(())
    }
}

/// Per-feature affine normalization `(x - mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Self {
        Normalization {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    fn check(&self, n: usize, what: &str) -> Result<()> {
        if self.mean.len() != n || self.std.len() != n {
            return Err(Error::ModelFormat(format!("{what} normalization must have {n} entries")));
        }
        if let Some(i) = self.std.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::ModelFormat(format!(
                "{what} std[{i}] must be positive, got {}",
                self.std[i]
            )));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::ModelFormat(format!("{what} means must be finite")));
        }
        Ok(())
    }
}

/// The hybrid model: network parameters, normalization statistics and the
/// integration interval of the analytic half.
#[derive(Clone, Debug, PartialEq)]
pub struct PhliModel {
    pub mlp: Mlp,
    pub input_norm: Normalization,
    pub output_norm: Normalization,
    pub dt: f64,
}

/// Default hidden widths.
pub const DEFAULT_HIDDEN: [usize; 3] = [64, 64, 64];

impl PhliModel {
    /// A model with all weights and biases zero and identity normalization.
    pub fn zeros(hidden: [usize; 3], dt: f64) -> Result<Self> {
        let dims = [INPUT_DIM, hidden[0], hidden[1], hidden[2], OUTPUT_DIM];
        let m = PhliModel {
            mlp: Mlp::zeros(&dims)?,
            input_norm: Normalization::identity(INPUT_DIM),
            output_norm: Normalization::identity(OUTPUT_DIM),
            dt,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.mlp.dims;
        if dims.len() != 5 || dims[0] != INPUT_DIM || dims[4] != OUTPUT_DIM {
            return Err(Error::ModelFormat(format!(
                "layer dims must be [{INPUT_DIM}, h1, h2, h3, {OUTPUT_DIM}], got {dims:?}"
            )));
        }
        self.mlp.check_shapes()?;
        self.input_norm.check(INPUT_DIM, "input")?;
        self.output_norm.check(OUTPUT_DIM, "output")?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::ModelFormat(format!("dt must be positive, got {}", self.dt)));
        }
        let all_finite = self.mlp.weights.iter().chain(&self.mlp.biases).flatten().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::ModelFormat("non-finite network parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn normalize_into(&self, x: &[f64; INPUT_DIM], out: &mut [f64]) {
        for i in 0..INPUT_DIM {
            out[i] = (x[i] - self.input_norm.mean[i]) / self.input_norm.std[i];
        }
    }

    pub(crate) fn denormalize(&self, y: &[f64]) -> AngularAccel {
        let m = &self.output_norm;
        AngularAccel {
            roll_acc: y[0] * m.std[0] + m.mean[0],
            pitch_acc: y[1] * m.std[1] + m.mean[1],
            yaw_acc: y[2] * m.std[2] + m.mean[2],
        }
    }

    /// Predicted angular accelerations for one state/action pair.
    pub fn g_phi_forward(&self, s: &VehicleState, a: &Action) -> AngularAccel {
        let mut out = [AngularAccel::default()];
        self.predict_batch(&[features(s, a)], &mut out);
        out[0]
    }

    /// Batched prediction; identical per element to [`PhliModel::g_phi_forward`].
    pub fn predict_batch(&self, inputs: &[[f64; INPUT_DIM]], out: &mut [AngularAccel]) {
        const CHUNK: usize = 128;
        let mut x = vec![0.0; CHUNK * INPUT_DIM];
        let mut y = vec![0.0; CHUNK * OUTPUT_DIM];
        for (xs, os) in inputs.chunks(CHUNK).zip(out.chunks_mut(CHUNK)) {
            let n = xs.len();
            for (k, f) in xs.iter().enumerate() {
                self.normalize_into(f, &mut x[k * INPUT_DIM..(k + 1) * INPUT_DIM]);
            }
            self.mlp.forward_batch(&x[..n * INPUT_DIM], &mut y[..n * OUTPUT_DIM]);
            for (k, o) in os.iter_mut().enumerate() {
                *o = self.denormalize(&y[k * OUTPUT_DIM..(k + 1) * OUTPUT_DIM]);
            }
        }
    }

    /// One hybrid transition using the model's own interval.
    pub fn phli_step(
        &self,
        s: &VehicleState,
        a: &Action,
        limits: &ActuationLimits,
    ) -> Result<VehicleState> {
        let s = clamp_state(s, limits);
        let a = clamp_action(a, &s, limits, self.dt)?;
        let acc = self.g_phi_forward(&s, &a);
        h_xi_step(&acc, &s, &a, self.dt, limits)
    }

    pub fn to_text(&self) -> String {
        fn line(out: &mut String, values: &[f64]) {
            let mut first = true;
            for v in values {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{v:.16e}").unwrap();
            }
            out.push('\n');
        }
        let mut out = String::new();
        out.push_str(FILE_MAGIC);
        out.push('\n');
        let dims: Vec<String> = self.mlp.dims.iter().map(|d| d.to_string()).collect();
        out.push_str(&dims.join(" "));
        out.push('\n');
        line(&mut out, &[self.dt]);
        for l in 0..self.mlp.layers() {
            line(&mut out, &self.mlp.weights[l]);
            line(&mut out, &self.mlp.biases[l]);
        }
        line(&mut out, &self.input_norm.mean);
        line(&mut out, &self.input_norm.std);
        line(&mut out, &self.output_norm.mean);
        line(&mut out, &self.output_norm.std);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#'));
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::ModelFormat(format!("unexpected end of file, expected {what}")))
        };
        let (n, magic) = next("header")?;
        if magic.trim() != FILE_MAGIC {
            return Err(Error::ModelFormat(format!(
                "line {n}: expected header `{FILE_MAGIC}`, found `{}`",
                magic.trim()
            )));
        }
        let (n, dims_line) = next("layer dims")?;
        let dims = dims_line
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::ModelFormat(format!("line {n}: bad layer dims: {e}")))?;
        if dims.len() != 5 || dims[0] != INPUT_DIM || dims[4] != OUTPUT_DIM {
            return Err(Error::ModelFormat(format!(
                "line {n}: layer dims must be [{INPUT_DIM}, h1, h2, h3, {OUTPUT_DIM}], got {dims:?}"
            )));
        }
        let mut floats = |what: &str, expect: usize| -> Result<Vec<f64>> {
            let (n, l) = next(what)?;
            let v = l
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::ModelFormat(format!("line {n}: bad {what}: {e}")))?;
            if v.len() != expect {
                return Err(Error::ModelFormat(format!(
                    "line {n}: {what} has {} values, expected {expect}",
                    v.len()
                )));
            }
            Ok(v)
        };
        let dt = floats("dt", 1)?[0];
        let mut mlp = Mlp::zeros(&dims)?;
        for l in 0..mlp.layers() {
            mlp.weights[l] = floats(&format!("layer {l} weights"), dims[l] * dims[l + 1])?;
            mlp.biases[l] = floats(&format!("layer {l} biases"), dims[l + 1])?;
        }
        mlp.refresh();
        let input_norm = Normalization {
            mean: floats("input means", INPUT_DIM)?,
            std: floats("input stds", INPUT_DIM)?,
        };
        let output_norm = Normalization {
            mean: floats("output means", OUTPUT_DIM)?,
            std: floats("output stds", OUTPUT_DIM)?,
        };
        let m = PhliModel {
            mlp,
            input_norm,
            output_norm,
            dt,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::ModelFormat(m) => Error::ModelFormat(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Analytic half of the hybrid model: integrates supplied accelerations with
/// the same clamping and arithmetic as the oracle step.
pub fn h_xi_step(
    acc: &AngularAccel,
    s: &VehicleState,
    a: &Action,
    dt: f64,
    limits: &ActuationLimits,
) -> Result<VehicleState> {
    let s = clamp_state(s, limits);
    let a = clamp_action(a, &s, limits, dt)?;
    Ok(integrate(&s, acc, &a, dt, limits))
}

impl ForwardModel for PhliModel {
    fn dt(&self) -> f64 {
        self.dt
    }

    fn accel(&self, s: &VehicleState, a: &Action) -> AngularAccel {
        self.g_phi_forward(s, a)
    }

    fn accel_batch(&self, states: &[VehicleState], actions: &[Action], out: &mut [AngularAccel]) {
        let inputs: Vec<[f64; INPUT_DIM]> =
            states.iter().zip(actions).map(|(s, a)| features(s, a)).collect();
        self.predict_batch(&inputs, out);
    }
}
