//! Distance compensation: a one-hidden-layer regressor mapping
//! (distance, measured temperature) to the true temperature, trained with
//! per-sample Adam on mean squared error.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simkit::attenuated_temperature;

/// Physiologically plausible band; corrected outputs are clamped into it.
pub const PLAUSIBLE_RANGE: (f64, f64) = (30.0, 45.0);
const MIN_SAMPLES: usize = 10;

#[derive(Debug, Error)]
pub enum CompensateError {
    #[error("need at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("loss became non-finite at epoch {0}")]
    Diverged(usize),
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} targets")]
    LengthMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One training example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub distance: f64,
    pub measured: f64,
    pub truth: f64,
}

/// `[2, H, 1]` perceptron with a rectifier on the hidden layer. Inputs and
/// target are standardized with constants stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: [usize; 3],
    pub input_mean: [f64; 2],
    pub input_std: [f64; 2],
    pub target_mean: f64,
    pub target_std: f64,
    /// Hidden weights, `H × 2` row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Output weights, `1 × H`.
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient of the single-sample loss with the same layout as [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Mlp {
    /// Uniform Glorot initialization with zero biases and identity scaling.
    pub fn new(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim1 = (6.0 / (2 + hidden) as f64).sqrt();
        let lim2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w1 = (0..2 * hidden).map(|_| rng.random_range(-lim1..=lim1)).collect();
        let w2 = (0..hidden).map(|_| rng.random_range(-lim2..=lim2)).collect();
        Self {
            layer_sizes: [2, hidden, 1],
            input_mean: [0.0; 2],
            input_std: [1.0; 2],
            target_mean: 0.0,
            target_std: 1.0,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: 0.0,
        }
    }

    pub fn zeros(hidden: usize) -> Self {
        Self {
            w1: vec![0.0; 2 * hidden],
            w2: vec![0.0; hidden],
            ..Self::new(hidden, 0)
        }
    }

    pub fn hidden(&self) -> usize {
        self.layer_sizes[1]
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn validate(&self) -> Result<(), CompensateError> {
        let h = self.hidden();
        let shapes_ok = self.layer_sizes[0] == 2
            && self.layer_sizes[2] == 1
            && self.w1.len() == 2 * h
            && self.b1.len() == h
            && self.w2.len() == h;
        if !shapes_ok {
            return Err(CompensateError::Model("inconsistent layer shapes".into()));
        }
        let finite = self.w1.iter().chain(&self.b1).chain(&self.w2).chain([&self.b2]).all(|v| v.is_finite())
            && self.input_mean.iter().chain(&self.input_std).all(|v| v.is_finite())
            && self.target_mean.is_finite()
            && self.target_std.is_finite();
        if !finite {
            return Err(CompensateError::Model("non-finite parameter".into()));
        }
        if self.input_std.iter().any(|s| *s <= 0.0) || self.target_std <= 0.0 {
            return Err(CompensateError::Model("scales must be positive".into()));
        }
        Ok(())
    }

    /// Network output in standardized units for standardized input `x`.
    pub fn forward_standardized(&self, x: [f64; 2]) -> f64 {
        let mut out = self.b2;
        for j in 0..self.hidden() {
            let z = self.w1[2 * j] * x[0] + self.w1[2 * j + 1] * x[1] + self.b1[j];
            out += self.w2[j] * z.max(0.0);
        }
        out
    }

    pub fn standardize(&self, distance: f64, measured: f64) -> [f64; 2] {
        [
            (distance - self.input_mean[0]) / self.input_std[0],
            (measured - self.input_mean[1]) / self.input_std[1],
        ]
    }

    /// Predicted true temperature, °C.
    pub fn forward(&self, distance: f64, measured: f64) -> f64 {
        self.forward_standardized(self.standardize(distance, measured)) * self.target_std + self.target_mean
    }

    /// Loss `(ŷ − y)²` and its gradient for one standardized sample.
    pub fn gradients(&self, x: [f64; 2], y: f64) -> (f64, Gradients) {
        let h = self.hidden();
        let mut act = vec![0.0; h];
        let mut out = self.b2;
        for j in 0..h {
            let z = self.w1[2 * j] * x[0] + self.w1[2 * j + 1] * x[1] + self.b1[j];
            act[j] = z.max(0.0);
            out += self.w2[j] * act[j];
        }
        let r = out - y;
        let d_out = 2.0 * r;
        let mut g = Gradients { w1: vec![0.0; 2 * h], b1: vec![0.0; h], w2: vec![0.0; h], b2: d_out };
        for j in 0..h {
            g.w2[j] = d_out * act[j];
            if act[j] > 0.0 {
                let dz = d_out * self.w2[j];
                g.b1[j] = dz;
                g.w1[2 * j] = dz * x[0];
                g.w1[2 * j + 1] = dz * x[1];
            }
        }
        (r * r, g)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).chain(std::iter::once(&mut self.b2))
    }

    pub fn params(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain([&self.b2]).copied().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CompensateError> {
        let m: Mlp = serde_json::from_str(text).map_err(|e| CompensateError::Model(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, CompensateError> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|source| CompensateError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CompensateError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|source| CompensateError::Io { path: path.display().to_string(), source })
    }
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain([&self.b2]).copied().collect()
    }
}

/// Largest relative disagreement between analytic gradients and central
/// finite differences with step `step`, over every parameter.
pub fn gradient_check(mlp: &Mlp, x: [f64; 2], y: f64, step: f64) -> f64 {
    let analytic = mlp.gradients(x, y).1.flat();
    let mut probe = mlp.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = probe.params_mut().nth(k).map(|p| *p).expect("index in range");
        *probe.params_mut().nth(k).expect("index in range") = orig + step;
        let up = probe.gradients(x, y).0;
        *probe.params_mut().nth(k).expect("index in range") = orig - step;
        let down = probe.gradients(x, y).0;
        *probe.params_mut().nth(k).expect("index in range") = orig;
        let numeric = (up - down) / (2.0 * step);
        let denom = a.abs().max(numeric.abs());
        if denom > 1e-8 {
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    worst
}

/// Mean of squared residuals.
pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64, CompensateError> {
    if predictions.len() != targets.len() {
        return Err(CompensateError::LengthMismatch(predictions.len(), targets.len()));
    }
    if predictions.is_empty() {
        return Err(CompensateError::Empty);
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(sum / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Share of samples used for training; the rest form the test split.
    pub train_fraction: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            epochs: 100,
            batch_size: 1,
            train_fraction: 0.7,
            hidden: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CompensateError> {
        let bad = |m: &str| Err(CompensateError::InvalidConfig(m.into()));
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("betas must lie in (0, 1)");
        }
        if !(self.epsilon > 0.0) || self.batch_size == 0 || self.hidden == 0 {
            return bad("epsilon, batch_size and hidden must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, alpha: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self { alpha, beta1, beta2, epsilon, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (k, p) in params.enumerate() {
            let g = grads[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            *p -= self.alpha * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Training-split MSE (°C²) after each epoch.
    pub epoch_train_mse: Vec<f64>,
    pub test_mse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

fn mse_of(mlp: &Mlp, data: &[Sample]) -> f64 {
    let preds: Vec<f64> = data.iter().map(|s| mlp.forward(s.distance, s.measured)).collect();
    let targets: Vec<f64> = data.iter().map(|s| s.truth).collect();
    loss_mse(&preds, &targets).unwrap_or(0.0)
}

/// Shuffles, splits, standardizes on the training split and runs Adam for
/// exactly `cfg.epochs` epochs.
pub fn train_adam(data: &[Sample], cfg: &TrainConfig) -> Result<(Mlp, LossReport), CompensateError> {
    cfg.validate()?;
    if data.len() < MIN_SAMPLES {
        return Err(CompensateError::TooFewSamples(data.len()));
    }
    if data.iter().any(|s| !(s.distance.is_finite() && s.measured.is_finite() && s.truth.is_finite())) {
        return Err(CompensateError::InvalidConfig("non-finite sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_train = ((data.len() as f64 * cfg.train_fraction).round() as usize).clamp(1, data.len() - 1);
    let train: Vec<Sample> = order[..n_train].iter().map(|&i| data[i]).collect();
    let test: Vec<Sample> = order[n_train..].iter().map(|&i| data[i]).collect();

    let mut mlp = Mlp::new(cfg.hidden, rng.random());
    let (dm, ds) = mean_std(train.iter().map(|s| s.distance));
    let (mm, ms) = mean_std(train.iter().map(|s| s.measured));
    let (tm, ts) = mean_std(train.iter().map(|s| s.truth));
    mlp.input_mean = [dm, mm];
    mlp.input_std = [ds, ms];
    mlp.target_mean = tm;
    mlp.target_std = ts;

    let std_train: Vec<([f64; 2], f64)> =
        train.iter().map(|s| (mlp.standardize(s.distance, s.measured), (s.truth - tm) / ts)).collect();
    let mut adam = Adam::new(mlp.param_count(), cfg.alpha, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut epoch_train_mse = Vec::with_capacity(cfg.epochs);
    let mut idx: Vec<usize> = (0..std_train.len()).collect();
    for epoch in 0..cfg.epochs {
        idx.shuffle(&mut rng);
        for batch in idx.chunks(cfg.batch_size) {
            let mut acc = vec![0.0; mlp.param_count()];
            for &i in batch {
                let (x, y) = std_train[i];
                let g = mlp.gradients(x, y).1;
                acc.iter_mut().zip(&g.flat()).for_each(|(a, b)| *a += b / batch.len() as f64);
            }
            adam.step(mlp.params_mut(), &acc);
        }
        let mse = mse_of(&mlp, &train);
        if !mse.is_finite() {
            return Err(CompensateError::Diverged(epoch));
        }
        epoch_train_mse.push(mse);
    }
    let test_mse = mse_of(&mlp, &test);
    if !test_mse.is_finite() {
        return Err(CompensateError::Diverged(cfg.epochs));
    }
    Ok((mlp, LossReport { epoch_train_mse, test_mse, n_train: train.len(), n_test: test.len() }))
}

/// Outcome of [`correct_temperature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    pub celsius: f64,
    /// False when no model was configured and the raw value passed through.
    pub applied: bool,
}

/// Model prediction clamped to the plausible range, or the raw value when
/// no model is loaded.
pub fn correct_temperature(model: Option<&Mlp>, raw: f64, distance: f64) -> Correction {
    match model {
        Some(m) => Correction {
            celsius: m.forward(distance, raw).clamp(PLAUSIBLE_RANGE.0, PLAUSIBLE_RANGE.1),
            applied: true,
        },
        None => Correction { celsius: raw, applied: false },
    }
}

/// `truth = measured + 0.5 · distance` over a spread of inputs.
pub fn linear_dataset(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let distance = rng.random_range(0.5..4.0);
            let measured = rng.random_range(33.0..39.0);
            Sample { distance, measured, truth: measured + 0.5 * distance }
        })
        .collect()
}

/// Samples of the simulator's attenuation law: a core temperature seen from
/// `distance` with additive sensor noise.
pub fn attenuation_dataset(n: usize, ambient: f64, kappa: f64, noise_sigma: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("non-negative sd");
    (0..n)
        .map(|_| {
            let truth = rng.random_range(35.5..40.0);
            let distance = rng.random_range(0.0..4.0);
            let measured = attenuated_temperature(truth, ambient, kappa, distance) + noise.sample(&mut rng);
            Sample { distance, measured, truth }
        })
        .collect()
}

pub const LOSS_HISTORY_HEADER: &str = "epoch,train_mse";

pub fn write_loss_history<W: Write>(report: &LossReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{LOSS_HISTORY_HEADER}")?;
    for (i, l) in report.epoch_train_mse.iter().enumerate() {
        writeln!(w, "{},{:.9}", i + 1, l)?;
    }
    Ok(())
}
