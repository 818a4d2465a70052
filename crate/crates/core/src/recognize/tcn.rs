//! Dilated causal TCN encoder with a classification head and a
//! reconstruction head, trained by momentum SGD with explicit backprop.
//!
//! Inputs are `in_channels x input_window` matrices stored channel-major.
//! Layer `l` convolves with dilation `2^l`, zero-padding only the past, and
//! applies ReLU. The latent vector is the mean of the last layer over the
//! timesteps whose receptive field lies inside the window. Both heads are
//! affine maps of the latent vector alone.

use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, seeded};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    pub input_window: usize,
    pub in_channels: usize,
    pub n_layers: usize,
    /// Width of every hidden layer; the last layer has `latent_dim` channels.
    pub channels: usize,
    pub kernel_size: usize,
    pub latent_dim: usize,
    pub n_classes: usize,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TcnError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("label {label} outside 0..{n_classes}")]
    Label { label: usize, n_classes: usize },
}

impl TcnConfig {
    pub fn receptive_field(&self) -> usize {
        1 + (0..self.n_layers).map(|l| (self.kernel_size - 1) << l).sum::<usize>()
    }

    pub fn dilation(&self, layer: usize) -> usize {
        1 << layer
    }

    pub fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let input = if layer == 0 { self.in_channels } else { self.channels };
        let output = if layer + 1 == self.n_layers { self.latent_dim } else { self.channels };
        (input, output)
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.input_window
    }

    /// Timesteps averaged into the latent vector.
    pub fn valid_steps(&self) -> std::ops::Range<usize> {
        self.receptive_field() - 1..self.input_window
    }

    pub fn validate(&self) -> Result<(), TcnError> {
        let bad = |m: &str| Err(TcnError::Config(m.into()));
        if self.n_layers == 0 || self.n_layers > 16 {
            return bad("n_layers must be in 1..=16");
        }
        if self.kernel_size == 0 {
            return bad("kernel_size must be positive");
        }
        if [self.in_channels, self.channels, self.latent_dim, self.input_window].contains(&0) {
            return bad("dimensions must be positive");
        }
        if self.n_classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.receptive_field() > self.input_window {
            return Err(TcnError::Config(format!(
                "receptive field {} exceeds input window {}",
                self.receptive_field(),
                self.input_window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub dilation: usize,
    /// `[out][in][tap]`; tap `kernel - 1` reads the current timestep.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl ConvLayer {
    fn idx(&self, o: usize, i: usize, j: usize) -> usize {
        (o * self.in_ch + i) * self.kernel + j
    }

    /// How far back tap `j` looks.
    fn lag(&self, j: usize) -> usize {
        (self.kernel - 1 - j) * self.dilation
    }

    fn forward(&self, x: &[f64], len: usize) -> Vec<f64> {
        let mut a = vec![0.0; self.out_ch * len];
        for o in 0..self.out_ch {
            let row = &mut a[o * len..(o + 1) * len];
            row.fill(self.b[o]);
            for i in 0..self.in_ch {
                let xi = &x[i * len..(i + 1) * len];
                for j in 0..self.kernel {
                    let w = self.w[self.idx(o, i, j)];
                    let lag = self.lag(j);
                    for t in lag..len {
                        row[t] += w * xi[t - lag];
                    }
                }
            }
        }
        a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub config: TcnConfig,
    pub layers: Vec<ConvLayer>,
    /// `[class][latent]`
    pub cls_w: Vec<f64>,
    pub cls_b: Vec<f64>,
    /// `[input value][latent]`
    pub rec_w: Vec<f64>,
    pub rec_b: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(config: TcnConfig) -> Result<Self, TcnError> {
        config.validate()?;
        let layers = (0..config.n_layers)
            .map(|l| {
                let (in_ch, out_ch) = config.layer_dims(l);
                ConvLayer {
                    in_ch,
                    out_ch,
                    kernel: config.kernel_size,
                    dilation: config.dilation(l),
                    w: vec![0.0; out_ch * in_ch * config.kernel_size],
                    b: vec![0.0; out_ch],
                }
            })
            .collect();
        Ok(ModelWeights {
            config,
            layers,
            cls_w: vec![0.0; config.n_classes * config.latent_dim],
            cls_b: vec![0.0; config.n_classes],
            rec_w: vec![0.0; config.input_len() * config.latent_dim],
            rec_b: vec![0.0; config.input_len()],
        })
    }

    /// He-normal convolution kernels, Xavier-normal heads, zero biases.
    pub fn init(config: TcnConfig, seed: u64) -> Result<Self, TcnError> {
        let mut m = Self::zeros(config)?;
        let mut rng = seeded(derive_seed(seed, 0x7c4));
        for layer in &mut m.layers {
            let fan_in = (layer.in_ch * layer.kernel) as f64;
            let n = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
            layer.w.iter_mut().for_each(|w| *w = n.sample(&mut rng));
        }
        let d = config.latent_dim as f64;
        let n = Normal::new(0.0, (2.0 / (d + config.n_classes as f64)).sqrt()).expect("finite std");
        m.cls_w.iter_mut().for_each(|w| *w = n.sample(&mut rng));
        let n = Normal::new(0.0, (2.0 / (d + config.input_len() as f64)).sqrt()).expect("finite std");
        m.rec_w.iter_mut().for_each(|w| *w = n.sample(&mut rng));
        Ok(m)
    }

    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut t: Vec<&Vec<f64>> = Vec::new();
        for l in &self.layers {
            t.push(&l.w);
            t.push(&l.b);
        }
        t.extend([&self.cls_w, &self.cls_b, &self.rec_w, &self.rec_b]);
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut t: Vec<&mut Vec<f64>> = Vec::new();
        for l in &mut self.layers {
            t.push(&mut l.w);
            t.push(&mut l.b);
        }
        t.extend([&mut self.cls_w, &mut self.cls_b, &mut self.rec_w, &mut self.rec_b]);
        t
    }

    /// Tensor shapes in the order of [`Self::tensors`].
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let c = &self.config;
        let mut s = Vec::new();
        for l in &self.layers {
            s.push(vec![l.out_ch, l.in_ch, l.kernel]);
            s.push(vec![l.out_ch]);
        }
        s.push(vec![c.n_classes, c.latent_dim]);
        s.push(vec![c.n_classes]);
        s.push(vec![c.input_len(), c.latent_dim]);
        s.push(vec![c.input_len()]);
        s
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub latent: Vec<f64>,
    pub logits: Vec<f64>,
    pub reconstruction: Vec<f64>,
    /// Post-ReLU activations per layer, `[channel][t]`.
    pub activations: Vec<Vec<f64>>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(r, &bias)| bias + w[r * x.len()..(r + 1) * x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// Class logits from a latent vector; the classifier sees nothing else.
pub fn classify_latent(weights: &ModelWeights, latent: &[f64]) -> Vec<f64> {
    affine(&weights.cls_w, &weights.cls_b, latent)
}

pub fn reconstruct_latent(weights: &ModelWeights, latent: &[f64]) -> Vec<f64> {
    affine(&weights.rec_w, &weights.rec_b, latent)
}

pub fn tcn_forward(weights: &ModelWeights, window: &[f64]) -> Result<Forward, TcnError> {
    let c = &weights.config;
    if window.len() != c.input_len() {
        return Err(TcnError::Shape { expected: c.input_len(), got: window.len() });
    }
    let len = c.input_window;
    let mut activations = Vec::with_capacity(c.n_layers);
    let mut x = window.to_vec();
    for layer in &weights.layers {
        let mut a = layer.forward(&x, len);
        a.iter_mut().for_each(|v| *v = v.max(0.0));
        activations.push(a.clone());
        x = a;
    }
    let valid = c.valid_steps();
    let n_valid = valid.len() as f64;
    let latent: Vec<f64> = (0..c.latent_dim)
        .map(|k| x[k * len + valid.start..k * len + valid.end].iter().sum::<f64>() / n_valid)
        .collect();
    Ok(Forward {
        logits: classify_latent(weights, &latent),
        reconstruction: reconstruct_latent(weights, &latent),
        latent,
        activations,
    })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub cross_entropy: f64,
    pub mse: f64,
}

/// Cross-entropy plus `lambda` times reconstruction MSE for one example.
pub fn example_loss(weights: &ModelWeights, window: &[f64], label: usize, lambda: f64) -> Result<LossParts, TcnError> {
    let f = tcn_forward(weights, window)?;
    Ok(loss_of(&f, window, label, lambda))
}

fn loss_of(f: &Forward, window: &[f64], label: usize, lambda: f64) -> LossParts {
    let p = softmax(&f.logits);
    let ce = -p[label].max(1e-300).ln();
    let mse = f.reconstruction.iter().zip(window).map(|(r, x)| (r - x).powi(2)).sum::<f64>() / window.len() as f64;
    LossParts { total: ce + lambda * mse, cross_entropy: ce, mse }
}

/// Loss and its gradient for one example, accumulated into `grad`.
pub fn backward(
    weights: &ModelWeights,
    window: &[f64],
    label: usize,
    lambda: f64,
    grad: &mut ModelWeights,
) -> Result<LossParts, TcnError> {
    let c = weights.config;
    if label >= c.n_classes {
        return Err(TcnError::Label { label, n_classes: c.n_classes });
    }
    let f = tcn_forward(weights, window)?;
    let loss = loss_of(&f, window, label, lambda);
    let len = c.input_window;
    let d = c.latent_dim;

    let mut dlogits = softmax(&f.logits);
    dlogits[label] -= 1.0;
    let n_in = window.len() as f64;
    let drec: Vec<f64> = f
        .reconstruction
        .iter()
        .zip(window)
        .map(|(r, x)| lambda * 2.0 * (r - x) / n_in)
        .collect();

    let mut dz = vec![0.0; d];
    for (k, &g) in dlogits.iter().enumerate() {
        grad.cls_b[k] += g;
        for j in 0..d {
            grad.cls_w[k * d + j] += g * f.latent[j];
            dz[j] += g * weights.cls_w[k * d + j];
        }
    }
    for (r, &g) in drec.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad.rec_b[r] += g;
        for j in 0..d {
            grad.rec_w[r * d + j] += g * f.latent[j];
            dz[j] += g * weights.rec_w[r * d + j];
        }
    }

    let valid = c.valid_steps();
    let n_valid = valid.len() as f64;
    let mut dh = vec![0.0; d * len];
    for k in 0..d {
        for t in valid.clone() {
            dh[k * len + t] = dz[k] / n_valid;
        }
    }
    for l in (0..c.n_layers).rev() {
        let layer = &weights.layers[l];
        let out = &f.activations[l];
        let input: &[f64] = if l == 0 { window } else { &f.activations[l - 1] };
        // ReLU: activation is zero exactly where the pre-activation was clipped
        for (g, &a) in dh.iter_mut().zip(out) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
        let gl = &mut grad.layers[l];
        let mut dx = vec![0.0; layer.in_ch * len];
        for o in 0..layer.out_ch {
            let da = &dh[o * len..(o + 1) * len];
            gl.b[o] += da.iter().sum::<f64>();
            for i in 0..layer.in_ch {
                let xi = &input[i * len..(i + 1) * len];
                for j in 0..layer.kernel {
                    let lag = layer.lag(j);
                    let w = layer.w[layer.idx(o, i, j)];
                    let mut acc = 0.0;
                    for t in lag..len {
                        acc += da[t] * xi[t - lag];
                        dx[i * len + t - lag] += w * da[t];
                    }
                    gl.w[layer.idx(o, i, j)] += acc;
                }
            }
        }
        dh = dx;
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Weight of the reconstruction MSE.
    pub lambda: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    /// Stop once training accuracy reaches this fraction.
    pub target_accuracy: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 8,
            learning_rate: 0.05,
            momentum: 0.9,
            lambda: 0.1,
            max_grad_norm: Some(5.0),
            target_accuracy: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub cross_entropy: f64,
    pub mse: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: ModelWeights,
    pub trace: Vec<EpochStats>,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.trace.last().map_or(0.0, |e| e.accuracy)
    }

    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,loss,cross_entropy,mse,accuracy")?;
        for e in &self.trace {
            writeln!(out, "{},{},{},{},{}", e.epoch, e.loss, e.cross_entropy, e.mse, e.accuracy)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] TcnError),
    #[error("training set needs at least two classes")]
    SingleClass,
    #[error("diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

pub fn accuracy(weights: &ModelWeights, data: &[(Vec<f64>, usize)]) -> Result<f64, TcnError> {
    let mut hit = 0;
    for (x, y) in data {
        if argmax(&tcn_forward(weights, x)?.logits) == *y {
            hit += 1;
        }
    }
    Ok(hit as f64 / data.len().max(1) as f64)
}

/// Mini-batch momentum SGD from a seeded initialisation.
pub fn train(data: &[(Vec<f64>, usize)], config: TcnConfig, hyper: &TrainConfig) -> Result<TrainReport, TrainError> {
    let weights = ModelWeights::init(config, hyper.seed)?;
    train_from(weights, data, hyper)
}

pub fn train_from(
    mut weights: ModelWeights,
    data: &[(Vec<f64>, usize)],
    hyper: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    let c = weights.config;
    let mut classes: Vec<usize> = data.iter().map(|(_, y)| *y).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(TrainError::SingleClass);
    }
    for (x, y) in data {
        if x.len() != c.input_len() {
            return Err(TcnError::Shape { expected: c.input_len(), got: x.len() }.into());
        }
        if *y >= c.n_classes {
            return Err(TcnError::Label { label: *y, n_classes: c.n_classes }.into());
        }
    }
    let mut rng = seeded(derive_seed(hyper.seed, 0x5e1));
    let mut velocity = ModelWeights::zeros(c)?;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut trace = Vec::new();
    let batch = hyper.batch_size.max(1);

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts::default();
        for chunk in order.chunks(batch) {
            let mut grad = ModelWeights::zeros(c)?;
            for &i in chunk {
                let (x, y) = &data[i];
                let l = backward(&weights, x, *y, hyper.lambda, &mut grad)?;
                sum.total += l.total;
                sum.cross_entropy += l.cross_entropy;
                sum.mse += l.mse;
            }
            let scale = 1.0 / chunk.len() as f64;
            let mut norm = 0.0;
            for t in grad.tensors_mut() {
                for g in t.iter_mut() {
                    *g *= scale;
                    norm += *g * *g;
                }
            }
            let norm = norm.sqrt();
            let clip = match hyper.max_grad_norm {
                Some(m) if norm > m => m / norm,
                _ => 1.0,
            };
            for ((w, v), g) in weights
                .tensors_mut()
                .into_iter()
                .zip(velocity.tensors_mut())
                .zip(grad.tensors())
            {
                for k in 0..w.len() {
                    v[k] = hyper.momentum * v[k] - hyper.learning_rate * clip * g[k];
                    w[k] += v[k];
                }
            }
        }
        let n = data.len() as f64;
        let loss = sum.total / n;
        if !loss.is_finite() || !weights.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        let acc = accuracy(&weights, data)?;
        trace.push(EpochStats {
            epoch,
            loss,
            cross_entropy: sum.cross_entropy / n,
            mse: sum.mse / n,
            accuracy: acc,
        });
        if hyper.target_accuracy.is_some_and(|t| acc >= t) {
            break;
        }
    }
    Ok(TrainReport { weights, trace })
}

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VTCN";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a weights file")]
    Magic,
    #[error("unsupported weights version {0}")]
    Version(u32),
    #[error(transparent)]
    Config(#[from] TcnError),
    #[error("tensor {index}: shape {found:?}, expected {expected:?}")]
    Shape { index: usize, found: Vec<usize>, expected: Vec<usize> },
    #[error("non-finite value in tensor {0}")]
    NonFinite(usize),
}

/// `VTCN`, version, seven config words, tensor count, then per tensor its
/// rank, dims and f64 values, all little-endian.
pub fn write_weights<W: Write>(weights: &ModelWeights, mut out: W) -> io::Result<()> {
    let c = &weights.config;
    out.write_all(WEIGHTS_MAGIC)?;
    out.write_all(&WEIGHTS_VERSION.to_le_bytes())?;
    for v in [c.input_window, c.in_channels, c.n_layers, c.channels, c.kernel_size, c.latent_dim, c.n_classes] {
        out.write_all(&(v as u32).to_le_bytes())?;
    }
    let shapes = weights.shapes();
    out.write_all(&(shapes.len() as u32).to_le_bytes())?;
    for (shape, t) in shapes.iter().zip(weights.tensors()) {
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for d in shape {
            out.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in t {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights<R: Read>(mut input: R) -> Result<ModelWeights, WeightsFileError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(WeightsFileError::Magic);
    }
    let version = read_u32(&mut input)?;
    if version != WEIGHTS_VERSION {
        return Err(WeightsFileError::Version(version));
    }
    let mut f = [0usize; 7];
    for v in &mut f {
        *v = read_u32(&mut input)? as usize;
    }
    let config = TcnConfig {
        input_window: f[0],
        in_channels: f[1],
        n_layers: f[2],
        channels: f[3],
        kernel_size: f[4],
        latent_dim: f[5],
        n_classes: f[6],
    };
    let mut weights = ModelWeights::zeros(config)?;
    let expected = weights.shapes();
    let count = read_u32(&mut input)? as usize;
    if count != expected.len() {
        return Err(WeightsFileError::Shape { index: count, found: vec![count], expected: vec![expected.len()] });
    }
    for (index, (tensor, want)) in weights.tensors_mut().into_iter().zip(&expected).enumerate() {
        let rank = read_u32(&mut input)? as usize;
        if rank > 8 {
            return Err(WeightsFileError::Shape { index, found: vec![rank], expected: want.clone() });
        }
        let mut found = Vec::with_capacity(rank);
        for _ in 0..rank {
            found.push(read_u32(&mut input)? as usize);
        }
        if &found != want {
            return Err(WeightsFileError::Shape { index, found, expected: want.clone() });
        }
        let mut b = [0u8; 8];
        for v in tensor.iter_mut() {
            input.read_exact(&mut b)?;
            *v = f64::from_le_bytes(b);
            if !v.is_finite() {
                return Err(WeightsFileError::NonFinite(index));
            }
        }
    }
    Ok(weights)
}
