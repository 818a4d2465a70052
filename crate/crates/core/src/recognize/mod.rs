//! Activity recognition: a small multitask TCN and t-SNE, plus helpers that
//! turn synthetic activity events into feature vectors and frame matrices.

pub mod tcn;
pub mod tsne;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use tcn::{
    backward, classify_latent, example_loss, read_weights, tcn_forward, train, train_from, write_weights, EpochStats,
    Forward, ModelWeights, TcnConfig, TcnError, TrainConfig, TrainError, TrainReport,
};
pub use tsne::{knn_accuracy, tsne, TsneConfig, TsneError, TsneResult};

use crate::devicesim::{synth_signal, ActivityEntry, ActivityKind, ActivityScript, NoiseModel, SimError};
use crate::dsp::fft_features;
use crate::rng::{derive_seed, seeded};

/// The four activity classes used for recognition experiments.
pub const EVENT_CLASSES: [ActivityKind; 4] = [
    ActivityKind::Footstep,
    ActivityKind::ObjectPlace,
    ActivityKind::Shower,
    ActivityKind::MedicationShake,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSetConfig {
    pub per_class: usize,
    pub rate_hz: f64,
    pub noise_std: f64,
    /// Per-event amplitude drawn uniformly from this range.
    pub amplitude: (f64, f64),
    pub seed: u64,
}

impl Default for EventSetConfig {
    fn default() -> Self {
        EventSetConfig {
            per_class: 71,
            rate_hz: 7000.0,
            noise_std: 0.02,
            amplitude: (0.5, 2.0),
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEvent {
    pub kind: ActivityKind,
    pub class: usize,
    /// Samples covering exactly the activity entry.
    pub samples: Vec<f64>,
    pub rate_hz: f64,
}

/// Synthesises `per_class` isolated events for each of `classes`, in
/// round-robin class order, each with its own jittered signature.
pub fn synth_events(classes: &[ActivityKind], cfg: &EventSetConfig) -> Result<Vec<SynthEvent>, SimError> {
    let mut rng = seeded(derive_seed(cfg.seed, 0xe7));
    let mut out = Vec::with_capacity(classes.len() * cfg.per_class);
    for i in 0..cfg.per_class * classes.len() {
        let class = i % classes.len();
        let kind = classes[class];
        let amplitude = rng.random_range(cfg.amplitude.0..=cfg.amplitude.1);
        let entry = ActivityEntry::sample(kind, 0.0, amplitude, &mut rng);
        let duration = entry.duration_s;
        let script = ActivityScript::new(vec![entry]);
        let samples = synth_signal(
            &script,
            &NoiseModel::white(cfg.noise_std),
            cfg.rate_hz,
            duration,
            derive_seed(cfg.seed, i as u64 + 1),
        )?;
        out.push(SynthEvent { kind, class, samples, rate_hz: cfg.rate_hz });
    }
    Ok(out)
}

/// Band-averaged spectra of each event.
pub fn event_features(events: &[SynthEvent], n_bins: usize) -> Vec<Vec<f64>> {
    events.iter().map(|e| fft_features(&e.samples, e.rate_hz, n_bins)).collect()
}

/// `n_bands x n_frames` channel-major matrix: the event is cut into
/// `n_frames` equal chunks, each described by its band spectrum scaled by
/// its RMS relative to the loudest chunk.
pub fn frame_matrix(samples: &[f64], rate_hz: f64, n_bands: usize, n_frames: usize) -> Vec<f64> {
    let chunk = (samples.len() / n_frames).max(1);
    let frames: Vec<(Vec<f64>, f64)> = (0..n_frames)
        .map(|f| {
            let lo = (f * chunk).min(samples.len());
            let hi = ((f + 1) * chunk).min(samples.len());
            let s = &samples[lo..hi];
            let rms = if s.is_empty() { 0.0 } else { (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt() };
            (fft_features(s, rate_hz, n_bands), rms)
        })
        .collect();
    let peak = frames.iter().map(|f| f.1).fold(0.0, f64::max);
    let mut m = vec![0.0; n_bands * n_frames];
    for (t, (feat, rms)) in frames.iter().enumerate() {
        let scale = if peak > 0.0 { rms / peak } else { 0.0 };
        for (b, v) in feat.iter().enumerate() {
            m[b * n_frames + t] = v * scale;
        }
    }
    m
}

pub fn labels_of(events: &[SynthEvent]) -> Vec<usize> {
    events.iter().map(|e| e.class).collect()
}

/// Input representation fed to the TCN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputRepr {
    /// Per-frame band spectra, see [`frame_matrix`].
    #[default]
    Frames,
    /// Single-channel waveform block-averaged down to the window length.
    Raw,
}

/// `n` block means of `samples`, scaled so the largest magnitude is 1.
pub fn raw_window(samples: &[f64], n: usize) -> Vec<f64> {
    let chunk = (samples.len() / n.max(1)).max(1);
    let mut v: Vec<f64> = (0..n)
        .map(|i| {
            let lo = (i * chunk).min(samples.len());
            let hi = ((i + 1) * chunk).min(samples.len());
            let s = &samples[lo..hi];
            if s.is_empty() { 0.0 } else { s.iter().map(|x| x.abs()).sum::<f64>() / s.len() as f64 }
        })
        .collect();
    let peak = v.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        v.iter_mut().for_each(|x| *x /= peak);
    }
    v
}

/// Builds TCN inputs for `events` under `config`. `Raw` needs a single
/// input channel.
pub fn event_inputs(events: &[SynthEvent], repr: InputRepr, config: &TcnConfig) -> Vec<(Vec<f64>, usize)> {
    events
        .iter()
        .map(|e| {
            let x = match repr {
                InputRepr::Frames => frame_matrix(&e.samples, e.rate_hz, config.in_channels, config.input_window),
                InputRepr::Raw => {
                    assert_eq!(config.in_channels, 1, "raw input uses one channel");
                    raw_window(&e.samples, config.input_window)
                }
            };
            (x, e.class)
        })
        .collect()
}
