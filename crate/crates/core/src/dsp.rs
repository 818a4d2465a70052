//! Signal analysis for deployment verification and offline studies.

use std::io::{self, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devicesim::{BAND_HIGH_HZ, BAND_LOW_HZ};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("input of {len} samples is shorter than the {window_len}-sample window")]
    TooShort { len: usize, window_len: usize },
    #[error("window length {0} is not a power of two")]
    WindowLen(usize),
    #[error("hop length {hop} must be in 1..={window}")]
    HopLen { hop: usize, window: usize },
    #[error("{0} input is empty")]
    Empty(&'static str),
    #[error("durations must be positive")]
    Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrogramParams {
    pub window_len: usize,
    pub hop_len: usize,
}

impl Default for SpectrogramParams {
    fn default() -> Self {
        SpectrogramParams {
            window_len: 1024,
            hop_len: 256,
        }
    }
}

/// Short-time magnitude spectrum with a periodic Hann window.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub rate_hz: f64,
    pub params: SpectrogramParams,
    /// `frames[t][k]` is `|X_t(k)|` for `k` in `0..=window_len/2`.
    pub frames: Vec<Vec<f64>>,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.params.window_len / 2 + 1
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.rate_hz / self.params.window_len as f64
    }

    /// Centre time of frame `t`.
    pub fn frame_time_s(&self, t: usize) -> f64 {
        (t * self.params.hop_len + self.params.window_len / 2) as f64 / self.rate_hz
    }

    /// Energy of the windowed frame recovered from its one-sided spectrum
    /// (Parseval): `(|X0|^2 + 2 sum |Xk|^2 + |X_{N/2}|^2) / N`.
    pub fn frame_energy(&self, t: usize) -> f64 {
        let f = &self.frames[t];
        let n = self.params.window_len;
        let last = f.len() - 1;
        let inner: f64 = f[1..last].iter().map(|m| m * m).sum();
        (f[0] * f[0] + 2.0 * inner + f[last] * f[last]) / n as f64
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "time_s")?;
        for k in 0..self.n_bins() {
            write!(out, ",{}", self.bin_hz(k))?;
        }
        writeln!(out)?;
        for (t, frame) in self.frames.iter().enumerate() {
            write!(out, "{}", self.frame_time_s(t))?;
            for m in frame {
                write!(out, ",{m}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn spectrogram(samples: &[f64], rate_hz: f64, params: SpectrogramParams) -> Result<Spectrogram, DspError> {
    let n = params.window_len;
    if n == 0 || !n.is_power_of_two() {
        return Err(DspError::WindowLen(n));
    }
    if params.hop_len == 0 || params.hop_len > n {
        return Err(DspError::HopLen { hop: params.hop_len, window: n });
    }
    if samples.len() < n {
        return Err(DspError::TooShort { len: samples.len(), window_len: n });
    }
    let window = hann(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let n_frames = (samples.len() - n) / params.hop_len + 1;
    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let start = t * params.hop_len;
        for (b, (x, w)) in buf.iter_mut().zip(samples[start..start + n].iter().zip(&window)) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..=n / 2].iter().map(|c| c.norm()).collect());
    }
    Ok(Spectrogram { rate_hz, params, frames })
}

/// One-sided magnitude spectrum of the whole input, with bin spacing.
pub fn magnitude_spectrum(samples: &[f64], rate_hz: f64) -> (Vec<f64>, f64) {
    let n = samples.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);
    (buf[..=n / 2].iter().map(|c| c.norm()).collect(), rate_hz / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventDetectorConfig {
    pub frame_len_s: f64,
    /// A frame is active when its energy exceeds this multiple of the floor.
    pub threshold_factor: f64,
    pub min_event_s: f64,
    pub min_gap_s: f64,
    /// Leading span used to estimate the noise floor.
    pub noise_window_s: f64,
}

impl Default for EventDetectorConfig {
    fn default() -> Self {
        EventDetectorConfig {
            frame_len_s: 0.02,
            threshold_factor: 3.0,
            min_event_s: 0.06,
            min_gap_s: 0.5,
            noise_window_s: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub peak_energy: f64,
    pub snr_db: f64,
}

impl DetectedEvent {
    pub fn iou(&self, start_s: f64, end_s: f64) -> f64 {
        let inter = (self.end_s.min(end_s) - self.start_s.max(start_s)).max(0.0);
        let union = self.end_s.max(end_s) - self.start_s.min(start_s);
        if union > 0.0 {
            inter / union
        } else {
            0.0
        }
    }
}

/// Mean-square energy of consecutive non-overlapping frames.
pub fn frame_energies(samples: &[f64], frame_len: usize) -> Vec<f64> {
    samples
        .chunks_exact(frame_len.max(1))
        .map(|f| f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64)
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 0 {
        0.5 * (values[m - 1] + values[m])
    } else {
        values[m]
    }
}

/// Median frame energy over the leading `noise_window_s`.
pub fn estimate_noise_floor(samples: &[f64], rate_hz: f64, config: &EventDetectorConfig) -> f64 {
    let frame_len = ((config.frame_len_s * rate_hz).round() as usize).max(1);
    let energies = frame_energies(samples, frame_len);
    let n_window = ((config.noise_window_s / config.frame_len_s).round() as usize)
        .clamp(1, energies.len().max(1))
        .min(energies.len());
    median(&mut energies[..n_window].to_vec())
}

pub fn detect_events(samples: &[f64], rate_hz: f64, config: &EventDetectorConfig) -> Vec<DetectedEvent> {
    let floor = estimate_noise_floor(samples, rate_hz, config);
    detect_events_with_floor(samples, rate_hz, config, floor)
}

/// Event detection against a known noise floor (mean-square units).
pub fn detect_events_with_floor(
    samples: &[f64],
    rate_hz: f64,
    config: &EventDetectorConfig,
    floor: f64,
) -> Vec<DetectedEvent> {
    let frame_len = ((config.frame_len_s * rate_hz).round() as usize).max(1);
    let frame_s = frame_len as f64 / rate_hz;
    let energies = frame_energies(samples, frame_len);
    let threshold = config.threshold_factor * floor;

    // runs of active frames as [first, last] frame indices
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &e) in energies.iter().enumerate() {
        if e > threshold {
            match runs.last_mut() {
                Some((_, last)) if *last + 1 == i => *last = i,
                _ => runs.push((i, i)),
            }
        }
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some((_, last)) if ((run.0 - *last - 1) as f64) * frame_s < config.min_gap_s => *last = run.1,
            _ => merged.push(run),
        }
    }
    merged
        .into_iter()
        .filter(|(a, b)| (b - a + 1) as f64 * frame_s >= config.min_event_s)
        .map(|(a, b)| {
            let span = &energies[a..=b];
            let mean = span.iter().sum::<f64>() / span.len() as f64;
            DetectedEvent {
                start_s: a as f64 * frame_s,
                end_s: (b + 1) as f64 * frame_s,
                peak_energy: span.iter().copied().fold(0.0, f64::max),
                snr_db: if floor > 0.0 { 10.0 * (mean / floor).log10() } else { f64::INFINITY },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Snr {
    Db(f64),
    /// The noise reference carries no energy.
    Infinite,
}

impl Snr {
    pub fn db(self) -> f64 {
        match self {
            Snr::Db(v) => v,
            Snr::Infinite => f64::INFINITY,
        }
    }
}

pub fn energy(samples: &[f64]) -> f64 {
    samples.iter().map(|x| x * x).sum()
}

/// Duration-normalised energy ratio in dB:
/// `10 log10((E_signal / T_signal) / (E_noise / T_noise))`.
pub fn snr(signal: &[f64], noise: &[f64], signal_duration_s: f64, noise_duration_s: f64) -> Result<Snr, DspError> {
    if signal.is_empty() {
        return Err(DspError::Empty("signal"));
    }
    if noise.is_empty() {
        return Err(DspError::Empty("noise"));
    }
    if !(signal_duration_s > 0.0 && noise_duration_s > 0.0) {
        return Err(DspError::Duration);
    }
    let noise_power = energy(noise) / noise_duration_s;
    if noise_power == 0.0 {
        return Ok(Snr::Infinite);
    }
    let signal_power = energy(signal) / signal_duration_s;
    Ok(Snr::Db(10.0 * (signal_power / noise_power).log10()))
}

/// [`snr`] with durations taken from sample counts at `rate_hz`.
pub fn snr_at_rate(signal: &[f64], noise: &[f64], rate_hz: f64) -> Result<Snr, DspError> {
    snr(signal, noise, signal.len() as f64 / rate_hz, noise.len() as f64 / rate_hz)
}

/// L2-normalised magnitude spectrum restricted to [10, 1000] Hz and averaged
/// into `n_bins` equal-width bands. A zero input yields a zero vector.
pub fn fft_features(event: &[f64], rate_hz: f64, n_bins: usize) -> Vec<f64> {
    let (mags, df) = magnitude_spectrum(event, rate_hz);
    let mut out = vec![0.0; n_bins];
    if mags.is_empty() || n_bins == 0 {
        return out;
    }
    let band_w = (BAND_HIGH_HZ - BAND_LOW_HZ) / n_bins as f64;
    let at = |f: f64| -> f64 {
        // linear interpolation of the magnitude spectrum at frequency f
        let x = f / df;
        let i = (x.floor() as usize).min(mags.len() - 1);
        let j = (i + 1).min(mags.len() - 1);
        let w = x - i as f64;
        mags[i] * (1.0 - w) + mags[j] * w
    };
    for (b, o) in out.iter_mut().enumerate() {
        let lo = BAND_LOW_HZ + b as f64 * band_w;
        let hi = lo + band_w;
        let k_lo = (lo / df).ceil() as usize;
        let k_hi = ((hi / df).ceil() as usize).min(mags.len());
        *o = if k_lo < k_hi {
            mags[k_lo..k_hi].iter().sum::<f64>() / (k_hi - k_lo) as f64
        } else {
            at(0.5 * (lo + hi))
        };
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|v| *v /= norm);
    }
    out
}

pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// Circular autocorrelation of the mean-removed series, normalised so that
/// lag 0 equals 1 (all zeros for a constant series).
pub fn circular_autocorrelation(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let r0: f64 = x.iter().map(|v| v * v).sum();
    (0..n)
        .map(|lag| {
            if r0 == 0.0 {
                return 0.0;
            }
            (0..n).map(|i| x[i] * x[(i + lag) % n]).sum::<f64>() / r0
        })
        .collect()
}

/// Fundamental period of a series: the first local maximum of the circular
/// autocorrelation (lags 1..=n/2) reaching 90% of the largest value there.
pub fn dominant_period(series: &[f64]) -> Option<usize> {
    let r = circular_autocorrelation(series);
    let max_lag = series.len() / 2;
    if max_lag < 2 {
        return None;
    }
    let best = r[1..=max_lag].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if best <= 0.0 {
        return None;
    }
    (1..=max_lag).find(|&l| {
        let left = r[l - 1];
        let right = r.get(l + 1).copied().unwrap_or(f64::NEG_INFINITY);
        r[l] >= 0.9 * best && r[l] >= left && r[l] >= right
    })
}
