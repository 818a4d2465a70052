//! Simulated plug-in vibration sensor.
//!
//! A device turns an [`ActivityScript`] into a continuous-time vibration
//! waveform, samples it with a jittery clock, frames the samples with
//! [`crate::wireproto`] and pushes the datagrams through a
//! [`crate::netsim::Channel`].
//!
//! Spectral signatures per activity kind:
//!
//! | kind              | shape                                        | default centres (Hz) |
//! |-------------------|----------------------------------------------|----------------------|
//! | footstep          | impacts every 0.45 s, ring-down 20 ms        | 45, 110              |
//! | object_place      | one impact ringing across the entry          | 320, 640             |
//! | door              | two impacts (open, latch)                    | 90, 180              |
//! | medication_shake  | rattle train at 10 Hz, ring-down 8 ms        | 700, 900             |
//! | shower            | sustained narrowband noise, +/-30% per centre| 250, 500, 800        |
//! | idle              | nothing                                      | -                    |
//!
//! Impacts use a gamma envelope `(t/tau) * exp(1 - t/tau)`; its smooth
//! onset keeps the spectrum concentrated around the centre frequencies.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{Channel, ChannelConfig, ChannelConfigError, DeliveryEvent};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::wireproto::{self, EncodeError, PacketHeader, SAMPLE_MAX, SAMPLE_MIN};

pub const BAND_LOW_HZ: f64 = 10.0;
pub const BAND_HIGH_HZ: f64 = 1000.0;

/// Care-framework category attached to activities and objects of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CareTag {
    Mobility,
    Medication,
    MattersMost,
    Mentation,
}

impl CareTag {
    pub const ALL: [CareTag; 4] = [
        CareTag::Mobility,
        CareTag::Medication,
        CareTag::MattersMost,
        CareTag::Mentation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CareTag::Mobility => "mobility",
            CareTag::Medication => "medication",
            CareTag::MattersMost => "matters_most",
            CareTag::Mentation => "mentation",
        }
    }
}

impl fmt::Display for CareTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CareTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CareTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tag '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Footstep,
    ObjectPlace,
    Shower,
    MedicationShake,
    Door,
    Idle,
}

impl ActivityKind {
    pub const ALL: [ActivityKind; 6] = [
        ActivityKind::Footstep,
        ActivityKind::ObjectPlace,
        ActivityKind::Shower,
        ActivityKind::MedicationShake,
        ActivityKind::Door,
        ActivityKind::Idle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityKind::Footstep => "footstep",
            ActivityKind::ObjectPlace => "object_place",
            ActivityKind::Shower => "shower",
            ActivityKind::MedicationShake => "medication_shake",
            ActivityKind::Door => "door",
            ActivityKind::Idle => "idle",
        }
    }

    pub fn care_tag(self) -> CareTag {
        match self {
            ActivityKind::Footstep | ActivityKind::Door => CareTag::Mobility,
            ActivityKind::MedicationShake => CareTag::Medication,
            ActivityKind::ObjectPlace | ActivityKind::Shower => CareTag::MattersMost,
            ActivityKind::Idle => CareTag::Mentation,
        }
    }

    pub fn default_center_freqs(self) -> Vec<f64> {
        match self {
            ActivityKind::Footstep => vec![45.0, 110.0],
            ActivityKind::ObjectPlace => vec![320.0, 640.0],
            ActivityKind::Shower => vec![250.0, 500.0, 800.0],
            ActivityKind::MedicationShake => vec![700.0, 900.0],
            ActivityKind::Door => vec![90.0, 180.0],
            ActivityKind::Idle => vec![],
        }
    }

    /// Typical entry duration range in seconds.
    pub fn duration_range(self) -> (f64, f64) {
        match self {
            ActivityKind::Footstep => (2.0, 3.0),
            ActivityKind::ObjectPlace => (0.3, 0.45),
            ActivityKind::Shower => (3.0, 5.0),
            ActivityKind::MedicationShake => (1.0, 2.0),
            ActivityKind::Door => (0.5, 0.8),
            ActivityKind::Idle => (1.0, 5.0),
        }
    }
}

impl fmt::Display for ActivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ActivityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown activity kind '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityEntry {
    pub start_s: f64,
    pub duration_s: f64,
    pub kind: ActivityKind,
    pub amplitude: f64,
    pub center_freqs_hz: Vec<f64>,
}

impl ActivityEntry {
    pub fn end_s(&self) -> f64 {
        self.start_s + self.duration_s
    }

    /// Draws one instance of `kind` with its default signature, jittering
    /// duration and centre frequencies (+/-8%) for within-class variety.
    pub fn sample(kind: ActivityKind, start_s: f64, amplitude: f64, rng: &mut impl Rng) -> Self {
        let (lo, hi) = kind.duration_range();
        let duration_s = rng.random_range(lo..=hi);
        let center_freqs_hz = kind
            .default_center_freqs()
            .into_iter()
            .map(|f| (f * rng.random_range(0.92..=1.08)).clamp(BAND_LOW_HZ, BAND_HIGH_HZ))
            .collect();
        ActivityEntry {
            start_s,
            duration_s,
            kind,
            amplitude,
            center_freqs_hz,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivityScript {
    pub entries: Vec<ActivityEntry>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("entry {index}: centre frequency {freq_hz} Hz outside [10, 1000] Hz")]
    FrequencyOutOfBand { index: usize, freq_hz: f64 },
    #[error("entry {index} overlaps entry {other}")]
    Overlap { index: usize, other: usize },
    #[error("entry {index}: {reason}")]
    BadEntry { index: usize, reason: &'static str },
    #[error("script ends at {end_s} s but duration is {duration_s} s")]
    DurationTooShort { end_s: f64, duration_s: f64 },
    #[error("invalid clock model: {0}")]
    Clock(&'static str),
    #[error("ambient noise std must be positive")]
    Noise,
    #[error(transparent)]
    Channel(#[from] ChannelConfigError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

impl ActivityScript {
    pub fn new(mut entries: Vec<ActivityEntry>) -> Self {
        entries.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        ActivityScript { entries }
    }

    pub fn end_s(&self) -> f64 {
        self.entries.iter().map(|e| e.end_s()).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for (index, e) in self.entries.iter().enumerate() {
            if !(e.start_s >= 0.0 && e.start_s.is_finite()) {
                return Err(SimError::BadEntry { index, reason: "start must be finite and non-negative" });
            }
            if !(e.duration_s > 0.0 && e.duration_s.is_finite()) {
                return Err(SimError::BadEntry { index, reason: "duration must be positive" });
            }
            if !e.amplitude.is_finite() {
                return Err(SimError::BadEntry { index, reason: "amplitude must be finite" });
            }
            if let Some(&freq_hz) = e
                .center_freqs_hz
                .iter()
                .find(|f| !(BAND_LOW_HZ..=BAND_HIGH_HZ).contains(*f))
            {
                return Err(SimError::FrequencyOutOfBand { index, freq_hz });
            }
        }
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by(|&a, &b| self.entries[a].start_s.total_cmp(&self.entries[b].start_s));
        for w in order.windows(2) {
            if self.entries[w[1]].start_s < self.entries[w[0]].end_s() {
                return Err(SimError::Overlap { index: w[1], other: w[0] });
            }
        }
        Ok(())
    }

    /// Back-to-back sequence of `count` activities cycling through `kinds`,
    /// separated by `gap_s` seconds of silence.
    pub fn generate(kinds: &[ActivityKind], count: usize, gap_s: f64, amplitude: f64, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut t = gap_s;
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let e = ActivityEntry::sample(kinds[i % kinds.len()], t, amplitude, &mut rng);
            t = e.end_s() + gap_s;
            entries.push(e);
        }
        ActivityScript { entries }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockModel {
    pub nominal_rate_hz: f64,
    /// Standard deviation of the per-packet effective sampling rate.
    pub rate_std_hz: f64,
    /// When set, the device clock is disciplined to the hub and drift is zero.
    pub sync_enabled: bool,
    #[serde(default)]
    pub drift_ppm: f64,
}

impl ClockModel {
    pub const PRESETS: [&'static str; 5] =
        ["deployment1", "deployment2", "deployment3", "nominal", "nominal6800"];

    /// Named presets. `deploymentN` mirror the three field deployments:
    /// the first two ran unsynchronised, the third synchronised its clock.
    pub fn preset(name: &str) -> Option<ClockModel> {
        let (nominal_rate_hz, rate_std_hz, sync_enabled, drift_ppm) = match name {
            "deployment1" => (7000.0, 734.0, false, 25.0),
            "deployment2" => (7000.0, 799.0, false, 25.0),
            "deployment3" => (7000.0, 316.0, true, 0.0),
            "nominal" => (7000.0, 0.0, true, 0.0),
            "nominal6800" => (6800.0, 0.0, true, 0.0),
            _ => return None,
        };
        Some(ClockModel {
            nominal_rate_hz,
            rate_std_hz,
            sync_enabled,
            drift_ppm,
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.nominal_rate_hz > 2.0 * BAND_HIGH_HZ) {
            return Err(SimError::Clock("nominal rate must exceed twice the 1000 Hz band edge"));
        }
        if !(self.rate_std_hz >= 0.0) {
            return Err(SimError::Clock("rate std must be non-negative"));
        }
        if !self.drift_ppm.is_finite() {
            return Err(SimError::Clock("drift must be finite"));
        }
        Ok(())
    }

    fn effective_drift(&self) -> f64 {
        if self.sync_enabled {
            0.0
        } else {
            self.drift_ppm * 1e-6
        }
    }

    /// Draws one packet's sampling rate: Normal(nominal, std) truncated to
    /// stay above 10% of nominal.
    fn draw_rate(&self, rng: &mut SimRng) -> f64 {
        if self.rate_std_hz == 0.0 {
            return self.nominal_rate_hz;
        }
        let normal = Normal::new(self.nominal_rate_hz, self.rate_std_hz).expect("validated std");
        loop {
            let r = normal.sample(rng);
            if r > 0.1 * self.nominal_rate_hz {
                return r;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Powerline {
    pub hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub ambient_std: f64,
    #[serde(default)]
    pub powerline: Option<Powerline>,
}

impl NoiseModel {
    pub fn white(ambient_std: f64) -> Self {
        NoiseModel {
            ambient_std,
            powerline: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.ambient_std > 0.0 && self.ambient_std.is_finite() {
            Ok(())
        } else {
            Err(SimError::Noise)
        }
    }
}

#[derive(Debug, Clone)]
enum Component {
    Impact {
        onset: f64,
        end: f64,
        tau: f64,
        amplitude: f64,
        partials: Vec<(f64, f64)>,
    },
    Sustained {
        start: f64,
        end: f64,
        ramp: f64,
        partials: Vec<(f64, f64, f64)>,
    },
}

impl Component {
    fn start(&self) -> f64 {
        match self {
            Component::Impact { onset, .. } => *onset,
            Component::Sustained { start, .. } => *start,
        }
    }

    fn end(&self) -> f64 {
        match self {
            Component::Impact { end, .. } | Component::Sustained { end, .. } => *end,
        }
    }

    fn value(&self, t: f64) -> f64 {
        match self {
            Component::Impact { onset, tau, amplitude, partials, .. } => {
                let u = (t - onset) / tau;
                let env = u * (1.0 - u).exp();
                let n = partials.len() as f64;
                let osc: f64 = partials
                    .iter()
                    .map(|(f, phase)| (2.0 * PI * f * (t - onset) + phase).sin())
                    .sum();
                amplitude * env * osc / n
            }
            Component::Sustained { start, end, ramp, partials } => {
                let env = raised_cosine((t - start) / ramp) * raised_cosine((end - t) / ramp);
                let osc: f64 = partials
                    .iter()
                    .map(|(f, phase, a)| a * (2.0 * PI * f * t + phase).sin())
                    .sum();
                env * osc
            }
        }
    }
}

fn raised_cosine(x: f64) -> f64 {
    if x >= 1.0 {
        1.0
    } else if x <= 0.0 {
        0.0
    } else {
        0.5 - 0.5 * (PI * x).cos()
    }
}

/// Noise-free activity waveform built from a script.
#[derive(Debug, Clone)]
pub struct ActivityWaveform {
    components: Vec<Component>,
}

const SHOWER_PARTIALS: usize = 24;

impl ActivityWaveform {
    pub fn new(script: &ActivityScript, seed: u64) -> Result<Self, SimError> {
        script.validate()?;
        let mut rng = seeded(derive_seed(seed, 0xA11));
        let mut components = Vec::new();
        for e in &script.entries {
            if e.center_freqs_hz.is_empty() || e.kind == ActivityKind::Idle {
                continue;
            }
            let (s, d) = (e.start_s, e.duration_s);
            let mut impacts = |onsets: Vec<f64>, tau: f64, rng: &mut SimRng| {
                for onset in onsets {
                    let partials = e
                        .center_freqs_hz
                        .iter()
                        .map(|&f| (f, rng.random_range(0.0..2.0 * PI)))
                        .collect();
                    components.push(Component::Impact {
                        onset: s + onset,
                        end: s + d,
                        tau,
                        amplitude: e.amplitude,
                        partials,
                    });
                }
            };
            match e.kind {
                ActivityKind::Footstep => {
                    let tau = 0.02;
                    let mut onsets: Vec<f64> = (0..)
                        .map(|k| 0.05 + 0.45 * k as f64)
                        .take_while(|o| o + 8.0 * tau <= d)
                        .collect();
                    if onsets.is_empty() {
                        onsets.push(0.0);
                    }
                    impacts(onsets, tau, &mut rng);
                }
                ActivityKind::ObjectPlace => impacts(vec![0.0], d / 8.0, &mut rng),
                ActivityKind::Door => impacts(vec![0.0, d / 2.0], d / 16.0, &mut rng),
                ActivityKind::MedicationShake => {
                    let tau = 0.008;
                    let mut onsets: Vec<f64> = (0..)
                        .map(|k| 0.1 * k as f64)
                        .take_while(|o| o + 10.0 * tau <= d)
                        .collect();
                    if onsets.is_empty() {
                        onsets.push(0.0);
                    }
                    impacts(onsets, tau, &mut rng);
                }
                ActivityKind::Shower => {
                    let n = SHOWER_PARTIALS * e.center_freqs_hz.len();
                    // RMS of the sum equals amplitude / 2
                    let a = e.amplitude / (2.0 * (n as f64 / 2.0).sqrt());
                    let partials = e
                        .center_freqs_hz
                        .iter()
                        .flat_map(|&f| {
                            let lo = (0.7 * f).max(BAND_LOW_HZ + 20.0);
                            let hi = (1.3 * f).min(BAND_HIGH_HZ - 20.0);
                            (0..SHOWER_PARTIALS)
                                .map(|_| (rng.random_range(lo..=hi), rng.random_range(0.0..2.0 * PI), a))
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    components.push(Component::Sustained {
                        start: s,
                        end: s + d,
                        ramp: (0.1f64).min(d / 4.0),
                        partials,
                    });
                }
                ActivityKind::Idle => {}
            }
        }
        components.sort_by(|a, b| a.start().total_cmp(&b.start()));
        Ok(ActivityWaveform { components })
    }

    /// Evaluates the waveform at non-decreasing times.
    pub fn cursor(&self) -> WaveCursor<'_> {
        WaveCursor {
            wave: self,
            next: 0,
            active: Vec::new(),
        }
    }
}

pub struct WaveCursor<'a> {
    wave: &'a ActivityWaveform,
    next: usize,
    active: Vec<usize>,
}

impl WaveCursor<'_> {
    pub fn value(&mut self, t: f64) -> f64 {
        let comps = &self.wave.components;
        while self.next < comps.len() && comps[self.next].start() <= t {
            self.active.push(self.next);
            self.next += 1;
        }
        self.active.retain(|&i| comps[i].end() > t);
        self.active.iter().map(|&i| comps[i].value(t)).sum()
    }
}

/// Additive ambient noise source.
pub struct NoiseSource {
    model: NoiseModel,
    normal: Normal<f64>,
    rng: SimRng,
    phase: f64,
}

impl NoiseSource {
    pub fn new(model: NoiseModel, seed: u64) -> Result<Self, SimError> {
        model.validate()?;
        let mut rng = seeded(derive_seed(seed, 0xB0B));
        let phase = rng.random_range(0.0..2.0 * PI);
        Ok(NoiseSource {
            model,
            normal: Normal::new(0.0, model.ambient_std).expect("validated std"),
            rng,
            phase,
        })
    }

    pub fn sample(&mut self, t: f64) -> f64 {
        let hum = self
            .model
            .powerline
            .map_or(0.0, |p| p.amplitude * (2.0 * PI * p.hz * t + self.phase).sin());
        self.normal.sample(&mut self.rng) + hum
    }
}

/// Samples `script` plus ambient noise at a fixed rate.
pub fn synth_signal(
    script: &ActivityScript,
    noise: &NoiseModel,
    rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    check_covers(script, duration_s)?;
    let wave = ActivityWaveform::new(script, seed)?;
    let mut noise = NoiseSource::new(*noise, seed)?;
    let mut cursor = wave.cursor();
    let n = (duration_s * rate_hz).round() as usize;
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / rate_hz;
            cursor.value(t) + noise.sample(t)
        })
        .collect())
}

/// Noise-free counterpart of [`synth_signal`].
pub fn synth_clean(
    script: &ActivityScript,
    rate_hz: f64,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    check_covers(script, duration_s)?;
    let wave = ActivityWaveform::new(script, seed)?;
    let mut cursor = wave.cursor();
    let n = (duration_s * rate_hz).round() as usize;
    Ok((0..n).map(|i| cursor.value(i as f64 / rate_hz)).collect())
}

fn check_covers(script: &ActivityScript, duration_s: f64) -> Result<(), SimError> {
    let end_s = script.end_s();
    if end_s > duration_s + 1e-9 {
        return Err(SimError::DurationTooShort { end_s, duration_s });
    }
    Ok(())
}

/// Datagram layout used by a device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Framing {
    pub n_blocks: u8,
    pub block_len: u16,
}

impl Default for Framing {
    /// 16 blocks of 27 samples: 432 samples in a 1424-byte datagram.
    fn default() -> Self {
        Framing {
            n_blocks: 16,
            block_len: 81,
        }
    }
}

impl Framing {
    pub fn samples_per_packet(&self) -> usize {
        self.n_blocks as usize * self.block_len as usize / 3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub device_id: u16,
    pub clock: ClockModel,
    pub noise: NoiseModel,
    #[serde(default)]
    pub framing: Framing,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub device_id: u16,
    pub start_s: f64,
    pub end_s: f64,
    pub kind: ActivityKind,
}

#[derive(Debug, Clone)]
pub struct SentPacket {
    pub header: PacketHeader,
    /// Effective sampling rate drawn for this packet (true time base).
    pub true_rate_hz: f64,
    /// True time at which the packet left the device, microseconds.
    pub departure_us: u64,
    pub samples: Vec<i32>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct DeviceRun {
    pub device_id: u16,
    pub sent: Vec<SentPacket>,
    pub events: Vec<DeliveryEvent>,
    pub ground_truth: Vec<GroundTruthEntry>,
}

impl DeviceRun {
    pub fn sent_samples(&self) -> usize {
        self.sent.iter().map(|p| p.samples.len()).sum()
    }
}

/// Produces the device's datagrams without impairment, in send order.
pub fn capture_packets(
    device: &DeviceConfig,
    script: &ActivityScript,
    duration_s: f64,
) -> Result<Vec<SentPacket>, SimError> {
    device.clock.validate()?;
    check_covers(script, duration_s)?;
    let wave = ActivityWaveform::new(script, device.seed)?;
    let mut cursor = wave.cursor();
    let mut noise = NoiseSource::new(device.noise, device.seed)?;
    let mut clock_rng = seeded(derive_seed(device.seed, 0xC10C));
    let drift = device.clock.effective_drift();
    let per_packet = device.framing.samples_per_packet();

    let mut packets = Vec::new();
    let mut t = 0.0f64;
    let mut first_sample_index = 0u64;
    let mut seq = 0u32;
    while t < duration_s {
        let rate = device.clock.draw_rate(&mut clock_rng);
        let samples: Vec<i32> = (0..per_packet)
            .map(|j| {
                let ts = t + j as f64 / rate;
                let v = cursor.value(ts) + noise.sample(ts);
                v.round().clamp(SAMPLE_MIN as f64, SAMPLE_MAX as f64) as i32
            })
            .collect();
        let header = PacketHeader {
            device_id: device.device_id,
            seq,
            first_sample_index,
            send_time_us: (t * (1.0 + drift) * 1e6).round() as u64,
            n_blocks: device.framing.n_blocks,
            block_len: device.framing.block_len,
        };
        let bytes = wireproto::encode_packet(&header, &samples)?;
        t += per_packet as f64 / rate;
        packets.push(SentPacket {
            header,
            true_rate_hz: rate,
            departure_us: (t * 1e6).round() as u64,
            samples,
            bytes,
        });
        first_sample_index += per_packet as u64;
        seq = seq.wrapping_add(1);
    }
    Ok(packets)
}

/// Simulates one device end to end: capture, framing and the impaired link.
pub fn run_device(
    device: &DeviceConfig,
    script: &ActivityScript,
    channel: &ChannelConfig,
    duration_s: f64,
) -> Result<DeviceRun, SimError> {
    let sent = capture_packets(device, script, duration_s)?;
    let mut link = Channel::new(channel.clone())?;
    let mut events: Vec<DeliveryEvent> = sent
        .iter()
        .enumerate()
        .flat_map(|(i, p)| link.submit(i, &p.bytes, p.departure_us))
        .collect();
    events.sort_by_key(|e| e.deliver_time_us);
    let ground_truth = script
        .entries
        .iter()
        .map(|e| GroundTruthEntry {
            device_id: device.device_id,
            start_s: e.start_s,
            end_s: e.end_s(),
            kind: e.kind,
        })
        .collect();
    Ok(DeviceRun {
        device_id: device.device_id,
        sent,
        events,
        ground_truth,
    })
}

/// Writes `device_id,start_s,end_s,activity_kind` rows with a header line.
pub fn write_ground_truth_csv<W: Write>(entries: &[GroundTruthEntry], mut out: W) -> io::Result<()> {
    writeln!(out, "device_id,start_s,end_s,activity_kind")?;
    for e in entries {
        writeln!(out, "{},{},{},{}", e.device_id, e.start_s, e.end_s, e.kind)?;
    }
    Ok(())
}
