//! Declarative end-to-end runs and the analysis artifacts built on them.
//!
//! A scenario file names devices (clock preset, noise, activity script), a
//! channel and hub settings. [`run_scenario`] simulates every device,
//! passes its datagrams through the impaired link, ingests them in
//! delivery order, and writes:
//!
//! - `segments/*.vseg`
//! - `health.json`
//! - `ground_truth.csv`
//! - `rates.csv` (every per-packet implied rate) and `rate_summary.csv`
//! - `manifest.json` (seed, config hash, version, RNG algorithm)
//!
//! The stored payload of every device is then compared with what it sent.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::devicesim::{
    run_device, synth_signal, write_ground_truth_csv, ActivityEntry, ActivityKind, ActivityScript, ClockModel,
    DeviceConfig, DeviceRun, Framing, GroundTruthEntry, NoiseModel, SimError,
};
use crate::dsp::{self, circular_autocorrelation, dominant_period, snr_at_rate, Snr};
use crate::edgehub::{read_segment, HealthReport, Hub, HubConfig, SegmentError};
use crate::netsim::{ChannelConfig, ChannelConfigError};
use crate::rng::{derive_seed, seeded, RNG_ALGORITHM};

/// Sample scenario files shipped with the crate, by name.
pub const BUNDLED_SCENARIOS: [(&str, &str); 5] = [
    ("deployment1", include_str!("../data/scenarios/deployment1.toml")),
    ("deployment2", include_str!("../data/scenarios/deployment2.toml")),
    ("deployment3", include_str!("../data/scenarios/deployment3.toml")),
    ("five_devices", include_str!("../data/scenarios/five_devices.toml")),
    ("impaired", include_str!("../data/scenarios/impaired.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClockSpec {
    Preset(String),
    Custom(ClockModel),
}

impl ClockSpec {
    pub fn resolve(&self) -> Result<ClockModel, ScenarioError> {
        match self {
            ClockSpec::Preset(name) => ClockModel::preset(name).ok_or_else(|| ScenarioError::UnknownPreset(name.clone())),
            ClockSpec::Custom(c) => Ok(*c),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ClockSpec::Preset(name) => name.clone(),
            ClockSpec::Custom(_) => "custom".into(),
        }
    }
}

/// Either explicit entries or a generated back-to-back routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptSpec {
    pub entries: Vec<ActivityEntry>,
    pub kinds: Vec<ActivityKind>,
    pub count: usize,
    pub gap_s: f64,
    pub amplitude: f64,
}

impl Default for ScriptSpec {
    fn default() -> Self {
        ScriptSpec {
            entries: Vec::new(),
            kinds: Vec::new(),
            count: 0,
            gap_s: 2.0,
            amplitude: 1000.0,
        }
    }
}

impl ScriptSpec {
    /// Builds the script, dropping generated entries that would run past
    /// `duration_s`. Explicit entries are kept as written.
    pub fn build(&self, duration_s: f64, seed: u64) -> ActivityScript {
        if !self.entries.is_empty() {
            return ActivityScript::new(self.entries.clone());
        }
        if self.kinds.is_empty() || self.count == 0 {
            return ActivityScript::default();
        }
        let mut s = ActivityScript::generate(&self.kinds, self.count, self.gap_s, self.amplitude, seed);
        s.entries.retain(|e| e.end_s() <= duration_s);
        s
    }
}

fn default_noise() -> NoiseModel {
    NoiseModel::white(10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub device_id: u16,
    pub clock: ClockSpec,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub framing: Framing,
    #[serde(default)]
    pub script: ScriptSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub hub: HubConfig,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub weekly: WeeklyConfig,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unknown clock preset '{0}' (available: deployment1, deployment2, deployment3, nominal, nominal6800)")]
    UnknownPreset(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Channel(#[from] ChannelConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ScenarioFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        let s: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<(Self, String), ScenarioError> {
        let text = fs::read_to_string(path)?;
        Ok((Self::parse(&text, &path.display().to_string())?, text))
    }

    pub fn bundled(name: &str) -> Option<(Self, String)> {
        let (_, text) = BUNDLED_SCENARIOS.iter().find(|(n, _)| *n == name)?;
        Some((Self::parse(text, name).expect("bundled scenario is valid"), text.to_string()))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ScenarioError::Invalid("duration_s must be positive".into()));
        }
        if self.devices.is_empty() {
            return Err(ScenarioError::Invalid("at least one device is required".into()));
        }
        let mut ids: Vec<u16> = self.devices.iter().map(|d| d.device_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(ScenarioError::Invalid("device ids must be unique".into()));
        }
        self.channel.validate()?;
        for d in &self.devices {
            d.clock.resolve()?.validate()?;
            d.noise.validate()?;
            d.script.build(self.duration_s, 0).validate()?;
            if d.script.entries.iter().any(|e| e.end_s() > self.duration_s) {
                return Err(ScenarioError::Invalid(format!(
                    "device {}: script runs past duration_s",
                    d.device_id
                )));
            }
        }
        Ok(())
    }

    fn device_config(&self, d: &DeviceSpec) -> Result<DeviceConfig, ScenarioError> {
        Ok(DeviceConfig {
            device_id: d.device_id,
            clock: d.clock.resolve()?,
            noise: d.noise,
            framing: d.framing,
            seed: derive_seed(self.seed, d.device_id as u64),
        })
    }
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub crate_version: String,
    pub rng_algorithm: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub device_id: u16,
    pub clock: String,
    pub configured_rate_std_hz: f64,
    pub sent_packets: usize,
    pub sent_samples: u64,
    pub received: u64,
    pub lost: u64,
    pub recovered: u64,
    pub unrecoverable: u64,
    pub stored_samples: u64,
    pub gap_samples: u64,
    pub loss_pct: f64,
    pub recovered_pct: f64,
    pub measured_rate_mean_hz: Option<f64>,
    pub measured_rate_std_hz: Option<f64>,
    /// Stored samples that differ from what the device sent.
    pub mismatched_samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub devices: Vec<DeviceReport>,
    pub header_invalid: u64,
    pub datagrams: u64,
    pub violations: Vec<String>,
}

impl RunReport {
    pub fn device(&self, id: u16) -> Option<&DeviceReport> {
        self.devices.iter().find(|d| d.device_id == id)
    }
}

fn simulate_devices(s: &ScenarioFile) -> Result<Vec<DeviceRun>, ScenarioError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = s
            .devices
            .iter()
            .map(|d| {
                scope.spawn(move || -> Result<DeviceRun, ScenarioError> {
                    let device = s.device_config(d)?;
                    let script = d.script.build(s.duration_s, derive_seed(device.seed, 0x5c));
                    let channel = ChannelConfig {
                        rng_seed: derive_seed(s.seed ^ s.channel.rng_seed, 0x1000 + d.device_id as u64),
                        ..s.channel.clone()
                    };
                    Ok(run_device(&device, &script, &channel, s.duration_s)?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("device thread")).collect()
    })
}

/// Runs a parsed scenario. `config_text` is hashed into the manifest.
pub fn run(s: &ScenarioFile, config_text: &str, out_dir: &Path) -> Result<RunReport, ScenarioError> {
    let seg_dir = out_dir.join("segments");
    fs::create_dir_all(&seg_dir)?;
    let runs = simulate_devices(s)?;

    let hub = Hub::new(HubConfig { storage_dir: Some(seg_dir.clone()), ..s.hub.clone() });
    let mut deliveries: Vec<(u64, u16, usize, &[u8])> = runs
        .iter()
        .flat_map(|r| {
            r.events
                .iter()
                .map(move |e| (e.deliver_time_us, r.device_id, e.original_index, e.delivered_bytes.as_slice()))
        })
        .collect();
    deliveries.sort_by_key(|d| (d.0, d.1, d.2));
    for (t, _, _, bytes) in &deliveries {
        hub.ingest(bytes, *t);
    }
    hub.flush();
    hub.persist_open_segments()?;

    let health = hub.health_report();
    let mut outputs = vec!["segments/".to_string()];
    write_json(&out_dir.join("health.json"), &health)?;
    outputs.push("health.json".into());

    let truth: Vec<GroundTruthEntry> = runs.iter().flat_map(|r| r.ground_truth.iter().cloned()).collect();
    write_ground_truth_csv(&truth, BufWriter::new(fs::File::create(out_dir.join("ground_truth.csv"))?))?;
    outputs.push("ground_truth.csv".into());

    let mut rates = BufWriter::new(fs::File::create(out_dir.join("rates.csv"))?);
    writeln!(rates, "device_id,pair,rate_hz")?;
    for r in &runs {
        for (i, v) in hub.rates(r.device_id).iter().enumerate() {
            writeln!(rates, "{},{},{}", r.device_id, i, v)?;
        }
    }
    rates.flush()?;
    outputs.push("rates.csv".into());

    let mut violations = Vec::new();
    let stored = stored_by_device(&seg_dir)?;
    let mut devices = Vec::new();
    for (r, spec) in runs.iter().zip(&s.devices) {
        let c = hub.counters(r.device_id).unwrap_or_default();
        let rate = hub.estimate_rate(r.device_id).and_then(Result::ok);
        let empty = BTreeMap::new();
        let got = stored.get(&r.device_id).unwrap_or(&empty);
        let mut mismatched = 0u64;
        for p in &r.sent {
            for (k, &v) in p.samples.iter().enumerate() {
                if got.get(&(p.header.first_sample_index + k as u64)).is_some_and(|&g| g != v) {
                    mismatched += 1;
                }
            }
        }
        let sent_samples = r.sent_samples() as u64;
        let report = DeviceReport {
            device_id: r.device_id,
            clock: spec.clock.label(),
            configured_rate_std_hz: spec.clock.resolve()?.rate_std_hz,
            sent_packets: r.sent.len(),
            sent_samples,
            received: c.received,
            lost: c.lost,
            recovered: c.recovered,
            unrecoverable: c.unrecoverable,
            stored_samples: c.stored_samples,
            gap_samples: c.gap_samples,
            loss_pct: c.loss_pct(),
            recovered_pct: c.recovered_pct(),
            measured_rate_mean_hz: rate.map(|r| r.mean_hz),
            measured_rate_std_hz: rate.map(|r| r.std_hz),
            mismatched_samples: mismatched,
        };
        check_device(&report, got, &s.channel, &health, &mut violations);
        devices.push(report);
    }

    let mut summary = BufWriter::new(fs::File::create(out_dir.join("rate_summary.csv"))?);
    writeln!(summary, "device_id,clock,configured_std_hz,measured_mean_hz,measured_std_hz,packets")?;
    for (d, r) in devices.iter().zip(&runs) {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        writeln!(
            summary,
            "{},{},{},{},{},{}",
            d.device_id,
            d.clock,
            d.configured_rate_std_hz,
            opt(d.measured_rate_mean_hz),
            opt(d.measured_rate_std_hz),
            hub.rates(r.device_id).len()
        )?;
    }
    summary.flush()?;
    outputs.push("rate_summary.csv".into());

    let report = RunReport {
        out_dir: out_dir.to_path_buf(),
        devices,
        header_invalid: hub.header_invalid(),
        datagrams: hub.datagrams(),
        violations,
    };
    write_json(&out_dir.join("report.json"), &report)?;
    outputs.push("report.json".into());
    outputs.push("manifest.json".into());
    write_json(
        &out_dir.join("manifest.json"),
        &Manifest {
            seed: s.seed,
            config_sha256: config_hash(config_text),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            outputs,
        },
    )?;
    Ok(report)
}

/// Loads a scenario file and runs it.
pub fn run_scenario(path: &Path, out_dir: &Path) -> Result<RunReport, ScenarioError> {
    let (s, text) = ScenarioFile::load(path)?;
    run(&s, &text, out_dir)
}

fn check_device(
    d: &DeviceReport,
    stored: &BTreeMap<u64, i32>,
    channel: &ChannelConfig,
    health: &HealthReport,
    violations: &mut Vec<String>,
) {
    let id = d.device_id;
    if d.mismatched_samples > 0 {
        violations.push(format!("device {id}: {} stored samples differ from sent", d.mismatched_samples));
    }
    if stored.len() as u64 != d.stored_samples {
        violations.push(format!(
            "device {id}: {} samples on disk, counters say {}",
            stored.len(),
            d.stored_samples
        ));
    }
    let end = stored.keys().next_back().map_or(0, |k| k + 1);
    if d.stored_samples + d.gap_samples != end || end > d.sent_samples {
        violations.push(format!(
            "device {id}: stored {} + gap {} does not cover index range 0..{end} of {} sent",
            d.stored_samples, d.gap_samples, d.sent_samples
        ));
    }
    let clean = channel.loss_prob == 0.0 && channel.corrupt_prob == 0.0;
    if clean && (d.lost > 0 || d.gap_samples > 0 || d.received as usize != d.sent_packets) {
        violations.push(format!("device {id}: loss on a clean channel ({} lost)", d.lost));
    }
    if channel.bits_per_corruption == 1 && d.unrecoverable > 0 {
        violations.push(format!("device {id}: {} unrecoverable packets with 1-bit corruption", d.unrecoverable));
    }
    if let Some(h) = health.devices.iter().find(|h| h.device_id == id) {
        if h.loss_pct != d.loss_pct || h.recovered_pct != d.recovered_pct {
            violations.push(format!("device {id}: health percentages disagree with counters"));
        }
    }
}

/// Every stored sample on disk, per device, keyed by sample index.
fn stored_by_device(dir: &Path) -> Result<BTreeMap<u16, BTreeMap<u64, i32>>, ScenarioError> {
    let mut out: BTreeMap<u16, BTreeMap<u64, i32>> = BTreeMap::new();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vseg"))
        .collect();
    files.sort();
    for f in files {
        let seg = read_segment(&f)?;
        let map = out.entry(seg.device_id).or_default();
        for (i, v) in seg.indexed_samples() {
            if map.insert(i, v).is_some() {
                return Err(ScenarioError::Invalid(format!("sample {i} of device {} stored twice", seg.device_id)));
            }
        }
    }
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value).map_err(io::Error::other)?;
    writeln!(f)?;
    f.flush()
}

/// A week of daily routine, each simulated hour represented by a short
/// recording window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeeklyConfig {
    pub days: usize,
    pub hour_window_s: f64,
    pub rate_hz: f64,
    pub noise: NoiseModel,
    /// Reference recording of the quiet room used as the noise term.
    pub noise_reference_s: f64,
    /// Activities per hour-of-day window, midnight first.
    pub schedule: [usize; 24],
    pub kinds: Vec<ActivityKind>,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for WeeklyConfig {
    fn default() -> Self {
        WeeklyConfig {
            days: 7,
            hour_window_s: 10.0,
            rate_hz: 7000.0,
            noise: NoiseModel::white(10.0),
            noise_reference_s: 10.0,
            schedule: [0, 0, 0, 0, 0, 0, 1, 3, 3, 2, 1, 1, 2, 2, 1, 1, 1, 2, 3, 3, 2, 1, 1, 0],
            kinds: vec![
                ActivityKind::Footstep,
                ActivityKind::ObjectPlace,
                ActivityKind::MedicationShake,
                ActivityKind::Door,
            ],
            amplitude: 300.0,
            seed: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HourlySnr {
    pub hour: usize,
    pub day: usize,
    pub hour_of_day: usize,
    pub activities: usize,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyAnalysis {
    pub series: Vec<HourlySnr>,
    pub autocorrelation: Vec<f64>,
    pub dominant_period_h: Option<usize>,
}

impl WeeklyAnalysis {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "hour,day,hour_of_day,activities,snr_db")?;
        for h in &self.series {
            writeln!(out, "{},{},{},{},{}", h.hour, h.day, h.hour_of_day, h.activities, h.snr_db)?;
        }
        Ok(())
    }

    pub fn write_autocorrelation_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "lag_h,r")?;
        for (lag, r) in self.autocorrelation.iter().enumerate() {
            writeln!(out, "{lag},{r}")?;
        }
        Ok(())
    }
}

/// Hourly SNR across the configured days and its periodicity.
pub fn weekly_snr(cfg: &WeeklyConfig) -> Result<WeeklyAnalysis, ScenarioError> {
    if cfg.kinds.is_empty() || cfg.days == 0 {
        return Err(ScenarioError::Invalid("weekly analysis needs kinds and days".into()));
    }
    let reference = synth_signal(
        &ActivityScript::default(),
        &cfg.noise,
        cfg.rate_hz,
        cfg.noise_reference_s,
        derive_seed(cfg.seed, u64::MAX),
    )?;
    let hours = cfg.days * 24;
    let series = (0..hours)
        .map(|hour| -> Result<HourlySnr, ScenarioError> {
            let mut rng = seeded(derive_seed(cfg.seed, hour as u64));
            let wanted = cfg.schedule[hour % 24];
            let mut entries = Vec::new();
            let mut t = rng.random_range(0.1..0.5);
            for _ in 0..wanted {
                let kind = cfg.kinds[rng.random_range(0..cfg.kinds.len())];
                let amp = cfg.amplitude * rng.random_range(0.7..1.3);
                let e = ActivityEntry::sample(kind, t, amp, &mut rng);
                if e.end_s() > cfg.hour_window_s {
                    break;
                }
                t = e.end_s() + rng.random_range(0.1..0.5);
                entries.push(e);
            }
            let activities = entries.len();
            let window = synth_signal(
                &ActivityScript::new(entries),
                &cfg.noise,
                cfg.rate_hz,
                cfg.hour_window_s,
                derive_seed(cfg.seed, 0x10000 + hour as u64),
            )?;
            let snr_db = match snr_at_rate(&window, &reference, cfg.rate_hz).map_err(|e| ScenarioError::Invalid(e.to_string()))? {
                Snr::Db(v) => v,
                Snr::Infinite => f64::INFINITY,
            };
            Ok(HourlySnr { hour, day: hour / 24, hour_of_day: hour % 24, activities, snr_db })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let values: Vec<f64> = series.iter().map(|h| h.snr_db).collect();
    let normalized = dsp::min_max_normalize(&values);
    Ok(WeeklyAnalysis {
        autocorrelation: circular_autocorrelation(&normalized),
        dominant_period_h: dominant_period(&normalized),
        series,
    })
}

/// Reads a sample stream from a `.vseg` segment or from a CSV/text file whose
/// last numeric column holds one sample per line. Non-numeric lines (such
/// as a header) are skipped.
pub fn read_samples(path: &Path) -> Result<Vec<f64>, ScenarioError> {
    if path.extension().is_some_and(|x| x == "vseg") {
        return Ok(read_segment(path)?.indexed_samples().map(|(_, v)| v as f64).collect());
    }
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.rsplit(',').next().and_then(|v| v.trim().parse::<f64>().ok()))
        .collect())
}

/// Reads `label,f1,f2,...` rows. A first row that does not parse is taken
/// as a header.
pub fn read_features_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), ScenarioError> {
    let text = fs::read_to_string(path)?;
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let label = cols.next().unwrap_or_default().trim().to_string();
        let values: Result<Vec<f64>, _> = cols.map(|c| c.trim().parse::<f64>()).collect();
        match values {
            Ok(v) => {
                labels.push(label);
                rows.push(v);
            }
            Err(_) if i == 0 => {}
            Err(e) => return Err(ScenarioError::Invalid(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok((labels, rows))
}

pub fn write_features_csv<W: Write>(labels: &[String], rows: &[Vec<f64>], mut out: W) -> io::Result<()> {
    let width = rows.first().map_or(0, Vec::len);
    write!(out, "label")?;
    for k in 0..width {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for (l, r) in labels.iter().zip(rows) {
        write!(out, "{l}")?;
        for v in r {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Spectrogram of `samples` written as CSV, returning the fraction of
/// spectral energy inside the sensing band.
pub fn analyze_spectrogram<W: Write>(
    samples: &[f64],
    rate_hz: f64,
    params: dsp::SpectrogramParams,
    out: W,
) -> Result<f64, ScenarioError> {
    let spec = dsp::spectrogram(samples, rate_hz, params).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    spec.write_csv(out)?;
    let (mut inside, mut total) = (0.0, 0.0);
    for frame in &spec.frames {
        for (k, m) in frame.iter().enumerate().skip(1) {
            let e = m * m;
            total += e;
            let f = spec.bin_hz(k);
            if (crate::devicesim::BAND_LOW_HZ..=crate::devicesim::BAND_HIGH_HZ).contains(&f) {
                inside += e;
            }
        }
    }
    Ok(if total > 0.0 { inside / total } else { 0.0 })
}

/// Synthetic event features with class labels, for t-SNE.
pub fn synthetic_features(
    cfg: &crate::recognize::EventSetConfig,
    n_bins: usize,
) -> Result<(Vec<String>, Vec<Vec<f64>>), ScenarioError> {
    let events = crate::recognize::synth_events(&crate::recognize::EVENT_CLASSES, cfg)?;
    let labels = events.iter().map(|e| e.kind.to_string()).collect();
    Ok((labels, crate::recognize::event_features(&events, n_bins)))
}

/// Runs t-SNE and writes `embedding.csv` and `kl.csv` into `out_dir`.
pub fn analyze_tsne(
    labels: &[String],
    features: &[Vec<f64>],
    cfg: &crate::recognize::TsneConfig,
    out_dir: &Path,
) -> Result<crate::recognize::TsneResult, ScenarioError> {
    fs::create_dir_all(out_dir)?;
    let r = crate::recognize::tsne(features, cfg).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let mut f = BufWriter::new(fs::File::create(out_dir.join("embedding.csv"))?);
    r.write_embedding_csv(labels, &mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(fs::File::create(out_dir.join("kl.csv"))?);
    r.write_kl_csv(&mut f)?;
    f.flush()?;
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTraining {
    pub events: crate::recognize::EventSetConfig,
    pub model: crate::recognize::TcnConfig,
    pub train: crate::recognize::TrainConfig,
    pub input: crate::recognize::InputRepr,
}

impl Default for ToyTraining {
    fn default() -> Self {
        ToyTraining {
            events: crate::recognize::EventSetConfig { per_class: 8, seed: 21, ..Default::default() },
            model: crate::recognize::TcnConfig {
                input_window: 16,
                in_channels: 12,
                n_layers: 3,
                channels: 8,
                kernel_size: 2,
                latent_dim: 8,
                n_classes: crate::recognize::EVENT_CLASSES.len(),
            },
            train: crate::recognize::TrainConfig { target_accuracy: Some(1.0), ..Default::default() },
            input: crate::recognize::InputRepr::Frames,
        }
    }
}

/// Trains the TCN on synthetic events and writes `weights.vtcn` and
/// `loss.csv` into `out_dir`.
pub fn train_toy(cfg: &ToyTraining, out_dir: &Path) -> Result<crate::recognize::TrainReport, ScenarioError> {
    use crate::recognize::{event_inputs, synth_events, train, write_weights, EVENT_CLASSES};
    fs::create_dir_all(out_dir)?;
    let events = synth_events(&EVENT_CLASSES, &cfg.events)?;
    let data = event_inputs(&events, cfg.input, &cfg.model);
    let report = train(&data, cfg.model, &cfg.train).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    let mut f = BufWriter::new(fs::File::create(out_dir.join("weights.vtcn"))?);
    write_weights(&report.weights, &mut f)?;
    f.flush()?;
    let mut f = BufWriter::new(fs::File::create(out_dir.join("loss.csv"))?);
    report.write_trace_csv(&mut f)?;
    f.flush()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse() {
        for (name, _) in BUNDLED_SCENARIOS {
            let (s, _) = ScenarioFile::bundled(name).unwrap();
            assert!(!s.devices.is_empty(), "{name}");
        }
    }

    #[test]
    fn unknown_preset_named() {
        let text = "seed = 1\nduration_s = 1.0\n[[devices]]\ndevice_id = 1\nclock = \"deployment9\"\n";
        let err = ScenarioFile::parse(text, "x.toml").unwrap_err();
        assert!(err.to_string().contains("deployment9"));
    }

    #[test]
    fn parse_error_has_location() {
        let err = ScenarioFile::parse("seed = 1\nduration_s = \n", "bad.toml").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("bad.toml"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn seed_is_mandatory() {
        let text = "duration_s = 1.0\n[[devices]]\ndevice_id = 1\nclock = \"nominal\"\n";
        assert!(ScenarioFile::parse(text, "s.toml").unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn clean_run_is_lossless() {
        let text = "seed = 3\nduration_s = 2.0\n[[devices]]\ndevice_id = 1\nclock = \"nominal\"\n[devices.script]\nkinds = [\"door\"]\ncount = 1\ngap_s = 0.5\n";
        let s = ScenarioFile::parse(text, "t").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let r = run(&s, text, dir.path()).unwrap();
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        let d = r.device(1).unwrap();
        assert_eq!(d.loss_pct, 0.0);
        assert_eq!(d.stored_samples, d.sent_samples);
        let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m.config_sha256, config_hash(text));
        assert_eq!(m.seed, 3);
    }
}
