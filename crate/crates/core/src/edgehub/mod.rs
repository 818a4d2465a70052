//! In-home edge hub.
//!
//! The hub decodes datagrams, repairs what the parity block allows, keeps a
//! [`DeviceSession`] per sensor, appends payloads to [`SignalSegment`]s in
//! sample-index order, and exposes health snapshots. Sessions sit behind
//! their own mutex, so different devices ingest concurrently while a
//! health snapshot locks each session only long enough to copy counters.

pub mod health;
pub mod http;
pub mod segment;
pub mod session;
pub mod udp;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

pub use health::{DeviceHealth, HealthReport};
pub use segment::{read_segment, write_segment, SegmentError, SegmentRecord, SignalSegment};
pub use session::{Admission, DeviceSession, RateNotReady, RateStats, SessionCounters, SessionLimits};

use crate::wireproto::{decode_packet, DecodeOutcome};

pub const DEFAULT_UDP_PORT: u16 = 7453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubConfig {
    /// Devices the hub expects. `None` admits any device id.
    pub known_devices: Option<Vec<u16>>,
    pub reorder_window: usize,
    pub segment_rollover_samples: u64,
    pub rate_window: usize,
    pub nominal_rate_hz: u32,
    pub udp_port: u16,
    pub http_port: u16,
    pub storage_dir: Option<PathBuf>,
    /// Status push target (health JSON is POSTed here periodically).
    pub status_push_url: Option<String>,
    pub status_push_period_s: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            known_devices: None,
            reorder_window: 64,
            segment_rollover_samples: 1 << 22,
            rate_window: 8192,
            nominal_rate_hz: 7000,
            udp_port: DEFAULT_UDP_PORT,
            http_port: 8080,
            storage_dir: None,
            status_push_url: None,
            status_push_period_s: 60,
        }
    }
}

impl HubConfig {
    fn limits(&self) -> SessionLimits {
        SessionLimits {
            reorder_window: self.reorder_window.max(1),
            segment_rollover_samples: self.segment_rollover_samples.max(1),
            rate_window: self.rate_window.max(2),
            nominal_rate_hz: self.nominal_rate_hz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestOutcome {
    Intact,
    Recovered,
    Unrecoverable,
    HeaderInvalid,
    Quarantined,
    Duplicate,
    Late,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestReport {
    pub device_id: Option<u16>,
    pub outcome: IngestOutcome,
}

#[derive(Debug, Default)]
struct Quarantine {
    packets: BTreeMap<u16, u64>,
}

pub struct Hub {
    config: HubConfig,
    known: Option<BTreeSet<u16>>,
    started: Instant,
    sessions: RwLock<BTreeMap<u16, Arc<Mutex<DeviceSession>>>>,
    quarantine: Mutex<Quarantine>,
    header_invalid: AtomicU64,
    datagrams: AtomicU64,
}

impl Hub {
    pub fn new(config: HubConfig) -> Self {
        let known = config.known_devices.as_ref().map(|d| d.iter().copied().collect());
        Hub {
            config,
            known,
            started: Instant::now(),
            sessions: RwLock::new(BTreeMap::new()),
            quarantine: Mutex::new(Quarantine::default()),
            header_invalid: AtomicU64::new(0),
            datagrams: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &HubConfig {
        &self.config
    }

    /// Microseconds since the hub started; the arrival clock for live ingest.
    pub fn now_us(&self) -> u64 {
        self.started.elapsed().as_micros() as u64
    }

    fn session(&self, device_id: u16) -> Arc<Mutex<DeviceSession>> {
        if let Some(s) = self.sessions.read().get(&device_id) {
            return s.clone();
        }
        let limits = self.config.limits();
        self.sessions
            .write()
            .entry(device_id)
            .or_insert_with(|| Arc::new(Mutex::new(DeviceSession::new(device_id, limits))))
            .clone()
    }

    fn is_known(&self, device_id: u16) -> bool {
        self.known.as_ref().is_none_or(|k| k.contains(&device_id))
    }

    /// Ingests one datagram. Arbitrary bytes are tolerated.
    pub fn ingest(&self, bytes: &[u8], arrival_us: u64) -> IngestReport {
        self.datagrams.fetch_add(1, Ordering::Relaxed);
        let outcome = decode_packet(bytes);
        let Some(header) = outcome.header().copied() else {
            self.header_invalid.fetch_add(1, Ordering::Relaxed);
            // best-effort attribution by the raw id bytes, counted only
            let raw_id = (bytes.len() >= 5).then(|| u16::from_le_bytes([bytes[3], bytes[4]]));
            if let Some(id) = raw_id.filter(|id| self.sessions.read().contains_key(id)) {
                self.session(id).lock().note_header_invalid();
            }
            return IngestReport { device_id: None, outcome: IngestOutcome::HeaderInvalid };
        };
        let device_id = header.device_id;
        if !self.is_known(device_id) {
            *self.quarantine.lock().packets.entry(device_id).or_default() += 1;
            return IngestReport { device_id: Some(device_id), outcome: IngestOutcome::Quarantined };
        }
        let (samples, recovered, kind) = match outcome {
            DecodeOutcome::Intact { samples, .. } => (Some(samples), false, IngestOutcome::Intact),
            DecodeOutcome::Recovered { samples, .. } => (Some(samples), true, IngestOutcome::Recovered),
            DecodeOutcome::Unrecoverable { .. } => (None, false, IngestOutcome::Unrecoverable),
            DecodeOutcome::HeaderInvalid => unreachable!("header checked above"),
        };
        let session = self.session(device_id);
        let mut session = session.lock();
        let (admission, closed) = session.admit(header, samples, recovered, arrival_us);
        self.persist_closed(&mut session, closed);
        let outcome = match admission {
            Admission::Buffered => kind,
            Admission::Duplicate => IngestOutcome::Duplicate,
            Admission::Late => IngestOutcome::Late,
        };
        IngestReport { device_id: Some(device_id), outcome }
    }

    fn persist_closed(&self, session: &mut DeviceSession, closed: Vec<SignalSegment>) {
        let Some(dir) = &self.config.storage_dir else { return };
        for seg in &closed {
            if let Err(e) = write_segment(&dir.join(segment_file_name(seg)), seg) {
                tracing::warn!(device = seg.device_id, error = %e, "failed to persist segment");
            }
        }
        if !closed.is_empty() {
            // on disk now; keep memory bounded for long-running hubs
            session.drop_closed_segments();
        }
    }

    /// Closes every reorder window, declaring remaining holes lost.
    pub fn flush(&self) {
        for session in self.sessions.read().values() {
            let mut s = session.lock();
            let closed = s.flush();
            self.persist_closed(&mut s, closed);
        }
    }

    /// Writes every open segment to the storage directory (if configured).
    pub fn persist_open_segments(&self) -> Result<Vec<PathBuf>, SegmentError> {
        let mut written = Vec::new();
        let Some(dir) = &self.config.storage_dir else { return Ok(written) };
        for session in self.sessions.read().values() {
            let s = session.lock();
            if let Some(seg) = s.open_segment() {
                let path = dir.join(segment_file_name(seg));
                write_segment(&path, seg)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn device_ids(&self) -> Vec<u16> {
        self.sessions.read().keys().copied().collect()
    }

    pub fn counters(&self, device_id: u16) -> Option<SessionCounters> {
        self.sessions.read().get(&device_id).map(|s| s.lock().counters())
    }

    pub fn estimate_rate(&self, device_id: u16) -> Option<Result<RateStats, RateNotReady>> {
        self.sessions.read().get(&device_id).map(|s| s.lock().estimate_rate())
    }

    pub fn rates(&self, device_id: u16) -> Vec<f64> {
        self.sessions
            .read()
            .get(&device_id)
            .map(|s| s.lock().rates().collect())
            .unwrap_or_default()
    }

    /// In-memory segments for a device (closed segments already persisted
    /// to disk are not retained when a storage directory is configured).
    pub fn segments(&self, device_id: u16) -> Vec<SignalSegment> {
        self.sessions
            .read()
            .get(&device_id)
            .map(|s| s.lock().segments())
            .unwrap_or_default()
    }

    pub fn header_invalid(&self) -> u64 {
        self.header_invalid.load(Ordering::Relaxed)
    }

    pub fn datagrams(&self) -> u64 {
        self.datagrams.load(Ordering::Relaxed)
    }

    pub fn quarantined(&self) -> BTreeMap<u16, u64> {
        self.quarantine.lock().packets.clone()
    }

    pub fn health_report(&self) -> HealthReport {
        health::snapshot(self)
    }

    fn with_sessions<R>(&self, f: impl FnOnce(&BTreeMap<u16, Arc<Mutex<DeviceSession>>>) -> R) -> R {
        f(&self.sessions.read())
    }
}

pub fn segment_file_name(seg: &SignalSegment) -> String {
    format!("dev{:05}_{:012}.vseg", seg.device_id, seg.start_sample_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wireproto::{encode_packet, PacketHeader};

    fn packet(device_id: u16, seq: u32, per: usize) -> (Vec<u8>, Vec<i32>) {
        let samples: Vec<i32> = (0..per).map(|i| (seq as i32) * 1000 + i as i32).collect();
        let h = PacketHeader {
            device_id,
            seq,
            first_sample_index: seq as u64 * per as u64,
            send_time_us: seq as u64 * 20_000,
            n_blocks: 4,
            block_len: 30,
        };
        (encode_packet(&h, &samples).unwrap(), samples)
    }

    fn stored(hub: &Hub, id: u16) -> Vec<(u64, i32)> {
        hub.segments(id).iter().flat_map(|s| s.indexed_samples().collect::<Vec<_>>()).collect()
    }

    #[test]
    fn lossless_stream() {
        let hub = Hub::new(HubConfig::default());
        let mut sent = Vec::new();
        for seq in 0..1000 {
            let (bytes, samples) = packet(1, seq, 40);
            assert_eq!(hub.ingest(&bytes, seq as u64).outcome, IngestOutcome::Intact);
            sent.extend(samples);
        }
        hub.flush();
        let c = hub.counters(1).unwrap();
        assert_eq!(c.loss_pct(), 0.0);
        assert_eq!(c.recovered_pct(), 0.0);
        let got: Vec<i32> = stored(&hub, 1).into_iter().map(|(_, v)| v).collect();
        assert_eq!(got, sent);
        let r = hub.estimate_rate(1).unwrap().unwrap();
        assert!((r.mean_hz - 2000.0).abs() < 1e-6 && r.std_hz < 1e-6);
    }

    #[test]
    fn every_tenth_dropped() {
        let hub = Hub::new(HubConfig::default());
        for seq in 0..1000u32 {
            if seq % 10 == 9 {
                continue;
            }
            hub.ingest(&packet(1, seq, 40).0, 0);
        }
        hub.flush();
        let c = hub.counters(1).unwrap();
        // seq 999 is the trailing drop and can never be known to be missing
        assert_eq!(c.lost, 99);
        assert!((c.loss_pct() - 10.0).abs() < 1.0);
        let segs = hub.segments(1);
        let gaps = segs[0].records.iter().filter(|r| matches!(r, SegmentRecord::Gap(_))).count();
        assert_eq!(gaps, 99);
        assert_eq!(c.gap_samples, 99 * 40);
    }

    #[test]
    fn reorder_within_window_is_repaired() {
        let hub = Hub::new(HubConfig::default());
        let order = [0u32, 2, 1, 5, 3, 4, 6, 7];
        for &s in &order {
            hub.ingest(&packet(2, s, 40).0, 0);
        }
        hub.ingest(&packet(2, 3, 40).0, 0);
        hub.flush();
        let c = hub.counters(2).unwrap();
        assert_eq!((c.received, c.lost, c.duplicates), (8, 0, 1));
        let idx: Vec<u64> = stored(&hub, 2).into_iter().map(|(i, _)| i).collect();
        assert!(idx.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn window_overflow_declares_loss_and_late_packets_are_dropped() {
        let hub = Hub::new(HubConfig { reorder_window: 4, ..Default::default() });
        hub.ingest(&packet(3, 0, 40).0, 0);
        for s in 2..8 {
            hub.ingest(&packet(3, s, 40).0, 0);
        }
        assert_eq!(hub.counters(3).unwrap().lost, 1);
        assert_eq!(hub.ingest(&packet(3, 1, 40).0, 0).outcome, IngestOutcome::Late);
    }

    #[test]
    fn unknown_device_is_quarantined() {
        let hub = Hub::new(HubConfig { known_devices: Some(vec![1]), ..Default::default() });
        assert_eq!(hub.ingest(&packet(9, 0, 40).0, 0).outcome, IngestOutcome::Quarantined);
        assert_eq!(hub.quarantined().get(&9), Some(&1));
        assert!(hub.device_ids().is_empty());
        assert_eq!(hub.ingest(b"not a packet", 0).outcome, IngestOutcome::HeaderInvalid);
        assert_eq!(hub.header_invalid(), 1);
    }

    #[test]
    fn unrecoverable_packet_becomes_gap() {
        let hub = Hub::new(HubConfig::default());
        hub.ingest(&packet(4, 0, 40).0, 0);
        let (mut bad, _) = packet(4, 1, 40);
        bad[30] ^= 1;
        bad[30 + 30] ^= 1;
        assert_eq!(hub.ingest(&bad, 0).outcome, IngestOutcome::Unrecoverable);
        hub.ingest(&packet(4, 2, 40).0, 0);
        let seg = &hub.segments(4)[0];
        assert_eq!(seg.gap_samples(), 40);
        assert_eq!(seg.stored_samples(), 80);
        assert_eq!(hub.counters(4).unwrap().lost, 0);
    }

    #[test]
    fn segment_rollover() {
        let hub = Hub::new(HubConfig { segment_rollover_samples: 100, ..Default::default() });
        for s in 0..10 {
            hub.ingest(&packet(5, s, 40).0, 0);
        }
        let segs = hub.segments(5);
        assert_eq!(segs.len(), 4);
        assert!(segs[..3].iter().all(|s| s.span() == 100));
        for w in segs.windows(2) {
            assert_eq!(w[0].end_sample_index(), w[1].start_sample_index);
        }
    }
}
