//! Per-device ingestion state: reordering, gap accounting, rate tracking.

use std::collections::{BTreeMap, VecDeque};

use serde::Serialize;
use thiserror::Error;

use super::segment::SignalSegment;
use crate::wireproto::PacketHeader;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct SessionCounters {
    /// Packets placed into the ordered stream (intact, recovered or unrecoverable).
    pub received: u64,
    /// Sequence numbers skipped once the reorder window closed over them.
    pub lost: u64,
    pub intact: u64,
    pub recovered: u64,
    pub unrecoverable: u64,
    /// Packets whose header CRC failed but whose raw device_id bytes name
    /// this device. Informational only; the payload is never trusted.
    pub header_invalid: u64,
    /// Copies of an already accepted sequence number.
    pub duplicates: u64,
    /// Packets that arrived after their slot had been declared lost.
    pub late: u64,
    pub stored_samples: u64,
    pub gap_samples: u64,
}

impl SessionCounters {
    pub fn loss_pct(&self) -> f64 {
        pct(self.lost, self.received + self.lost)
    }

    pub fn recovered_pct(&self) -> f64 {
        pct(self.recovered, self.received)
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateStats {
    pub mean_hz: f64,
    pub std_hz: f64,
    pub packets: usize,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("rate estimate not ready: {pairs} consecutive packet pairs observed, need at least 2")]
pub struct RateNotReady {
    pub pairs: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SessionLimits {
    pub reorder_window: usize,
    pub segment_rollover_samples: u64,
    pub rate_window: usize,
    pub nominal_rate_hz: u32,
}

#[derive(Debug)]
struct Pending {
    header: PacketHeader,
    samples: Option<Vec<i32>>,
}

#[derive(Debug, Clone, Copy)]
struct LastPacket {
    seq: u32,
    send_time_us: u64,
    n_samples: usize,
}

/// What happened to one accepted packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Buffered,
    Duplicate,
    Late,
}

#[derive(Debug)]
pub struct DeviceSession {
    pub device_id: u16,
    limits: SessionLimits,
    counters: SessionCounters,
    next_seq: Option<u32>,
    first_seq: Option<u32>,
    /// Half-open seq ranges declared lost.
    skipped: Vec<(u32, u32)>,
    next_sample_index: u64,
    pending: BTreeMap<u32, Pending>,
    last: Option<LastPacket>,
    rates: VecDeque<f64>,
    open: Option<SignalSegment>,
    closed: Vec<SignalSegment>,
    first_send_us: Option<u64>,
    last_send_us: u64,
    last_seen_us: Option<u64>,
}

impl DeviceSession {
    pub fn new(device_id: u16, limits: SessionLimits) -> Self {
        DeviceSession {
            device_id,
            limits,
            counters: SessionCounters::default(),
            next_seq: None,
            first_seq: None,
            skipped: Vec::new(),
            next_sample_index: 0,
            pending: BTreeMap::new(),
            last: None,
            rates: VecDeque::new(),
            open: None,
            closed: Vec::new(),
            first_send_us: None,
            last_send_us: 0,
            last_seen_us: None,
        }
    }

    pub fn counters(&self) -> SessionCounters {
        self.counters
    }

    pub fn last_seen_us(&self) -> Option<u64> {
        self.last_seen_us
    }

    pub(crate) fn note_header_invalid(&mut self) {
        self.counters.header_invalid += 1;
    }

    /// Admits a packet with a valid header; `samples` is `None` when the
    /// payload could not be rebuilt. Returns the segments closed by rollover.
    pub fn admit(
        &mut self,
        header: PacketHeader,
        samples: Option<Vec<i32>>,
        recovered: bool,
        arrival_us: u64,
    ) -> (Admission, Vec<SignalSegment>) {
        self.last_seen_us = Some(arrival_us);
        let next = *self.next_seq.get_or_insert(header.seq);
        if header.seq < next {
            return if self.was_accepted(header.seq) {
                self.counters.duplicates += 1;
                (Admission::Duplicate, Vec::new())
            } else {
                self.counters.late += 1;
                (Admission::Late, Vec::new())
            };
        }
        if self.pending.contains_key(&header.seq) {
            self.counters.duplicates += 1;
            return (Admission::Duplicate, Vec::new());
        }
        match &samples {
            Some(_) if recovered => self.counters.recovered += 1,
            Some(_) => self.counters.intact += 1,
            None => self.counters.unrecoverable += 1,
        }
        self.pending.insert(header.seq, Pending { header, samples });
        let mut closed = Vec::new();
        self.drain(false, &mut closed);
        (Admission::Buffered, closed)
    }

    // Sequence numbers below next_seq were either accepted, skipped as lost,
    // or precede the first packet this session saw.
    fn was_accepted(&self, seq: u32) -> bool {
        self.first_seq.is_some_and(|f| seq >= f) && !self.skipped.iter().any(|&(a, b)| seq >= a && seq < b)
    }

    /// Moves buffered packets into the ordered stream. With `force`, every
    /// hole in front of a buffered packet is declared lost.
    fn drain(&mut self, force: bool, closed: &mut Vec<SignalSegment>) {
        loop {
            let Some(next) = self.next_seq else { return };
            if let Some(p) = self.pending.remove(&next) {
                self.apply(p, closed);
                continue;
            }
            let Some((&first, _)) = self.pending.first_key_value() else { return };
            let (&newest, _) = self.pending.last_key_value().expect("non-empty");
            let window_closed = self.pending.len() > self.limits.reorder_window
                || (newest - next) as usize >= self.limits.reorder_window;
            if !(force || window_closed) {
                return;
            }
            self.counters.lost += (first - next) as u64;
            self.skipped.push((next, first));
            self.next_seq = Some(first);
        }
    }

    fn apply(&mut self, p: Pending, closed: &mut Vec<SignalSegment>) {
        let h = p.header;
        let n = h.samples_per_packet() as u64;
        if self.open.is_none() {
            if self.counters.received == 0 {
                self.next_sample_index = h.first_sample_index;
                self.first_seq = Some(h.seq);
            }
            self.open = Some(SignalSegment::new(
                self.device_id,
                self.next_sample_index,
                h.send_time_us,
                self.limits.nominal_rate_hz,
            ));
        }
        if h.first_sample_index > self.next_sample_index {
            let missing = h.first_sample_index - self.next_sample_index;
            self.push_gap(missing, closed);
        }
        // samples already covered (inconsistent device counter) are skipped
        let skip = self.next_sample_index.saturating_sub(h.first_sample_index).min(n);
        match p.samples {
            Some(s) => self.push_samples(&s[skip as usize..], closed),
            None => self.push_gap(n - skip, closed),
        }

        self.counters.received += 1;
        self.next_seq = Some(h.seq.wrapping_add(1));
        if let Some(last) = self.last {
            if last.seq.wrapping_add(1) == h.seq && h.send_time_us > last.send_time_us {
                let dt = (h.send_time_us - last.send_time_us) as f64 * 1e-6;
                self.rates.push_back(last.n_samples as f64 / dt);
                if self.rates.len() > self.limits.rate_window {
                    self.rates.pop_front();
                }
            }
        }
        self.last = Some(LastPacket {
            seq: h.seq,
            send_time_us: h.send_time_us,
            n_samples: n as usize,
        });
        self.first_send_us.get_or_insert(h.send_time_us);
        self.last_send_us = self.last_send_us.max(h.send_time_us);
    }

    fn push_samples(&mut self, mut samples: &[i32], closed: &mut Vec<SignalSegment>) {
        while !samples.is_empty() {
            let room = self.room();
            let take = samples.len().min(room as usize);
            self.open.as_mut().expect("open segment").push_samples(&samples[..take]);
            self.counters.stored_samples += take as u64;
            self.next_sample_index += take as u64;
            samples = &samples[take..];
            self.roll_if_full(closed);
        }
    }

    fn push_gap(&mut self, mut missing: u64, closed: &mut Vec<SignalSegment>) {
        while missing > 0 {
            let take = missing.min(self.room());
            self.open.as_mut().expect("open segment").push_gap(take);
            self.counters.gap_samples += take;
            self.next_sample_index += take;
            missing -= take;
            self.roll_if_full(closed);
        }
    }

    fn room(&self) -> u64 {
        let used = self.open.as_ref().map_or(0, |s| s.span());
        self.limits.segment_rollover_samples - used
    }

    fn roll_if_full(&mut self, closed: &mut Vec<SignalSegment>) {
        if self.room() == 0 {
            let full = self.open.take().expect("open segment");
            let start_time_us = self.last_send_us;
            self.open = Some(SignalSegment::new(
                self.device_id,
                full.end_sample_index(),
                start_time_us,
                self.limits.nominal_rate_hz,
            ));
            self.closed.push(full.clone());
            closed.push(full);
        }
    }

    /// Closes the reorder window: every buffered packet is placed and the
    /// holes in front of them become gaps.
    pub fn flush(&mut self) -> Vec<SignalSegment> {
        let mut closed = Vec::new();
        self.drain(true, &mut closed);
        closed
    }

    pub fn pending_packets(&self) -> usize {
        self.pending.len()
    }

    /// Per-packet implied sampling rate: samples in a packet divided by the
    /// device-clock time until the next consecutive packet.
    pub fn estimate_rate(&self) -> Result<RateStats, RateNotReady> {
        let n = self.rates.len();
        if n < 2 {
            return Err(RateNotReady { pairs: n });
        }
        let mean = self.rates.iter().sum::<f64>() / n as f64;
        let var = self.rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(RateStats {
            mean_hz: mean,
            std_hz: var.sqrt(),
            packets: n,
        })
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.rates.iter().copied()
    }

    /// Stored data volume extrapolated to a day of device time.
    pub fn gb_per_day(&self) -> Option<f64> {
        let first = self.first_send_us?;
        let span_s = (self.last_send_us.checked_sub(first)?) as f64 * 1e-6;
        (span_s > 0.0).then(|| self.counters.stored_samples as f64 * 3.0 / span_s * 86_400.0 / 1e9)
    }

    /// Closed segments followed by the open one.
    pub fn segments(&self) -> Vec<SignalSegment> {
        let mut all = self.closed.clone();
        all.extend(self.open_segment().cloned());
        all
    }

    /// The segment being filled, if it holds anything yet.
    pub fn open_segment(&self) -> Option<&SignalSegment> {
        self.open.as_ref().filter(|s| s.span() > 0)
    }

    pub fn closed_segments(&self) -> &[SignalSegment] {
        &self.closed
    }

    pub(crate) fn drop_closed_segments(&mut self) {
        self.closed.clear();
    }
}
