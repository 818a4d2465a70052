//! Stored signal segments and their on-disk format.
//!
//! ```text
//! "VSEG"  version:u8  device_id:u16  nominal_rate:u32
//! start_sample_index:u64  start_time_us:u64
//! records:
//!   0x01 count:u32 then count * 3 bytes (24-bit LE samples)
//!   0x02 missing:u64
//!   0xFF span:u64     end marker, last record; span = samples + gaps
//! ```
//! The end marker makes a file cut at a record boundary detectable.
//! All integers little-endian.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub const SEGMENT_MAGIC: &[u8; 4] = b"VSEG";
pub const SEGMENT_VERSION: u8 = 1;
const PREAMBLE_LEN: usize = 4 + 1 + 2 + 4 + 8 + 8;
const TAG_SAMPLES: u8 = 0x01;
const TAG_GAP: u8 = 0x02;
const TAG_END: u8 = 0xFF;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum SegmentRecord {
    Samples(Vec<i32>),
    /// Span of samples that never arrived or could not be rebuilt.
    Gap(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SignalSegment {
    pub device_id: u16,
    pub start_sample_index: u64,
    pub start_time_us: u64,
    pub nominal_rate_hz: u32,
    pub records: Vec<SegmentRecord>,
}

impl SignalSegment {
    pub fn new(device_id: u16, start_sample_index: u64, start_time_us: u64, nominal_rate_hz: u32) -> Self {
        SignalSegment {
            device_id,
            start_sample_index,
            start_time_us,
            nominal_rate_hz,
            records: Vec::new(),
        }
    }

    pub fn push_samples(&mut self, samples: &[i32]) {
        if samples.is_empty() {
            return;
        }
        match self.records.last_mut() {
            Some(SegmentRecord::Samples(s)) => s.extend_from_slice(samples),
            _ => self.records.push(SegmentRecord::Samples(samples.to_vec())),
        }
    }

    pub fn push_gap(&mut self, missing: u64) {
        if missing == 0 {
            return;
        }
        match self.records.last_mut() {
            Some(SegmentRecord::Gap(g)) => *g += missing,
            _ => self.records.push(SegmentRecord::Gap(missing)),
        }
    }

    pub fn stored_samples(&self) -> u64 {
        self.records
            .iter()
            .map(|r| match r {
                SegmentRecord::Samples(s) => s.len() as u64,
                SegmentRecord::Gap(_) => 0,
            })
            .sum()
    }

    pub fn gap_samples(&self) -> u64 {
        self.records
            .iter()
            .map(|r| match r {
                SegmentRecord::Gap(g) => *g,
                SegmentRecord::Samples(_) => 0,
            })
            .sum()
    }

    /// Samples plus gaps: the span of sample indices the segment covers.
    pub fn span(&self) -> u64 {
        self.stored_samples() + self.gap_samples()
    }

    pub fn end_sample_index(&self) -> u64 {
        self.start_sample_index + self.span()
    }

    /// Stored samples keyed by absolute sample index.
    pub fn indexed_samples(&self) -> impl Iterator<Item = (u64, i32)> + '_ {
        let mut index = self.start_sample_index;
        self.records.iter().flat_map(move |r| {
            let start = index;
            match r {
                SegmentRecord::Samples(s) => {
                    index += s.len() as u64;
                    s.iter().enumerate().map(|(i, &v)| (start + i as u64, v)).collect::<Vec<_>>()
                }
                SegmentRecord::Gap(g) => {
                    index += g;
                    Vec::new()
                }
            }
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(PREAMBLE_LEN + 3 * self.stored_samples() as usize + 16);
        out.extend_from_slice(SEGMENT_MAGIC);
        out.push(SEGMENT_VERSION);
        out.extend_from_slice(&self.device_id.to_le_bytes());
        out.extend_from_slice(&self.nominal_rate_hz.to_le_bytes());
        out.extend_from_slice(&self.start_sample_index.to_le_bytes());
        out.extend_from_slice(&self.start_time_us.to_le_bytes());
        for r in &self.records {
            match r {
                SegmentRecord::Samples(s) => {
                    out.push(TAG_SAMPLES);
                    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
                    for v in s {
                        out.extend_from_slice(&v.to_le_bytes()[..3]);
                    }
                }
                SegmentRecord::Gap(g) => {
                    out.push(TAG_GAP);
                    out.extend_from_slice(&g.to_le_bytes());
                }
            }
        }
        out.push(TAG_END);
        out.extend_from_slice(&self.span().to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SegmentError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != SEGMENT_MAGIC {
            return Err(SegmentError::Parse { offset: 0, reason: "bad magic" });
        }
        let version_at = r.pos;
        if r.u8("version")? != SEGMENT_VERSION {
            return Err(SegmentError::Parse { offset: version_at, reason: "unsupported version" });
        }
        let device_id = r.u16("device_id")?;
        let nominal_rate_hz = r.u32("nominal_rate")?;
        let start_sample_index = r.u64("start_sample_index")?;
        let start_time_us = r.u64("start_time_us")?;
        let mut seg = SignalSegment::new(device_id, start_sample_index, start_time_us, nominal_rate_hz);
        loop {
            let tag_at = r.pos;
            match r.u8("record tag")? {
                TAG_SAMPLES => {
                    let count = r.u32("sample count")? as usize;
                    let raw = r.take(count.checked_mul(3).ok_or(SegmentError::Parse {
                        offset: tag_at,
                        reason: "sample count overflow",
                    })?, "sample data")?;
                    seg.records.push(SegmentRecord::Samples(
                        raw.chunks_exact(3)
                            .map(|c| (i32::from_le_bytes([c[0], c[1], c[2], 0]) << 8) >> 8)
                            .collect(),
                    ));
                }
                TAG_GAP => {
                    let g = r.u64("gap length")?;
                    seg.records.push(SegmentRecord::Gap(g));
                }
                TAG_END => {
                    let span = r.u64("segment span")?;
                    if span != seg.span() {
                        return Err(SegmentError::Parse { offset: tag_at, reason: "span does not match records" });
                    }
                    if r.pos != bytes.len() {
                        return Err(SegmentError::Parse { offset: r.pos, reason: "trailing bytes after end marker" });
                    }
                    return Ok(seg);
                }
                _ => return Err(SegmentError::Parse { offset: tag_at, reason: "unknown record tag" }),
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], SegmentError> {
        if self.bytes.len() - self.pos < n {
            return Err(SegmentError::Truncated { offset: self.pos, what });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, SegmentError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, SegmentError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, SegmentError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, SegmentError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("truncated segment at byte {offset}: missing {what}")]
    Truncated { offset: usize, what: &'static str },
    #[error("malformed segment at byte {offset}: {reason}")]
    Parse { offset: usize, reason: &'static str },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SegmentError {
    pub fn offset(&self) -> Option<usize> {
        match self {
            SegmentError::Truncated { offset, .. } | SegmentError::Parse { offset, .. } => Some(*offset),
            SegmentError::Io(_) => None,
        }
    }
}

pub fn write_segment(path: &Path, segment: &SignalSegment) -> Result<(), SegmentError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, segment.to_bytes())?;
    Ok(())
}

pub fn read_segment(path: &Path) -> Result<SignalSegment, SegmentError> {
    SignalSegment::from_bytes(&fs::read(path)?)
}
