//! Datagram framing for sensor telemetry.
//!
//! Every datagram is self-contained: a fixed 30-byte header protected by
//! CRC-16/CCITT-FALSE, followed by `n_blocks` data blocks of 24-bit
//! little-endian samples, one CRC-8/ATM per data block, an XOR parity
//! block and the parity block's own CRC-8.
//!
//! ```text
//!  0..2   magic 0x56 0x53 ("VS")
//!  2      version (1)
//!  3..5   device_id            u16 LE
//!  5..9   seq                  u32 LE
//!  9..17  first_sample_index   u64 LE
//! 17..25  send_time_us         u64 LE
//! 25      n_blocks             u8   (1..=16)
//! 26..28  block_len            u16 LE (multiple of 3)
//! 28..30  header CRC-16        u16 LE over bytes 0..28
//! 30..    n_blocks * block_len data bytes
//!         n_blocks CRC-8 bytes, one per data block
//!         block_len parity bytes (XOR of all data blocks)
//!         1 CRC-8 byte over the parity block
//! ```
//!
//! The per-block CRCs locate a damaged block; the parity block rebuilds it.
//! One damaged data block per datagram is correctable, two or more are not.

use thiserror::Error;

pub const MAGIC: [u8; 2] = [0x56, 0x53];
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
/// Largest datagram that fits a 1500-byte MTU without IP fragmentation.
pub const MAX_DATAGRAM: usize = 1472;
pub const MAX_BLOCKS: u8 = 16;
pub const SAMPLE_BYTES: usize = 3;
pub const SAMPLE_MIN: i32 = -(1 << 23);
pub const SAMPLE_MAX: i32 = (1 << 23) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PacketHeader {
    pub device_id: u16,
    pub seq: u32,
    pub first_sample_index: u64,
    pub send_time_us: u64,
    pub n_blocks: u8,
    pub block_len: u16,
}

impl PacketHeader {
    /// Number of samples carried by a packet with this layout.
    pub fn samples_per_packet(&self) -> usize {
        self.n_blocks as usize * self.block_len as usize / SAMPLE_BYTES
    }

    pub fn payload_len(&self) -> usize {
        self.n_blocks as usize * self.block_len as usize
    }

    /// Full datagram length for this layout.
    pub fn datagram_len(&self) -> usize {
        datagram_len(self.n_blocks, self.block_len)
    }

    fn check_layout(&self) -> Result<(), EncodeError> {
        if self.n_blocks == 0 || self.n_blocks > MAX_BLOCKS {
            return Err(EncodeError::BlockCount(self.n_blocks));
        }
        if self.block_len == 0 || self.block_len as usize % SAMPLE_BYTES != 0 {
            return Err(EncodeError::BlockLen(self.block_len));
        }
        let len = self.datagram_len();
        if len > MAX_DATAGRAM {
            return Err(EncodeError::Oversize(len));
        }
        Ok(())
    }

    fn write(&self, out: &mut Vec<u8>) {
        let start = out.len();
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.device_id.to_le_bytes());
        out.extend_from_slice(&self.seq.to_le_bytes());
        out.extend_from_slice(&self.first_sample_index.to_le_bytes());
        out.extend_from_slice(&self.send_time_us.to_le_bytes());
        out.push(self.n_blocks);
        out.extend_from_slice(&self.block_len.to_le_bytes());
        let crc = crc16(&out[start..]);
        out.extend_from_slice(&crc.to_le_bytes());
    }

    fn read(bytes: &[u8]) -> Option<PacketHeader> {
        if bytes.len() < HEADER_LEN || bytes[0..2] != MAGIC {
            return None;
        }
        let stored = u16::from_le_bytes([bytes[28], bytes[29]]);
        if crc16(&bytes[..28]) != stored || bytes[2] != VERSION {
            return None;
        }
        let header = PacketHeader {
            device_id: u16::from_le_bytes([bytes[3], bytes[4]]),
            seq: u32::from_le_bytes(bytes[5..9].try_into().ok()?),
            first_sample_index: u64::from_le_bytes(bytes[9..17].try_into().ok()?),
            send_time_us: u64::from_le_bytes(bytes[17..25].try_into().ok()?),
            n_blocks: bytes[25],
            block_len: u16::from_le_bytes([bytes[26], bytes[27]]),
        };
        header.check_layout().ok()?;
        (header.datagram_len() == bytes.len()).then_some(header)
    }
}

pub fn datagram_len(n_blocks: u8, block_len: u16) -> usize {
    let n = n_blocks as usize;
    let l = block_len as usize;
    HEADER_LEN + n * l + n + l + 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Intact {
        header: PacketHeader,
        samples: Vec<i32>,
    },
    Recovered {
        header: PacketHeader,
        samples: Vec<i32>,
        block: usize,
    },
    /// Header is trustworthy but the payload cannot be rebuilt.
    Unrecoverable {
        header: PacketHeader,
        failed_blocks: Vec<usize>,
        parity_failed: bool,
    },
    HeaderInvalid,
}

impl DecodeOutcome {
    pub fn header(&self) -> Option<&PacketHeader> {
        match self {
            DecodeOutcome::Intact { header, .. }
            | DecodeOutcome::Recovered { header, .. }
            | DecodeOutcome::Unrecoverable { header, .. } => Some(header),
            DecodeOutcome::HeaderInvalid => None,
        }
    }

    pub fn samples(&self) -> Option<&[i32]> {
        match self {
            DecodeOutcome::Intact { samples, .. } | DecodeOutcome::Recovered { samples, .. } => {
                Some(samples)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("block count {0} outside 1..=16")]
    BlockCount(u8),
    #[error("block length {0} is zero or not a multiple of 3")]
    BlockLen(u16),
    #[error("datagram of {0} bytes exceeds {MAX_DATAGRAM}")]
    Oversize(usize),
    #[error("layout carries {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("sample {value} at index {index} does not fit in 24 bits")]
    SampleRange { index: usize, value: i32 },
}

/// Frames `samples` into one datagram. The sample count must fill the
/// layout in `header` exactly since the format carries no length field.
pub fn encode_packet(header: &PacketHeader, samples: &[i32]) -> Result<Vec<u8>, EncodeError> {
    header.check_layout()?;
    let expected = header.samples_per_packet();
    if samples.len() != expected {
        return Err(EncodeError::SampleCount {
            expected,
            got: samples.len(),
        });
    }
    if let Some((index, &value)) = samples
        .iter()
        .enumerate()
        .find(|(_, s)| !(SAMPLE_MIN..=SAMPLE_MAX).contains(*s))
    {
        return Err(EncodeError::SampleRange { index, value });
    }

    let block_len = header.block_len as usize;
    let mut out = Vec::with_capacity(header.datagram_len());
    header.write(&mut out);
    for s in samples {
        out.extend_from_slice(&s.to_le_bytes()[..3]);
    }
    let data_start = HEADER_LEN;
    let data_end = data_start + header.payload_len();

    let mut parity = vec![0u8; block_len];
    let mut crcs = Vec::with_capacity(header.n_blocks as usize);
    for block in out[data_start..data_end].chunks_exact(block_len) {
        crcs.push(crc8(block));
        for (p, b) in parity.iter_mut().zip(block) {
            *p ^= b;
        }
    }
    out.extend_from_slice(&crcs);
    let parity_crc = crc8(&parity);
    out.extend_from_slice(&parity);
    out.push(parity_crc);
    debug_assert_eq!(out.len(), header.datagram_len());
    Ok(out)
}

/// Decodes arbitrary bytes. Never fails; every failure mode is an outcome.
pub fn decode_packet(bytes: &[u8]) -> DecodeOutcome {
    let Some(header) = PacketHeader::read(bytes) else {
        return DecodeOutcome::HeaderInvalid;
    };
    let n = header.n_blocks as usize;
    let block_len = header.block_len as usize;
    let data_end = HEADER_LEN + n * block_len;
    let crc_end = data_end + n;
    let parity_end = crc_end + block_len;

    let data = &bytes[HEADER_LEN..data_end];
    let stored_crcs = &bytes[data_end..crc_end];
    let parity = &bytes[crc_end..parity_end];
    let parity_ok = crc8(parity) == bytes[parity_end];

    let failed: Vec<usize> = data
        .chunks_exact(block_len)
        .zip(stored_crcs)
        .enumerate()
        .filter(|(_, (block, &crc))| crc8(block) != crc)
        .map(|(i, _)| i)
        .collect();

    match failed.as_slice() {
        [] => DecodeOutcome::Intact {
            header,
            samples: unpack_samples(data),
        },
        [bad] if parity_ok => {
            let bad = *bad;
            let mut payload = data.to_vec();
            let mut rebuilt = parity.to_vec();
            for (i, block) in data.chunks_exact(block_len).enumerate() {
                if i != bad {
                    for (r, b) in rebuilt.iter_mut().zip(block) {
                        *r ^= b;
                    }
                }
            }
            payload[bad * block_len..(bad + 1) * block_len].copy_from_slice(&rebuilt);
            DecodeOutcome::Recovered {
                header,
                samples: unpack_samples(&payload),
                block: bad,
            }
        }
        _ => DecodeOutcome::Unrecoverable {
            header,
            failed_blocks: failed,
            parity_failed: !parity_ok,
        },
    }
}

fn unpack_samples(data: &[u8]) -> Vec<i32> {
    data.chunks_exact(SAMPLE_BYTES)
        .map(|c| {
            // sign-extend from bit 23
            (i32::from_le_bytes([c[0], c[1], c[2], 0]) << 8) >> 8
        })
        .collect()
}

const CRC8_TABLE: [u8; 256] = build_crc8_table(0x07);
const CRC16_TABLE: [u16; 256] = build_crc16_table(0x1021);

const fn build_crc8_table(poly: u8) -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x80 != 0 {
                (crc << 1) ^ poly
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

const fn build_crc16_table(poly: u16) -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ poly
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

/// CRC-8/ATM: poly 0x07, init 0x00, no reflection, no xorout.
pub fn crc8(bytes: &[u8]) -> u8 {
    bytes
        .iter()
        .fold(0u8, |crc, &b| CRC8_TABLE[(crc ^ b) as usize])
}

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
pub fn crc16(bytes: &[u8]) -> u16 {
    bytes.iter().fold(0xFFFFu16, |crc, &b| {
        (crc << 8) ^ CRC16_TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}
