//! Seeded network-impairment channel.
//!
//! Each submitted datagram is independently dropped, bit-corrupted,
//! duplicated, held back (reordered) and delayed. All randomness comes from
//! one [`SimRng`] per channel, so a `(packets, config)` pair always yields
//! the same delivery trace.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{seeded, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub loss_prob: f64,
    pub corrupt_prob: f64,
    pub bits_per_corruption: u32,
    pub duplicate_prob: f64,
    pub reorder_prob: f64,
    pub delay_mean_us: u64,
    pub delay_jitter_us: u64,
    /// Upper bound on the extra hold applied to a reordered datagram.
    pub reorder_extra_us: u64,
    pub rng_seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            loss_prob: 0.0,
            corrupt_prob: 0.0,
            bits_per_corruption: 1,
            duplicate_prob: 0.0,
            reorder_prob: 0.0,
            delay_mean_us: 0,
            delay_jitter_us: 0,
            reorder_extra_us: 50_000,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelConfigError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("bits_per_corruption must be positive")]
    ZeroBits,
}

impl ChannelConfig {
    /// A channel that delivers everything untouched and in order.
    pub fn ideal() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), ChannelConfigError> {
        for (name, value) in [
            ("loss_prob", self.loss_prob),
            ("corrupt_prob", self.corrupt_prob),
            ("duplicate_prob", self.duplicate_prob),
            ("reorder_prob", self.reorder_prob),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ChannelConfigError::Probability { name, value });
            }
        }
        if self.bits_per_corruption == 0 {
            return Err(ChannelConfigError::ZeroBits);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryEvent {
    pub original_index: usize,
    pub delivered_bytes: Vec<u8>,
    pub deliver_time_us: u64,
}

/// One logical stream through an impaired link.
#[derive(Debug)]
pub struct Channel {
    config: ChannelConfig,
    rng: SimRng,
}

impl Channel {
    pub fn new(config: ChannelConfig) -> Result<Self, ChannelConfigError> {
        config.validate()?;
        let rng = seeded(config.rng_seed);
        Ok(Channel { config, rng })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    /// Pushes one datagram through the link and returns zero, one or two
    /// deliveries (two when duplicated). Deliveries are not sorted.
    pub fn submit(&mut self, index: usize, bytes: &[u8], send_time_us: u64) -> Vec<DeliveryEvent> {
        let cfg = &self.config;
        if self.rng.random::<f64>() < cfg.loss_prob {
            return Vec::new();
        }
        let mut delivered = bytes.to_vec();
        if !delivered.is_empty() && self.rng.random::<f64>() < cfg.corrupt_prob {
            let n_bits = delivered.len() * 8;
            for _ in 0..cfg.bits_per_corruption {
                let bit = self.rng.random_range(0..n_bits);
                delivered[bit / 8] ^= 1 << (bit % 8);
            }
        }
        let copies = if self.rng.random::<f64>() < cfg.duplicate_prob { 2 } else { 1 };
        let mut out = Vec::with_capacity(copies);
        for _ in 0..copies {
            let deliver_time_us = send_time_us + self.draw_delay();
            out.push(DeliveryEvent {
                original_index: index,
                delivered_bytes: delivered.clone(),
                deliver_time_us,
            });
        }
        out
    }

    fn draw_delay(&mut self) -> u64 {
        let cfg = &self.config;
        let mut delay = cfg.delay_mean_us as i64;
        if cfg.delay_jitter_us > 0 {
            let j = cfg.delay_jitter_us as i64;
            delay += self.rng.random_range(-j..=j);
        }
        if self.rng.random::<f64>() < cfg.reorder_prob && cfg.reorder_extra_us > 0 {
            delay += self.rng.random_range(1..=cfg.reorder_extra_us) as i64;
        }
        delay.max(0) as u64
    }
}

/// Transmits datagrams that were all handed to the link at time zero.
pub fn transmit(
    packets: &[Vec<u8>],
    config: &ChannelConfig,
) -> Result<Vec<DeliveryEvent>, ChannelConfigError> {
    let mut channel = Channel::new(config.clone())?;
    let mut events: Vec<DeliveryEvent> = packets
        .iter()
        .enumerate()
        .flat_map(|(i, p)| channel.submit(i, p, 0))
        .collect();
    events.sort_by_key(|e| e.deliver_time_us);
    Ok(events)
}

/// Transmits `(send_time_us, bytes)` pairs and returns deliveries ordered by
/// arrival time (stable, so simultaneous arrivals keep submission order).
pub fn transmit_timed(
    packets: &[(u64, Vec<u8>)],
    config: &ChannelConfig,
) -> Result<Vec<DeliveryEvent>, ChannelConfigError> {
    let mut channel = Channel::new(config.clone())?;
    let mut events: Vec<DeliveryEvent> = packets
        .iter()
        .enumerate()
        .flat_map(|(i, (t, p))| channel.submit(i, p, *t))
        .collect();
    events.sort_by_key(|e| e.deliver_time_us);
    Ok(events)
}
