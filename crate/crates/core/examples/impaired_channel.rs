//! Pushes a packet stream through a lossy link and tallies decode outcomes.

use std::collections::BTreeSet;

use vibesense::netsim::{transmit, ChannelConfig};
use vibesense::wireproto::{decode_packet, encode_packet, DecodeOutcome, PacketHeader};

fn main() {
    let packets: Vec<Vec<u8>> = (0..5000u32)
        .map(|seq| {
            let h = PacketHeader {
                device_id: 1,
                seq,
                first_sample_index: seq as u64 * 432,
                send_time_us: seq as u64 * 61_714,
                n_blocks: 16,
                block_len: 81,
            };
            encode_packet(&h, &vec![seq as i32; 432]).unwrap()
        })
        .collect();
    let cfg = ChannelConfig {
        loss_prob: 0.02,
        corrupt_prob: 0.05,
        duplicate_prob: 0.01,
        reorder_prob: 0.02,
        delay_mean_us: 3000,
        delay_jitter_us: 1000,
        rng_seed: 9,
        ..ChannelConfig::default()
    };
    let events = transmit(&packets, &cfg).unwrap();
    let (mut intact, mut recovered, mut bad, mut hdr) = (0, 0, 0, 0);
    let mut seen = BTreeSet::new();
    for e in &events {
        seen.insert(e.original_index);
        match decode_packet(&e.delivered_bytes) {
            DecodeOutcome::Intact { .. } => intact += 1,
            DecodeOutcome::Recovered { .. } => recovered += 1,
            DecodeOutcome::Unrecoverable { .. } => bad += 1,
            DecodeOutcome::HeaderInvalid => hdr += 1,
        }
    }
    println!("sent {} delivered {} (distinct {})", packets.len(), events.len(), seen.len());
    println!("intact {intact} recovered {recovered} unrecoverable {bad} header invalid {hdr}");
}
