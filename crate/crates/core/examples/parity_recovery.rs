//! Encodes one packet, flips bits, and shows what the decoder does with them.

use vibesense::wireproto::{decode_packet, encode_packet, DecodeOutcome, PacketHeader, HEADER_LEN};

fn main() {
    let h = PacketHeader { device_id: 7, seq: 0, first_sample_index: 0, send_time_us: 0, n_blocks: 16, block_len: 81 };
    let samples: Vec<i32> = (0..h.samples_per_packet() as i32).map(|i| (i * 9973) % 8_000_000 - 4_000_000).collect();
    let bytes = encode_packet(&h, &samples).unwrap();
    println!("{} samples -> {} byte datagram", samples.len(), bytes.len());

    let mut one = bytes.clone();
    one[HEADER_LEN + 5 * 81 + 10] ^= 0x04;
    match decode_packet(&one) {
        DecodeOutcome::Recovered { block, samples: s, .. } => {
            println!("1 flip in block 5: rebuilt block {block}, payload exact = {}", s == samples)
        }
        other => println!("unexpected: {other:?}"),
    }

    let mut two = one.clone();
    two[HEADER_LEN + 11 * 81] ^= 0x80;
    if let DecodeOutcome::Unrecoverable { failed_blocks, .. } = decode_packet(&two) {
        println!("flips in two blocks: unrecoverable, failed blocks {failed_blocks:?}");
    }

    let mut hdr = bytes.clone();
    hdr[3] ^= 1;
    println!("header flip: {:?}", decode_packet(&hdr));
}
