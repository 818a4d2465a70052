//! Simulates one device for 30 s and prints its packetization and drawn rates.

use vibesense::devicesim::{run_device, ActivityKind, ActivityScript, ClockModel, DeviceConfig, Framing, NoiseModel};
use vibesense::netsim::ChannelConfig;

fn main() {
    let script = ActivityScript::generate(&[ActivityKind::Footstep, ActivityKind::Door, ActivityKind::MedicationShake], 6, 2.0, 800.0, 3);
    for name in ["deployment1", "deployment2", "deployment3"] {
        let dev = DeviceConfig {
            device_id: 1,
            clock: ClockModel::preset(name).unwrap(),
            noise: NoiseModel::white(10.0),
            framing: Framing::default(),
            seed: 1,
        };
        let run = run_device(&dev, &script, &ChannelConfig::ideal(), 30.0).unwrap();
        let rates: Vec<f64> = run.sent.iter().map(|p| p.true_rate_hz).collect();
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let std = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rates.len() - 1) as f64).sqrt();
        println!(
            "{name}: {} packets, {} samples, drawn rate {mean:.1} +/- {std:.1} Hz, {} activities",
            run.sent.len(),
            run.sent_samples(),
            run.ground_truth.len()
        );
    }
}
