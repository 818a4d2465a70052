//! Trains the dilated causal network on a small synthetic set and reports
//! accuracy per epoch.

use vibesense::recognize::{event_inputs, synth_events, train, EventSetConfig, InputRepr, TcnConfig, TrainConfig, EVENT_CLASSES};

fn main() {
    let events = synth_events(&EVENT_CLASSES, &EventSetConfig { per_class: 8, seed: 21, ..EventSetConfig::default() }).unwrap();
    let config = TcnConfig { input_window: 16, in_channels: 12, n_layers: 3, channels: 8, kernel_size: 2, latent_dim: 8, n_classes: 4 };
    let data = event_inputs(&events, InputRepr::Frames, &config);
    let report = train(&data, config, &TrainConfig { epochs: 200, target_accuracy: Some(1.0), ..TrainConfig::default() }).unwrap();
    for (i, e) in report.trace.iter().enumerate() {
        println!("epoch {:3} loss {:.4} accuracy {:.3}", i + 1, e.loss, e.accuracy);
    }
}
