//! Spectrogram of a simulated activity and its SNR against an ambient recording.

use vibesense::devicesim::{synth_signal, ActivityEntry, ActivityKind, ActivityScript, NoiseModel};
use vibesense::dsp::{snr_at_rate, spectrogram, SpectrogramParams};
use vibesense::rng::seeded;

fn main() {
    let rate = 7000.0;
    let mut rng = seeded(5);
    let script = ActivityScript::new(vec![ActivityEntry::sample(ActivityKind::MedicationShake, 0.5, 600.0, &mut rng)]);
    let noise_model = NoiseModel::white(10.0);
    let signal = synth_signal(&script, &noise_model, rate, 3.0, 1).unwrap();
    let ambient = synth_signal(&ActivityScript::new(vec![]), &noise_model, rate, 3.0, 2).unwrap();

    let spec = spectrogram(&signal, rate, SpectrogramParams::default()).unwrap();
    let (mut best_t, mut best_e) = (0, 0.0);
    for t in 0..spec.frames.len() {
        if spec.frame_energy(t) > best_e {
            (best_t, best_e) = (t, spec.frame_energy(t));
        }
    }
    let row = &spec.frames[best_t];
    let peak = (1..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
    println!("{} frames x {} bins, loudest frame at {:.2} s peaks at {:.0} Hz", spec.frames.len(), spec.n_bins(), spec.frame_time_s(best_t), spec.bin_hz(peak));
    println!("SNR vs ambient: {:.1} dB", snr_at_rate(&signal, &ambient, rate).unwrap().db());
}
