//! Detects activity bursts in a simulated minute and matches them to ground truth.

use vibesense::devicesim::{synth_signal, ActivityEntry, ActivityKind, ActivityScript, NoiseModel};
use vibesense::dsp::{detect_events, EventDetectorConfig};
use vibesense::rng::seeded;

fn main() {
    let rate = 7000.0;
    let mut rng = seeded(8);
    let kinds = [ActivityKind::Footstep, ActivityKind::Door, ActivityKind::ObjectPlace, ActivityKind::MedicationShake];
    let mut entries = Vec::new();
    let mut t = 6.0;
    for k in kinds.iter().cycle().take(10) {
        let e = ActivityEntry::sample(*k, t, 800.0, &mut rng);
        t = e.end_s() + 2.5;
        entries.push(e);
    }
    let script = ActivityScript::new(entries);
    let signal = synth_signal(&script, &NoiseModel::white(10.0), rate, t, 3).unwrap();
    let found = detect_events(&signal, rate, &EventDetectorConfig::default());
    for e in &script.entries {
        let best = found.iter().map(|d| d.iou(e.start_s, e.end_s())).fold(0.0, f64::max);
        println!("{:<16} {:6.2}-{:6.2} s  best IoU {best:.2}", e.kind.as_str(), e.start_s, e.end_s());
    }
    println!("{} detected, {} scripted", found.len(), script.entries.len());
}
