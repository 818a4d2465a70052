//! Runs a bundled scenario end to end and prints the per-device report.
//! Usage: cargo run --example scenario_run -- [name] [out_dir]

use vibesense::scenario::{self, ScenarioFile, BUNDLED_SCENARIOS};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "impaired".into());
    let out = args.next().map(Into::into).unwrap_or_else(|| std::env::temp_dir().join(format!("vibesense_{name}")));
    let Some((s, text)) = ScenarioFile::bundled(&name) else {
        let names: Vec<_> = BUNDLED_SCENARIOS.iter().map(|b| b.0).collect();
        eprintln!("unknown scenario {name}; bundled: {names:?}");
        std::process::exit(2);
    };
    let r = scenario::run(&s, &text, &out).unwrap();
    for d in &r.devices {
        println!(
            "device {} [{}]: sent {} lost {} ({:.2}%) recovered {:.2}% rate std {:.1} Hz",
            d.device_id,
            d.clock,
            d.sent_packets,
            d.lost,
            d.loss_pct,
            d.recovered_pct,
            d.measured_rate_std_hz.unwrap_or(f64::NAN)
        );
    }
    println!("violations: {:?}", r.violations);
    println!("outputs in {}", out.display());
}
