//! Hourly SNR over a simulated week and its daily periodicity.

use vibesense::scenario::{weekly_snr, WeeklyConfig};

fn main() {
    let w = weekly_snr(&WeeklyConfig::default()).unwrap();
    for h in w.series.iter().take(24) {
        println!("{h:?}");
    }
    println!("dominant period {:?} h, r(24) = {:.3}, r(12) = {:.3}", w.dominant_period_h, w.autocorrelation[24], w.autocorrelation[12]);
}
