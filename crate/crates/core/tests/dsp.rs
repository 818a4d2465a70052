use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use vibesense::dsp::{
    circular_autocorrelation, detect_events, dominant_period, fft_features, snr_at_rate, spectrogram,
    EventDetectorConfig, Snr, SpectrogramParams,
};
use vibesense::rng::seeded;

fn naive_dft_mag(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            (re * re + im * im).sqrt()
        })
        .collect()
}

#[test]
fn spectrogram_matches_naive_dft() {
    let mut rng = seeded(1);
    let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
    let params = SpectrogramParams { window_len: 64, hop_len: 48 };
    let s = spectrogram(&x, 1000.0, params).unwrap();
    assert_eq!(s.frames.len(), (300 - 64) / 48 + 1);
    for (t, frame) in s.frames.iter().enumerate() {
        let w: Vec<f64> = (0..64)
            .map(|i| x[t * 48 + i] * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 64.0).cos()))
            .collect();
        for (a, b) in frame.iter().zip(naive_dft_mag(&w)) {
            assert!((a - b).abs() < 1e-9, "frame {t}: {a} vs {b}");
        }
    }
}

#[test]
fn snr_of_sine_in_white_noise() {
    let rate = 7000.0;
    let n = 70_000;
    let normal = Normal::new(0.0, 10.0).unwrap();
    let mut rng = seeded(3);
    let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    for amp in [10.0, 31.6, 100.0] {
        let signal: Vec<f64> = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * 120.0 * i as f64 / rate).sin() + normal.sample(&mut rng))
            .collect();
        // sine power a^2/2 on top of the noise power
        let expected = 10.0 * ((amp * amp / 2.0 + 100.0) / 100.0f64).log10();
        let got = snr_at_rate(&signal, &noise, rate).unwrap().db();
        assert!((got - expected).abs() < 0.5, "amp {amp}: {got} vs {expected}");
    }
    assert_eq!(snr_at_rate(&noise, &noise, rate).unwrap(), Snr::Db(0.0));
}

#[test]
fn features_pick_the_right_band() {
    let rate = 7000.0;
    let x: Vec<f64> = (0..7000).map(|i| (2.0 * std::f64::consts::PI * 505.0 * i as f64 / rate).sin()).collect();
    let f = fft_features(&x, rate, 10);
    let top = f.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    // bands are 99 Hz wide starting at 10 Hz, so 505 Hz lands in band 5
    assert_eq!(top, 5);
    assert!((f.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn detector_finds_bursts() {
    let rate = 7000.0;
    let normal = Normal::new(0.0, 10.0).unwrap();
    let mut rng = seeded(5);
    let mut x: Vec<f64> = (0..(30.0 * rate) as usize).map(|_| normal.sample(&mut rng)).collect();
    let bursts = [(8.0, 8.6), (15.0, 16.5), (22.0, 22.4)];
    for &(a, b) in &bursts {
        for i in (a * rate) as usize..(b * rate) as usize {
            x[i] += 60.0 * (2.0 * std::f64::consts::PI * 200.0 * i as f64 / rate).sin();
        }
    }
    let events = detect_events(&x, rate, &EventDetectorConfig::default());
    assert_eq!(events.len(), bursts.len(), "{events:?}");
    for (e, &(a, b)) in events.iter().zip(&bursts) {
        assert!(e.iou(a, b) > 0.8, "{e:?}");
    }
}

fn naive_autocorr(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let c = |lag: usize| (0..n).map(|i| (x[i] - m) * (x[(i + lag) % n] - m)).sum::<f64>();
    let c0 = c(0);
    (0..n).map(|l| c(l) / c0).collect()
}

proptest! {
    #[test]
    fn autocorrelation_matches_naive(x in prop::collection::vec(-100.0f64..100.0, 3..60)) {
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-6));
        let got = circular_autocorrelation(&x);
        for (a, b) in got.iter().zip(naive_autocorr(&x)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
        prop_assert!((got[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn periodic_series_has_its_period(period in 3usize..30, reps in 3usize..8, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mut base: Vec<f64> = (0..period).map(|_| rng.random_range(0.0..1.0)).collect();
        base[0] = 5.0;
        let x: Vec<f64> = (0..period * reps).map(|i| base[i % period]).collect();
        prop_assert_eq!(dominant_period(&x), Some(period));
    }
}
