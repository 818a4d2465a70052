//! End-to-end acceptance suite. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::net::UdpSocket;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::send_paced;
use common::sites::{oracle_best, oracle_candidates, random_prefs, random_site};
use vibesense::devicesim::{
    run_device, synth_clean, synth_signal, ActivityEntry, ActivityKind, ActivityScript, ClockModel, DeviceConfig,
    Framing, NoiseModel,
};
use vibesense::dsp::{detect_events, snr_at_rate, EventDetectorConfig, Snr};
use vibesense::edgehub::udp::UdpIngest;
use vibesense::edgehub::{read_segment, Hub, HubConfig};
use vibesense::netsim::ChannelConfig;
use vibesense::recognize::tcn::{backward, example_loss, tcn_forward, ModelWeights, TcnConfig, TrainConfig};
use vibesense::recognize::{event_features, frame_matrix, knn_accuracy, labels_of, synth_events, train, tsne};
use vibesense::recognize::{EventSetConfig, TsneConfig, EVENT_CLASSES};
use vibesense::recommend::{
    check_feasible, dialog_step, generate_candidates, parse_site, score_all, select, start, DialogContext, Phase,
    Placement, ScoringRules, ScriptProfile, UserPreferences,
};
use vibesense::rng::seeded;
use vibesense::scenario::{self, ScenarioFile, WeeklyConfig};
use vibesense::wireproto::{decode_packet, encode_packet, DecodeOutcome, PacketHeader, HEADER_LEN};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn parity_recovery() -> Outcome {
    let t0 = Instant::now();
    let h = PacketHeader {
        device_id: 4,
        seq: 9,
        first_sample_index: 9 * 108,
        send_time_us: 55,
        n_blocks: 4,
        block_len: 81,
    };
    let mut rng = seeded(600);
    let samples: Vec<i32> = (0..h.samples_per_packet()).map(|_| rng.random_range(-(1 << 23)..(1 << 23))).collect();
    let bytes = encode_packet(&h, &samples).unwrap();
    let payload_bits = h.payload_len() * 8;
    let mut recovered = 0;
    for bit in 0..payload_bits {
        let mut b = bytes.clone();
        b[HEADER_LEN + bit / 8] ^= 1 << (bit % 8);
        if let DecodeOutcome::Recovered { samples: s, .. } = decode_packet(&b) {
            if s == samples && b != bytes {
                recovered += 1;
            }
        }
    }
    let mut two_block = 0;
    let pairs = [(0usize, 1usize), (0, 3), (1, 2), (2, 3), (1, 3), (0, 2)];
    for &(a, c) in &pairs {
        for (oa, oc) in [(0usize, 80usize), (40, 40), (77, 3)] {
            let mut b = bytes.clone();
            b[HEADER_LEN + a * 81 + oa] ^= 0x80;
            b[HEADER_LEN + c * 81 + oc] ^= 0x01;
            if matches!(decode_packet(&b), DecodeOutcome::Unrecoverable { .. }) {
                two_block += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    check(
        recovered == payload_bits && two_block == pairs.len() * 3 && secs < 30.0,
        format!(
            "{recovered}/{payload_bits} payload bit flips recovered byte-exact, {two_block}/{} two-block corruptions unrecoverable, {secs:.2} s",
            pairs.len() * 3
        ),
    )
}

fn rate_variance() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut stds = Vec::new();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, want) in [("deployment1", 734.0), ("deployment2", 799.0), ("deployment3", 316.0)] {
        let t0 = Instant::now();
        let (s, text) = ScenarioFile::bundled(name).unwrap();
        let r = scenario::run(&s, &text, &dir.path().join(name)).unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let std = r.devices[0].measured_rate_std_hz.unwrap();
        let within = (std / want - 1.0).abs() <= 0.10;
        ok &= within && secs < 120.0 && s.duration_s >= 60.0 && r.violations.is_empty();
        parts.push(format!("{name} {std:.1} Hz (target {want}, {secs:.1} s)"));
        stds.push(std);
    }
    ok &= stds[2] < stds[0] && stds[2] < stds[1];
    check(ok, parts.join(", "))
}

fn ingestion_integrity() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let hub = Arc::new(Hub::new(HubConfig { storage_dir: Some(dir.path().to_path_buf()), ..HubConfig::default() }));
    let ingest = UdpIngest::spawn(hub.clone(), UdpSocket::bind("127.0.0.1:0").unwrap()).unwrap();
    let script = ActivityScript::generate(&[ActivityKind::Footstep, ActivityKind::ObjectPlace], 12, 2.0, 900.0, 4);
    let runs: Vec<_> = (1..=5u16)
        .map(|id| {
            let dev = DeviceConfig {
                device_id: id,
                clock: ClockModel::preset("nominal").unwrap(),
                noise: NoiseModel::white(10.0),
                framing: Framing::default(),
                seed: 100 + id as u64,
            };
            run_device(&dev, &script, &ChannelConfig::ideal(), 60.0).unwrap()
        })
        .collect();
    let sent = send_paced(&runs, ingest.local_addr(), 15.0);
    std::thread::sleep(Duration::from_millis(300));
    let got = ingest.shutdown().unwrap();
    hub.flush();
    let files = hub.persist_open_segments().unwrap();
    let mut clean_ok = got as usize == sent;
    let mut lost = 0;
    for r in &runs {
        let c = hub.counters(r.device_id).unwrap();
        lost += c.lost;
        let stored: Vec<i32> = files
            .iter()
            .map(|f| read_segment(f).unwrap())
            .filter(|s| s.device_id == r.device_id)
            .flat_map(|s| s.indexed_samples().map(|(_, v)| v).collect::<Vec<_>>())
            .collect();
        let want: Vec<i32> = r.sent.iter().flat_map(|p| p.samples.iter().copied()).collect();
        clean_ok &= c.lost == 0 && c.gap_samples == 0 && stored == want && want.len() >= 420_000;
    }

    let (mut s, text) = ScenarioFile::bundled("five_devices").unwrap();
    s.channel.corrupt_prob = 0.05;
    s.channel.bits_per_corruption = 1;
    let r = scenario::run(&s, &text, &dir.path().join("corrupted")).unwrap();
    let pct: Vec<f64> = r.devices.iter().map(|d| d.recovered_pct).collect();
    let corrupt_ok = r.violations.is_empty()
        && pct.iter().all(|p| (p - 5.0).abs() <= 1.0)
        && r.devices.iter().all(|d| d.mismatched_samples == 0 && d.unrecoverable == 0);
    let pct_text: Vec<String> = pct.iter().map(|p| format!("{p:.2}")).collect();
    check(
        clean_ok && lost == 0 && corrupt_ok,
        format!(
            "loopback: {got}/{sent} datagrams, {lost} lost, payloads byte-equal: {clean_ok}; 5% corruption: recovered_pct [{}], violations {}",
            pct_text.join(", "),
            r.violations.len()
        ),
    )
}

fn snr_and_detector() -> Outcome {
    let rate = 7000.0;
    let sigma = 10.0;
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut rng = seeded(603);
    let n = 10 * 7000;
    let noise: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
    let mut worst: f64 = 0.0;
    for (amp, f) in [(5.0, 60.0), (20.0, 250.0), (80.0, 700.0), (300.0, 90.0)] {
        let signal: Vec<f64> =
            (0..n).map(|i| amp * (2.0 * std::f64::consts::PI * f * i as f64 / rate).sin() + normal.sample(&mut rng)).collect();
        let analytic = 10.0 * ((amp * amp / 2.0 + sigma * sigma) / (sigma * sigma)).log10();
        worst = worst.max((snr_at_rate(&signal, &noise, rate).unwrap().db() - analytic).abs());
    }
    let identical = snr_at_rate(&noise, &noise, rate).unwrap() == Snr::Db(0.0);

    // scripted activities separated by quiet, first 6 s quiet for the floor
    let mut entries = Vec::new();
    let mut t = 6.0;
    let kinds = [ActivityKind::Footstep, ActivityKind::ObjectPlace, ActivityKind::Door, ActivityKind::MedicationShake, ActivityKind::Shower];
    let mut erng = seeded(604);
    while t < 590.0 {
        let e = ActivityEntry::sample(kinds[erng.random_range(0..kinds.len())], t, erng.random_range(300.0..1500.0), &mut erng);
        if e.end_s() > 595.0 {
            break;
        }
        t = e.end_s() + erng.random_range(1.5..4.0);
        entries.push(e);
    }
    let script = ActivityScript::new(entries);
    let noisy = synth_signal(&script, &NoiseModel::white(sigma), rate, 600.0, 605).unwrap();
    let clean = synth_clean(&script, rate, 600.0, 605).unwrap();
    let detected = detect_events(&noisy, rate, &EventDetectorConfig::default());
    let (mut eligible, mut hit) = (0, 0);
    for e in &script.entries {
        let span = &clean[(e.start_s * rate) as usize..((e.end_s() * rate) as usize).min(clean.len())];
        let power = span.iter().map(|v| v * v).sum::<f64>() / span.len() as f64;
        if 10.0 * (power / (sigma * sigma)).log10() < 20.0 {
            continue;
        }
        eligible += 1;
        if detected.iter().any(|d| d.iou(e.start_s, e.end_s()) >= 0.5) {
            hit += 1;
        }
    }
    let recall = hit as f64 / eligible.max(1) as f64;

    let quiet: Vec<f64> = (0..600 * 7000).map(|_| normal.sample(&mut rng)).collect();
    let false_events = detect_events(&quiet, rate, &EventDetectorConfig::default()).len();
    check(
        worst < 0.5 && identical && eligible >= 50 && recall >= 0.95 && false_events <= 1,
        format!(
            "max SNR error {worst:.3} dB, identical segments 0 dB: {identical}; recall {hit}/{eligible} = {recall:.3} at IoU >= 0.5; {false_events} false events in 10 min of noise"
        ),
    )
}

fn tsne_embedding() -> Outcome {
    let t0 = Instant::now();
    let events = synth_events(&EVENT_CLASSES, &EventSetConfig::default()).unwrap();
    let features = event_features(&events, 64);
    let labels = labels_of(&events);
    let r = tsne(&features, &TsneConfig::default()).unwrap();
    let acc = knn_accuracy(&r.embedding, &labels, 5);
    let secs = t0.elapsed().as_secs_f64();
    check(
        events.len() == 284 && r.final_kl < 1.0 && r.final_kl < r.initial_kl && acc >= 0.9 && secs < 180.0,
        format!(
            "{} events, KL {:.4} -> {:.4}, 5-NN accuracy {acc:.3}, {secs:.1} s",
            events.len(),
            r.initial_kl,
            r.final_kl
        ),
    )
}

fn tcn() -> Outcome {
    let micro = TcnConfig { input_window: 10, in_channels: 2, n_layers: 2, channels: 3, kernel_size: 3, latent_dim: 4, n_classes: 3 };
    let w = ModelWeights::init(micro, 31).unwrap();
    let mut rng = seeded(32);
    let x: Vec<f64> = (0..micro.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut grad = ModelWeights::zeros(micro).unwrap();
    backward(&w, &x, 2, 0.1, &mut grad).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for t in 0..w.tensors().len() {
        for k in 0..w.tensors()[t].len() {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus.tensors_mut()[t][k] += h;
            minus.tensors_mut()[t][k] -= h;
            let fd = (example_loss(&plus, &x, 2, 0.1).unwrap().total - example_loss(&minus, &x, 2, 0.1).unwrap().total) / (2.0 * h);
            let a = grad.tensors()[t][k];
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-7));
        }
    }

    let base = tcn_forward(&w, &x).unwrap();
    let mut causal = true;
    for t0 in 0..micro.input_window {
        let mut y = x.clone();
        for c in 0..micro.in_channels {
            y[c * micro.input_window + t0] += 1.0;
        }
        let p = tcn_forward(&w, &y).unwrap();
        for (a, b) in base.activations.iter().zip(&p.activations) {
            let width = a.len() / micro.input_window;
            for c in 0..width {
                for t in 0..t0 {
                    causal &= a[c * micro.input_window + t] == b[c * micro.input_window + t];
                }
            }
        }
    }

    let events = synth_events(&EVENT_CLASSES, &EventSetConfig { per_class: 8, seed: 21, ..EventSetConfig::default() }).unwrap();
    let config = TcnConfig { input_window: 16, in_channels: 12, n_layers: 3, channels: 8, kernel_size: 2, latent_dim: 8, n_classes: 4 };
    let data: Vec<(Vec<f64>, usize)> = events
        .iter()
        .map(|e| (frame_matrix(&e.samples, e.rate_hz, config.in_channels, config.input_window), e.class))
        .collect();
    let report = train(&data, config, &TrainConfig { epochs: 500, target_accuracy: Some(1.0), ..TrainConfig::default() }).unwrap();
    let acc = report.final_accuracy();
    check(
        worst < 1e-4 && causal && data.len() == 32 && acc >= 0.95 && report.trace.len() <= 500,
        format!(
            "gradient max rel error {worst:.2e}, causal {causal}, overfit {} samples to {acc:.3} in {} epochs",
            data.len(),
            report.trace.len()
        ),
    )
}

fn recommendation() -> Outcome {
    let rules = ScoringRules::default();
    let profile = ScriptProfile::default();
    let (mut enum_ok, mut feasible_ok, mut select_ok) = (0, 0, 0);
    let seeds = 1000u64;
    for seed in 0..seeds {
        let site = random_site(seed);
        let prefs = random_prefs(seed);
        let parsed = parse_site(&site.doc).unwrap();
        let sensor = parsed.sensor.unwrap();
        let want = oracle_candidates(&site);
        match generate_candidates(&parsed.graph, &sensor, 1) {
            Ok(c) => {
                let got: BTreeSet<String> = c.iter().map(Placement::id).collect();
                enum_ok += usize::from(got == want && got.len() == c.len());
                let recs = score_all(&c, &prefs, &parsed.graph, &sensor, &profile, &rules);
                let ranked = select(recs).unwrap();
                feasible_ok += usize::from(ranked.ranked.iter().all(|r| check_feasible(&parsed.graph, &sensor, &r.placement).is_ok()));
                let (ids, best) = oracle_best(&site, &prefs, 1e-12).unwrap();
                let tie_ok = ids.len() > 1 || ranked.best().id() == *ids.iter().next().unwrap();
                let order_ok = ranked.ranked.windows(2).all(|w| {
                    w[0].total > w[1].total || (w[0].total == w[1].total && w[0].id() < w[1].id())
                });
                select_ok += usize::from(ids.contains(&ranked.best().id()) && (ranked.best().total - best).abs() < 1e-12 && tie_ok && order_ok);
            }
            Err(_) => {
                let empty = want.is_empty();
                enum_ok += usize::from(empty);
                feasible_ok += 1;
                select_ok += usize::from(empty);
            }
        }
    }

    let site = parse_site(include_str!("../data/sites/tradeoff_home.site")).unwrap();
    let sensor = site.sensor.unwrap();
    let ctx = DialogContext::new(&site.graph, &sensor, &rules, &profile);
    let replay = || {
        let (mut state, _) = start(&ctx);
        for a in ["3", "yes", "medication", "yes"] {
            state = dialog_step(state, a, &ctx).unwrap().0;
        }
        state
    };
    let (a, b) = (replay(), replay());
    let golden = a == b && a.phase == Phase::Present && a.transcript.len() == 9;

    let prefs = UserPreferences {
        privacy_concern: 3,
        tamper_risk: true,
        target_activities: vec![ActivityKind::MedicationShake],
        discretion_required: true,
    };
    let recs = score_all(&generate_candidates(&site.graph, &sensor, 1).unwrap(), &prefs, &site.graph, &sensor, &profile, &rules);
    let max_perf = recs.iter().max_by(|x, y| x.perf_score.total_cmp(&y.perf_score)).unwrap().clone();
    let max_ux = recs.iter().max_by(|x, y| x.ux_score.total_cmp(&y.ux_score)).unwrap().clone();
    let winner = select(recs).unwrap().best().clone();
    let tradeoff = max_perf.placement.surface != max_ux.placement.surface
        && winner.perf_score < max_perf.perf_score
        && winner.ux_score < max_ux.ux_score
        && winner.total > max_perf.total
        && winner.total > max_ux.total;
    check(
        enum_ok == seeds as usize && feasible_ok == seeds as usize && select_ok == seeds as usize && golden && tradeoff,
        format!(
            "enumeration {enum_ok}/{seeds}, feasibility {feasible_ok}/{seeds}, selection {select_ok}/{seeds}, golden replay deterministic {golden}; fixture winner {} total {:.3} vs max-perf {} {:.3} and max-ux {} {:.3}",
            winner.id(),
            winner.total,
            max_perf.id(),
            max_perf.total,
            max_ux.id(),
            max_ux.total
        ),
    )
}

fn weekly_pattern() -> Outcome {
    let w = scenario::weekly_snr(&WeeklyConfig::default()).unwrap();
    let peak = w.dominant_period_h;
    check(
        w.series.len() == 7 * 24 && peak == Some(24),
        format!("{} hourly windows, dominant lag {:?} h, r(24) = {:.3}", w.series.len(), peak, w.autocorrelation[24]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("parity recovery", parity_recovery),
        ("rate variance", rate_variance),
        ("ingestion integrity", ingestion_integrity),
        ("snr and event detection", snr_and_detector),
        ("t-sne embedding", tsne_embedding),
        ("tcn", tcn),
        ("recommendation", recommendation),
        ("weekly pattern", weekly_pattern),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
