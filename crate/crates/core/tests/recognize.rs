use rand::Rng;
use vibesense::recognize::tcn::{backward, example_loss, tcn_forward, ModelWeights, TcnConfig, TrainConfig};
use vibesense::recognize::tsne::{conditional_probabilities, squared_distances};
use vibesense::recognize::{
    classify_latent, event_features, frame_matrix, labels_of, synth_events, train, tsne, EventSetConfig, TsneConfig,
    EVENT_CLASSES,
};
use vibesense::rng::seeded;

fn micro() -> TcnConfig {
    TcnConfig {
        input_window: 10,
        in_channels: 2,
        n_layers: 2,
        channels: 3,
        kernel_size: 3,
        latent_dim: 4,
        n_classes: 3,
    }
}

fn random_input(c: &TcnConfig, seed: u64) -> Vec<f64> {
    let mut rng = seeded(seed);
    (0..c.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn gradients_match_central_differences() {
    let c = micro();
    let w = ModelWeights::init(c, 11).unwrap();
    let x = random_input(&c, 12);
    let (label, lambda) = (1, 0.3);
    let mut grad = ModelWeights::zeros(c).unwrap();
    backward(&w, &x, label, lambda, &mut grad).unwrap();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let n_tensors = w.tensors().len();
    for t in 0..n_tensors {
        for k in 0..w.tensors()[t].len() {
            let mut plus = w.clone();
            plus.tensors_mut()[t][k] += h;
            let mut minus = w.clone();
            minus.tensors_mut()[t][k] -= h;
            let numeric = (example_loss(&plus, &x, label, lambda).unwrap().total
                - example_loss(&minus, &x, label, lambda).unwrap().total)
                / (2.0 * h);
            let analytic = grad.tensors()[t][k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn activations_are_causal() {
    let c = micro();
    let w = ModelWeights::init(c, 3).unwrap();
    let x = random_input(&c, 4);
    let base = tcn_forward(&w, &x).unwrap();
    for t0 in 0..c.input_window {
        let mut y = x.clone();
        for ch in 0..c.in_channels {
            y[ch * c.input_window + t0] += 0.5;
        }
        let probe = tcn_forward(&w, &y).unwrap();
        for (layer, (a, b)) in base.activations.iter().zip(&probe.activations).enumerate() {
            let width = a.len() / c.input_window;
            for ch in 0..width {
                for t in 0..t0 {
                    let i = ch * c.input_window + t;
                    assert_eq!(a[i], b[i], "layer {layer} channel {ch} t {t} moved after perturbing t {t0}");
                }
            }
        }
    }
    let mut last = x.clone();
    last[c.input_window - 1] += 1.0;
    last[2 * c.input_window - 1] -= 1.0;
    assert_ne!(tcn_forward(&w, &last).unwrap().latent, base.latent);
}

#[test]
fn classifier_reads_only_the_latent() {
    let c = micro();
    let w = ModelWeights::init(c, 5).unwrap();
    let f = tcn_forward(&w, &random_input(&c, 6)).unwrap();
    assert_eq!(classify_latent(&w, &f.latent), f.logits);
    let other = tcn_forward(&w, &random_input(&c, 7)).unwrap();
    assert_ne!(other.logits, f.logits);
    assert_eq!(classify_latent(&w, &f.latent), f.logits);
}

#[test]
fn forward_is_bit_reproducible() {
    let c = micro();
    let a = tcn_forward(&ModelWeights::init(c, 8).unwrap(), &random_input(&c, 9)).unwrap();
    let b = tcn_forward(&ModelWeights::init(c, 8).unwrap(), &random_input(&c, 9)).unwrap();
    assert_eq!(a.logits.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.logits.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

pub fn toy_set(per_class: usize, seed: u64) -> (Vec<(Vec<f64>, usize)>, TcnConfig) {
    let cfg = EventSetConfig { per_class, seed, ..EventSetConfig::default() };
    let events = synth_events(&EVENT_CLASSES, &cfg).unwrap();
    let config = TcnConfig {
        input_window: 16,
        in_channels: 12,
        n_layers: 3,
        channels: 8,
        kernel_size: 2,
        latent_dim: 8,
        n_classes: 4,
    };
    let data = events
        .iter()
        .map(|e| (frame_matrix(&e.samples, e.rate_hz, config.in_channels, config.input_window), e.class))
        .collect();
    (data, config)
}

#[test]
fn overfits_small_set() {
    let (data, config) = toy_set(8, 21);
    assert_eq!(data.len(), 32);
    let hyper = TrainConfig { epochs: 500, target_accuracy: Some(1.0), ..TrainConfig::default() };
    let report = train(&data, config, &hyper).unwrap();
    let acc = report.final_accuracy();
    println!("toy set accuracy {acc} after {} epochs", report.trace.len());
    assert!(acc >= 0.95);
    assert!(report.weights.is_finite());
    let again = train(&data, config, &hyper).unwrap();
    assert_eq!(again.weights, report.weights);
}

fn knn_oracle(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let mut correct = 0;
    for i in 0..points.len() {
        let mut others: Vec<(f64, usize)> = (0..points.len())
            .filter(|&j| j != i)
            .map(|j| (((points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2)).sqrt(), labels[j]))
            .collect();
        others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut counts = [0usize; 8];
        for (_, l) in &others[..k] {
            counts[*l] += 1;
        }
        let top = *counts.iter().max().unwrap();
        // ties resolved toward the closest neighbour carrying a top count
        let pred = others[..k].iter().find(|(_, l)| counts[*l] == top).unwrap().1;
        correct += usize::from(pred == labels[i]);
    }
    correct as f64 / points.len() as f64
}

#[test]
fn tsne_on_synthetic_events() {
    let events = synth_events(&EVENT_CLASSES, &EventSetConfig::default()).unwrap();
    assert_eq!(events.len(), 284);
    let features = event_features(&events, 64);
    let labels = labels_of(&events);
    let r = tsne(&features, &TsneConfig::default()).unwrap();
    let acc = knn_oracle(&r.embedding, &labels, 5);
    println!("t-SNE KL {} -> {}, 5-NN accuracy {acc}", r.initial_kl, r.final_kl);
    assert!(r.final_kl < r.initial_kl);
    assert!(r.final_kl < 1.0);
    assert!(acc >= 0.9);
    for p in &r.perplexities {
        assert!((p - 30.0).abs() < 1e-3);
    }
}

#[test]
fn conditional_rows_are_distributions() {
    let mut rng = seeded(2);
    let x: Vec<Vec<f64>> = (0..100).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let (p, perp) = conditional_probabilities(&squared_distances(&x), 100, 30.0);
    for i in 0..100 {
        let row = &p[i * 100..(i + 1) * 100];
        assert_eq!(row[i], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((perp[i] - 30.0).abs() < 1e-3);
    }
}
