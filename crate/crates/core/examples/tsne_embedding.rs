//! Embeds spectral features of synthetic events in 2-D and scores class separation.

use vibesense::recognize::{event_features, knn_accuracy, labels_of, synth_events, tsne, EventSetConfig, TsneConfig, EVENT_CLASSES};

fn main() {
    let events = synth_events(&EVENT_CLASSES, &EventSetConfig::default()).unwrap();
    let features = event_features(&events, 64);
    let labels = labels_of(&events);
    let r = tsne(&features, &TsneConfig::default()).unwrap();
    println!("{} events, KL {:.3} -> {:.3}", events.len(), r.initial_kl, r.final_kl);
    println!("5-NN accuracy in the embedding: {:.3}", knn_accuracy(&r.embedding, &labels, 5));
    for (p, l) in r.embedding.iter().zip(&labels).step_by(40) {
        println!("{:?} class {l}", p);
    }
}
