#![allow(dead_code)]

use toxnet_core::data::{synth_generate, Dataset, SynthSpec};
use toxnet_core::training::TrainConfig;

/// The default synthetic cohort with every class count divided by `divisor`
/// (at least 12 cases per class).
pub fn small_dataset(divisor: usize, seed: u64) -> Dataset {
    let mut spec = SynthSpec::default();
    for n in spec.class_counts.values_mut() {
        *n = (*n / divisor).max(12);
    }
    spec.seed = seed;
    synth_generate(&spec).expect("synthetic dataset").dataset
}

/// A narrow, short training run for tests.
pub fn quick_config(epochs: usize) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.model.widths = vec![8, 8, 8];
    c.model.heads = 2;
    c.model.final_heads = 2;
    c.epochs = epochs;
    c.learning_rate = 0.01;
    c.patience = None;
    c
}
