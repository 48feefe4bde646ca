#![allow(dead_code)]

use gesturekit::synth::generate_dataset;
use gesturekit::train::{init_seed, train, TrainConfig};
use gesturekit::{GenConfig, ModelConfig, RecognizerModel};

/// A small model trained just long enough to separate the eight classes.
pub fn quick_model() -> RecognizerModel {
    let gen = GenConfig { frames_per_sequence: 20, ..GenConfig::default() };
    let data = generate_dataset(40, &gen).unwrap();
    let cfg = TrainConfig { epochs: 4, ..TrainConfig::default() };
    let initial = RecognizerModel::new(ModelConfig::default(), init_seed(cfg.seed)).unwrap();
    train(&initial, &data, &[], &cfg).unwrap().0
}
