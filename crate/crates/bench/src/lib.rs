//! Shared setup for the criterion benches.

use fairtree::data::synth::band_biased_dataset;
use fairtree::data::LabeledDataset;
use fairtree::domain::SimilaritySpec;
use fairtree::train::{train_rf, CartParams, RfParams};
use fairtree::tree::Forest;

pub fn dataset(n: usize) -> LabeledDataset {
    band_biased_dataset(n, 6, 0.3, 7)
}

pub fn forest(train: &LabeledDataset, n_trees: usize) -> Forest {
    let params = RfParams {
        n_trees,
        cart: CartParams { max_depth: 15, ..CartParams::default() },
        seed: 7,
        ..RfParams::default()
    };
    train_rf(train, &params).unwrap()
}

pub fn noise_cat_spec(tau: f64) -> SimilaritySpec {
    SimilaritySpec::NoiseCat {
        features: vec!["x0".into(), "x1".into()],
        tau,
        sensitive_groups: vec!["group".into()],
    }
}

pub fn cat_spec() -> SimilaritySpec {
    SimilaritySpec::Cat { sensitive_groups: vec!["group".into()] }
}
