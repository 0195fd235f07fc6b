//! Fixtures shared by the benchmarks.

use njode_core::generators::{generate, GeneratorConfig};
use njode_core::model::{ModelConfig, NjodeModel, PreparedPath};
use njode_core::Dataset;

/// `n` Brownian-motion paths with noisy observations.
pub fn bm_dataset(n: usize) -> Dataset {
    generate(&GeneratorConfig { n_paths: n, seed: 1, ..GeneratorConfig::bm_noisy() }).expect("valid generator config")
}

/// Model with the default architecture for one-dimensional data.
pub fn default_model() -> NjodeModel {
    NjodeModel::new(ModelConfig::default(), 1, 0).expect("valid model config")
}

pub fn prepare_all(model: &NjodeModel, ds: &Dataset) -> Vec<PreparedPath> {
    ds.paths.iter().map(|p| model.prepare(&p.framework, None).expect("matching dimension")).collect()
}
