//! Shared fixtures for the benchmarks in `benches/`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use remix_core::{generate_dataset, MultimodalDataset, MultimodalModel, SynthSpec, TrainConfig};

/// The default synthetic dataset and a freshly initialised default model.
pub fn default_fixture(seed: u64) -> (MultimodalDataset, MultimodalModel) {
    let ds = generate_dataset(&SynthSpec { seed, ..SynthSpec::default() }).expect("default spec is valid");
    let cfg = TrainConfig::default().model_config([ds.spec.dim_a, ds.spec.dim_v], ds.num_classes());
    let model = MultimodalModel::new(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).expect("default model is valid");
    (ds, model)
}
