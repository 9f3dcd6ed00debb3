//! Shared inputs for the benchmarks.

use dewp_core::synthetic::random_window;
use dewp_core::{ModelConfig, Tensor, WindowSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("valid shape")
}

/// The desk-scale configuration used for synthetic experiments.
pub fn desk_config(stacks: usize) -> ModelConfig {
    ModelConfig {
        hidden: 16,
        stacks,
        conv_channels: 16,
        heads: 2,
        ..ModelConfig::new(3, 24, 12)
    }
}

pub fn windows(n: usize, config: &ModelConfig, seed: u64) -> Vec<WindowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| random_window(config.input_dim, config.lookback, config.horizon, &mut rng))
        .collect()
}
