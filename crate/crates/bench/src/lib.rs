//! Fixtures for the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sigdistill_core::distill::ClassBatch;
use sigdistill_core::{dft_magnitude, Tensor};

/// Uniform `[-1, 1)` samples, reproducible per seed.
pub fn signal(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A `[batch, 2, n]` tensor of random I/Q samples.
pub fn batch(batch: usize, n: usize, seed: u64) -> Tensor<f32> {
    Tensor::new(vec![batch, 2, n], signal(batch * 2 * n, seed)).expect("shape matches data")
}

/// A real class batch in both domains.
pub fn class_batch(size: usize, n: usize, seed: u64) -> ClassBatch<f32> {
    let time = batch(size, n, seed);
    let freq: Vec<f32> = time
        .data()
        .chunks(n)
        .flat_map(|row| dft_magnitude(row).expect("non-empty row"))
        .collect();
    ClassBatch {
        freq: Tensor::new(time.shape().to_vec(), freq).expect("shape matches data"),
        time,
    }
}
