//! Seeded inputs shared by the benchmarks.

use ndarray::{Array2, Array3};
use noisyseg::{ExpertSet, ImageTensor, LabelMap, ProbMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut r = rng(seed);
    ImageTensor::new(Array3::from_shape_fn((c, h, w), |_| r.random::<f64>())).unwrap()
}

pub fn labels(h: usize, w: usize, k: usize, seed: u64) -> LabelMap {
    let mut r = rng(seed);
    LabelMap::new(
        Array2::from_shape_fn((h, w), |_| r.random_range(0..k as u8)),
        k,
    )
    .unwrap()
}

pub fn experts(n: usize, h: usize, w: usize, k: usize, seed: u64) -> ExpertSet {
    ExpertSet::with_default_ids((0..n).map(|e| labels(h, w, k, seed + e as u64)).collect()).unwrap()
}

pub fn probs(k: usize, h: usize, w: usize, seed: u64) -> ProbMap {
    let mut r = rng(seed);
    ProbMap::from_logits(&Array3::from_shape_fn((k, h, w), |_| {
        r.random_range(-2.0..2.0)
    }))
    .unwrap()
}
