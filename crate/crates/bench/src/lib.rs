//! Seeded inputs shared by the benchmarks.

use ndarray::Array1;
use posecpr_core::eval::{Gallery, Query};
use posecpr_core::features::{MergerKind, MergerParams, TextEncoderParams};
use posecpr_core::train::{BatchRow, Params, TrainBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 16] = [
    "raise", "lower", "left", "right", "arm", "knee", "bend", "twist", "head", "hip", "up", "down", "slowly", "forward",
    "shoulder", "straighten",
];

pub fn sentence<R: Rng>(rng: &mut R, len: usize) -> String {
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn unit<R: Rng>(rng: &mut R, d: usize) -> Array1<f64> {
    let v: Array1<f64> = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0));
    let n = v.dot(&v).sqrt();
    v / n
}

/// A training batch of `b` rows with `d`-dimensional features and
/// parameters for the given merger.
pub fn batch(b: usize, d: usize, raw_dim: usize, merger: MergerKind, seed: u64) -> (TrainBatch, Params) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..b)
        .map(|_| BatchRow {
            reference: unit(&mut rng, d),
            target: unit(&mut rng, d),
            forward: sentence(&mut rng, 12),
            reverse: Some(sentence(&mut rng, 12)),
        })
        .collect();
    let text = TextEncoderParams::init(raw_dim, d, &mut rng);
    let merger = MergerParams::init(merger, d, &mut rng);
    (TrainBatch { rows }, Params { text, merger })
}

/// `n` random gallery images and `q` queries whose targets are gallery members.
pub fn retrieval(n: usize, q: usize, d: usize, seed: u64) -> (Gallery, Vec<Query>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gallery = Gallery {
        ids: (0..n).map(|i| format!("g{i:05}")).collect(),
        features: (0..n).map(|_| unit(&mut rng, d)).collect(),
    };
    let queries = (0..q)
        .map(|i| Query {
            id: format!("q{i:05}"),
            reference: unit(&mut rng, d),
            text: sentence(&mut rng, 10),
            target: gallery.ids[rng.random_range(0..n)].clone(),
        })
        .collect();
    (gallery, queries)
}
