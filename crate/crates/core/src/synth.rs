//! A synthetic "additive world" with a known solution.
//!
//! Images are random unit vectors; the flipped orientation of an image is a
//! fixed signed coordinate permutation of its normal vector. A transition
//! text spells out the feature delta `target − query` as repeated
//! `up<k>`/`down<k>` tokens (count ∝ |δ_k|), padded with filler words. A
//! linear text projection can therefore map descriptions onto the deltas,
//! which makes `u + f_T(t) ≈ v` and `ψ + f_T(r) ≈ u` attainable.

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::{effective_roles, save_manifest, ImageKey, Manifest, Orientation, Split, TripletRecord, VariantKind};
use crate::features::{fnv1a64, EmbeddingStore, MergerParams, TextEncoderParams, DEFAULT_DIM, DEFAULT_RAW_DIM};
use crate::train::Params;

const FILLERS: [&str; 10] = ["please", "now", "slowly", "then", "gently", "and", "so", "carefully", "just", "simply"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dim: usize,
    pub gallery_size: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub paraphrases: usize,
    /// Token repetitions per unit of delta.
    pub quantization: f64,
    /// Hashing width the vocabulary is made collision-free for.
    pub raw_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dim: DEFAULT_DIM,
            gallery_size: 256,
            train_pairs: 512,
            test_pairs: 100,
            paraphrases: 3,
            quantization: 40.0,
            raw_dim: DEFAULT_RAW_DIM,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub manifest: Manifest,
    pub store: EmbeddingStore,
    /// Normal-orientation ids of every gallery image.
    pub gallery: Vec<String>,
    vocab: Vocabulary,
    raw_dim: usize,
}

/// `up`/`down` token pair per dimension and filler words. The two tokens
/// of a pair share one hash bucket with opposite signs, so a description of
/// `−δ` hashes to exactly the negated vector of a description of `δ`.
/// Distinct pairs and fillers never share a bucket.
#[derive(Debug, Clone)]
struct Vocabulary {
    up: Vec<String>,
    down: Vec<String>,
    fillers: Vec<String>,
}

impl Vocabulary {
    fn new(dim: usize, raw_dim: usize) -> Self {
        assert!(dim + FILLERS.len() <= raw_dim, "hashing width too small for the vocabulary");
        let bucket = |t: &str| fnv1a64(t.as_bytes()) % raw_dim as u64;
        let top_bit = |t: &str| fnv1a64(t.as_bytes()) >> 63;
        let variants = |base: String| (0u64..).map(move |i| if i == 0 { base.clone() } else { format!("{base}x{i}") });
        let mut used = HashSet::new();
        let fillers: Vec<String> = FILLERS.iter().map(|w| variants(w.to_string()).find(|t| used.insert(bucket(t))).unwrap()).collect();
        let (mut up, mut down) = (Vec::with_capacity(dim), Vec::with_capacity(dim));
        for k in 0..dim {
            let u = variants(format!("up{k}")).find(|t| used.insert(bucket(t))).unwrap();
            let d = variants(format!("down{k}"))
                .find(|t| bucket(t) == bucket(&u) && top_bit(t) != top_bit(&u))
                .unwrap();
            up.push(u);
            down.push(d);
        }
        Vocabulary { up, down, fillers }
    }

    fn describe<R: Rng>(&self, delta: ArrayView1<'_, f64>, quantization: f64, rng: &mut R) -> String {
        let mut tokens = Vec::new();
        for (k, &x) in delta.iter().enumerate() {
            let n = (x.abs() * quantization).round() as usize;
            let word = if x >= 0.0 { &self.up[k] } else { &self.down[k] };
            tokens.extend(std::iter::repeat_n(word.as_str(), n));
        }
        let filler_count = rng.random_range(0..=3);
        for _ in 0..filler_count.max(usize::from(tokens.is_empty())) {
            tokens.push(self.fillers[rng.random_range(0..self.fillers.len())].as_str());
        }
        tokens.shuffle(rng);
        tokens.join(" ")
    }
}

fn random_unit<R: Rng>(dim: usize, rng: &mut R) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(dim, |_| rng.sample::<f64, _>(StandardNormal));
        let n = v.dot(&v).sqrt();
        if n > 1e-9 {
            return v / n;
        }
    }
}

pub fn gallery_id(i: usize) -> String {
    format!("g{i:04}")
}

/// Builds a world deterministically from `cfg.seed`.
pub fn generate(cfg: &SynthConfig) -> SynthWorld {
    assert!(cfg.gallery_size >= 2 && cfg.paraphrases >= 1 && cfg.dim >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocabulary::new(cfg.dim, cfg.raw_dim);

    let mut perm: Vec<usize> = (0..cfg.dim).collect();
    perm.shuffle(&mut rng);
    let signs: Vec<f64> = (0..cfg.dim).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let flip = |v: &Array1<f64>| Array1::from_shape_fn(v.len(), |k| signs[k] * v[perm[k]]);

    let mut store = EmbeddingStore::new(cfg.dim);
    let mut manifest = Manifest::new("synthetic", cfg.paraphrases);
    let gallery: Vec<String> = (0..cfg.gallery_size).map(gallery_id).collect();
    for id in &gallery {
        let v = random_unit(cfg.dim, &mut rng);
        store.insert(ImageKey::new(id.clone(), Orientation::Flipped), flip(&v)).expect("finite");
        store.insert(ImageKey::normal(id.clone()), v).expect("finite");
        manifest.image_index.insert(id.clone(), format!("images/{id}.png"));
    }

    // Train pairs walk shuffled Hamiltonian cycles over the gallery, so every
    // image is a reference and a target equally often; test pairs are free.
    let mut pairs = Vec::with_capacity(cfg.train_pairs + cfg.test_pairs);
    let mut tour: Vec<usize> = Vec::new();
    for i in 0..cfg.train_pairs {
        let j = i % cfg.gallery_size;
        if j == 0 {
            tour = (0..cfg.gallery_size).collect();
            tour.shuffle(&mut rng);
        }
        pairs.push((tour[j], tour[(j + 1) % cfg.gallery_size]));
    }
    for _ in 0..cfg.test_pairs {
        let a = rng.random_range(0..cfg.gallery_size);
        pairs.push((a, (a + rng.random_range(1..cfg.gallery_size)) % cfg.gallery_size));
    }
    for (i, (a, b)) in pairs.into_iter().enumerate() {
        let (split, pair_id) = if i < cfg.train_pairs {
            (Split::Train, format!("train{i:05}"))
        } else {
            (Split::Test, format!("test{:05}", i - cfg.train_pairs))
        };
        let mut record = TripletRecord::new(pair_id, gallery[a].clone(), gallery[b].clone(), split);
        for variant in VariantKind::ALL {
            let (query, target) = effective_roles(&record, variant);
            let delta = store.get(&target).unwrap() - store.get(&query).unwrap();
            record.descriptions[variant] =
                (0..cfg.paraphrases).map(|_| vocab.describe(delta.view(), cfg.quantization, &mut rng)).collect();
        }
        manifest.records.push(record);
    }
    SynthWorld { manifest, store, gallery, vocab, raw_dim: cfg.raw_dim }
}

impl SynthWorld {
    /// The hand-built solution: bucket `k` maps to `scale · e_k`, so
    /// `f_T(t) = scale · δ/‖δ‖` up to quantization and fillers.
    pub fn oracle_params(&self, scale: f64) -> Params {
        let dim = self.store.dim();
        let mut text = TextEncoderParams::zeros(self.raw_dim, dim);
        for (k, up) in self.vocab.up.iter().enumerate() {
            let h = fnv1a64(up.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            text.projection[[(h % self.raw_dim as u64) as usize, k]] = sign * scale;
        }
        Params { text, merger: MergerParams::Sum }
    }

    /// Writes `manifest.jsonl` (+ image index), `store.cpre` (+ index) and
    /// `gallery.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        save_manifest(&self.manifest, &dir.join("manifest.jsonl")).map_err(io::Error::other)?;
        self.store.save(&dir.join("store.cpre")).map_err(io::Error::other)?;
        let mut gallery = self.gallery.join("\n");
        gallery.push('\n');
        fs::write(dir.join("gallery.txt"), gallery)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{hash_encode_sparse, hash_encode_text};

    fn small() -> SynthConfig {
        SynthConfig { dim: 8, gallery_size: 12, train_pairs: 10, test_pairs: 4, raw_dim: 128, ..SynthConfig::default() }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&small());
        let b = generate(&small());
        assert_eq!(a.manifest, b.manifest);
        assert_eq!(a.gallery, b.gallery);
        let c = generate(&SynthConfig { seed: 1, ..small() });
        assert_ne!(a.manifest, c.manifest);
    }

    #[test]
    fn manifest_is_valid_and_complete() {
        let w = generate(&small());
        assert!(w.manifest.validate().is_empty());
        assert_eq!(w.manifest.split(Split::Train).count(), 10);
        assert_eq!(w.manifest.split(Split::Test).count(), 4);
        assert_eq!(w.store.len(), 24);
    }

    #[test]
    fn vocabulary_pairs_cancel() {
        let v = Vocabulary::new(8, 128);
        let buckets: HashSet<u64> = v.up.iter().chain(&v.fillers).map(|t| fnv1a64(t.as_bytes()) % 128).collect();
        assert_eq!(buckets.len(), 8 + FILLERS.len());
        for (u, d) in v.up.iter().zip(&v.down) {
            let sum = hash_encode_sparse(&format!("{u} {d}"), 128);
            assert!(sum.is_zero(), "{u} / {d}");
        }
    }

    #[test]
    fn reverse_description_negates_the_hash() {
        let cfg = SynthConfig { quantization: 30.0, ..small() };
        let vocab = Vocabulary::new(cfg.dim, cfg.raw_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let delta = Array1::from_shape_fn(cfg.dim, |k| (k as f64 - 3.5) / 7.0);
        let strip = |t: String| t.split(' ').filter(|w| !vocab.fillers.iter().any(|f| f == w)).collect::<Vec<_>>().join(" ");
        let f = hash_encode_text(&strip(vocab.describe(delta.view(), 30.0, &mut rng)), cfg.raw_dim);
        let r = hash_encode_text(&strip(vocab.describe((-&delta).view(), 30.0, &mut rng)), cfg.raw_dim);
        assert_eq!(f, -r);
    }

    #[test]
    fn descriptions_encode_the_delta() {
        let cfg = small();
        let w = generate(&cfg);
        let vocab = Vocabulary::new(cfg.dim, cfg.raw_dim);
        let r = &w.manifest.records[0];
        let (q, t) = effective_roles(r, VariantKind::Mirrored);
        let delta = w.store.get(&t).unwrap() - w.store.get(&q).unwrap();
        let text = &r.descriptions(VariantKind::Mirrored)[0];
        for k in 0..cfg.dim {
            let word = if delta[k] >= 0.0 { &vocab.up[k] } else { &vocab.down[k] };
            let n = text.split(' ').filter(|t| t == word).count();
            assert_eq!(n, (delta[k].abs() * cfg.quantization).round() as usize);
        }
        assert!(!hash_encode_sparse(text, cfg.raw_dim).is_zero());
    }

    #[test]
    fn flipped_embeddings_are_a_signed_permutation() {
        let w = generate(&small());
        for id in &w.gallery {
            let n = w.store.get(&ImageKey::normal(id.clone())).unwrap();
            let f = w.store.get(&ImageKey::new(id.clone(), Orientation::Flipped)).unwrap();
            assert!((n.dot(n) - f.dot(f)).abs() < 1e-12);
            let mut a: Vec<f64> = n.iter().map(|x| x.abs()).collect();
            let mut b: Vec<f64> = f.iter().map(|x| x.abs()).collect();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            assert_eq!(a, b);
        }
    }
}
