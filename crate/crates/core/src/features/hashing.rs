use std::hash::Hasher;

use fnv::FnvHasher;
use ndarray::Array1;

/// FNV-1a, 64-bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// L2-normalized signed bag-of-words in sparse form, indices ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedText {
    pub dim: usize,
    pub entries: Vec<(usize, f64)>,
}

impl HashedText {
    pub fn to_dense(&self) -> Array1<f64> {
        let mut v = Array1::zeros(self.dim);
        for &(i, x) in &self.entries {
            v[i] = x;
        }
        v
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn hash_encode_sparse(text: &str, raw_dim: usize) -> HashedText {
    assert!(raw_dim > 0, "hashing width must be positive");
    let mut acc = std::collections::BTreeMap::<usize, f64>::new();
    for token in tokenize(text) {
        let h = fnv1a64(token.as_bytes());
        let bucket = (h % raw_dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        *acc.entry(bucket).or_insert(0.0) += sign;
    }
    let norm = acc.values().map(|x| x * x).sum::<f64>().sqrt();
    let entries = if norm == 0.0 {
        Vec::new()
    } else {
        acc.into_iter().filter(|&(_, x)| x != 0.0).map(|(i, x)| (i, x / norm)).collect()
    };
    HashedText { dim: raw_dim, entries }
}

/// Dense hashed bag-of-words vector of width `raw_dim`.
pub fn hash_encode_text(text: &str, raw_dim: usize) -> Array1<f64> {
    hash_encode_sparse(text, raw_dim).to_dense()
}
