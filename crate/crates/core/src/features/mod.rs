//! Encoders, feature mergers and cosine similarity.

mod encoder;
mod hashing;
mod merger;
mod store;

use ndarray::ArrayView1;
use thiserror::Error;

pub use encoder::{encode_text, TextEncoderParams, DEFAULT_RAW_DIM};
pub use hashing::{fnv1a64, hash_encode_sparse, hash_encode_text, tokenize, HashedText};
pub use merger::{merge, CombinerParams, MergeTrace, MergerKind, MergerParams};
pub use store::EmbeddingStore;

use crate::data::ImageKey;

/// Default joint embedding width for desk-scale runs.
pub const DEFAULT_DIM: usize = 64;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error("non-finite feature for {0}")]
    NonFinite(ImageKey),
    #[error("duplicate embedding key {0}")]
    DuplicateKey(ImageKey),
    #[error("{path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

/// Cosine similarity accumulated in f64. Zero when either side is the zero
/// vector.
pub fn cosine(u: ArrayView1<'_, f64>, v: ArrayView1<'_, f64>) -> f64 {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0)
}

pub(crate) fn l2_norm(v: ArrayView1<'_, f64>) -> f64 {
    v.dot(&v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn cosine_examples() {
        let v = array![0.3, -1.2, 2.0];
        assert!((cosine(v.view(), v.view()) - 1.0).abs() < 1e-15);
        let neg = -&v;
        assert!((cosine(v.view(), neg.view()) + 1.0).abs() < 1e-15);
        let c = cosine(array![1.0, 0.0].view(), array![1.0, 1.0].view());
        assert!((c - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert_eq!(cosine(array![0.0, 0.0].view(), array![1.0, 1.0].view()), 0.0);
    }

    proptest! {
        #[test]
        fn cosine_is_scale_invariant(
            u in proptest::collection::vec(-10.0f64..10.0, 5),
            v in proptest::collection::vec(-10.0f64..10.0, 5),
            a in 0.01f64..100.0,
            b in 0.01f64..100.0,
        ) {
            let u = ndarray::Array1::from(u);
            let v = ndarray::Array1::from(v);
            prop_assume!(l2_norm(u.view()) > 1e-3 && l2_norm(v.view()) > 1e-3);
            let base = cosine(u.view(), v.view());
            let scaled = cosine((&u * a).view(), (&v * b).view());
            prop_assert!((base - scaled).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&base));
        }
    }
}
