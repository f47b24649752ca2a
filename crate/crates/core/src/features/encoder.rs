use ndarray::{Array1, Array2};
use rand::Rng;

use super::hashing::{hash_encode_sparse, HashedText};

/// Default hashing width.
pub const DEFAULT_RAW_DIM: usize = 1024;

/// Trainable affine map from the hashed bag-of-words space into the joint
/// embedding space. `projection` is `d_raw × d`: row `j` is the image of
/// hash bucket `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoderParams {
    pub projection: Array2<f64>,
    pub bias: Array1<f64>,
}

impl TextEncoderParams {
    /// Glorot-uniform projection, zero bias.
    pub fn init<R: Rng + ?Sized>(raw_dim: usize, dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (raw_dim + dim) as f64).sqrt();
        let projection = Array2::from_shape_fn((raw_dim, dim), |_| rng.random_range(-limit..=limit));
        TextEncoderParams { projection, bias: Array1::zeros(dim) }
    }

    pub fn zeros(raw_dim: usize, dim: usize) -> Self {
        TextEncoderParams { projection: Array2::zeros((raw_dim, dim)), bias: Array1::zeros(dim) }
    }

    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn raw_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.projection.iter().chain(self.bias.iter()).all(|x| x.is_finite())
    }

    pub fn encode(&self, text: &str) -> Array1<f64> {
        self.encode_hashed(&hash_encode_sparse(text, self.raw_dim()))
    }

    /// `projectionᵀ · x + bias` for a sparse hashed input.
    pub fn encode_hashed(&self, x: &HashedText) -> Array1<f64> {
        debug_assert_eq!(x.dim, self.raw_dim());
        let mut out = self.bias.clone();
        for &(j, value) in &x.entries {
            out.scaled_add(value, &self.projection.row(j));
        }
        out
    }

    /// `projectionᵀ · x + bias` for a dense input of width `d_raw`.
    pub fn encode_dense(&self, x: &Array1<f64>) -> Array1<f64> {
        self.projection.t().dot(x) + &self.bias
    }
}

pub fn encode_text(text: &str, params: &TextEncoderParams) -> Array1<f64> {
    params.encode(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::hash_encode_text;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_text_maps_to_bias() {
        let mut p = TextEncoderParams::init(32, 4, &mut ChaCha8Rng::seed_from_u64(1));
        p.bias = array![1.0, -2.0, 0.5, 0.0];
        assert_eq!(encode_text("", &p), p.bias);
    }

    #[test]
    fn identity_projection_passes_hash_through() {
        let mut p = TextEncoderParams::zeros(16, 16);
        p.projection = Array2::eye(16);
        let text = "raise the left knee slowly";
        assert_eq!(encode_text(text, &p), hash_encode_text(text, 16));
    }

    #[test]
    fn linear_in_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = TextEncoderParams::init(64, 8, &mut rng);
        p.bias = Array1::from_shape_fn(8, |i| i as f64 * 0.1);
        let text = "bend the right elbow";
        let base = encode_text(text, &p) - &p.bias;
        let mut doubled = p.clone();
        doubled.projection *= 2.0;
        let twice = encode_text(text, &doubled) - &p.bias;
        for (a, b) in base.iter().zip(twice.iter()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn affine_in_hashed_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = TextEncoderParams::init(32, 6, &mut rng);
        p.bias.fill(0.25);
        let x = hash_encode_text("turn head left", 32);
        let alpha = -3.5;
        let lhs = p.encode_dense(&(&x * alpha));
        let rhs = p.projection.t().dot(&x) * alpha + &p.bias;
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // sparse and dense paths agree
        let sparse = p.encode("turn head left");
        let dense = p.encode_dense(&x);
        for (a, b) in sparse.iter().zip(dense.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn init_respects_glorot_bound() {
        let p = TextEncoderParams::init(1024, 64, &mut ChaCha8Rng::seed_from_u64(0));
        let limit = (6.0f64 / 1088.0).sqrt();
        assert!(p.projection.iter().all(|x| x.abs() <= limit));
        assert!(p.bias.iter().all(|&x| x == 0.0));
    }
}
