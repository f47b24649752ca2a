use rand::Rng;

use super::TrainError;
use crate::data::{reverse_variant, TripletRecord, VariantKind};

/// Uniform, independent draws of a forward index at `variant` and a reverse
/// index at its reverse variant.
pub fn sample_description_indices<R: Rng + ?Sized>(
    record: &TripletRecord,
    variant: VariantKind,
    paraphrases: usize,
    rng: &mut R,
) -> Result<(usize, usize), TrainError> {
    let reverse = reverse_variant(variant);
    for v in [variant, reverse] {
        if paraphrases == 0 || record.descriptions(v).len() < paraphrases {
            return Err(TrainError::IncompleteRecord { pair_id: record.pair_id.clone(), variant: v });
        }
    }
    let f = rng.random_range(0..paraphrases);
    let r = rng.random_range(0..paraphrases);
    Ok((f, r))
}

/// One (forward, reverse) description pair for a training iteration.
pub fn sample_description<R: Rng + ?Sized>(
    record: &TripletRecord,
    variant: VariantKind,
    paraphrases: usize,
    rng: &mut R,
) -> Result<(String, String), TrainError> {
    let (f, r) = sample_description_indices(record, variant, paraphrases, rng)?;
    Ok((
        record.descriptions(variant)[f].clone(),
        record.descriptions(reverse_variant(variant))[r].clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Split, VariantMap};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(p: usize) -> TripletRecord {
        let mut r = TripletRecord::new("p0", "a", "b", Split::Train);
        r.descriptions = VariantMap::from_fn(|v| (0..p).map(|i| format!("{} {i}", v.key())).collect());
        r
    }

    #[test]
    fn single_paraphrase_is_deterministic() {
        let r = record(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (f, b) = sample_description(&r, VariantKind::Mirrored, 1, &mut rng).unwrap();
            assert_eq!(f, "mirrored 0");
            assert_eq!(b, "swapped_mirrored 0");
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let r = record(3);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| sample_description(&r, VariantKind::Original, 3, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn frequencies_within_three_sigma() {
        let r = record(3);
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut fwd = [0usize; 3];
        let mut rev = [0usize; 3];
        for _ in 0..n {
            let (f, b) = sample_description_indices(&r, VariantKind::Swapped, 3, &mut rng).unwrap();
            fwd[f] += 1;
            rev[b] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in fwd.iter().chain(&rev) {
            assert!((*c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{fwd:?} {rev:?}");
        }
    }

    #[test]
    fn short_variant_is_incomplete() {
        let mut r = record(3);
        r.descriptions[VariantKind::Swapped].pop();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = sample_description(&r, VariantKind::Original, 3, &mut rng).unwrap_err();
        assert!(matches!(err, TrainError::IncompleteRecord { variant: VariantKind::Swapped, .. }));
    }
}
