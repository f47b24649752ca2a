use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{evaluate_encoded, pairwise_sum, EncodedRow, Gradients};
use super::sampler::sample_description_indices;
use super::{Adam, AdamConfig, Params, Phase, TrainConfig, TrainError};
use crate::data::{effective_roles, reverse_variant, ImageKey, Manifest, Split, TripletRecord, VariantKind};
use crate::features::{
    hash_encode_sparse, EmbeddingStore, HashedText, MergerParams, TextEncoderParams,
};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Params,
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
}

struct Sample<'a> {
    record: &'a TripletRecord,
    /// Hashed descriptions of this record, indexed `[variant][paraphrase]`.
    hashed: &'a [Vec<HashedText>; 4],
    variant: VariantKind,
    query: &'a Array1<f64>,
    target: &'a Array1<f64>,
}

/// Optimizer state for whichever parameters the phase trains.
enum Optimizer {
    Text { projection: Adam, bias: Option<Adam> },
    Merger(Adam),
}

impl Optimizer {
    fn new(params: &Params, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let adam = AdamConfig::new(cfg.learning_rate);
        match (cfg.phase, &params.merger) {
            (Phase::TextEncoder, _) => Ok(Optimizer::Text {
                projection: Adam::new(adam, params.text.projection.len()),
                bias: cfg.train_bias.then(|| Adam::new(adam, params.text.bias.len())),
            }),
            (Phase::Merger, MergerParams::Combiner(c)) => Ok(Optimizer::Merger(Adam::new(adam, c.len()))),
            (Phase::Merger, MergerParams::Sum) => {
                Err(TrainError::Config("the merger phase needs combiner parameters".into()))
            }
        }
    }

    fn step(&mut self, params: &mut Params, grads: &Gradients) {
        match self {
            Optimizer::Text { projection, bias } => {
                let g = grads.text.as_ref().expect("text gradients in the text phase");
                let p = params.text.projection.as_slice_mut().expect("standard layout");
                projection.update(p, g.projection.as_slice().expect("standard layout"));
                if let Some(bias) = bias {
                    bias.update(params.text.bias.as_slice_mut().expect("contiguous"), g.bias.as_slice().expect("contiguous"));
                }
            }
            Optimizer::Merger(adam) => {
                let g = grads.merger.as_ref().expect("merger gradients in the merger phase");
                let MergerParams::Combiner(c) = &mut params.merger else { unreachable!() };
                let mut flat = c.values();
                adam.update(&mut flat, &g.values());
                let mut it = flat.into_iter();
                c.for_each_mut(|x| *x = it.next().expect("same length"));
            }
        }
    }
}

/// Runs `cfg.epochs` epochs over every (train record, enabled variant)
/// sample. Starts from `init`, or from a fresh seeded initialization.
pub fn train(
    manifest: &Manifest,
    store: &EmbeddingStore,
    cfg: &TrainConfig,
    init: Option<Params>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = match init {
        Some(p) => {
            if p.dim() != store.dim() || p.text.raw_dim() != cfg.raw_dim {
                return Err(TrainError::Config(format!(
                    "initial parameters are {}x{}, store/config need {}x{}",
                    p.dim(),
                    p.text.raw_dim(),
                    store.dim(),
                    cfg.raw_dim
                )));
            }
            if p.merger.kind() != cfg.merger {
                return Err(TrainError::Config(format!(
                    "initial merger is {}, config asks for {}",
                    p.merger.kind(),
                    cfg.merger
                )));
            }
            p
        }
        None => Params {
            text: TextEncoderParams::init(cfg.raw_dim, store.dim(), &mut rng),
            merger: MergerParams::init(cfg.merger, store.dim(), &mut rng),
        },
    };
    if cfg.epochs == 0 {
        return Ok(TrainOutcome { params, loss_curve: Vec::new() });
    }

    let paraphrases = manifest.paraphrase_count;
    let records: Vec<&TripletRecord> = manifest.split(Split::Train).collect();
    let hashed: Vec<[Vec<HashedText>; 4]> = records
        .iter()
        .map(|r| {
            VariantKind::ALL.map(|v| r.descriptions(v).iter().map(|t| hash_encode_sparse(t, cfg.raw_dim)).collect())
        })
        .collect();

    let mut samples = Vec::with_capacity(records.len() * cfg.variants.len());
    for (record, hashed) in records.iter().zip(&hashed) {
        for &variant in &cfg.variants {
            for v in [variant, reverse_variant(variant)] {
                if record.descriptions(v).len() < paraphrases || paraphrases == 0 {
                    return Err(TrainError::IncompleteRecord { pair_id: record.pair_id.clone(), variant: v });
                }
            }
            let (query, target) = effective_roles(record, variant);
            let lookup = |key: &ImageKey| {
                store.get(key).ok_or_else(|| {
                    TrainError::Config(format!(
                        "no {} embedding for image {} (pair {}, variant {})",
                        key.orientation.as_str(),
                        key.id,
                        record.pair_id,
                        variant.key()
                    ))
                })
            };
            samples.push(Sample { record, hashed, variant, query: lookup(&query)?, target: lookup(&target)? });
        }
    }
    if samples.len() < 2 {
        return Err(TrainError::Config(format!("{} training samples; need at least 2", samples.len())));
    }

    let mut optimizer = Optimizer::new(&params, cfg)?;
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            // a lone row has a constant zero loss
            if chunk.len() < 2 {
                continue;
            }
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &samples[i];
                let (f, r) = sample_description_indices(s.record, s.variant, paraphrases, &mut rng)?;
                batch.push(EncodedRow {
                    reference: s.query.view(),
                    target: s.target.view(),
                    forward: &s.hashed[s.variant.index()][f],
                    reverse: Some(&s.hashed[reverse_variant(s.variant).index()][r]),
                });
            }
            let (loss, grads) = evaluate_encoded(&batch, &params, cfg, true)?;
            optimizer.step(&mut params, &grads.expect("gradients requested"));
            if !params.is_finite() {
                return Err(TrainError::Numerical(format!("parameters after epoch {epoch}")));
            }
            batch_losses.push(loss);
        }
        let mean = pairwise_sum(&batch_losses) / batch_losses.len().max(1) as f64;
        log::debug!("epoch {epoch}: mean loss {mean:.6}");
        loss_curve.push(mean);
    }
    Ok(TrainOutcome { params, loss_curve })
}
