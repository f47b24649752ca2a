//! Gallery ranking and Recall@k.

mod ablation;

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{ablation_run, AblationRow, AblationTable, Toggles};

use crate::data::{effective_roles, ImageKey, Manifest, Split, VariantKind};
use crate::features::{cosine, EmbeddingStore, FeatureError};
use crate::train::{Params, TrainError};

pub const DEFAULT_KS: [usize; 4] = [1, 5, 10, 50];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no embedding for image {0}")]
    MissingEmbedding(String),
    #[error("ground truth {target} of query {query} is not in the gallery")]
    TargetNotInGallery { query: String, target: String },
    #[error("empty gallery")]
    EmptyGallery,
    #[error("duplicate gallery id {0}")]
    DuplicateGalleryId(String),
    #[error("recall cut-offs must be positive")]
    InvalidK,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone)]
pub struct Query {
    pub id: String,
    pub reference: Array1<f64>,
    pub text: String,
    pub target: String,
}

/// Candidate images with their features, in caller order.
#[derive(Debug, Clone, Default)]
pub struct Gallery {
    pub ids: Vec<String>,
    pub features: Vec<Array1<f64>>,
}

impl Gallery {
    /// Normal-orientation features of `ids` from the store.
    pub fn from_store(store: &EmbeddingStore, ids: &[String]) -> Result<Self, EvalError> {
        if ids.is_empty() {
            return Err(EvalError::EmptyGallery);
        }
        let mut seen = std::collections::HashSet::new();
        let mut features = Vec::with_capacity(ids.len());
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(EvalError::DuplicateGalleryId(id.clone()));
            }
            let v = store.get(&ImageKey::normal(id.clone())).ok_or_else(|| EvalError::MissingEmbedding(id.clone()))?;
            features.push(v.clone());
        }
        Ok(Gallery { ids: ids.to_vec(), features })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Descending score, then ascending id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

fn scores(composed: ArrayView1<'_, f64>, gallery: &Gallery) -> Result<Vec<f64>, EvalError> {
    gallery
        .features
        .iter()
        .map(|g| {
            if g.len() != composed.len() {
                return Err(FeatureError::Shape { expected: composed.len(), found: g.len() }.into());
            }
            Ok(cosine(composed, g.view()))
        })
        .collect()
}

/// Gallery ids ordered by cosine to the composed query feature.
pub fn rank_gallery(
    reference: ArrayView1<'_, f64>,
    text: &str,
    gallery: &Gallery,
    params: &Params,
) -> Result<Vec<String>, EvalError> {
    if gallery.is_empty() {
        return Err(EvalError::EmptyGallery);
    }
    let composed = params.compose(reference, text)?;
    let s = scores(composed.view(), gallery)?;
    let mut order: Vec<usize> = (0..gallery.len()).collect();
    order.sort_by(|&i, &j| rank_order((s[i], &gallery.ids[i]), (s[j], &gallery.ids[j])));
    Ok(order.into_iter().map(|i| gallery.ids[i].clone()).collect())
}

/// 1-based position of `target` in [`rank_gallery`] order, without sorting.
pub fn rank_of(
    reference: ArrayView1<'_, f64>,
    text: &str,
    target: &str,
    gallery: &Gallery,
    params: &Params,
) -> Result<Option<usize>, EvalError> {
    let composed = params.compose(reference, text)?;
    let s = scores(composed.view(), gallery)?;
    let Some(t) = gallery.ids.iter().position(|id| id == target) else {
        return Ok(None);
    };
    let ahead = (0..gallery.len())
        .filter(|&i| rank_order((s[i], &gallery.ids[i]), (s[t], target)) == Ordering::Less)
        .count();
    Ok(Some(ahead + 1))
}

/// Fraction of ranks at or below `k`; 0 for an empty list.
pub fn recall_at_k(ranks: &[usize], k: usize) -> f64 {
    if ranks.is_empty() {
        log::warn!("recall over an empty rank list is reported as 0");
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRank {
    pub pair_id: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub ranks: Vec<QueryRank>,
    /// `(k, recall)` in ascending `k`.
    pub recalls: Vec<(usize, f64)>,
    pub gallery_size: usize,
    pub config: serde_json::Value,
}

impl RetrievalReport {
    pub fn from_ranks(ranks: Vec<QueryRank>, ks: &[usize], gallery_size: usize, config: serde_json::Value) -> Self {
        let plain: Vec<usize> = ranks.iter().map(|r| r.rank).collect();
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        let recalls = ks.iter().map(|&k| (k, recall_at_k(&plain, k))).collect();
        RetrievalReport { ranks, recalls, gallery_size, config }
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.recalls.iter().find(|(kk, _)| *kk == k).map(|(_, r)| *r)
    }

    pub fn is_monotone(&self) -> bool {
        self.recalls.windows(2).all(|w| w[0].1 <= w[1].1)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "queries: {}  gallery: {}", self.ranks.len(), self.gallery_size);
        for (k, r) in &self.recalls {
            let _ = writeln!(out, "R@{k:<4} {:>7.2}", r * 100.0);
        }
        out
    }

    /// One `{pair_id, rank}` line per query, then a footer with the recalls.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.ranks {
            out.push_str(&serde_json::to_string(r).expect("plain struct"));
            out.push('\n');
        }
        let recall: serde_json::Map<String, serde_json::Value> =
            self.recalls.iter().map(|(k, r)| (k.to_string(), serde_json::json!(r))).collect();
        let footer = serde_json::json!({ "recall": recall, "gallery_size": self.gallery_size, "config": self.config });
        out.push_str(&footer.to_string());
        out.push('\n');
        out
    }

    /// `<stem>.txt` and `<stem>.jsonl` under `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_table())?;
        fs::write(dir.join(format!("{stem}.jsonl")), self.to_jsonl())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    /// Query with every paraphrase instead of only the first.
    pub all_paraphrases: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { ks: DEFAULT_KS.to_vec(), all_paraphrases: false }
    }
}

/// Queries for every test record: Original variant, first description (or
/// all of them, ids suffixed `/p`).
pub fn test_queries(manifest: &Manifest, store: &EmbeddingStore, all_paraphrases: bool) -> Result<Vec<Query>, EvalError> {
    let mut out = Vec::new();
    for record in manifest.split(Split::Test) {
        let (query, target) = effective_roles(record, VariantKind::Original);
        let reference = store.get(&query).ok_or_else(|| EvalError::MissingEmbedding(query.id.clone()))?;
        let texts = record.descriptions(VariantKind::Original);
        let take = if all_paraphrases { texts.len() } else { texts.len().min(1) };
        for (p, text) in texts.iter().take(take).enumerate() {
            let id = if all_paraphrases { format!("{}/{p}", record.pair_id) } else { record.pair_id.clone() };
            out.push(Query { id, reference: reference.clone(), text: text.clone(), target: target.id.clone() });
        }
    }
    Ok(out)
}

/// Ranks every query against the gallery in parallel; report order follows
/// query order.
pub fn evaluate_queries(
    queries: &[Query],
    gallery: &Gallery,
    params: &Params,
    ks: &[usize],
    config: serde_json::Value,
) -> Result<RetrievalReport, EvalError> {
    if ks.contains(&0) {
        return Err(EvalError::InvalidK);
    }
    if gallery.is_empty() {
        return Err(EvalError::EmptyGallery);
    }
    let ranks = queries
        .par_iter()
        .map(|q| {
            let rank = rank_of(q.reference.view(), &q.text, &q.target, gallery, params)?.ok_or_else(|| {
                EvalError::TargetNotInGallery { query: q.id.clone(), target: q.target.clone() }
            })?;
            Ok(QueryRank { pair_id: q.id.clone(), rank })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(RetrievalReport::from_ranks(ranks, ks, gallery.len(), config))
}

/// Test-split retrieval with the gallery given as explicit image ids.
pub fn evaluate(
    manifest: &Manifest,
    store: &EmbeddingStore,
    params: &Params,
    gallery_ids: &[String],
    options: &EvalOptions,
) -> Result<RetrievalReport, EvalError> {
    let gallery = Gallery::from_store(store, gallery_ids)?;
    let queries = test_queries(manifest, store, options.all_paraphrases)?;
    let config = serde_json::json!({
        "dataset": manifest.dataset_name,
        "merger": params.merger.kind().to_string(),
        "all_paraphrases": options.all_paraphrases,
    });
    evaluate_queries(&queries, &gallery, params, &options.ks, config)
}
