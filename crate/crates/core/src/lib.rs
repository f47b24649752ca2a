//! Composed pose retrieval toolkit.
//!
//! * [`data`]: triplet records, variants and manifests
//! * [`gateway`]: chat-completion client with caching, retries and a scripted mock
//! * [`annotate`]: multi-stage MLLM annotation of pose pairs
//! * [`dataset`]: keypoint-based pair selection and corpus filtering
//! * [`features`]: hashing text encoder, mergers, embedding store
//! * [`train`]: batch classification and cycle losses, gradients, trainer
//! * [`eval`]: gallery ranking, Recall@k and ablations
//! * [`stats`]: token-frequency tables over description corpora
//! * [`synth`]: the synthetic additive world used by tests and benches

pub mod annotate;
pub mod data;
pub mod dataset;
pub mod features;
pub mod gateway;
pub mod eval;
pub mod stats;
pub mod synth;
pub mod train;

pub use data::{
    effective_roles, load_manifest, reverse_variant, save_manifest, ImageKey, Manifest, Orientation, Split,
    TripletRecord, VariantKind,
};
pub use features::{cosine, encode_text, hash_encode_text, merge, EmbeddingStore, MergerKind, MergerParams, TextEncoderParams};
