//! Subcommand arguments and their implementations.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use log::info;
use posecpr_core::annotate::{
    load_pairs, save_pairs, write_fixture, AnnotateConfig, AnnotateError, Annotator, FixtureConfig, ImageLibrary,
    PromptSet, StageMode,
};
use posecpr_core::data::{load_manifest_with, save_manifest, LoadOptions, Manifest, Split, VariantKind};
use posecpr_core::dataset::{
    candidate_records, filter_corpus, load_corpus, load_keypoints, save_corpus, select_pairs, PairSelectionConfig,
};
use posecpr_core::eval::{ablation_run, evaluate, EvalOptions, Toggles, DEFAULT_KS};
use posecpr_core::features::{hash_encode_text, EmbeddingStore, MergerKind, DEFAULT_RAW_DIM};
use posecpr_core::gateway::{
    Gateway, GatewayConfig, GatewayError, HttpTransport, MockScript, MockServer, ResponseCache, ENV_KEY, ENV_URL,
};
use posecpr_core::stats::{frequency_table, TokenFrequencies};
use posecpr_core::synth::{self, SynthConfig};
use posecpr_core::train::{load_checkpoint, save_checkpoint, Phase, TrainConfig};
use serde::Serialize;
use serde_json::json;

use crate::config::{existing_path, pick, start_run, write_file, AppConfig, TrainSection};
use crate::CliError;

fn invalid(e: impl Display) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: impl Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn out_dir(flag: Option<PathBuf>, command: &str) -> PathBuf {
    flag.unwrap_or_else(|| Path::new("runs").join(command))
}

fn require_path(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn parse_list<T>(raw: &str, what: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(s.trim()).ok_or_else(|| invalid(format!("bad {what} `{s}`"))))
        .collect()
}

fn positive(value: usize, what: &str) -> Result<usize, CliError> {
    if value == 0 {
        Err(invalid(format!("{what} must be at least 1")))
    } else {
        Ok(value)
    }
}

// ---- gateway --------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EndpointArgs {
    /// Chat-completion URL; falls back to the config file, then CPR_MLLM_URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Response cache file (JSON lines); in-memory when absent.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-ins.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Requests per stage before an item is given up.
    #[arg(long)]
    pub attempts: Option<u32>,
    /// Concurrent requests.
    #[arg(long)]
    pub workers: Option<usize>,
}

struct Endpoint {
    gateway: Gateway,
    prompts: PromptSet,
    attempts: u32,
    workers: usize,
    settings: serde_json::Value,
}

impl EndpointArgs {
    fn open(self, file: &AppConfig) -> Result<Endpoint, CliError> {
        let url = self
            .endpoint
            .or_else(|| file.endpoint.clone())
            .or_else(|| std::env::var(ENV_URL).ok())
            .ok_or_else(|| invalid(format!("no endpoint: pass --endpoint, set `endpoint` or export {ENV_URL}")))?;
        let key = std::env::var(ENV_KEY).ok();
        let model = pick(self.model, &file.model, GatewayConfig::default().model);
        let workers = positive(pick(self.workers, &file.workers, 4), "workers")?;
        let attempts = pick(self.attempts, &file.attempts, 3);
        if attempts == 0 {
            return Err(invalid("attempts must be at least 1"));
        }
        let cache_path = self.cache.or_else(|| file.cache.clone());
        let cache = match &cache_path {
            Some(path) => ResponseCache::open(path).map_err(|e| runtime(format!("cache {}: {e}", path.display())))?,
            None => ResponseCache::in_memory(),
        };
        let prompt_dir = self.prompts.or_else(|| file.prompts.clone());
        let prompts = match &prompt_dir {
            Some(dir) => {
                require_path(dir, "prompt directory")?;
                PromptSet::load_dir(dir).map_err(invalid)?
            }
            None => PromptSet::builtin(),
        };
        let settings = json!({
            "endpoint": url,
            "model": model,
            "cache": cache_path.map(|p| p.display().to_string()).unwrap_or_default(),
            "prompts": prompt_dir.map(|p| p.display().to_string()).unwrap_or_default(),
            "attempts": attempts,
            "workers": workers,
        });
        let config = GatewayConfig { model, max_concurrency: workers, ..GatewayConfig::default() };
        let gateway = Gateway::new(Box::new(HttpTransport::new(url, key)), cache, config);
        Ok(Endpoint { gateway, prompts, attempts, workers, settings })
    }
}

fn annotate_error(e: AnnotateError) -> CliError {
    match e {
        AnnotateError::Input { .. } | AnnotateError::Data(_) | AnnotateError::UnknownImage(_) => invalid(e),
        AnnotateError::Gateway(GatewayError::Auth(_)) => runtime(format!("{e} (check {ENV_KEY})")),
        other => runtime(other),
    }
}

// ---- annotate -------------------------------------------------------------

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// `pair_id<TAB>reference<TAB>target[<TAB>split]` lines.
    #[arg(long)]
    pub pairs: PathBuf,
    /// `image_id<TAB>path` index; paths are relative to the index file.
    #[arg(long)]
    pub images: PathBuf,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    /// Descriptions per variant.
    #[arg(long)]
    pub paraphrases: Option<usize>,
    /// Describe the whole transition in one request instead of per body part.
    #[arg(long)]
    pub no_stage1: bool,
    /// Dataset name written into the manifest header.
    #[arg(long, default_value = "annotated")]
    pub name: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn annotate(args: AnnotateArgs, file: &AppConfig) -> Result<(), CliError> {
    require_path(&args.pairs, "pairs file")?;
    require_path(&args.images, "image index")?;
    let paraphrases = positive(pick(args.paraphrases, &file.paraphrases, 3), "paraphrases")?;
    let endpoint = args.endpoint.open(file)?;
    let out = out_dir(args.out, "annotate");
    let mode = if args.no_stage1 { StageMode::WholeTransition } else { StageMode::BodyParts };
    let settings = json!({
        "pairs": args.pairs,
        "images": args.images,
        "paraphrases": paraphrases,
        "no_stage1": args.no_stage1,
        "name": args.name,
        "gateway": endpoint.settings,
    });
    start_run(&out, "annotate", &settings)?;

    let records = load_pairs(&args.pairs).map_err(annotate_error)?;
    let mut library = ImageLibrary::open(&args.images).map_err(annotate_error)?;
    library.root = std::path::absolute(&library.root).map_err(runtime)?;
    let config = AnnotateConfig {
        paraphrases,
        attempts: endpoint.attempts,
        mode,
        workers: endpoint.workers,
        ..AnnotateConfig::default()
    };
    let annotator = Annotator::new(&endpoint.gateway, &endpoint.prompts, config);
    let outcome = annotator.annotate(&records, &library).map_err(annotate_error)?;

    // the manifest lives elsewhere, so image paths become absolute
    let index: BTreeMap<String, String> = library
        .index
        .iter()
        .map(|(id, rel)| (id.clone(), library.root.join(rel).display().to_string()))
        .collect();
    let manifest = outcome.manifest(&args.name, paraphrases, index);
    save_manifest(&manifest, &out.join("manifest.jsonl")).map_err(runtime)?;
    outcome.write_reports(&out.join("drops.tsv"), &out.join("requests.jsonl")).map_err(runtime)?;
    say!(
        "annotated {} of {} pairs: {} descriptions, {} dropped ({:.1}%)",
        outcome.records.len(),
        outcome.total_pairs,
        outcome.description_count(),
        outcome.drops.len(),
        100.0 * outcome.drop_rate()
    );
    Ok(())
}

// ---- filter-env -----------------------------------------------------------

#[derive(Debug, Args)]
pub struct FilterEnvArgs {
    /// `id<TAB>description` lines.
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub endpoint: EndpointArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn filter_env(args: FilterEnvArgs, file: &AppConfig) -> Result<(), CliError> {
    require_path(&args.corpus, "corpus")?;
    let endpoint = args.endpoint.open(file)?;
    let out = out_dir(args.out, "filter-env");
    start_run(&out, "filter-env", &json!({ "corpus": args.corpus, "gateway": endpoint.settings }))?;
    let items = load_corpus(&args.corpus).map_err(invalid)?;
    let config = AnnotateConfig { attempts: endpoint.attempts, ..AnnotateConfig::default() };
    let annotator = Annotator::new(&endpoint.gateway, &endpoint.prompts, config);
    let part = filter_corpus(&items, &annotator, &out.join("audit.jsonl")).map_err(runtime)?;
    save_corpus(&part.kept, &out.join("kept.tsv")).map_err(runtime)?;
    save_corpus(&part.removed, &out.join("removed.tsv")).map_err(runtime)?;
    say!("kept {} of {} descriptions, removed {}", part.kept.len(), items.len(), part.removed.len());
    Ok(())
}

// ---- pairs ----------------------------------------------------------------

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// JSON lines `{sequence, frame_index, joints}`.
    #[arg(long)]
    pub keypoints: PathBuf,
    /// Frames between kept samples.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Inclusive distance gate `lo:hi`.
    #[arg(long)]
    pub range: Option<String>,
    #[arg(long)]
    pub min_confidence: Option<f64>,
    /// Split assigned to the emitted pairs.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_range(raw: &str) -> Result<(f64, f64), CliError> {
    let bad = || invalid(format!("range `{raw}` is not `lo:hi`"));
    let (lo, hi) = raw.split_once(':').ok_or_else(bad)?;
    Ok((lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?))
}

#[derive(Serialize)]
struct PairLine<'a> {
    sequence: &'a str,
    frame_i: u64,
    frame_j: u64,
    distance: f64,
}

pub fn pairs(args: PairsArgs, file: &AppConfig) -> Result<(), CliError> {
    require_path(&args.keypoints, "keypoint file")?;
    let defaults = PairSelectionConfig::default();
    let f = &file.pairs;
    let range = match args.range {
        Some(raw) => parse_range(&raw)?,
        None => (f.distance_lo.unwrap_or(defaults.distance_range.0), f.distance_hi.unwrap_or(defaults.distance_range.1)),
    };
    let cfg = PairSelectionConfig {
        frame_stride: pick(args.stride, &f.frame_stride, defaults.frame_stride),
        distance_range: range,
        min_confidence: pick(args.min_confidence, &f.min_confidence, defaults.min_confidence),
    };
    cfg.validate().map_err(invalid)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let out = out_dir(args.out, "pairs");
    start_run(&out, "pairs", &json!({ "keypoints": args.keypoints, "selection": cfg, "split": split }))?;

    let sequences = load_keypoints(&args.keypoints).map_err(invalid)?;
    let mut lines = String::new();
    let mut records = Vec::new();
    for (sequence, frames) in &sequences {
        let selected = select_pairs(frames, &cfg).map_err(invalid)?;
        for c in &selected {
            let line = PairLine { sequence, frame_i: c.ref_frame, frame_j: c.tgt_frame, distance: c.distance };
            lines.push_str(&serde_json::to_string(&line).map_err(runtime)?);
            lines.push('\n');
        }
        records.extend(candidate_records(sequence, &selected, split));
    }
    write_file(&out.join("candidates.jsonl"), lines)?;
    save_pairs(&records, &out.join("pairs.tsv")).map_err(runtime)?;
    say!("{} pairs from {} sequences", records.len(), sequences.len());
    Ok(())
}

// ---- embed ----------------------------------------------------------------

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// One text per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Project through a trained text encoder instead of emitting raw hashes.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Hashing width when no checkpoint is given.
    #[arg(long)]
    pub raw_dim: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn embed(args: EmbedArgs, file: &AppConfig) -> Result<(), CliError> {
    require_path(&args.input, "input")?;
    let raw_dim = positive(pick(args.raw_dim, &file.train.raw_dim, DEFAULT_RAW_DIM), "raw_dim")?;
    let params = match &args.checkpoint {
        Some(path) => {
            require_path(path, "checkpoint")?;
            Some(load_checkpoint(path).map_err(invalid)?.0)
        }
        None => None,
    };
    let out = out_dir(args.out, "embed");
    let settings = json!({
        "input": args.input,
        "checkpoint": args.checkpoint.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        "raw_dim": params.as_ref().map_or(raw_dim, |p| p.text.raw_dim()),
    });
    start_run(&out, "embed", &settings)?;
    let text = fs::read_to_string(&args.input).map_err(runtime)?;
    let mut body = String::new();
    for line in text.lines() {
        let v = match &params {
            Some(p) => p.text.encode(line),
            None => hash_encode_text(line, raw_dim),
        };
        body.push_str(&v.iter().map(f64::to_string).collect::<Vec<_>>().join("\t"));
        body.push('\n');
    }
    write_file(&out.join("vectors.tsv"), body)?;
    say!("embedded {} lines", text.lines().count());
    Ok(())
}

// ---- shared data / training options -----------------------------------------

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Embedding store (`.cpre`).
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Skip records with missing descriptions instead of rejecting the manifest.
    #[arg(long)]
    pub exclude_incomplete: bool,
}

struct Data {
    manifest: Manifest,
    store: EmbeddingStore,
    settings: serde_json::Value,
}

impl DataArgs {
    fn load(self, file: &AppConfig) -> Result<Data, CliError> {
        let manifest_path = existing_path(self.manifest, &file.manifest, "manifest")?;
        let store_path = existing_path(self.store, &file.store, "store")?;
        let options = LoadOptions { exclude_incomplete: self.exclude_incomplete };
        let manifest = load_manifest_with(&manifest_path, options).map_err(invalid)?;
        let store = EmbeddingStore::load(&store_path).map_err(invalid)?;
        let settings = json!({
            "manifest": manifest_path,
            "store": store_path,
            "exclude_incomplete": self.exclude_incomplete,
        });
        Ok(Data { manifest, store, settings })
    }
}

#[derive(Debug, Args)]
pub struct TrainOpts {
    /// `text` or `merger`.
    #[arg(long)]
    pub phase: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train on the contrastive term alone.
    #[arg(long)]
    pub no_cyclic: bool,
    /// Comma list of orig, swap, mirror, swapmirror.
    #[arg(long)]
    pub variants: Option<String>,
    /// `sum` or `combiner`.
    #[arg(long)]
    pub merger: Option<String>,
    #[arg(long)]
    pub raw_dim: Option<usize>,
    /// Keep the text encoder bias fixed.
    #[arg(long)]
    pub freeze_bias: bool,
}

impl TrainOpts {
    fn resolve(self, f: &TrainSection) -> Result<TrainConfig, CliError> {
        let phase: Phase = match self.phase.or_else(|| f.phase.clone()) {
            Some(raw) => raw.parse().map_err(invalid)?,
            None => Phase::TextEncoder,
        };
        let base = match phase {
            Phase::TextEncoder => TrainConfig::default(),
            Phase::Merger => TrainConfig::merger_phase(),
        };
        let merger: MergerKind = match self.merger.or_else(|| f.merger.clone()) {
            Some(raw) => raw.parse().map_err(invalid)?,
            None => base.merger,
        };
        let variants = match (self.variants, &f.variants) {
            (Some(raw), _) => parse_list(&raw, "variant", VariantKind::parse)?,
            (None, Some(list)) => parse_list(&list.join(","), "variant", VariantKind::parse)?,
            (None, None) => base.variants.clone(),
        };
        let cfg = TrainConfig {
            lambda: pick(self.lambda, &f.lambda, base.lambda),
            omega: pick(self.omega, &f.omega, base.omega),
            batch_size: pick(self.batch_size, &f.batch_size, base.batch_size),
            epochs: pick(self.epochs, &f.epochs, base.epochs),
            learning_rate: pick(self.learning_rate, &f.learning_rate, base.learning_rate),
            seed: pick(self.seed, &f.seed, base.seed),
            phase,
            variants,
            cyclic_enabled: !self.no_cyclic && f.cyclic.unwrap_or(true),
            merger,
            raw_dim: pick(self.raw_dim, &f.raw_dim, base.raw_dim),
            train_bias: !self.freeze_bias && f.train_bias.unwrap_or(base.train_bias),
        };
        cfg.validate().map_err(invalid)?;
        Ok(cfg)
    }
}

// ---- train ----------------------------------------------------------------

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    /// Start from this checkpoint (e.g. a trained text encoder for the merger phase).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn train(args: TrainArgs, file: &AppConfig) -> Result<(), CliError> {
    let cfg = args.opts.resolve(&file.train)?;
    let init = match &args.init {
        Some(path) => {
            require_path(path, "initial checkpoint")?;
            Some(load_checkpoint(path).map_err(invalid)?.0)
        }
        None => None,
    };
    let data = args.data.load(file)?;
    let out = out_dir(args.out, "train");
    let settings = json!({
        "data": data.settings,
        "init": args.init.map(|p| p.display().to_string()).unwrap_or_default(),
        "train": cfg,
    });
    start_run(&out, "train", &settings)?;
    let outcome = posecpr_core::train::train(&data.manifest, &data.store, &cfg, init).map_err(runtime)?;
    save_checkpoint(&out.join("model.ckpt"), &outcome.params, &cfg).map_err(runtime)?;
    let curve: String = outcome.loss_curve.iter().enumerate().map(|(i, l)| format!("{}\t{l}\n", i + 1)).collect();
    write_file(&out.join("loss_curve.tsv"), curve)?;
    if let Some(last) = outcome.loss_curve.last() {
        info!("final epoch loss {last:.6}");
    }
    say!("wrote {}", out.join("model.ckpt").display());
    Ok(())
}

// ---- eval -----------------------------------------------------------------

#[derive(Debug, Args)]
pub struct RetrievalArgs {
    /// Gallery image ids, one per line.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Comma list of cutoffs.
    #[arg(long)]
    pub ks: Option<String>,
    /// Query with every paraphrase instead of the first.
    #[arg(long)]
    pub all_paraphrases: bool,
}

impl RetrievalArgs {
    fn resolve(self, file: &AppConfig) -> Result<(Vec<String>, EvalOptions, PathBuf), CliError> {
        let path = existing_path(self.gallery, &file.gallery, "gallery")?;
        let text = fs::read_to_string(&path).map_err(runtime)?;
        let ids: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
        let ks = match (self.ks, &file.eval.ks) {
            (Some(raw), _) => parse_list(&raw, "k", |s| s.parse().ok())?,
            (None, Some(ks)) => ks.clone(),
            (None, None) => DEFAULT_KS.to_vec(),
        };
        if ks.is_empty() || ks.contains(&0) {
            return Err(invalid("ks must be a non-empty list of positive cutoffs"));
        }
        let all_paraphrases = self.all_paraphrases || file.eval.all_paraphrases.unwrap_or(false);
        Ok((ids, EvalOptions { ks, all_paraphrases }, path))
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn eval(args: EvalArgs, file: &AppConfig) -> Result<(), CliError> {
    let ckpt = existing_path(args.checkpoint, &file.checkpoint, "checkpoint")?;
    let (gallery, options, gallery_path) = args.retrieval.resolve(file)?;
    let data = args.data.load(file)?;
    let (params, _) = load_checkpoint(&ckpt).map_err(invalid)?;
    let out = out_dir(args.out, "eval");
    let settings = json!({ "data": data.settings, "checkpoint": ckpt, "gallery": gallery_path, "eval": options });
    start_run(&out, "eval", &settings)?;
    let report = evaluate(&data.manifest, &data.store, &params, &gallery, &options).map_err(runtime)?;
    report.write(&out, "report").map_err(runtime)?;
    say!("{}", report.to_table().trim_end());
    Ok(())
}

// ---- ablate ---------------------------------------------------------------

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub opts: TrainOpts,
    #[command(flatten)]
    pub retrieval: RetrievalArgs,
    /// Single-factor rows to add next to the full model: cyclic, variants.
    #[arg(long, default_value = "cyclic,variants")]
    pub rows: String,
    /// Extra rows, one per paraphrase count (e.g. 1,3,5).
    #[arg(long)]
    pub paraphrase_counts: Option<String>,
    /// Paraphrases used by the full model; defaults to the manifest's.
    #[arg(long)]
    pub base_paraphrases: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn ablate(args: AblateArgs, file: &AppConfig) -> Result<(), CliError> {
    let cfg = args.opts.resolve(&file.train)?;
    let (gallery, options, gallery_path) = args.retrieval.resolve(file)?;
    let mut toggles = Toggles::default();
    for row in parse_list(&args.rows, "row", |s| Some(s.to_string()))? {
        match row.as_str() {
            "cyclic" => toggles.cyclic = true,
            "variants" => toggles.variants = true,
            other => return Err(invalid(format!("unknown row `{other}` (expected cyclic, variants)"))),
        }
    }
    if let Some(raw) = &args.paraphrase_counts {
        toggles.paraphrases = parse_list(raw, "paraphrase count", |s| s.parse().ok().filter(|&p| p > 0))?;
    }
    let base_p = args.base_paraphrases.or(file.paraphrases);
    let data = args.data.load(file)?;
    let out = out_dir(args.out, "ablate");
    let settings = json!({
        "data": data.settings,
        "gallery": gallery_path,
        "eval": options,
        "train": cfg,
        "toggles": toggles,
        "base_paraphrases": base_p.unwrap_or(data.manifest.paraphrase_count),
    });
    start_run(&out, "ablate", &settings)?;
    let table =
        ablation_run(&data.manifest, &data.store, &cfg, &toggles, base_p, &gallery, &options).map_err(runtime)?;
    write_file(&out.join("ablation.txt"), table.to_table())?;
    let mut json = serde_json::to_string_pretty(&table).map_err(runtime)?;
    json.push('\n');
    write_file(&out.join("ablation.json"), json)?;
    say!("{}", table.to_table().trim_end());
    Ok(())
}

// ---- stats ----------------------------------------------------------------

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// `NAME=PATH`, repeatable. A `.jsonl` path is read as a manifest,
    /// anything else as `id<TAB>description` lines.
    #[arg(long = "corpus", required = true)]
    pub corpora: Vec<String>,
    /// Rows in the table.
    #[arg(long, default_value_t = 20)]
    pub top: usize,
    #[arg(long)]
    pub keep_stopwords: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn corpus_texts(path: &Path) -> Result<Vec<String>, CliError> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        let m = load_manifest_with(path, LoadOptions { exclude_incomplete: true }).map_err(invalid)?;
        Ok(m.records.iter().flat_map(|r| r.descriptions.iter().flat_map(|(_, d)| d.iter().cloned())).collect())
    } else {
        Ok(load_corpus(path).map_err(invalid)?.into_iter().map(|(_, d)| d).collect())
    }
}

pub fn stats(args: StatsArgs) -> Result<(), CliError> {
    let mut tables = Vec::new();
    let mut sources = Vec::new();
    for entry in &args.corpora {
        let (name, path) = entry.split_once('=').ok_or_else(|| invalid(format!("corpus `{entry}` is not NAME=PATH")))?;
        let path = PathBuf::from(path);
        require_path(&path, "corpus")?;
        let texts = corpus_texts(&path)?;
        tables.push(TokenFrequencies::from_texts(name, texts.iter().map(String::as_str), !args.keep_stopwords));
        sources.push(json!({ "name": name, "path": path }));
    }
    let out = out_dir(args.out, "stats");
    let settings = json!({ "corpora": sources, "top": args.top, "keep_stopwords": args.keep_stopwords });
    start_run(&out, "stats", &settings)?;
    let table = frequency_table(&tables, args.top);
    write_file(&out.join("stats.txt"), &table)?;
    say!("{}", table.trim_end());
    Ok(())
}

// ---- mock-mllm ------------------------------------------------------------

#[derive(Debug, Args)]
pub struct MockArgs {
    /// JSON lines of scripted replies.
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8089")]
    pub addr: String,
}

pub fn mock_mllm(args: MockArgs) -> Result<(), CliError> {
    require_path(&args.script, "script")?;
    let script = MockScript::from_file(&args.script).map_err(invalid)?;
    let server = MockServer::start(Arc::new(script), &args.addr).map_err(runtime)?;
    say!("serving {} on {}", args.script.display(), server.url());
    let _ = std::io::stdout().flush();
    server.join();
    Ok(())
}

// ---- synth / fixture --------------------------------------------------------

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 256)]
    pub gallery_size: usize,
    #[arg(long, default_value_t = 512)]
    pub train_pairs: usize,
    #[arg(long, default_value_t = 100)]
    pub test_pairs: usize,
    #[arg(long, default_value_t = 3)]
    pub paraphrases: usize,
    #[arg(long, default_value_t = DEFAULT_RAW_DIM)]
    pub raw_dim: usize,
    /// Projection scale of the oracle checkpoint.
    #[arg(long, default_value_t = 1.41)]
    pub oracle_scale: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn synth(args: SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        dim: positive(args.dim, "dim")?,
        gallery_size: positive(args.gallery_size, "gallery_size")?,
        train_pairs: args.train_pairs,
        test_pairs: args.test_pairs,
        paraphrases: positive(args.paraphrases, "paraphrases")?,
        raw_dim: positive(args.raw_dim, "raw_dim")?,
        seed: args.seed,
        ..SynthConfig::default()
    };
    if cfg.gallery_size < 2 {
        return Err(invalid("gallery_size must be at least 2"));
    }
    let out = out_dir(args.out.clone(), "synth");
    start_run(&out, "synth", &args)?;
    let world = synth::generate(&cfg);
    world.write(&out).map_err(runtime)?;
    let oracle = world.oracle_params(args.oracle_scale);
    let header = TrainConfig { raw_dim: cfg.raw_dim, merger: MergerKind::Sum, ..TrainConfig::default() };
    save_checkpoint(&out.join("oracle.ckpt"), &oracle, &header).map_err(runtime)?;
    say!(
        "{} train / {} test records, gallery of {} in {}",
        world.manifest.split(Split::Train).count(),
        world.manifest.split(Split::Test).count(),
        world.gallery.len(),
        out.display()
    );
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 10)]
    pub pairs: usize,
    #[arg(long, default_value_t = 3)]
    pub paraphrases: usize,
    /// Index of a pair whose first request is refused.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refuse: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

pub fn fixture(args: FixtureArgs) -> Result<(), CliError> {
    let cfg = FixtureConfig {
        pairs: positive(args.pairs, "pairs")?,
        paraphrases: positive(args.paraphrases, "paraphrases")?,
        refuse: args.refuse,
        ..FixtureConfig::default()
    };
    let out = out_dir(args.out.clone(), "fixture");
    start_run(&out, "fixture", &args)?;
    let f = write_fixture(&out, &cfg).map_err(runtime)?;
    say!("{} pairs, {} scripted replies in {}", f.records.len(), f.script.len(), out.display());
    Ok(())
}
