use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::Serialize;

use super::parse::{parse_body_parts, parse_descriptions, parse_whole_transition, parse_yes_no, ParseError};
use super::prompts::{PromptKind, PromptSet};
use super::raster::{compose_side_by_side, mirror_image, CompositeLayout, PairImage};
use super::AnnotateError;
use crate::data::{load_image_index, Manifest, Split, TripletRecord, VariantKind};
use crate::gateway::{
    image_digest, ChatRequest, ContentPart, Gateway, GatewayError, Outcome, RetryPolicy, DIVERSE_TEMPERATURE,
    PRECISE_TEMPERATURE,
};

/// Whether the first stage asks for per-body-part bullets or for one
/// whole-transition description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StageMode {
    #[default]
    BodyParts,
    WholeTransition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(into = "u8")]
pub enum Stage {
    Describe,
    Integrate,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::Describe => 1,
            Stage::Integrate => 2,
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone)]
pub struct AnnotateConfig {
    pub paraphrases: usize,
    /// Requests per stage before the pair is dropped.
    pub attempts: u32,
    pub layout: CompositeLayout,
    pub mode: StageMode,
    /// Pairs processed concurrently.
    pub workers: usize,
    /// Transport-level retries inside one attempt.
    pub retry: RetryPolicy,
}

impl Default for AnnotateConfig {
    fn default() -> Self {
        AnnotateConfig {
            paraphrases: 3,
            attempts: 3,
            layout: CompositeLayout::default(),
            mode: StageMode::BodyParts,
            workers: 4,
            retry: RetryPolicy::default(),
        }
    }
}

/// Resolves image ids to decoded rasters.
pub trait ImageSource: Sync {
    fn load(&self, id: &str) -> Result<PairImage, AnnotateError>;
}

impl ImageSource for BTreeMap<String, PairImage> {
    fn load(&self, id: &str) -> Result<PairImage, AnnotateError> {
        self.get(id).cloned().ok_or_else(|| AnnotateError::UnknownImage(id.to_string()))
    }
}

/// Image files on disk, addressed through an `id<TAB>relative path` index.
#[derive(Debug, Clone)]
pub struct ImageLibrary {
    pub root: PathBuf,
    pub index: BTreeMap<String, String>,
}

impl ImageLibrary {
    /// Paths in the index are relative to the index file's directory.
    pub fn open(index_path: &Path) -> Result<Self, AnnotateError> {
        let index = load_image_index(index_path)?;
        let root = index_path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(ImageLibrary { root, index })
    }
}

impl ImageSource for ImageLibrary {
    fn load(&self, id: &str) -> Result<PairImage, AnnotateError> {
        let rel = self.index.get(id).ok_or_else(|| AnnotateError::UnknownImage(id.to_string()))?;
        PairImage::open(&self.root.join(rel))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairDrop {
    pub pair_id: String,
    /// `None` when the pair failed before any request, e.g. a missing image.
    pub variant: Option<VariantKind>,
    pub stage: Option<Stage>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RequestLogEntry {
    pub pair_id: String,
    pub variant: VariantKind,
    pub stage: Stage,
    pub attempt: u32,
    pub prompt: &'static str,
    pub images: Vec<String>,
    pub outcome: Outcome,
    pub cache_hit: bool,
    pub network_attempts: u32,
}

#[derive(Debug, Clone, Default)]
pub struct AnnotateOutcome {
    /// Completed records, in input order.
    pub records: Vec<TripletRecord>,
    pub drops: Vec<PairDrop>,
    /// Sorted by pair, variant, stage and attempt.
    pub requests: Vec<RequestLogEntry>,
    /// Replies that over-delivered descriptions and were cut to the count.
    pub truncations: usize,
    pub total_pairs: usize,
}

impl AnnotateOutcome {
    pub fn drop_rate(&self) -> f64 {
        if self.total_pairs == 0 {
            0.0
        } else {
            self.drops.len() as f64 / self.total_pairs as f64
        }
    }

    pub fn description_count(&self) -> usize {
        self.records.iter().map(TripletRecord::description_count).sum()
    }

    pub fn manifest(&self, name: &str, paraphrases: usize, image_index: BTreeMap<String, String>) -> Manifest {
        let mut m = Manifest::new(name, paraphrases);
        m.records = self.records.clone();
        m.image_index = image_index;
        m
    }

    /// `pair_id<TAB>variant<TAB>stage<TAB>reason`, after a `#` summary line.
    pub fn drop_report(&self) -> String {
        let mut out = format!(
            "# dropped {} of {} pairs ({:.1}%)\n",
            self.drops.len(),
            self.total_pairs,
            100.0 * self.drop_rate()
        );
        for d in &self.drops {
            let variant = d.variant.map(|v| v.key().to_string()).unwrap_or_else(|| "-".into());
            let stage = d.stage.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            let reason = d.reason.replace(['\t', '\n'], " ");
            out.push_str(&format!("{}\t{variant}\t{stage}\t{reason}\n", d.pair_id));
        }
        out
    }

    pub fn request_log_jsonl(&self) -> String {
        self.requests.iter().map(|r| serde_json::to_string(r).expect("log entry serializes") + "\n").collect()
    }

    pub fn write_reports(&self, drops: &Path, requests: &Path) -> Result<(), AnnotateError> {
        fs::write(drops, self.drop_report()).map_err(|e| AnnotateError::io(drops, e))?;
        fs::write(requests, self.request_log_jsonl()).map_err(|e| AnnotateError::io(requests, e))
    }
}

enum StageFailure {
    Drop(String),
    Fatal(GatewayError),
}

struct PairResult {
    record: Result<TripletRecord, PairDrop>,
    log: Vec<RequestLogEntry>,
    truncations: usize,
}

pub struct Annotator<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptSet,
    config: AnnotateConfig,
}

impl<'a> Annotator<'a> {
    pub fn new(gateway: &'a Gateway, prompts: &'a PromptSet, config: AnnotateConfig) -> Self {
        Annotator { gateway, prompts, config }
    }

    pub fn config(&self) -> &AnnotateConfig {
        &self.config
    }

    /// The four composites of a pair, in [`VariantKind::ALL`] order.
    pub fn composites(&self, record: &TripletRecord, images: &dyn ImageSource) -> Result<[PairImage; 4], AnnotateError> {
        let r = images.load(&record.ref_image)?;
        let t = images.load(&record.tgt_image)?;
        let (mr, mt) = (mirror_image(&r), mirror_image(&t));
        let layout = self.config.layout;
        Ok([
            compose_side_by_side(&r, &t, layout)?,
            compose_side_by_side(&t, &r, layout)?,
            compose_side_by_side(&mr, &mt, layout)?,
            compose_side_by_side(&mt, &mr, layout)?,
        ])
    }

    /// Runs both stages on all four variants; the first failing variant
    /// drops the pair.
    pub fn generate_for_pair(
        &self,
        record: &TripletRecord,
        images: &dyn ImageSource,
    ) -> Result<(Result<TripletRecord, PairDrop>, Vec<RequestLogEntry>), AnnotateError> {
        match self.pair(record, images) {
            Ok(res) => Ok((res.record, res.log)),
            Err(StageFailure::Fatal(e)) => Err(e.into()),
            Err(StageFailure::Drop(_)) => unreachable!("drops are reported inside the result"),
        }
    }

    fn pair(&self, record: &TripletRecord, images: &dyn ImageSource) -> Result<PairResult, StageFailure> {
        let mut log = Vec::new();
        let mut truncations = 0;
        let drop = |variant, stage, reason: String| PairDrop { pair_id: record.pair_id.clone(), variant, stage, reason };
        let composites = match self.composites(record, images) {
            Ok(c) => c,
            Err(e) => {
                return Ok(PairResult { record: Err(drop(None, None, e.to_string())), log, truncations });
            }
        };
        let mut out = record.clone();
        for (variant, composite) in VariantKind::ALL.into_iter().zip(composites) {
            let png = composite.to_png();
            let ctx = Ctx { pair_id: &record.pair_id, variant };
            let first = self.first_stage(&ctx, png, &mut log);
            let bullets = match first {
                Ok(b) => b,
                Err(StageFailure::Drop(reason)) => {
                    let record = Err(drop(Some(variant), Some(Stage::Describe), reason));
                    return Ok(PairResult { record, log, truncations });
                }
                Err(fatal) => return Err(fatal),
            };
            match self.second_stage(&ctx, &bullets, &mut log) {
                Ok((descriptions, cut)) => {
                    truncations += usize::from(cut > 0);
                    out.descriptions[variant] = descriptions;
                }
                Err(StageFailure::Drop(reason)) => {
                    let record = Err(drop(Some(variant), Some(Stage::Integrate), reason));
                    return Ok(PairResult { record, log, truncations });
                }
                Err(fatal) => return Err(fatal),
            }
        }
        Ok(PairResult { record: Ok(out), log, truncations })
    }

    fn first_stage(&self, ctx: &Ctx, png: Vec<u8>, log: &mut Vec<RequestLogEntry>) -> Result<Vec<String>, StageFailure> {
        let kind = match self.config.mode {
            StageMode::BodyParts => PromptKind::BodyParts,
            StageMode::WholeTransition => PromptKind::WholeTransition,
        };
        let request = self
            .gateway
            .request(PRECISE_TEMPERATURE, vec![ContentPart::Text(self.prompts.image_prompt(kind)), ContentPart::Image(png)]);
        match self.config.mode {
            StageMode::BodyParts => self.run_stage(ctx, Stage::Describe, kind, &request, log, |reply| {
                parse_body_parts(reply).map(|d| d.iter().map(|x| x.bullet()).collect())
            }),
            StageMode::WholeTransition => {
                self.run_stage(ctx, Stage::Describe, kind, &request, log, |reply| parse_whole_transition(reply).map(|d| vec![d]))
            }
        }
    }

    fn second_stage(
        &self,
        ctx: &Ctx,
        bullets: &[String],
        log: &mut Vec<RequestLogEntry>,
    ) -> Result<(Vec<String>, usize), StageFailure> {
        let p = self.config.paraphrases;
        let (kind, text) = match self.config.mode {
            StageMode::BodyParts => (PromptKind::Integrate, self.prompts.integrate(bullets, p)),
            StageMode::WholeTransition => (PromptKind::IntegrateWhole, self.prompts.integrate_whole(&bullets[0], p)),
        };
        let request = self.gateway.request(DIVERSE_TEMPERATURE, vec![ContentPart::Text(text)]);
        let parsed = self.run_stage(ctx, Stage::Integrate, kind, &request, log, |reply| parse_descriptions(reply, p))?;
        if parsed.truncated > 0 {
            log::info!("{} {}: kept {p} of {} descriptions", ctx.pair_id, ctx.variant, p + parsed.truncated);
        }
        Ok((parsed.descriptions, parsed.truncated))
    }

    fn run_stage<T>(
        &self,
        ctx: &Ctx,
        stage: Stage,
        kind: PromptKind,
        request: &ChatRequest,
        log: &mut Vec<RequestLogEntry>,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, StageFailure> {
        let images: Vec<String> = request
            .messages
            .iter()
            .flat_map(|m| &m.parts)
            .filter_map(|p| match p {
                ContentPart::Image(png) => Some(image_digest(png)),
                ContentPart::Text(_) => None,
            })
            .collect();
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            let response = match self.gateway.complete(request, &self.config.retry) {
                Ok(r) => r,
                Err(e @ GatewayError::Auth(_)) => return Err(StageFailure::Fatal(e)),
                Err(e) => return Err(StageFailure::Drop(format!("gateway: {e}"))),
            };
            log.push(RequestLogEntry {
                pair_id: ctx.pair_id.to_string(),
                variant: ctx.variant,
                stage,
                attempt,
                prompt: kind.file_name(),
                images: images.clone(),
                outcome: response.outcome,
                cache_hit: response.cache_hit,
                network_attempts: response.attempts,
            });
            match response.outcome {
                Outcome::Refusal => return Err(StageFailure::Drop("refusal".into())),
                Outcome::Ok => match parse(&response.text) {
                    Ok(v) => return Ok(v),
                    Err(e) => {
                        log::debug!("{} {} stage {stage}: unparseable reply: {e}", ctx.pair_id, ctx.variant);
                        self.gateway.evict(request);
                        last = format!("unparseable reply ({e})");
                    }
                },
                Outcome::Malformed | Outcome::TransportError => last = "malformed response body".into(),
            }
        }
        Err(StageFailure::Drop(format!("{last} after {attempts} attempt(s)")))
    }

    /// Annotates every record on `workers` threads. Only a credential
    /// rejection aborts the batch; other failures drop single pairs.
    pub fn annotate(&self, records: &[TripletRecord], images: &dyn ImageSource) -> Result<AnnotateOutcome, AnnotateError> {
        let slots: Vec<Mutex<Option<PairResult>>> = records.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let fatal: Mutex<Option<GatewayError>> = Mutex::new(None);
        let workers = self.config.workers.clamp(1, records.len().max(1));
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= records.len() || abort.load(Ordering::Relaxed) {
                        break;
                    }
                    match self.pair(&records[i], images) {
                        Ok(res) => *slots[i].lock().unwrap() = Some(res),
                        Err(StageFailure::Fatal(e)) => {
                            abort.store(true, Ordering::Relaxed);
                            fatal.lock().unwrap().get_or_insert(e);
                        }
                        Err(StageFailure::Drop(_)) => unreachable!("drops are reported inside the result"),
                    }
                });
            }
        });
        if let Some(e) = fatal.into_inner().unwrap() {
            return Err(e.into());
        }

        let mut outcome = AnnotateOutcome { total_pairs: records.len(), ..AnnotateOutcome::default() };
        for slot in slots {
            let res = slot.into_inner().unwrap().expect("every pair produced a result");
            outcome.requests.extend(res.log);
            outcome.truncations += res.truncations;
            match res.record {
                Ok(r) => outcome.records.push(r),
                Err(d) => {
                    log::warn!("dropped pair {}: {}", d.pair_id, d.reason);
                    outcome.drops.push(d);
                }
            }
        }
        outcome
            .requests
            .sort_by(|a, b| (&a.pair_id, a.variant, a.stage, a.attempt).cmp(&(&b.pair_id, b.variant, b.stage, b.attempt)));
        Ok(outcome)
    }

    /// `true` keeps the description, `false` marks it environment-related.
    /// Replies that are neither yes nor no are retried, then treated as
    /// environment-related.
    pub fn filter_environment(&self, description: &str) -> Result<bool, AnnotateError> {
        let request = self
            .gateway
            .request(PRECISE_TEMPERATURE, vec![ContentPart::Text(self.prompts.environment_filter(description))]);
        let attempts = self.config.attempts.max(1);
        for _ in 0..attempts {
            let response = self.gateway.complete(&request, &self.config.retry)?;
            match response.outcome {
                Outcome::Refusal => {
                    log::warn!("environment filter refused; dropping `{description}`");
                    return Ok(false);
                }
                Outcome::Ok => match parse_yes_no(&response.text) {
                    Some(environmental) => return Ok(!environmental),
                    None => self.gateway.evict(&request),
                },
                Outcome::Malformed | Outcome::TransportError => {}
            }
        }
        log::warn!("ambiguous environment-filter replies after {attempts} attempt(s); dropping `{description}`");
        Ok(false)
    }
}

struct Ctx<'s> {
    pair_id: &'s str,
    variant: VariantKind,
}

/// Reads `pair_id<TAB>ref<TAB>tgt[<TAB>train|test]` lines; `#` starts a
/// comment line.
pub fn load_pairs(path: &Path) -> Result<Vec<TripletRecord>, AnnotateError> {
    let text = fs::read_to_string(path).map_err(|e| AnnotateError::io(path, e))?;
    let bad = |line: usize, message: String| AnnotateError::Input { path: path.into(), message: format!("line {line}: {message}") };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let split = match cols.get(3).copied() {
            None | Some("train") => Split::Train,
            Some("test") => Split::Test,
            Some(other) => return Err(bad(i + 1, format!("unknown split `{other}`"))),
        };
        if !(3..=4).contains(&cols.len()) || cols[..3].iter().any(|c| c.is_empty()) {
            return Err(bad(i + 1, "expected `pair_id<TAB>ref<TAB>tgt[<TAB>split]`".into()));
        }
        out.push(TripletRecord::new(cols[0], cols[1], cols[2], split));
    }
    Ok(out)
}

pub fn save_pairs(records: &[TripletRecord], path: &Path) -> Result<(), AnnotateError> {
    let write = || -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for r in records {
            let split = match r.split {
                Split::Train => "train",
                Split::Test => "test",
            };
            writeln!(f, "{}\t{}\t{}\t{split}", r.pair_id, r.ref_image, r.tgt_image)?;
        }
        f.flush()
    };
    write().map_err(|e| AnnotateError::io(path, e))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use image::{Rgb, RgbImage};

    use super::*;
    use crate::gateway::{GatewayConfig, MockScript, MockTransport, ResponseCache, ScriptEntry};

    fn gateway(entries: Vec<ScriptEntry>) -> (Gateway, Arc<MockScript>) {
        let script = Arc::new(MockScript::new(entries));
        let gw = Gateway::new(Box::new(MockTransport::new(script.clone())), ResponseCache::in_memory(), GatewayConfig::default());
        (gw, script)
    }

    fn config(p: usize) -> AnnotateConfig {
        AnnotateConfig {
            paraphrases: p,
            layout: CompositeLayout { height: 16, gutter: 2 },
            workers: 1,
            retry: RetryPolicy::immediate(1),
            ..AnnotateConfig::default()
        }
    }

    fn images() -> BTreeMap<String, PairImage> {
        let img = |seed: u8| PairImage::new(RgbImage::from_fn(12, 16, |x, y| Rgb([seed, x as u8 * 20, y as u8 * 10])));
        [("a".to_string(), img(1)), ("b".to_string(), img(2))].into_iter().collect()
    }

    fn descriptions(p: usize, tag: &str) -> String {
        (1..=p).map(|i| format!("Description {i}: Move {tag} way {i}.\n")).collect()
    }

    #[test]
    fn p1_fills_four_variants_in_capture_order() {
        let mut entries = Vec::new();
        for v in VariantKind::ALL {
            entries.push(ScriptEntry::reply(format!("1. Head: Tilt the head {v}.")));
            entries.push(ScriptEntry::reply(descriptions(1, v.key())));
        }
        let (gw, script) = gateway(entries);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(1));
        let record = TripletRecord::new("p0", "a", "b", Split::Train);
        let out = ann.annotate(std::slice::from_ref(&record), &images()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.description_count(), 4);
        for v in VariantKind::ALL {
            assert_eq!(out.records[0].descriptions[v], [format!("Move {} way 1.", v.key())]);
        }

        // the image order of each first-stage request follows the variant
        let comps = ann.composites(&record, &images()).unwrap();
        let captured = script.requests();
        let stage1: Vec<&Vec<String>> = captured.iter().filter(|c| !c.image_digests.is_empty()).map(|c| &c.image_digests).collect();
        assert_eq!(stage1.len(), 4);
        for (digests, comp) in stage1.iter().zip(&comps) {
            assert_eq!(digests[0], image_digest(&comp.to_png()));
        }
        // second-stage requests are text only and carry the first-stage bullet
        assert!(captured[1].texts[0].ends_with("- Head: Tilt the head original."));
    }

    #[test]
    fn swapped_mirrored_composite_mirrors_each_source() {
        let (gw, _) = gateway(vec![]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(1));
        let imgs = images();
        let c = ann.composites(&TripletRecord::new("p", "a", "b", Split::Train), &imgs).unwrap();
        let expect = compose_side_by_side(&mirror_image(&imgs["b"]), &mirror_image(&imgs["a"]), ann.config.layout).unwrap();
        assert_eq!(c[3], expect);
        assert_ne!(c[0], c[1]);
        assert_ne!(c[0], c[2]);
    }

    #[test]
    fn empty_reply_is_retried_then_dropped() {
        let (gw, script) = gateway(vec![ScriptEntry::reply("").times(3)]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(3));
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.drops[0].stage, Some(Stage::Describe));
        assert_eq!(out.drops[0].variant, Some(VariantKind::Original));
        assert_eq!(script.requests().len(), 3);
        assert_eq!(out.drop_rate(), 1.0);
    }

    #[test]
    fn refusal_drops_without_retry() {
        let (gw, script) = gateway(vec![ScriptEntry::refuse(), ScriptEntry::reply("1. Head: Nod.")]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(3));
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images()).unwrap();
        assert_eq!(out.drops[0].reason, "refusal");
        assert_eq!(script.requests().len(), 1);
    }

    #[test]
    fn unknown_part_exhausts_budget() {
        let (gw, script) = gateway(vec![ScriptEntry::reply("1. Tail: wag").times(3)]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(3));
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images()).unwrap();
        assert_eq!(script.requests().len(), 3);
        assert!(out.drops[0].reason.contains("unknown body part"), "{}", out.drops[0].reason);
        assert_eq!(out.requests.iter().map(|r| r.attempt).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn over_delivery_is_truncated_and_duplicates_drop() {
        let entries = vec![
            ScriptEntry::reply("1. Torso: Lean forward.").matching("image:").times(4),
            ScriptEntry::reply(descriptions(5, "x")).matching("- Torso").times(4),
        ];
        let (gw, _) = gateway(entries);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(3));
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images()).unwrap();
        assert_eq!(out.description_count(), 12);
        assert_eq!(out.truncations, 4);

        let dup = "Description 1: Same.\nDescription 2: Same.\nDescription 3: Other.";
        let (gw, _) = gateway(vec![ScriptEntry::reply("1. Torso: Lean forward."), ScriptEntry::reply(dup).times(3)]);
        let ann = Annotator::new(&gw, &prompts, config(3));
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images()).unwrap();
        assert_eq!(out.drops[0].stage, Some(Stage::Integrate));
    }

    #[test]
    fn whole_transition_mode_uses_modified_prompts() {
        let (gw, script) = gateway(vec![
            ScriptEntry::reply("Description: Raise both arms.").matching("image:").times(4),
            ScriptEntry::reply(descriptions(2, "y")).matching("\n\nRaise both arms.").times(4),
        ]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, AnnotateConfig { mode: StageMode::WholeTransition, ..config(2) });
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images()).unwrap();
        assert_eq!(out.description_count(), 8);
        let reqs = script.requests();
        assert!(reqs[0].texts[0].starts_with(prompts.get(PromptKind::WholeTransition)));
        assert!(reqs[1].texts[0].ends_with("\n\nRaise both arms."));
        assert!(reqs[1].texts[0].contains("two distinct"));
    }

    #[test]
    fn missing_image_drops_without_requests() {
        let (gw, script) = gateway(vec![]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(1));
        let out = ann.annotate(&[TripletRecord::new("p0", "a", "zzz", Split::Train)], &images()).unwrap();
        assert_eq!(out.drops[0].variant, None);
        assert!(script.requests().is_empty());
        assert!(out.drop_report().contains("p0\t-\t-\tunknown image id `zzz`"));
    }

    #[test]
    fn credential_rejection_aborts() {
        let (gw, _) = gateway(vec![ScriptEntry::fail(401)]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(1));
        let r = ann.annotate(&[TripletRecord::new("p0", "a", "b", Split::Train)], &images());
        assert!(matches!(r, Err(AnnotateError::Gateway(GatewayError::Auth(401)))));
    }

    #[test]
    fn environment_filter_decisions() {
        let (gw, script) = gateway(vec![
            ScriptEntry::reply("Yes.").matching("stereo system"),
            ScriptEntry::reply("No.").matching("grasping a pole"),
            ScriptEntry::reply("Maybe").times(3),
        ]);
        let prompts = PromptSet::builtin();
        let ann = Annotator::new(&gw, &prompts, config(1));
        assert!(!ann.filter_environment("keep your position facing the stereo system").unwrap());
        assert!(ann.filter_environment("position both your hands in front of your face is if you are grasping a pole").unwrap());
        assert!(!ann.filter_environment("wiggle").unwrap());
        assert_eq!(script.requests().len(), 5);
        assert!(script.requests()[0].texts[0].ends_with("\n\nInstruction: keep your position facing the stereo system"));
    }

    #[test]
    fn pairs_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.tsv");
        let records = vec![TripletRecord::new("p0", "a", "b", Split::Train), TripletRecord::new("p1", "b", "a", Split::Test)];
        save_pairs(&records, &path).unwrap();
        assert_eq!(load_pairs(&path).unwrap(), records);
        fs::write(&path, "# comment\np2\tx\ty\n").unwrap();
        assert_eq!(load_pairs(&path).unwrap()[0].split, Split::Train);
        fs::write(&path, "p2\tx\n").unwrap();
        assert!(load_pairs(&path).is_err());
    }
}
