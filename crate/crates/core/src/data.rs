//! Shared data model: pose-pair variants, triplet records and dataset manifests.
//!
//! A manifest is stored as UTF-8 line-delimited JSON. The first line is a
//! header (`dataset_name`, `paraphrase_count`, `version`), every following
//! line is one triplet record with its fields in a fixed order. Image ids are
//! resolved through a sibling index file (`<stem>.images.tsv`, one
//! `id<TAB>relative path` per line, sorted by id).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::ops::{Index, IndexMut};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

/// The four augmentation forms of a pose pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Original,
    Swapped,
    Mirrored,
    SwappedMirrored,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] = [
        VariantKind::Original,
        VariantKind::Swapped,
        VariantKind::Mirrored,
        VariantKind::SwappedMirrored,
    ];

    pub fn from_flags(swapped: bool, mirrored: bool) -> Self {
        match (swapped, mirrored) {
            (false, false) => VariantKind::Original,
            (true, false) => VariantKind::Swapped,
            (false, true) => VariantKind::Mirrored,
            (true, true) => VariantKind::SwappedMirrored,
        }
    }

    pub fn is_swapped(self) -> bool {
        matches!(self, VariantKind::Swapped | VariantKind::SwappedMirrored)
    }

    pub fn is_mirrored(self) -> bool {
        matches!(self, VariantKind::Mirrored | VariantKind::SwappedMirrored)
    }

    /// Composition of two variants; swap and mirror flags combine by xor.
    pub fn then(self, other: VariantKind) -> VariantKind {
        VariantKind::from_flags(
            self.is_swapped() ^ other.is_swapped(),
            self.is_mirrored() ^ other.is_mirrored(),
        )
    }

    /// The variant describing the opposite transition of the same pair.
    pub fn reverse(self) -> VariantKind {
        VariantKind::from_flags(!self.is_swapped(), self.is_mirrored())
    }

    pub fn index(self) -> usize {
        match self {
            VariantKind::Original => 0,
            VariantKind::Swapped => 1,
            VariantKind::Mirrored => 2,
            VariantKind::SwappedMirrored => 3,
        }
    }

    /// Manifest key.
    pub fn key(self) -> &'static str {
        match self {
            VariantKind::Original => "original",
            VariantKind::Swapped => "swapped",
            VariantKind::Mirrored => "mirrored",
            VariantKind::SwappedMirrored => "swapped_mirrored",
        }
    }

    /// Parses manifest keys as well as the short CLI names
    /// (`orig`, `swap`, `mirror`, `swapmirror`).
    pub fn parse(s: &str) -> Option<VariantKind> {
        match s.trim().to_ascii_lowercase().as_str() {
            "original" | "orig" => Some(VariantKind::Original),
            "swapped" | "swap" => Some(VariantKind::Swapped),
            "mirrored" | "mirror" => Some(VariantKind::Mirrored),
            "swapped_mirrored" | "swapmirror" | "swap_mirror" => Some(VariantKind::SwappedMirrored),
            _ => None,
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Original ↔ Swapped, Mirrored ↔ SwappedMirrored.
pub fn reverse_variant(variant: VariantKind) -> VariantKind {
    variant.reverse()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Normal,
    Flipped,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Normal => "normal",
            Orientation::Flipped => "flipped",
        }
    }

    pub fn parse(s: &str) -> Option<Orientation> {
        match s {
            "normal" => Some(Orientation::Normal),
            "flipped" => Some(Orientation::Flipped),
            _ => None,
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An image id together with the orientation its features were computed in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageKey {
    pub id: String,
    pub orientation: Orientation,
}

impl ImageKey {
    pub fn new(id: impl Into<String>, orientation: Orientation) -> Self {
        ImageKey { id: id.into(), orientation }
    }

    pub fn normal(id: impl Into<String>) -> Self {
        ImageKey::new(id, Orientation::Normal)
    }
}

impl fmt::Display for ImageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.id, self.orientation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Fixed-size map keyed by [`VariantKind`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VariantMap<T>([T; 4]);

impl<T> VariantMap<T> {
    pub fn from_fn(mut f: impl FnMut(VariantKind) -> T) -> Self {
        VariantMap(VariantKind::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VariantKind, &T)> {
        VariantKind::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<VariantKind> for VariantMap<T> {
    type Output = T;
    fn index(&self, v: VariantKind) -> &T {
        &self.0[v.index()]
    }
}

impl<T> IndexMut<VariantKind> for VariantMap<T> {
    fn index_mut(&mut self, v: VariantKind) -> &mut T {
        &mut self.0[v.index()]
    }
}

/// One pose pair and its transition descriptions, per variant and paraphrase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TripletRecord {
    pub pair_id: String,
    pub ref_image: String,
    pub tgt_image: String,
    pub split: Split,
    pub descriptions: VariantMap<Vec<String>>,
}

impl TripletRecord {
    /// A record with no descriptions yet.
    pub fn new(
        pair_id: impl Into<String>,
        ref_image: impl Into<String>,
        tgt_image: impl Into<String>,
        split: Split,
    ) -> Self {
        TripletRecord {
            pair_id: pair_id.into(),
            ref_image: ref_image.into(),
            tgt_image: tgt_image.into(),
            split,
            descriptions: VariantMap::default(),
        }
    }

    pub fn descriptions(&self, variant: VariantKind) -> &[String] {
        &self.descriptions[variant]
    }

    /// Exactly `paraphrases` valid descriptions for every variant.
    pub fn is_complete(&self, paraphrases: usize) -> bool {
        self.violations(paraphrases).is_empty()
    }

    /// Total number of descriptions across all variants.
    pub fn description_count(&self) -> usize {
        self.descriptions.iter().map(|(_, d)| d.len()).sum()
    }

    /// Keeps only the first `count` paraphrases of every variant.
    pub fn truncate_paraphrases(&mut self, count: usize) {
        for v in VariantKind::ALL {
            self.descriptions[v].truncate(count);
        }
    }

    fn violations(&self, paraphrases: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        for (variant, list) in self.descriptions.iter() {
            if list.is_empty() {
                out.push(Violation::MissingVariant { pair_id: self.pair_id.clone(), variant });
                continue;
            }
            if list.len() != paraphrases {
                out.push(Violation::WrongCount {
                    pair_id: self.pair_id.clone(),
                    variant,
                    expected: paraphrases,
                    found: list.len(),
                });
            }
            for (index, text) in list.iter().enumerate() {
                if text.trim().is_empty() {
                    out.push(Violation::EmptyDescription { pair_id: self.pair_id.clone(), variant, index });
                } else if text.contains(['\n', '\r']) {
                    out.push(Violation::LineBreak { pair_id: self.pair_id.clone(), variant, index });
                }
            }
        }
        out
    }
}

/// Query/target roles of a record under a variant.
pub fn effective_roles(record: &TripletRecord, variant: VariantKind) -> (ImageKey, ImageKey) {
    let orientation = if variant.is_mirrored() { Orientation::Flipped } else { Orientation::Normal };
    let (query, target) = if variant.is_swapped() {
        (&record.tgt_image, &record.ref_image)
    } else {
        (&record.ref_image, &record.tgt_image)
    };
    (ImageKey::new(query.clone(), orientation), ImageKey::new(target.clone(), orientation))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub dataset_name: String,
    pub paraphrase_count: usize,
    pub records: Vec<TripletRecord>,
    /// image id → path relative to the manifest directory
    pub image_index: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(dataset_name: impl Into<String>, paraphrase_count: usize) -> Self {
        Manifest {
            dataset_name: dataset_name.into(),
            paraphrase_count,
            records: Vec::new(),
            image_index: BTreeMap::new(),
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &TripletRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    /// Every invariant violation, in record order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.paraphrase_count == 0 {
            out.push(Violation::ZeroParaphraseCount);
        }
        let mut seen = HashSet::new();
        for record in &self.records {
            if !seen.insert(record.pair_id.as_str()) {
                out.push(Violation::DuplicatePairId(record.pair_id.clone()));
            }
            for image in [&record.ref_image, &record.tgt_image] {
                if !self.image_index.contains_key(image) {
                    out.push(Violation::UnknownImage { pair_id: record.pair_id.clone(), image: image.clone() });
                }
            }
            out.extend(record.violations(self.paraphrase_count));
        }
        out
    }

    /// Copy with every record truncated to `count` paraphrases.
    pub fn with_paraphrase_count(&self, count: usize) -> Manifest {
        let mut m = self.clone();
        m.paraphrase_count = count.min(self.paraphrase_count);
        for r in &mut m.records {
            r.truncate_paraphrases(count);
        }
        m
    }

    /// Path of the image index file that accompanies a manifest.
    pub fn image_index_path(manifest_path: &Path) -> PathBuf {
        let stem = manifest_path.file_stem().and_then(|s| s.to_str()).unwrap_or("manifest");
        manifest_path.with_file_name(format!("{stem}.images.tsv"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    ZeroParaphraseCount,
    DuplicatePairId(String),
    UnknownImage { pair_id: String, image: String },
    MissingVariant { pair_id: String, variant: VariantKind },
    WrongCount { pair_id: String, variant: VariantKind, expected: usize, found: usize },
    EmptyDescription { pair_id: String, variant: VariantKind, index: usize },
    LineBreak { pair_id: String, variant: VariantKind, index: usize },
}

impl Violation {
    fn is_incomplete_record(&self) -> bool {
        matches!(
            self,
            Violation::MissingVariant { .. }
                | Violation::WrongCount { .. }
                | Violation::EmptyDescription { .. }
                | Violation::LineBreak { .. }
        )
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ZeroParaphraseCount => write!(f, "paraphrase_count must be positive"),
            Violation::DuplicatePairId(id) => write!(f, "duplicate pair_id {id}"),
            Violation::UnknownImage { pair_id, image } => {
                write!(f, "{pair_id}: image {image} is not in the image index")
            }
            Violation::MissingVariant { pair_id, variant } => write!(f, "{pair_id}: missing variant {variant}"),
            Violation::WrongCount { pair_id, variant, expected, found } => {
                write!(f, "{pair_id}: variant {variant} has {found} descriptions, expected {expected}")
            }
            Violation::EmptyDescription { pair_id, variant, index } => {
                write!(f, "{pair_id}: {variant}[{index}] is empty")
            }
            Violation::LineBreak { pair_id, variant, index } => {
                write!(f, "{pair_id}: {variant}[{index}] contains a line break")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("manifest validation failed:\n  {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  "))]
    Validation(Vec<Violation>),
}

impl DataError {
    fn io(path: &Path, source: io::Error) -> Self {
        DataError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, line: usize, message: impl Into<String>) -> Self {
        DataError::Parse { path: path.to_path_buf(), line, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Drop records with missing or malformed descriptions (MLLM refusals)
    /// instead of failing validation.
    pub exclude_incomplete: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    dataset_name: String,
    paraphrase_count: usize,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    pair_id: String,
    ref_image: String,
    tgt_image: String,
    split: Split,
    descriptions: DescriptionsLine,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DescriptionsLine {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    original: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    swapped: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    mirrored: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    swapped_mirrored: Vec<String>,
}

impl From<RecordLine> for TripletRecord {
    fn from(line: RecordLine) -> Self {
        let d = line.descriptions;
        TripletRecord {
            pair_id: line.pair_id,
            ref_image: line.ref_image,
            tgt_image: line.tgt_image,
            split: line.split,
            descriptions: VariantMap([d.original, d.swapped, d.mirrored, d.swapped_mirrored]),
        }
    }
}

impl From<&TripletRecord> for RecordLine {
    fn from(r: &TripletRecord) -> Self {
        let d = &r.descriptions;
        RecordLine {
            pair_id: r.pair_id.clone(),
            ref_image: r.ref_image.clone(),
            tgt_image: r.tgt_image.clone(),
            split: r.split,
            descriptions: DescriptionsLine {
                original: d[VariantKind::Original].clone(),
                swapped: d[VariantKind::Swapped].clone(),
                mirrored: d[VariantKind::Mirrored].clone(),
                swapped_mirrored: d[VariantKind::SwappedMirrored].clone(),
            },
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    load_manifest_with(path, LoadOptions::default())
}

pub fn load_manifest_with(path: &Path, options: LoadOptions) -> Result<Manifest, DataError> {
    let file = fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();

    let header_line = match lines.next() {
        Some(line) => line.map_err(|e| DataError::io(path, e))?,
        None => return Err(DataError::parse(path, 1, "missing header line")),
    };
    let header: HeaderLine =
        serde_json::from_str(&header_line).map_err(|e| DataError::parse(path, 1, e.to_string()))?;
    if header.version != MANIFEST_VERSION {
        return Err(DataError::parse(path, 1, format!("unsupported manifest version {}", header.version)));
    }

    let mut manifest = Manifest::new(header.dataset_name, header.paraphrase_count);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RecordLine =
            serde_json::from_str(&line).map_err(|e| DataError::parse(path, line_no, e.to_string()))?;
        manifest.records.push(record.into());
    }

    let index_path = Manifest::image_index_path(path);
    if index_path.exists() {
        manifest.image_index = load_image_index(&index_path)?;
    }

    if options.exclude_incomplete {
        let p = manifest.paraphrase_count;
        manifest.records.retain(|r| {
            let keep = r.is_complete(p);
            if !keep {
                log::warn!("excluding incomplete record {}", r.pair_id);
            }
            keep
        });
    }

    let violations = manifest.validate();
    if violations.is_empty() {
        Ok(manifest)
    } else {
        debug_assert!(!options.exclude_incomplete || violations.iter().all(|v| !v.is_incomplete_record()));
        Err(DataError::Validation(violations))
    }
}

/// Writes the manifest and its sibling image index in canonical form.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), DataError> {
    let mut out = Vec::new();
    let header = HeaderLine {
        dataset_name: manifest.dataset_name.clone(),
        paraphrase_count: manifest.paraphrase_count,
        version: MANIFEST_VERSION,
    };
    serde_json::to_writer(&mut out, &header).expect("header serializes");
    out.push(b'\n');
    for record in &manifest.records {
        serde_json::to_writer(&mut out, &RecordLine::from(record)).expect("record serializes");
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| DataError::io(path, e))?;
    save_image_index(&manifest.image_index, &Manifest::image_index_path(path))
}

pub fn load_image_index(path: &Path) -> Result<BTreeMap<String, String>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut index = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rel) = line
            .split_once('\t')
            .ok_or_else(|| DataError::parse(path, i + 1, "expected `id<TAB>path`"))?;
        if index.insert(id.to_string(), rel.to_string()).is_some() {
            return Err(DataError::parse(path, i + 1, format!("duplicate image id {id}")));
        }
    }
    Ok(index)
}

pub fn save_image_index(index: &BTreeMap<String, String>, path: &Path) -> Result<(), DataError> {
    let write = || -> io::Result<()> {
        let mut f = io::BufWriter::new(fs::File::create(path)?);
        for (id, rel) in index {
            writeln!(f, "{id}\t{rel}")?;
        }
        f.flush()
    };
    write().map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete_record(id: &str, a: &str, b: &str, p: usize) -> TripletRecord {
        let mut r = TripletRecord::new(id, a, b, Split::Train);
        for v in VariantKind::ALL {
            r.descriptions[v] = (0..p).map(|i| format!("{v} description {i}.")).collect();
        }
        r
    }

    fn minimal_manifest() -> Manifest {
        let mut m = Manifest::new("fixture", 3);
        m.records.push(complete_record("p0", "A", "B", 3));
        m.image_index.insert("A".into(), "a.png".into());
        m.image_index.insert("B".into(), "b.png".into());
        m
    }

    #[test]
    fn reverse_variant_table() {
        assert_eq!(reverse_variant(VariantKind::Original), VariantKind::Swapped);
        assert_eq!(reverse_variant(VariantKind::Mirrored), VariantKind::SwappedMirrored);
        for v in VariantKind::ALL {
            assert_eq!(reverse_variant(reverse_variant(v)), v);
        }
    }

    #[test]
    fn effective_roles_table() {
        let r = complete_record("p", "A", "B", 1);
        let n = Orientation::Normal;
        let f = Orientation::Flipped;
        let cases = [
            (VariantKind::Original, ("A", n), ("B", n)),
            (VariantKind::Swapped, ("B", n), ("A", n)),
            (VariantKind::Mirrored, ("A", f), ("B", f)),
            (VariantKind::SwappedMirrored, ("B", f), ("A", f)),
        ];
        for (v, q, t) in cases {
            let (query, target) = effective_roles(&r, v);
            assert_eq!(query, ImageKey::new(q.0, q.1), "{v}");
            assert_eq!(target, ImageKey::new(t.0, t.1), "{v}");
        }
    }

    #[test]
    fn reverse_variant_exchanges_roles() {
        let r = complete_record("p", "A", "B", 1);
        for v in VariantKind::ALL {
            let (q, t) = effective_roles(&r, v);
            assert_eq!(effective_roles(&r, v.reverse()), (t, q));
        }
    }

    #[test]
    fn swap_and_mirror_commute() {
        let s = VariantKind::Swapped;
        let m = VariantKind::Mirrored;
        assert_eq!(s.then(m), m.then(s));
        assert_eq!(s.then(m), VariantKind::SwappedMirrored);
    }

    #[test]
    fn header_only_manifest_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(&path, "{\"dataset_name\":\"empty\",\"paraphrase_count\":3,\"version\":1}\n").unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.records.len(), 0);
        assert_eq!(m.paraphrase_count, 3);
    }

    #[test]
    fn minimal_complete_record_round_trips_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let m = minimal_manifest();
        save_manifest(&m, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded, m);
        assert_eq!(loaded.records[0].description_count(), 12);

        let first = fs::read(&path).unwrap();
        let path2 = dir.path().join("again.jsonl");
        save_manifest(&loaded, &path2).unwrap();
        assert_eq!(first, fs::read(&path2).unwrap());
    }

    #[test]
    fn canonical_field_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        save_manifest(&minimal_manifest(), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let line = text.lines().nth(1).unwrap();
        let order = ["\"pair_id\"", "\"ref_image\"", "\"tgt_image\"", "\"split\"", "\"descriptions\"", "\"original\"", "\"swapped\"", "\"mirrored\"", "\"swapped_mirrored\""];
        let positions: Vec<usize> = order.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]), "{line}");
    }

    #[test]
    fn missing_variant_is_reported_with_pair_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        let mut m = minimal_manifest();
        m.records[0].descriptions[VariantKind::SwappedMirrored].clear();
        save_manifest(&m, &path).unwrap();
        match load_manifest(&path) {
            Err(DataError::Validation(v)) => {
                assert_eq!(
                    v,
                    vec![Violation::MissingVariant { pair_id: "p0".into(), variant: VariantKind::SwappedMirrored }]
                );
            }
            other => panic!("expected validation error, got {other:?}"),
        }
        let m = load_manifest_with(&path, LoadOptions { exclude_incomplete: true }).unwrap();
        assert!(m.records.is_empty());
    }

    #[test]
    fn every_violation_is_listed() {
        let mut m = minimal_manifest();
        let mut dup = complete_record("p0", "A", "Z", 3);
        dup.descriptions[VariantKind::Mirrored][1] = "two\nlines".into();
        dup.descriptions[VariantKind::Original].pop();
        m.records.push(dup);
        let v = m.validate();
        assert!(v.contains(&Violation::DuplicatePairId("p0".into())));
        assert!(v.contains(&Violation::UnknownImage { pair_id: "p0".into(), image: "Z".into() }));
        assert!(v.contains(&Violation::LineBreak { pair_id: "p0".into(), variant: VariantKind::Mirrored, index: 1 }));
        assert!(v.iter().any(|x| matches!(x, Violation::WrongCount { found: 2, .. })));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        fs::write(
            &path,
            "{\"dataset_name\":\"x\",\"paraphrase_count\":1,\"version\":1}\n\n{\"pair_id\": 3}\n",
        )
        .unwrap();
        match load_manifest(&path) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
