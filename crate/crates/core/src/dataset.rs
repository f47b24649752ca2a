//! Keypoint-driven pair selection and description-corpus filtering.
//!
//! Keypoints follow the 17-joint COCO order; the hip centre is the mean of
//! joints 11 and 12, the shoulder centre the mean of joints 5 and 6.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{AnnotateError, Annotator};
use crate::data::{Split, TripletRecord};

pub const DEFAULT_JOINTS: usize = 17;
const LEFT_SHOULDER: usize = 5;
const RIGHT_SHOULDER: usize = 6;
const LEFT_HIP: usize = 11;
const RIGHT_HIP: usize = 12;
/// Fewer qualifying joints than this make the distance infinite.
pub const MIN_QUALIFYING_JOINTS: usize = 4;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("joint count mismatch: {0} vs {1}")]
    Shape(usize, usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointFrame {
    pub frame_index: u64,
    /// `(x, y, confidence)` in image coordinates.
    pub joints: Vec<[f64; 3]>,
}

impl KeypointFrame {
    pub fn new(frame_index: u64, joints: Vec<[f64; 3]>) -> Self {
        KeypointFrame { frame_index, joints }
    }

    fn xy(&self, j: usize) -> [f64; 2] {
        [self.joints[j][0], self.joints[j][1]]
    }

    fn confident(&self, j: usize, min_confidence: f64) -> bool {
        self.joints[j][2] >= min_confidence
    }

    /// Hip centre and torso length, if the four anchors are confident and
    /// the torso is non-degenerate.
    fn frame_normalizer(&self, min_confidence: f64) -> Option<([f64; 2], f64)> {
        if self.joints.len() <= RIGHT_HIP {
            return None;
        }
        if ![LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP].iter().all(|&j| self.confident(j, min_confidence)) {
            return None;
        }
        let mid = |a: [f64; 2], b: [f64; 2]| [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
        let hip = mid(self.xy(LEFT_HIP), self.xy(RIGHT_HIP));
        let shoulder = mid(self.xy(LEFT_SHOULDER), self.xy(RIGHT_SHOULDER));
        let torso = (shoulder[0] - hip[0]).hypot(shoulder[1] - hip[1]);
        (torso > 0.0 && torso.is_finite()).then_some((hip, torso))
    }
}

/// Mean Euclidean distance over jointly confident joints after hip-centring
/// and torso-length scaling of each frame. Infinite when the anchors are not
/// usable or fewer than [`MIN_QUALIFYING_JOINTS`] joints qualify.
pub fn pose_distance(a: &KeypointFrame, b: &KeypointFrame, min_confidence: f64) -> Result<f64, DatasetError> {
    if a.joints.len() != b.joints.len() {
        return Err(DatasetError::Shape(a.joints.len(), b.joints.len()));
    }
    let (Some((ca, sa)), Some((cb, sb))) = (a.frame_normalizer(min_confidence), b.frame_normalizer(min_confidence)) else {
        return Ok(f64::INFINITY);
    };
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 0..a.joints.len() {
        if !(a.confident(j, min_confidence) && b.confident(j, min_confidence)) {
            continue;
        }
        let pa = a.xy(j);
        let pb = b.xy(j);
        let dx = (pa[0] - ca[0]) / sa - (pb[0] - cb[0]) / sb;
        let dy = (pa[1] - ca[1]) / sa - (pb[1] - cb[1]) / sb;
        sum += dx.hypot(dy);
        n += 1;
    }
    if n < MIN_QUALIFYING_JOINTS {
        return Ok(f64::INFINITY);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSelectionConfig {
    pub frame_stride: usize,
    /// Inclusive `[lo, hi]`.
    pub distance_range: (f64, f64),
    pub min_confidence: f64,
}

impl Default for PairSelectionConfig {
    fn default() -> Self {
        PairSelectionConfig { frame_stride: 15, distance_range: (0.1, 2.0), min_confidence: 0.3 }
    }
}

impl PairSelectionConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let (lo, hi) = self.distance_range;
        if self.frame_stride == 0 {
            return Err(DatasetError::Config("frame stride must be at least 1".into()));
        }
        if lo.is_nan() || hi.is_nan() || lo >= hi || lo < 0.0 {
            return Err(DatasetError::Config(format!("distance range [{lo}, {hi}] must satisfy 0 <= lo < hi")));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(DatasetError::Config(format!("min confidence {} is outside [0, 1]", self.min_confidence)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCandidate {
    pub ref_frame: u64,
    pub tgt_frame: u64,
    pub distance: f64,
}

/// The stride candidates of a sequence, before distance gating.
pub fn stride_candidates(sequence: &[KeypointFrame], stride: usize) -> Vec<(usize, usize)> {
    let kept: Vec<usize> = (0..sequence.len()).step_by(stride.max(1)).collect();
    kept.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Consecutive kept frames (every `frame_stride`-th, starting at the first)
/// whose pose distance lies in the configured range, in temporal order.
pub fn select_pairs(sequence: &[KeypointFrame], cfg: &PairSelectionConfig) -> Result<Vec<PairCandidate>, DatasetError> {
    cfg.validate()?;
    let (lo, hi) = cfg.distance_range;
    let mut out = Vec::new();
    for (i, j) in stride_candidates(sequence, cfg.frame_stride) {
        let (a, b) = (&sequence[i], &sequence[j]);
        let d = pose_distance(a, b, cfg.min_confidence)?;
        if (lo..=hi).contains(&d) {
            out.push(PairCandidate { ref_frame: a.frame_index, tgt_frame: b.frame_index, distance: d });
        }
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct KeypointLine {
    sequence: String,
    frame_index: u64,
    joints: Vec<[f64; 3]>,
}

/// Reads `{"sequence", "frame_index", "joints"}` lines, groups them by
/// sequence and sorts each sequence by frame index.
pub fn load_keypoints(path: &Path) -> Result<BTreeMap<String, Vec<KeypointFrame>>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out: BTreeMap<String, Vec<KeypointFrame>> = BTreeMap::new();
    let mut joints: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| DatasetError::Parse { path: path.to_path_buf(), line: i + 1, message };
        let rec: KeypointLine = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if *joints.get_or_insert(rec.joints.len()) != rec.joints.len() {
            return Err(bad(format!("{} joints, expected {}", rec.joints.len(), joints.unwrap())));
        }
        if rec.joints.iter().any(|j| !(0.0..=1.0).contains(&j[2])) {
            return Err(bad("confidence outside [0, 1]".into()));
        }
        out.entry(rec.sequence).or_default().push(KeypointFrame::new(rec.frame_index, rec.joints));
    }
    for frames in out.values_mut() {
        frames.sort_by_key(|f| f.frame_index);
    }
    Ok(out)
}

/// Image id of a frame, `<sequence>_<frame:06>`.
pub fn frame_image_id(sequence: &str, frame: u64) -> String {
    format!("{sequence}_{frame:06}")
}

/// Turns candidates into records awaiting annotation.
pub fn candidate_records(sequence: &str, candidates: &[PairCandidate], split: Split) -> Vec<TripletRecord> {
    candidates
        .iter()
        .map(|c| {
            TripletRecord::new(
                format!("{sequence}_{:06}_{:06}", c.ref_frame, c.tgt_frame),
                frame_image_id(sequence, c.ref_frame),
                frame_image_id(sequence, c.tgt_frame),
                split,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusPartition {
    pub kept: Vec<(String, String)>,
    pub removed: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AuditLine {
    id: String,
    keep: bool,
}

/// Reads `id<TAB>description` lines.
pub fn load_corpus(path: &Path) -> Result<Vec<(String, String)>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, desc) = line.split_once('\t').ok_or_else(|| DatasetError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: "expected `id<TAB>description`".into(),
        })?;
        out.push((id.to_string(), desc.to_string()));
    }
    Ok(out)
}

pub fn save_corpus(items: &[(String, String)], path: &Path) -> Result<(), DatasetError> {
    let body: String = items.iter().map(|(id, d)| format!("{id}\t{d}\n")).collect();
    fs::write(path, body).map_err(io_err(path))
}

fn read_audit(path: &Path) -> Result<HashMap<String, bool>, DatasetError> {
    let mut done = HashMap::new();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(done),
        Err(e) => return Err(io_err(path)(e)),
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<AuditLine>(line) {
            Ok(a) => {
                done.insert(a.id, a.keep);
            }
            // a torn final line from an interrupted run is redone
            Err(_) if i + 1 == text.lines().count() => log::warn!("ignoring torn audit line {}", i + 1),
            Err(e) => {
                return Err(DatasetError::Parse { path: path.to_path_buf(), line: i + 1, message: e.to_string() });
            }
        }
    }
    Ok(done)
}

/// Runs the environment filter over a corpus. Every decision is appended to
/// the audit file as it is made; items already in the audit file are not
/// asked again, so a rerun after an interruption resumes where it stopped.
pub fn filter_corpus(
    items: &[(String, String)],
    annotator: &Annotator,
    audit: &Path,
) -> Result<CorpusPartition, DatasetError> {
    let mut done = read_audit(audit)?;
    let mut file = OpenOptions::new().create(true).append(true).open(audit).map_err(io_err(audit))?;
    for (id, text) in items {
        if done.contains_key(id) {
            continue;
        }
        let keep = annotator.filter_environment(text)?;
        let line = serde_json::to_string(&AuditLine { id: id.clone(), keep }).expect("audit line serializes");
        writeln!(file, "{line}").and_then(|_| file.flush()).map_err(io_err(audit))?;
        done.insert(id.clone(), keep);
    }
    let mut out = CorpusPartition::default();
    for item in items {
        if done[&item.0] {
            out.kept.push(item.clone());
        } else {
            out.removed.push(item.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A standing figure: hips at y=0, shoulders at y=-1 (torso length 1).
    fn base_frame(index: u64) -> KeypointFrame {
        let mut joints = vec![[0.0, 0.0, 1.0]; DEFAULT_JOINTS];
        for (j, p) in joints.iter_mut().enumerate() {
            p[0] = (j as f64 * 0.37).sin() * 0.4;
            p[1] = -(j as f64) * 0.1 + 0.5;
        }
        joints[LEFT_SHOULDER] = [-0.2, -1.0, 1.0];
        joints[RIGHT_SHOULDER] = [0.2, -1.0, 1.0];
        joints[LEFT_HIP] = [-0.15, 0.0, 1.0];
        joints[RIGHT_HIP] = [0.15, 0.0, 1.0];
        KeypointFrame::new(index, joints)
    }

    fn transformed(f: &KeypointFrame, scale: f64, shift: [f64; 2]) -> KeypointFrame {
        let joints = f.joints.iter().map(|p| [p[0] * scale + shift[0], p[1] * scale + shift[1], p[2]]).collect();
        KeypointFrame::new(f.frame_index, joints)
    }

    #[test]
    fn identity_translation_and_scale() {
        let a = base_frame(0);
        assert_eq!(pose_distance(&a, &a, 0.3).unwrap(), 0.0);
        let b = transformed(&a, 1.0, [100.0, 50.0]);
        assert!(pose_distance(&a, &b, 0.3).unwrap() < 1e-12);
        let c = transformed(&a, 240.0, [320.0, 180.0]);
        assert!(pose_distance(&a, &c, 0.3).unwrap() < 1e-12);
    }

    #[test]
    fn one_wrist_moved_half_a_torso() {
        let a = transformed(&base_frame(0), 80.0, [300.0, 200.0]);
        let mut b = a.clone();
        // right wrist (joint 10), moved 0.5 torso lengths = 40 px
        b.joints[10][0] += 0.3 * 80.0;
        b.joints[10][1] += 0.4 * 80.0;
        let d = pose_distance(&a, &b, 0.3).unwrap();
        assert!((d - 0.5 / 17.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn confidence_gating() {
        let a = base_frame(0);
        let mut b = a.clone();
        b.joints[10][0] += 1.0;
        b.joints[10][2] = 0.1;
        // the moved joint no longer qualifies
        assert_eq!(pose_distance(&a, &b, 0.3).unwrap(), 0.0);
        let mut c = a.clone();
        for j in 0..DEFAULT_JOINTS {
            if ![LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP].contains(&j) {
                c.joints[j][2] = 0.0;
            }
        }
        assert_eq!(pose_distance(&a, &c, 0.3).unwrap(), f64::INFINITY);
        let mut flat = a.clone();
        flat.joints[LEFT_SHOULDER] = flat.joints[LEFT_HIP];
        flat.joints[RIGHT_SHOULDER] = flat.joints[RIGHT_HIP];
        assert_eq!(pose_distance(&a, &flat, 0.3).unwrap(), f64::INFINITY);
    }

    #[test]
    fn shape_mismatch() {
        let a = base_frame(0);
        let b = KeypointFrame::new(1, vec![[0.0, 0.0, 1.0]; 12]);
        assert!(matches!(pose_distance(&a, &b, 0.3), Err(DatasetError::Shape(17, 12))));
    }

    #[test]
    fn symmetric() {
        let a = base_frame(0);
        let mut b = transformed(&a, 3.0, [5.0, -2.0]);
        b.joints[0][0] += 1.7;
        b.joints[15][1] -= 0.9;
        assert_eq!(pose_distance(&a, &b, 0.3).unwrap(), pose_distance(&b, &a, 0.3).unwrap());
    }

    #[test]
    fn stride_arithmetic() {
        let seq: Vec<KeypointFrame> = (0..31).map(base_frame).collect();
        let c = stride_candidates(&seq, 15);
        assert_eq!(c, [(0, 15), (15, 30)]);
        // identical frames fall under the lower bound
        assert!(select_pairs(&seq, &PairSelectionConfig::default()).unwrap().is_empty());
        assert!(stride_candidates(&seq[..15], 15).is_empty());
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            PairSelectionConfig { frame_stride: 0, ..Default::default() },
            PairSelectionConfig { distance_range: (2.0, 0.1), ..Default::default() },
            PairSelectionConfig { min_confidence: 1.5, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn records_from_candidates() {
        let c = [PairCandidate { ref_frame: 15, tgt_frame: 30, distance: 0.5 }];
        let r = candidate_records("gBR_sBM_c01", &c, Split::Test);
        assert_eq!(r[0].pair_id, "gBR_sBM_c01_000015_000030");
        assert_eq!(r[0].ref_image, "gBR_sBM_c01_000015");
    }

    #[test]
    fn keypoint_file_grouping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kp.jsonl");
        let joints = serde_json::to_string(&base_frame(0).joints).unwrap();
        let body = format!(
            "{{\"sequence\":\"b\",\"frame_index\":15,\"joints\":{joints}}}\n\
             {{\"sequence\":\"b\",\"frame_index\":0,\"joints\":{joints}}}\n\
             {{\"sequence\":\"a\",\"frame_index\":3,\"joints\":{joints}}}\n"
        );
        fs::write(&path, body).unwrap();
        let seqs = load_keypoints(&path).unwrap();
        assert_eq!(seqs.keys().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(seqs["b"].iter().map(|f| f.frame_index).collect::<Vec<_>>(), [0, 15]);
        fs::write(&path, "{\"sequence\":\"a\",\"frame_index\":0,\"joints\":[[0,0,2]]}\n").unwrap();
        assert!(load_keypoints(&path).is_err());
    }
}
