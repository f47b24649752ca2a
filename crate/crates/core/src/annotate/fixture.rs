//! A small self-contained annotation corpus plus the mock script that
//! answers every request it generates.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

use super::pipeline::save_pairs;
use super::raster::{compose_side_by_side, mirror_image, CompositeLayout, PairImage};
use super::AnnotateError;
use crate::data::{save_image_index, Split, TripletRecord, VariantKind};
use crate::gateway::{image_digest, MockScript, ScriptEntry};

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub pairs: usize,
    pub paraphrases: usize,
    /// Index of a pair whose first request is refused.
    pub refuse: Option<usize>,
    pub layout: CompositeLayout,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig { pairs: 10, paraphrases: 3, refuse: None, layout: CompositeLayout::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub records: Vec<TripletRecord>,
    pub images: BTreeMap<String, PairImage>,
    /// image id -> `images/<id>.png`
    pub image_index: BTreeMap<String, String>,
    pub script: Vec<ScriptEntry>,
}

/// Draws a blocky asymmetric figure so that mirroring changes the pixels.
/// Drawn at the composite height so compositing needs no resampling.
fn figure(seed: usize, height: u32) -> PairImage {
    let unit = (height / 64).max(1);
    let (w, h) = (48 * unit, 64 * unit);
    let s = seed as u32;
    let body = Rgb([(40 + 23 * s % 180) as u8, (200 - 17 * s % 150) as u8, (90 + 31 * s % 120) as u8]);
    let arm_y = 10 + (s * 7) % 30;
    let leg_x = 14 + (s * 5) % 16;
    PairImage::new(RgbImage::from_fn(w, h, |px, py| {
        let (x, y) = (px / unit, py / unit);
        let torso = (18..30).contains(&x) && (12..40).contains(&y);
        let head = (20..28).contains(&x) && (2..10).contains(&y);
        let arm = (30..44).contains(&x) && (arm_y..arm_y + 4).contains(&y);
        let leg = (leg_x..leg_x + 4).contains(&x) && (40..62).contains(&y);
        if torso || head || arm || leg {
            body
        } else {
            Rgb([235, 235, 235])
        }
    }))
}

fn movement(variant: VariantKind) -> [(&'static str, &'static str); 2] {
    let (arm, knee) = if variant.is_mirrored() { ("Left Arm", "Right Knee") } else { ("Right Arm", "Left Knee") };
    if variant.is_swapped() {
        [(arm, "Lower"), (knee, "Straighten")]
    } else {
        [(arm, "Raise"), (knee, "Bend")]
    }
}

fn stage1_reply(pair_id: &str, variant: VariantKind) -> String {
    let marker = format!("[{pair_id}/{}]", variant.key());
    movement(variant)
        .iter()
        .enumerate()
        .map(|(i, (part, verb))| format!("{}. {part}: {verb} the {} {marker}.", i + 1, part.to_lowercase()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn stage2_reply(variant: VariantKind, count: usize) -> String {
    const MANNER: [&str; 6] = ["slowly", "smoothly", "in one motion", "with control", "gently", "steadily"];
    let [(arm, arm_verb), (knee, knee_verb)] = movement(variant);
    (1..=count)
        .map(|k| {
            let manner = MANNER.get(k - 1).map(|m| m.to_string()).unwrap_or_else(|| format!("at pace {k}"));
            format!(
                "Description {k}: {arm_verb} your {} and {} your {} {manner}.",
                arm.to_lowercase(),
                knee_verb.to_lowercase(),
                knee.to_lowercase()
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

impl Fixture {
    pub fn build(cfg: &FixtureConfig) -> Result<Self, AnnotateError> {
        let mut records = Vec::new();
        let mut images = BTreeMap::new();
        let mut image_index = BTreeMap::new();
        let mut script = Vec::new();
        for i in 0..cfg.pairs {
            let pair_id = format!("pair{i:02}");
            let (a, b) = (format!("img{i:02}a"), format!("img{i:02}b"));
            let (ra, rb) = (figure(2 * i, cfg.layout.height), figure(2 * i + 1, cfg.layout.height));
            let (ma, mb) = (mirror_image(&ra), mirror_image(&rb));
            let composites = [
                compose_side_by_side(&ra, &rb, cfg.layout)?,
                compose_side_by_side(&rb, &ra, cfg.layout)?,
                compose_side_by_side(&ma, &mb, cfg.layout)?,
                compose_side_by_side(&mb, &ma, cfg.layout)?,
            ];
            for (variant, composite) in VariantKind::ALL.into_iter().zip(&composites) {
                let digest = image_digest(&composite.to_png());
                if cfg.refuse == Some(i) && variant == VariantKind::Original {
                    script.push(ScriptEntry::refuse().matching(digest));
                    continue;
                }
                script.push(ScriptEntry::reply(stage1_reply(&pair_id, variant)).matching(digest));
                script.push(
                    ScriptEntry::reply(stage2_reply(variant, cfg.paraphrases))
                        .matching(format!("[{pair_id}/{}]", variant.key())),
                );
            }
            for (id, img) in [(a.clone(), ra), (b.clone(), rb)] {
                image_index.insert(id.clone(), format!("images/{id}.png"));
                images.insert(id, img);
            }
            let split = if i % 5 == 4 { Split::Test } else { Split::Train };
            records.push(TripletRecord::new(pair_id, a, b, split));
        }
        Ok(Fixture { records, images, image_index, script })
    }
}

/// Writes `images/`, `images.tsv`, `pairs.tsv` and `script.jsonl` into `dir`.
pub fn write_fixture(dir: &Path, cfg: &FixtureConfig) -> Result<Fixture, AnnotateError> {
    let fixture = Fixture::build(cfg)?;
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| AnnotateError::io(&image_dir, e))?;
    for (id, img) in &fixture.images {
        let path = dir.join(&fixture.image_index[id]);
        fs::write(&path, img.to_png()).map_err(|e| AnnotateError::io(&path, e))?;
    }
    save_image_index(&fixture.image_index, &dir.join("images.tsv"))?;
    save_pairs(&fixture.records, &dir.join("pairs.tsv"))?;
    let script = dir.join("script.jsonl");
    fs::write(&script, MockScript::to_jsonl(&fixture.script)).map_err(|e| AnnotateError::io(&script, e))?;
    Ok(fixture)
}
