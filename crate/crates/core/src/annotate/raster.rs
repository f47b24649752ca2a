use image::codecs::png::{CompressionType, FilterType as PngFilter, PngEncoder};
use image::imageops::{self, FilterType};
use image::{ExtendedColorType, ImageEncoder, Rgb, RgbImage};

use super::AnnotateError;

/// An RGB raster handed to the MLLM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairImage {
    pub pixels: RgbImage,
}

impl PairImage {
    pub fn new(pixels: RgbImage) -> Self {
        PairImage { pixels }
    }

    pub fn width(&self) -> u32 {
        self.pixels.width()
    }

    pub fn height(&self) -> u32 {
        self.pixels.height()
    }

    /// Decodes any supported encoding (PNG in this build) into RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self, AnnotateError> {
        let img = image::load_from_memory(bytes).map_err(|e| AnnotateError::Decode(e.to_string()))?;
        Ok(PairImage { pixels: img.to_rgb8() })
    }

    pub fn open(path: &std::path::Path) -> Result<Self, AnnotateError> {
        let bytes = std::fs::read(path).map_err(|e| AnnotateError::Decode(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes).map_err(|e| AnnotateError::Decode(format!("{}: {e}", path.display())))
    }

    /// Deterministic PNG bytes; the request cache keys on them.
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        PngEncoder::new_with_quality(&mut out, CompressionType::Fast, PngFilter::Adaptive)
            .write_image(self.pixels.as_raw(), self.width(), self.height(), ExtendedColorType::Rgb8)
            .expect("in-memory PNG encoding");
        out
    }
}

/// Layout of a composited pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompositeLayout {
    pub height: u32,
    pub gutter: u32,
}

impl Default for CompositeLayout {
    fn default() -> Self {
        CompositeLayout { height: 512, gutter: 16 }
    }
}

fn scaled_to_height(img: &PairImage, height: u32) -> RgbImage {
    if img.height() == height {
        return img.pixels.clone();
    }
    let width = ((img.width() as u64 * height as u64 + img.height() as u64 / 2) / img.height() as u64).max(1) as u32;
    imageops::resize(&img.pixels, width, height, FilterType::Triangle)
}

/// Reference on the left, target on the right, both scaled to the layout
/// height and separated by a white gutter.
pub fn compose_side_by_side(reference: &PairImage, target: &PairImage, layout: CompositeLayout) -> Result<PairImage, AnnotateError> {
    for img in [reference, target] {
        if img.width() == 0 || img.height() == 0 {
            return Err(AnnotateError::Decode("empty image".into()));
        }
    }
    let left = scaled_to_height(reference, layout.height);
    let right = scaled_to_height(target, layout.height);
    let width = left.width() + layout.gutter + right.width();
    let mut canvas = RgbImage::from_pixel(width, layout.height, Rgb([255, 255, 255]));
    imageops::replace(&mut canvas, &left, 0, 0);
    imageops::replace(&mut canvas, &right, (left.width() + layout.gutter) as i64, 0);
    Ok(PairImage { pixels: canvas })
}

/// Horizontal flip.
pub fn mirror_image(img: &PairImage) -> PairImage {
    PairImage { pixels: imageops::flip_horizontal(&img.pixels) }
}
