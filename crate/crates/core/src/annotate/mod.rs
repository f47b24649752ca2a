//! MLLM annotation of pose pairs.
//!
//! Each pair is composited side by side four times (original, swapped,
//! mirrored, swapped and mirrored). Every composite goes through a body-part
//! stage followed by an integration stage that yields `P` paraphrases.
//! A pair whose any variant fails is dropped and listed in the drop report.

mod fixture;
mod parse;
mod pipeline;
mod prompts;
mod raster;

use std::path::PathBuf;

use thiserror::Error;

pub use fixture::{write_fixture, Fixture, FixtureConfig};
pub use parse::{
    parse_body_parts, parse_descriptions, parse_whole_transition, parse_yes_no, BodyPart, BodyPartDelta, ParseError,
    ParsedDescriptions,
};
pub use pipeline::{
    load_pairs, save_pairs, AnnotateConfig, AnnotateOutcome, Annotator, ImageLibrary, ImageSource, PairDrop,
    RequestLogEntry, Stage, StageMode,
};
pub use prompts::{count_word, PromptKind, PromptSet};
pub use raster::{compose_side_by_side, mirror_image, CompositeLayout, PairImage};

use crate::data::DataError;
use crate::gateway::GatewayError;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("unknown image id `{0}`")]
    UnknownImage(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl AnnotateError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AnnotateError::Io { path: path.into(), source }
    }
}
