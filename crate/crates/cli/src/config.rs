//! Shared key-value config file. Every key is optional; a flag given on the
//! command line wins over the file, the file wins over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub cache: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub gallery: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub paraphrases: Option<usize>,
    pub workers: Option<usize>,
    pub attempts: Option<u32>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub pairs: PairsSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lambda: Option<f64>,
    pub omega: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub phase: Option<String>,
    pub merger: Option<String>,
    pub variants: Option<Vec<String>>,
    pub cyclic: Option<bool>,
    pub raw_dim: Option<usize>,
    pub train_bias: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairsSection {
    pub frame_stride: Option<usize>,
    pub distance_lo: Option<f64>,
    pub distance_hi: Option<f64>,
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub ks: Option<Vec<usize>>,
    pub all_paraphrases: Option<bool>,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

/// Resolved value of an optional setting.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}

/// Resolved path that must exist when the command starts.
pub fn existing_path(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    let path = flag
        .or_else(|| file.clone())
        .ok_or_else(|| CliError::Validation(format!("missing {what} (flag or config key)")))?;
    if !path.exists() {
        return Err(CliError::Validation(format!("{what} {} does not exist", path.display())));
    }
    Ok(path)
}

/// Creates the run directory and writes the resolved settings into
/// `config.snapshot.toml`.
pub fn start_run<S: Serialize>(dir: &Path, command: &str, settings: &S) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    #[derive(Serialize)]
    struct Snapshot<'a, S> {
        command: &'a str,
        settings: &'a S,
    }
    let text = toml::to_string(&Snapshot { command, settings })
        .map_err(|e| CliError::Runtime(format!("cannot serialize config snapshot: {e}")))?;
    write_file(&dir.join("config.snapshot.toml"), text)
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
