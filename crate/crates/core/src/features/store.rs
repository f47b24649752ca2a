//! File-backed image embeddings.
//!
//! Binary layout (little-endian): magic `CPRE`, `u32` version (1), `u32` dim,
//! `u64` row count, then `count × dim` `f32` values. A sibling text file
//! `<stem>.index.tsv` names each row as `image_id<TAB>orientation`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array1;

use super::FeatureError;
use crate::data::{ImageKey, Orientation};

const MAGIC: &[u8; 4] = b"CPRE";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    keys: Vec<ImageKey>,
    rows: Vec<Array1<f64>>,
    lookup: HashMap<ImageKey, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore { dim, keys: Vec::new(), rows: Vec::new(), lookup: HashMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Inserts or replaces a row. Rows keep their first insertion position.
    pub fn insert(&mut self, key: ImageKey, vector: Array1<f64>) -> Result<(), FeatureError> {
        if vector.len() != self.dim {
            return Err(FeatureError::Shape { expected: self.dim, found: vector.len() });
        }
        if !vector.iter().all(|x| x.is_finite()) {
            return Err(FeatureError::NonFinite(key));
        }
        match self.lookup.get(&key) {
            Some(&i) => self.rows[i] = vector,
            None => {
                self.lookup.insert(key.clone(), self.rows.len());
                self.keys.push(key);
                self.rows.push(vector);
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &ImageKey) -> Option<&Array1<f64>> {
        self.lookup.get(key).map(|&i| &self.rows[i])
    }

    pub fn get_id(&self, id: &str, orientation: Orientation) -> Option<&Array1<f64>> {
        self.get(&ImageKey::new(id, orientation))
    }

    pub fn contains(&self, key: &ImageKey) -> bool {
        self.lookup.contains_key(key)
    }

    pub fn keys(&self) -> &[ImageKey] {
        &self.keys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageKey, &Array1<f64>)> {
        self.keys.iter().zip(self.rows.iter())
    }

    pub fn index_path(path: &Path) -> PathBuf {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("store");
        path.with_file_name(format!("{stem}.index.tsv"))
    }

    /// Writes the binary store and its index. Values are narrowed to f32.
    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let io_err = |p: &Path| {
            let p = p.to_path_buf();
            move |source| FeatureError::Io { path: p, source }
        };
        let mut buf = Vec::with_capacity(HEADER_LEN + self.rows.len() * self.dim * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for row in &self.rows {
            for &x in row {
                buf.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        fs::write(path, buf).map_err(io_err(path))?;

        let index_path = Self::index_path(path);
        let file = fs::File::create(&index_path).map_err(io_err(&index_path))?;
        let mut w = BufWriter::new(file);
        for key in &self.keys {
            writeln!(w, "{}\t{}", key.id, key.orientation).map_err(io_err(&index_path))?;
        }
        w.flush().map_err(io_err(&index_path))
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let format = |message: String| FeatureError::Format { path: path.to_path_buf(), message };
        let bytes = fs::read(path).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })?;
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(format("not an embedding store (bad magic)".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(format(format!("unsupported version {version}")));
        }
        let dim = u32_at(8) as usize;
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + count * dim * 4;
        if bytes.len() != expected {
            return Err(format(format!("expected {expected} bytes for {count}×{dim}, found {}", bytes.len())));
        }

        let index_path = Self::index_path(path);
        let index = fs::read_to_string(&index_path)
            .map_err(|source| FeatureError::Io { path: index_path.clone(), source })?;
        let keys = index
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, line)| {
                let (id, o) = line.split_once('\t').ok_or_else(|| FeatureError::Format {
                    path: index_path.clone(),
                    message: format!("line {}: expected `id<TAB>orientation`", i + 1),
                })?;
                let orientation = Orientation::parse(o).ok_or_else(|| FeatureError::Format {
                    path: index_path.clone(),
                    message: format!("line {}: unknown orientation `{o}`", i + 1),
                })?;
                Ok(ImageKey::new(id, orientation))
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        if keys.len() != count {
            return Err(format(format!("index lists {} rows, store holds {count}", keys.len())));
        }

        let mut store = EmbeddingStore::new(dim);
        for (r, key) in keys.into_iter().enumerate() {
            if store.contains(&key) {
                return Err(FeatureError::DuplicateKey(key));
            }
            let start = HEADER_LEN + r * dim * 4;
            let row = Array1::from_iter(
                bytes[start..start + dim * 4]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
            );
            store.insert(key, row)?;
        }
        Ok(store)
    }
}
