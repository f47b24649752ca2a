use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
struct LogLine {
    key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    evict: bool,
}

/// Response cache, optionally persisted as an append-only JSONL log.
/// Readers run concurrently; writers are serialized.
pub struct ResponseCache {
    entries: RwLock<HashMap<u64, String>>,
    log: Option<Mutex<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache { entries: RwLock::new(HashMap::new()), log: None }
    }

    /// Replays an existing log (if any) and appends to it from now on.
    pub fn open(path: &Path) -> io::Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: LogLine = match serde_json::from_str(&line) {
                    Ok(p) => p,
                    Err(e) => {
                        // a torn final write after a crash
                        log::warn!("{}:{}: skipping unreadable cache line: {e}", path.display(), i + 1);
                        continue;
                    }
                };
                let Ok(key) = u64::from_str_radix(&parsed.key, 16) else { continue };
                match (parsed.evict, parsed.text) {
                    (true, _) => {
                        entries.remove(&key);
                    }
                    (false, Some(text)) => {
                        entries.insert(key, text);
                    }
                    _ => {}
                }
            }
        } else if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ResponseCache { entries: RwLock::new(entries), log: Some(Mutex::new(file)) })
    }

    pub fn get(&self, key: u64) -> Option<String> {
        self.entries.read().unwrap().get(&key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: u64, text: &str) {
        let mut entries = self.entries.write().unwrap();
        if let Some(old) = entries.get(&key) {
            if old != text {
                log::warn!("cache key {key:016x} collision; keeping the newer response");
            }
        }
        entries.insert(key, text.to_string());
        self.append(LogLine { key: format!("{key:016x}"), text: Some(text.to_string()), evict: false });
    }

    pub fn evict(&self, key: u64) {
        let mut entries = self.entries.write().unwrap();
        if entries.remove(&key).is_some() {
            self.append(LogLine { key: format!("{key:016x}"), text: None, evict: true });
        }
    }

    fn append(&self, line: LogLine) {
        if let Some(log) = &self.log {
            let mut f = log.lock().unwrap();
            let mut bytes = serde_json::to_vec(&line).expect("cache line serializes");
            bytes.push(b'\n');
            if let Err(e) = f.write_all(&bytes).and_then(|_| f.flush()) {
                log::warn!("failed to append to response cache: {e}");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_replays_puts_and_evictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let c = ResponseCache::open(&path).unwrap();
            c.put(1, "one");
            c.put(2, "two");
            c.evict(1);
            c.put(2, "two again");
        }
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(1), None);
        assert_eq!(c.get(2).as_deref(), Some("two again"));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn torn_line_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        fs::write(&path, "{\"key\":\"000000000000000a\",\"text\":\"ten\"}\n{\"key\":\"00").unwrap();
        let c = ResponseCache::open(&path).unwrap();
        assert_eq!(c.get(10).as_deref(), Some("ten"));
    }
}
