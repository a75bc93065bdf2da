//! Record/replay store shared by the LLM, search and solver clients.
//!
//! Layout: one `<key>.txt` file per recorded response plus a
//! `manifest.json` mapping each key to a short request summary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::Value;

const MANIFEST: &str = "manifest.json";

#[derive(Debug)]
pub struct FixtureStore {
    dir: PathBuf,
    manifest: Mutex<BTreeMap<String, Value>>,
}

impl FixtureStore {
    /// Opens (and creates, if missing) a store rooted at `dir`.
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let manifest = match fs::read_to_string(dir.join(MANIFEST)) {
            Ok(text) => serde_json::from_str(&text)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e),
        };
        Ok(FixtureStore {
            dir,
            manifest: Mutex::new(manifest),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if !is_safe_key(key) {
            return None;
        }
        fs::read_to_string(self.dir.join(format!("{key}.txt"))).ok()
    }

    pub fn put(&self, key: &str, text: &str, summary: Value) -> io::Result<()> {
        if !is_safe_key(key) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "unsafe fixture key"));
        }
        let mut manifest = self.manifest.lock().unwrap_or_else(|p| p.into_inner());
        write_atomic(&self.dir.join(format!("{key}.txt")), text.as_bytes())?;
        manifest.insert(key.to_string(), summary);
        let mut body = serde_json::to_string_pretty(&*manifest)?;
        body.push('\n');
        write_atomic(&self.dir.join(MANIFEST), body.as_bytes())
    }

    pub fn keys(&self) -> Vec<String> {
        self.manifest
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect()
    }
}

fn is_safe_key(key: &str) -> bool {
    !key.is_empty() && key.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Write-temp-then-rename within the target directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
