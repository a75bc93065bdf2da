//! File-backed, content-addressed report store.
//!
//! Each report lives in `<report_id>.json` (its canonical text); `index.json`
//! lists summaries of every stored report and is rewritten atomically.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixture::write_atomic;
use crate::model::{parse_report, serialize_report, DiagnosisReport, ModelError};

const INDEX: &str = "index.json";
const EXCERPT_CHARS: usize = 120;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("report {0} not found")]
    NotFound(String),
    #[error("report index is corrupt: {0}")]
    CorruptIndex(String),
    #[error("invalid report id `{0}`")]
    InvalidId(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub report_id: String,
    pub question_excerpt: String,
    pub created_at: DateTime<Utc>,
    pub step_count: usize,
    pub error_count: usize,
}

impl IndexEntry {
    fn of(report: &DiagnosisReport) -> Self {
        let mut excerpt: String = report.question.chars().take(EXCERPT_CHARS).collect();
        if report.question.chars().count() > EXCERPT_CHARS {
            excerpt.push('…');
        }
        IndexEntry {
            report_id: report.report_id.clone(),
            question_excerpt: excerpt,
            created_at: report.provenance.created_at,
            step_count: report.steps.len(),
            error_count: report.error_steps().len(),
        }
    }
}

#[derive(Debug)]
pub struct ReportStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

pub fn is_report_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

impl ReportStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ReportStore {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn report_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !is_report_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    /// Stores the canonical text of `report` and indexes it. Returns the id.
    pub fn put(&self, report: &DiagnosisReport) -> Result<String, StoreError> {
        let text = serialize_report(report)?;
        let stored = parse_report(&text)?;
        let id = stored.report_id.clone();
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        write_atomic(&self.report_path(&id)?, text.as_bytes())?;
        let mut index = match self.read_index() {
            Ok(index) => index,
            Err(StoreError::CorruptIndex(reason)) => {
                log::warn!("rebuilding corrupt report index: {reason}");
                self.scan()?
            }
            Err(e) => return Err(e),
        };
        index.insert(id.clone(), IndexEntry::of(&stored));
        self.write_index(&index)?;
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<DiagnosisReport, StoreError> {
        Ok(parse_report(&self.get_raw(id)?)?)
    }

    /// Exact stored bytes of a report.
    pub fn get_raw(&self, id: &str) -> Result<String, StoreError> {
        let path = self.report_path(id).map_err(|_| StoreError::NotFound(id.to_string()))?;
        match fs::read_to_string(path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    /// Index entries, newest first. A corrupt index is rebuilt from the
    /// report files.
    pub fn list(&self) -> Result<Vec<IndexEntry>, StoreError> {
        let index = match self.read_index() {
            Ok(index) => index,
            Err(StoreError::CorruptIndex(reason)) => {
                log::warn!("rebuilding corrupt report index: {reason}");
                let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
                let index = self.scan()?;
                self.write_index(&index)?;
                index
            }
            Err(e) => return Err(e),
        };
        let mut entries: Vec<IndexEntry> = index.into_values().collect();
        entries.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.report_id.cmp(&b.report_id)));
        Ok(entries)
    }

    fn read_index(&self) -> Result<BTreeMap<String, IndexEntry>, StoreError> {
        match fs::read_to_string(self.dir.join(INDEX)) {
            Ok(text) => {
                let entries: Vec<IndexEntry> =
                    serde_json::from_str(&text).map_err(|e| StoreError::CorruptIndex(e.to_string()))?;
                Ok(entries.into_iter().map(|e| (e.report_id.clone(), e)).collect())
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e.into()),
        }
    }

    fn write_index(&self, index: &BTreeMap<String, IndexEntry>) -> Result<(), StoreError> {
        let entries: Vec<&IndexEntry> = index.values().collect();
        let mut text = serde_json::to_string_pretty(&entries).expect("index serializes");
        text.push('\n');
        write_atomic(&self.dir.join(INDEX), text.as_bytes())?;
        Ok(())
    }

    /// Rebuilds the index from the report files on disk.
    fn scan(&self) -> Result<BTreeMap<String, IndexEntry>, StoreError> {
        let mut index = BTreeMap::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            if !is_report_id(stem) || path.extension().is_none_or(|e| e != "json") {
                continue;
            }
            match fs::read_to_string(&path).map_err(StoreError::from).and_then(|t| Ok(parse_report(&t)?)) {
                Ok(report) => {
                    index.insert(report.report_id.clone(), IndexEntry::of(&report));
                }
                Err(e) => log::warn!("skipping unreadable report {}: {e}", path.display()),
            }
        }
        Ok(index)
    }
}
