//! Web search client with record/replay and a global request-rate budget.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::FactError;
use crate::fixture::FixtureStore;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub url: String,
    pub title: String,
    pub snippet: String,
    pub rank: u32,
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, FactError>;
}

/// Serper-compatible backend: POST `{"q", "num"}`, results under `organic`.
pub struct SerperBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl SerperBackend {
    pub const DEFAULT_BASE: &'static str = "https://google.serper.dev/search";

    pub fn new(url: &str, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        SerperBackend {
            agent,
            url: url.to_string(),
            api_key,
        }
    }

    /// Reads `SEARCH_API_KEY` (required) and `SEARCH_API_BASE`.
    pub fn from_env() -> Option<Self> {
        let key = std::env::var("SEARCH_API_KEY").ok()?;
        let base = std::env::var("SEARCH_API_BASE").unwrap_or_else(|_| Self::DEFAULT_BASE.to_string());
        Some(SerperBackend::new(&base, Some(key)))
    }
}

impl SearchBackend for SerperBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, FactError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("X-API-KEY", key);
        }
        let mut resp = req
            .send_json(json!({"q": query, "num": k}))
            .map_err(|e| FactError::Backend { status: 0, body: e.to_string() })?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| FactError::Backend { status, body: e.to_string() })?;
        if !(200..300).contains(&status) {
            return Err(FactError::Backend { status, body });
        }
        let value: Value =
            serde_json::from_str(&body).map_err(|e| FactError::Backend { status, body: e.to_string() })?;
        Ok(parse_organic(&value, k))
    }
}

/// Results from an `organic` array, re-ranked 1..=k in response order.
pub fn parse_organic(value: &Value, k: usize) -> Vec<SearchResult> {
    let field = |item: &Value, name: &str| item.get(name).and_then(Value::as_str).unwrap_or_default().to_string();
    value
        .get("organic")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .take(k)
                .enumerate()
                .map(|(i, item)| SearchResult {
                    url: field(item, "link"),
                    title: field(item, "title"),
                    snippet: field(item, "snippet"),
                    rank: i as u32 + 1,
                })
                .collect()
        })
        .unwrap_or_default()
}

pub fn search_key(query: &str, k: usize) -> String {
    crate::sha256_hex(format!("search\n{query}\n{k}"))
}

enum Mode {
    Live {
        backend: Arc<dyn SearchBackend>,
        record_to: Option<FixtureStore>,
    },
    Replay(FixtureStore),
}

pub struct SearchClient {
    mode: Mode,
    top_k: usize,
    cache: Mutex<HashMap<String, Vec<SearchResult>>>,
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl SearchClient {
    pub fn live(backend: Arc<dyn SearchBackend>, record_to: Option<FixtureStore>) -> Self {
        Self::new(Mode::Live { backend, record_to })
    }

    pub fn replay(store: FixtureStore) -> Self {
        Self::new(Mode::Replay(store))
    }

    fn new(mode: Mode) -> Self {
        SearchClient {
            mode,
            top_k: DEFAULT_TOP_K,
            cache: Mutex::new(HashMap::new()),
            min_interval: Duration::from_millis(200),
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = k.max(1);
        self
    }

    /// Caps live backend calls at `rps` per second across all threads.
    pub fn with_rate_limit(mut self, rps: f64) -> Self {
        self.min_interval = if rps > 0.0 { Duration::from_secs_f64(1.0 / rps) } else { Duration::ZERO };
        self
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn search(&self, query: &str) -> Result<Vec<SearchResult>, FactError> {
        let key = search_key(query, self.top_k);
        match &self.mode {
            Mode::Replay(store) => {
                let text = store.get(&key).ok_or_else(|| FactError::FixtureMiss(key.clone()))?;
                serde_json::from_str(&text).map_err(|e| FactError::Backend {
                    status: 0,
                    body: format!("corrupt search fixture {key}: {e}"),
                })
            }
            Mode::Live { backend, record_to } => {
                if let Some(hit) = self.cache.lock().unwrap_or_else(|p| p.into_inner()).get(&key) {
                    return Ok(hit.clone());
                }
                self.wait_for_slot();
                let results = backend.search(query, self.top_k)?;
                if let Some(store) = record_to {
                    let mut text = serde_json::to_string_pretty(&results).expect("results serialize");
                    text.push('\n');
                    store
                        .put(&key, &text, json!({"query": query, "k": self.top_k}))
                        .map_err(|e| FactError::Backend { status: 0, body: e.to_string() })?;
                }
                self.cache
                    .lock()
                    .unwrap_or_else(|p| p.into_inner())
                    .insert(key, results.clone());
                Ok(results)
            }
        }
    }

    fn wait_for_slot(&self) {
        let wait = {
            let mut next = self.next_slot.lock().unwrap_or_else(|p| p.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Backend answering from a fixed query → results table. Unknown queries
/// return no results.
pub struct StaticSearch(pub HashMap<String, Vec<SearchResult>>);

impl SearchBackend for StaticSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, FactError> {
        Ok(self.0.get(query).map(|r| r.iter().take(k).cloned().collect()).unwrap_or_default())
    }
}
