//! Provider-agnostic LLM completion client.
//!
//! Requests are rendered from named templates, keyed by a hash of the
//! rendered prompt plus model parameters, and answered either by a live
//! backend (with an in-memory cache and optional recording to a fixture
//! store) or strictly from a recorded fixture store.

mod extract;
mod template;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::fixture::FixtureStore;

pub use extract::{extract_json, ExtractError};
pub use template::{render, PromptTemplate, TemplateName, PREMISE_FEWSHOT};

pub const DEFAULT_MODEL: &str = "gpt-5";
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("missing template variable `{0}`")]
    MissingVariable(String),
    #[error("no recorded response for cache key {0}")]
    FixtureMiss(String),
    #[error("backend returned status {status}: {body}")]
    BackendError { status: u16, body: String },
    #[error("backend rate limit persisted after retries")]
    RateLimited,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("fixture store i/o: {0}")]
    Store(String),
}

/// Failure reported by a raw backend call, before retry policy is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendFailure {
    RateLimited,
    Status(u16, String),
    Transport(String),
}

impl BackendFailure {
    fn retryable(&self) -> bool {
        match self {
            BackendFailure::RateLimited | BackendFailure::Transport(_) => true,
            BackendFailure::Status(code, _) => *code >= 500,
        }
    }

    fn into_error(self) -> GatewayError {
        match self {
            BackendFailure::RateLimited => GatewayError::RateLimited,
            BackendFailure::Status(status, body) => GatewayError::BackendError { status, body },
            BackendFailure::Transport(body) => GatewayError::BackendError { status: 0, body },
        }
    }
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, model_id: &str, max_output_tokens: u32) -> Result<String, BackendFailure>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub template: TemplateName,
    pub variables: BTreeMap<String, String>,
    pub model_id: String,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub cache_key: String,
    pub response_text: String,
    /// True when the response came from a recording or cache, not the backend.
    pub recorded: bool,
}

pub fn cache_key(prompt: &str, model_id: &str, max_output_tokens: u32) -> String {
    crate::sha256_hex(format!("{prompt}\u{0}{model_id}\u{0}{max_output_tokens}"))
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub model_id: String,
    pub max_output_tokens: u32,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            model_id: DEFAULT_MODEL.to_string(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            max_in_flight: 4,
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

impl GatewayConfig {
    /// Picks up `LLM_MODEL` when set.
    pub fn from_env() -> Self {
        let mut config = GatewayConfig::default();
        if let Ok(model) = std::env::var("LLM_MODEL") {
            if !model.trim().is_empty() {
                config.model_id = model.trim().to_string();
            }
        }
        config
    }
}

pub enum GatewayMode {
    Live {
        backend: Arc<dyn LlmBackend>,
        record_to: Option<FixtureStore>,
    },
    Replay(FixtureStore),
}

pub struct Gateway {
    mode: GatewayMode,
    config: GatewayConfig,
    cache: Mutex<HashMap<String, String>>,
    permits: Semaphore,
}

impl Gateway {
    pub fn live(backend: Arc<dyn LlmBackend>, config: GatewayConfig) -> Self {
        Self::with_mode(GatewayMode::Live { backend, record_to: None }, config)
    }

    pub fn recording(backend: Arc<dyn LlmBackend>, store: FixtureStore, config: GatewayConfig) -> Self {
        Self::with_mode(
            GatewayMode::Live {
                backend,
                record_to: Some(store),
            },
            config,
        )
    }

    pub fn replay(store: FixtureStore, config: GatewayConfig) -> Self {
        Self::with_mode(GatewayMode::Replay(store), config)
    }

    pub fn with_mode(mode: GatewayMode, config: GatewayConfig) -> Self {
        let permits = Semaphore::new(config.max_in_flight.max(1));
        Gateway {
            mode,
            config,
            cache: Mutex::new(HashMap::new()),
            permits,
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.mode, GatewayMode::Replay(_))
    }

    /// Builds a request against this gateway's model settings.
    pub fn request(&self, template: TemplateName, variables: BTreeMap<String, String>) -> CompletionRequest {
        CompletionRequest {
            template,
            variables,
            model_id: self.config.model_id.clone(),
            max_output_tokens: self.config.max_output_tokens,
        }
    }

    /// Renders `template` with `variables` and completes it.
    pub fn complete_template(
        &self,
        template: TemplateName,
        variables: BTreeMap<String, String>,
    ) -> Result<String, GatewayError> {
        Ok(self.complete(&self.request(template, variables))?.response_text)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionRecord, GatewayError> {
        if request.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        let prompt = render(request.template, &request.variables)?;
        let key = cache_key(&prompt, &request.model_id, request.max_output_tokens);

        match &self.mode {
            GatewayMode::Replay(store) => {
                let text = store.get(&key).ok_or_else(|| GatewayError::FixtureMiss(key.clone()))?;
                Ok(CompletionRecord {
                    cache_key: key,
                    response_text: text,
                    recorded: true,
                })
            }
            GatewayMode::Live { backend, record_to } => {
                if let Some(hit) = self.cache_get(&key) {
                    return Ok(CompletionRecord {
                        cache_key: key,
                        response_text: hit,
                        recorded: true,
                    });
                }
                if let Some(hit) = record_to.as_ref().and_then(|s| s.get(&key)) {
                    self.cache_put(&key, &hit);
                    return Ok(CompletionRecord {
                        cache_key: key,
                        response_text: hit,
                        recorded: true,
                    });
                }
                let text = {
                    let _permit = self.permits.acquire();
                    self.call_with_retry(backend.as_ref(), &prompt, request)?
                };
                self.cache_put(&key, &text);
                if let Some(store) = record_to {
                    let summary = json!({
                        "template": request.template.to_string(),
                        "model_id": request.model_id,
                        "max_output_tokens": request.max_output_tokens,
                        "prompt_chars": prompt.chars().count(),
                    });
                    store
                        .put(&key, &text, summary)
                        .map_err(|e| GatewayError::Store(e.to_string()))?;
                }
                Ok(CompletionRecord {
                    cache_key: key,
                    response_text: text,
                    recorded: false,
                })
            }
        }
    }

    fn call_with_retry(
        &self,
        backend: &dyn LlmBackend,
        prompt: &str,
        request: &CompletionRequest,
    ) -> Result<String, GatewayError> {
        let mut attempt = 0;
        loop {
            match backend.complete(prompt, &request.model_id, request.max_output_tokens) {
                Ok(text) => return Ok(text),
                Err(failure) if failure.retryable() && attempt < self.config.max_retries => {
                    let delay = backoff_delay(self.config.backoff_base, attempt);
                    log::warn!("llm backend attempt {} failed ({failure:?}); retrying in {delay:?}", attempt + 1);
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err(failure) => return Err(failure.into_error()),
            }
        }
    }

    fn cache_get(&self, key: &str) -> Option<String> {
        self.cache.lock().unwrap_or_else(|p| p.into_inner()).get(key).cloned()
    }

    fn cache_put(&self, key: &str, text: &str) {
        self.cache
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .insert(key.to_string(), text.to_string());
    }
}

/// `base * 2^attempt`, plus up to 25% jitter.
fn backoff_delay(base: Duration, attempt: u32) -> Duration {
    let exp = base.saturating_mul(1 << attempt.min(16));
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    let jitter = exp.mul_f64(f64::from(nanos % 1000) / 4000.0);
    exp + jitter
}

/// Counting semaphore bounding concurrent backend calls.
pub(crate) struct Semaphore {
    available: Mutex<usize>,
    freed: Condvar,
}

pub(crate) struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub(crate) fn new(n: usize) -> Self {
        Semaphore {
            available: Mutex::new(n),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|p| p.into_inner());
        while *n == 0 {
            n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completion style HTTP backend.
///
/// POSTs `{model, messages: [{role: "user", content}], max_tokens}` and reads
/// the reply from `choices[0].message.content`.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    temperature: Option<f64>,
}

impl HttpBackend {
    pub const DEFAULT_PATH: &'static str = "/v1/chat/completions";

    pub fn new(api_base: &str, path: &str, api_key: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(600)))
            .build()
            .into();
        HttpBackend {
            agent,
            url: format!("{}{}", api_base.trim_end_matches('/'), path),
            api_key,
            temperature: Some(0.0),
        }
    }

    /// Reads `LLM_API_BASE` and `LLM_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let base = std::env::var("LLM_API_BASE").ok()?;
        let key = std::env::var("LLM_API_KEY").ok();
        Some(HttpBackend::new(&base, Self::DEFAULT_PATH, key))
    }

    /// `None` omits the field, for backends that reject it.
    pub fn with_temperature(mut self, temperature: Option<f64>) -> Self {
        self.temperature = temperature;
        self
    }
}

impl LlmBackend for HttpBackend {
    fn complete(&self, prompt: &str, model_id: &str, max_output_tokens: u32) -> Result<String, BackendFailure> {
        let mut body = json!({
            "model": model_id,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": max_output_tokens,
        });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&body)
            .map_err(|e| BackendFailure::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendFailure::Transport(e.to_string()))?;
        if status == 429 {
            return Err(BackendFailure::RateLimited);
        }
        if !(200..300).contains(&status) {
            return Err(BackendFailure::Status(status, text));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendFailure::Status(status, e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendFailure::Status(status, "response has no message content".into()))
    }
}

/// Backend answering from a closure over the rendered prompt. Used to drive
/// the pipeline deterministically and to author fixture stores.
pub struct ScriptedBackend<F> {
    respond: F,
    calls: std::sync::atomic::AtomicUsize,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&str) -> Result<String, BackendFailure> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        ScriptedBackend {
            respond,
            calls: std::sync::atomic::AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl<F> LlmBackend for ScriptedBackend<F>
where
    F: Fn(&str) -> Result<String, BackendFailure> + Send + Sync,
{
    fn complete(&self, prompt: &str, _model_id: &str, _max_output_tokens: u32) -> Result<String, BackendFailure> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        (self.respond)(prompt)
    }
}

/// Shorthand for building variable maps.
pub fn vars<const N: usize>(pairs: [(&str, String); N]) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn fast_config() -> GatewayConfig {
        GatewayConfig {
            backoff_base: Duration::from_millis(1),
            ..GatewayConfig::default()
        }
    }

    fn classification_vars() -> BTreeMap<String, String> {
        vars([("TASK_QUESTION", "Q".into()), ("FULL_COT_STEP", "Step 1: a".into())])
    }

    #[test]
    fn identical_live_requests_hit_backend_once() {
        let backend = Arc::new(ScriptedBackend::new(|_| Ok("{\"1\": {}}".to_string())));
        let gw = Gateway::live(backend.clone(), fast_config());
        let a = gw.complete(&gw.request(TemplateName::StepClassification, classification_vars())).unwrap();
        let b = gw.complete(&gw.request(TemplateName::StepClassification, classification_vars())).unwrap();
        assert_eq!(backend.calls(), 1);
        assert!(!a.recorded);
        assert!(b.recorded);
        assert_eq!(a.cache_key, b.cache_key);
        assert_eq!(a.response_text, b.response_text);
    }

    #[test]
    fn replay_returns_recording_byte_identically() {
        let dir = tempfile::tempdir().unwrap();
        let response = "  ```json\n{\"1\": {\"function_tag\": [\"unknown\"]}}\n```\n\n";
        let backend = Arc::new(ScriptedBackend::new(move |_| Ok(response.to_string())));
        {
            let gw = Gateway::recording(backend, FixtureStore::open(dir.path()).unwrap(), fast_config());
            gw.complete_template(TemplateName::StepClassification, classification_vars()).unwrap();
        }
        let gw = Gateway::replay(FixtureStore::open(dir.path()).unwrap(), fast_config());
        let text = gw
            .complete_template(TemplateName::StepClassification, classification_vars())
            .unwrap();
        assert_eq!(text, response);
    }

    #[test]
    fn replay_miss() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::replay(FixtureStore::open(dir.path()).unwrap(), fast_config());
        let err = gw
            .complete_template(TemplateName::StepClassification, classification_vars())
            .unwrap_err();
        assert!(matches!(err, GatewayError::FixtureMiss(_)));
    }

    #[test]
    fn cache_key_depends_on_prompt_model_and_budget() {
        let k = cache_key("p", "m", 10);
        assert_eq!(k, cache_key("p", "m", 10));
        assert_ne!(k, cache_key("p", "m2", 10));
        assert_ne!(k, cache_key("p", "m", 11));
        assert_ne!(k, cache_key("p2", "m", 10));
    }

    #[test]
    fn rate_limit_retried_then_surfaced() {
        let backend = Arc::new(ScriptedBackend::new(|_| Err(BackendFailure::RateLimited)));
        let gw = Gateway::live(backend.clone(), fast_config());
        let err = gw
            .complete_template(TemplateName::StepClassification, classification_vars())
            .unwrap_err();
        assert_eq!(err, GatewayError::RateLimited);
        assert_eq!(backend.calls(), 4, "one call plus three retries");
    }

    #[test]
    fn transient_failure_recovers() {
        let attempts = AtomicUsize::new(0);
        let backend = Arc::new(ScriptedBackend::new(move |_| {
            if attempts.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(BackendFailure::Status(503, "busy".into()))
            } else {
                Ok("ok".into())
            }
        }));
        let gw = Gateway::live(backend.clone(), fast_config());
        let text = gw
            .complete_template(TemplateName::StepClassification, classification_vars())
            .unwrap();
        assert_eq!(text, "ok");
        assert_eq!(backend.calls(), 3);
    }

    #[test]
    fn client_errors_not_retried() {
        let backend = Arc::new(ScriptedBackend::new(|_| Err(BackendFailure::Status(400, "bad".into()))));
        let gw = Gateway::live(backend.clone(), fast_config());
        let err = gw
            .complete_template(TemplateName::StepClassification, classification_vars())
            .unwrap_err();
        assert_eq!(err, GatewayError::BackendError { status: 400, body: "bad".into() });
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn zero_token_budget_rejected() {
        let backend = Arc::new(ScriptedBackend::new(|_| Ok(String::new())));
        let gw = Gateway::live(backend, fast_config());
        let mut req = gw.request(TemplateName::StepClassification, classification_vars());
        req.max_output_tokens = 0;
        assert!(matches!(gw.complete(&req), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn in_flight_limit_is_respected() {
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (c, p) = (current.clone(), peak.clone());
        let backend = Arc::new(ScriptedBackend::new(move |prompt| {
            let now = c.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(20));
            c.fetch_sub(1, Ordering::SeqCst);
            Ok(prompt.len().to_string())
        }));
        let gw = Gateway::live(backend, GatewayConfig { max_in_flight: 2, ..fast_config() });
        thread::scope(|s| {
            for i in 0..8 {
                let gw = &gw;
                s.spawn(move || {
                    let v = vars([("TASK_QUESTION", format!("Q{i}")), ("FULL_COT_STEP", String::new())]);
                    gw.complete_template(TemplateName::StepClassification, v).unwrap();
                });
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn backoff_grows_exponentially() {
        let base = Duration::from_secs(1);
        let d0 = backoff_delay(base, 0);
        let d2 = backoff_delay(base, 2);
        assert!(d0 >= base && d0 <= base.mul_f64(1.25));
        assert!(d2 >= base * 4 && d2 <= (base * 4).mul_f64(1.25));
    }
}
