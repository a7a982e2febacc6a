//! Language-model access with live, record, replay and mock backends.
//!
//! Requests are fingerprinted by `(model_id, prompt, temperature, max_tokens)`
//! so a recorded cassette replays exactly the calls a run made, with no
//! dependence on call order. Token usage is carried on every response and
//! priced by [`estimate_cost`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_MODEL: &str = "gpt-4-0314";
pub const DEFAULT_MAX_TOKENS: u32 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts: {detail}")]
    RateLimited { attempts: u32, detail: String },
    #[error("no cassette entry for fingerprint {0}")]
    CassetteMiss(String),
    #[error("transport error after {attempts} attempts: {detail}")]
    Transport { attempts: u32, detail: String },
    #[error("no mock response scripted for tag {0:?}")]
    Unscripted(String),
    #[error("backend not configured: {0}")]
    NotConfigured(String),
    #[error("cassette i/o: {0}")]
    CassetteIo(String),
}

/// Failure of a single upstream attempt, before retry policy is applied.
#[derive(Debug, Clone, PartialEq)]
pub enum AttemptError {
    Auth(String),
    RateLimited(String),
    Transport(String),
    Fatal(GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    Live,
    Record,
    Replay,
    Mock,
}

impl std::str::FromStr for BackendMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "live" => Ok(Self::Live),
            "record" => Ok(Self::Record),
            "replay" => Ok(Self::Replay),
            "mock" => Ok(Self::Mock),
            _ => Err(format!("unknown backend {s:?} (live, record, replay, mock)")),
        }
    }
}

/// Where a response actually came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_id: String,
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: String,
}

impl LlmRequest {
    pub fn new(model_id: impl Into<String>, prompt: impl Into<String>, request_tag: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            prompt: prompt.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_tag: request_tag.into(),
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the fields that determine the model's output.
    /// The request tag is deliberately not part of it.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model_id: &'a str,
            prompt: &'a str,
            temperature: f64,
            max_tokens: u32,
        }
        let key = serde_json::to_vec(&Key {
            model_id: &self.model_id,
            prompt: &self.prompt,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        })
        .expect("fingerprint key serializes");
        hex::encode(Sha256::digest(&key))
    }
}

/// Model settings shared by every call of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

impl ModelParams {
    pub fn request(&self, prompt: impl Into<String>, tag: impl Into<String>) -> LlmRequest {
        LlmRequest::new(self.model_id.clone(), prompt, tag)
            .with_temperature(self.temperature)
            .with_max_tokens(self.max_tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    /// Seconds.
    pub latency: f64,
    pub backend: BackendKind,
}

/// Rough token count for backends that do not report usage: one token per
/// four characters, rounded up.
pub fn approx_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Something that can answer one completion attempt.
pub trait Completer: Send + Sync {
    fn attempt(&self, request: &LlmRequest) -> Result<LlmResponse, AttemptError>;
}

// ---------------------------------------------------------------- mock

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    pub tag: String,
    /// When set, the rule only applies if the prompt contains this text.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub text: String,
}

/// Scripted responses keyed by request tag, optionally narrowed by a prompt
/// substring. A matching `contains` rule beats a bare tag rule.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub responses: Vec<MockRule>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, tag: impl Into<String>, text: impl Into<String>) -> Self {
        self.responses.push(MockRule {
            tag: tag.into(),
            contains: None,
            text: text.into(),
        });
        self
    }

    pub fn with_match(mut self, tag: impl Into<String>, contains: impl Into<String>, text: impl Into<String>) -> Self {
        self.responses.push(MockRule {
            tag: tag.into(),
            contains: Some(contains.into()),
            text: text.into(),
        });
        self
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::CassetteIo(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| GatewayError::CassetteIo(format!("{}: {e}", path.display())))
    }

    pub fn lookup(&self, request: &LlmRequest) -> Option<&str> {
        let for_tag = || self.responses.iter().filter(|r| r.tag == request.request_tag);
        for_tag()
            .find(|r| r.contains.as_deref().is_some_and(|c| request.prompt.contains(c)))
            .or_else(|| for_tag().find(|r| r.contains.is_none()))
            .map(|r| r.text.as_str())
    }
}

impl Completer for MockScript {
    fn attempt(&self, request: &LlmRequest) -> Result<LlmResponse, AttemptError> {
        let text = self
            .lookup(request)
            .ok_or_else(|| AttemptError::Fatal(GatewayError::Unscripted(request.request_tag.clone())))?;
        Ok(LlmResponse {
            text: text.to_string(),
            prompt_tokens: approx_tokens(&request.prompt),
            completion_tokens: approx_tokens(text),
            latency: 0.0,
            backend: BackendKind::Mock,
        })
    }
}

// ---------------------------------------------------------------- http

/// OpenAI-style chat-completions endpoint.
pub struct HttpCompleter {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

impl HttpCompleter {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(180)))
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads `DA_LLM_ENDPOINT` and `DA_LLM_API_KEY`.
    pub fn from_env() -> Result<Self, GatewayError> {
        let endpoint = std::env::var("DA_LLM_ENDPOINT")
            .map_err(|_| GatewayError::NotConfigured("DA_LLM_ENDPOINT is not set".into()))?;
        let key =
            std::env::var("DA_LLM_API_KEY").map_err(|_| GatewayError::NotConfigured("DA_LLM_API_KEY is not set".into()))?;
        Ok(Self::new(endpoint, key))
    }
}

#[derive(Deserialize)]
struct ChatReply {
    choices: Vec<ChatChoice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl Completer for HttpCompleter {
    fn attempt(&self, request: &LlmRequest) -> Result<LlmResponse, AttemptError> {
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let started = Instant::now();
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(AttemptError::Auth(format!("http {status}: {text}"))),
            429 => return Err(AttemptError::RateLimited(format!("http {status}: {text}"))),
            _ => return Err(AttemptError::Transport(format!("http {status}: {text}"))),
        }
        let reply: ChatReply =
            serde_json::from_str(&text).map_err(|e| AttemptError::Transport(format!("bad response body: {e}")))?;
        let content = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| AttemptError::Transport("response has no message content".into()))?;
        let (prompt_tokens, completion_tokens) = match reply.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (approx_tokens(&request.prompt), approx_tokens(&content)),
        };
        Ok(LlmResponse {
            text: content,
            prompt_tokens,
            completion_tokens,
            latency: started.elapsed().as_secs_f64(),
            backend: BackendKind::Live,
        })
    }
}

// ---------------------------------------------------------------- cassette

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub request: LlmRequest,
    pub response: LlmResponse,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cassette {
    entries: BTreeMap<String, CassetteEntry>,
}

#[derive(Serialize, Deserialize)]
struct CassetteFile {
    entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.entries.get(fingerprint)
    }

    pub fn insert(&mut self, request: LlmRequest, response: LlmResponse) {
        let fingerprint = request.fingerprint();
        self.entries.insert(
            fingerprint.clone(),
            CassetteEntry {
                fingerprint,
                request,
                response,
            },
        );
    }

    pub fn remove(&mut self, fingerprint: &str) -> Option<CassetteEntry> {
        self.entries.remove(fingerprint)
    }

    pub fn entries(&self) -> impl Iterator<Item = &CassetteEntry> {
        self.entries.values()
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::CassetteIo(format!("{}: {e}", path.display())))?;
        let file: CassetteFile =
            serde_json::from_str(&text).map_err(|e| GatewayError::CassetteIo(format!("{}: {e}", path.display())))?;
        Ok(Self {
            entries: file.entries.into_iter().map(|e| (e.fingerprint.clone(), e)).collect(),
        })
    }

    /// Entries are written sorted by fingerprint, so the file is independent
    /// of the order calls were recorded in.
    pub fn save(&self, path: &Path) -> Result<(), GatewayError> {
        let file = CassetteFile {
            entries: self.entries.values().cloned().collect(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| GatewayError::CassetteIo(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| GatewayError::CassetteIo(format!("{}: {e}", path.display())))
    }
}

// ---------------------------------------------------------------- gateway

#[derive(Clone)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before retry `n` (0-based) is `base_delay * 2^n`.
    pub base_delay: Duration,
    pub sleep: Arc<dyn Fn(Duration) + Send + Sync>,
}

impl std::fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetryPolicy")
            .field("max_retries", &self.max_retries)
            .field("base_delay", &self.base_delay)
            .finish()
    }
}

impl Default for RetryPolicy {
    /// 3 retries at 1 s, 2 s, 4 s.
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
            sleep: Arc::new(std::thread::sleep),
        }
    }
}

impl RetryPolicy {
    pub fn no_wait() -> Self {
        Self {
            base_delay: Duration::ZERO,
            sleep: Arc::new(|_| {}),
            ..Self::default()
        }
    }
}

/// Shared by all workers of a batch. Cassette writes are serialized.
pub struct LlmGateway {
    mode: BackendMode,
    upstream: Option<Arc<dyn Completer>>,
    cassette: Mutex<Cassette>,
    cassette_path: Option<PathBuf>,
    retry: RetryPolicy,
    upstream_calls: AtomicUsize,
    history: Mutex<Vec<LlmRequest>>,
}

impl LlmGateway {
    fn build(mode: BackendMode, upstream: Option<Arc<dyn Completer>>, cassette: Cassette) -> Self {
        Self {
            mode,
            upstream,
            cassette: Mutex::new(cassette),
            cassette_path: None,
            retry: RetryPolicy::default(),
            upstream_calls: AtomicUsize::new(0),
            history: Mutex::new(Vec::new()),
        }
    }

    pub fn mock(script: MockScript) -> Self {
        Self::build(BackendMode::Mock, Some(Arc::new(script)), Cassette::new())
    }

    pub fn live(upstream: Arc<dyn Completer>) -> Self {
        Self::build(BackendMode::Live, Some(upstream), Cassette::new())
    }

    /// Live calls through `upstream`, each appended to the cassette. When
    /// `path` is set the cassette is rewritten after every append.
    pub fn record(upstream: Arc<dyn Completer>, path: Option<PathBuf>) -> Self {
        let mut g = Self::build(BackendMode::Record, Some(upstream), Cassette::new());
        g.cassette_path = path;
        g
    }

    pub fn replay(cassette: Cassette) -> Self {
        Self::build(BackendMode::Replay, None, cassette)
    }

    /// Replay, but with a transport attached so tests can prove it is never used.
    pub fn replay_with_guard(cassette: Cassette, upstream: Arc<dyn Completer>) -> Self {
        Self::build(BackendMode::Replay, Some(upstream), cassette)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn mode(&self) -> BackendMode {
        self.mode
    }

    /// Number of upstream attempts made (0 for a pure replay run).
    pub fn upstream_calls(&self) -> usize {
        self.upstream_calls.load(Ordering::SeqCst)
    }

    /// Every request seen, in arrival order.
    pub fn requests(&self) -> Vec<LlmRequest> {
        self.history.lock().expect("history lock").clone()
    }

    pub fn cassette(&self) -> Cassette {
        self.cassette.lock().expect("cassette lock").clone()
    }

    pub fn save_cassette(&self, path: &Path) -> Result<(), GatewayError> {
        self.cassette.lock().expect("cassette lock").save(path)
    }

    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, GatewayError> {
        request.validate()?;
        self.history.lock().expect("history lock").push(request.clone());
        match self.mode {
            BackendMode::Replay => {
                let fp = request.fingerprint();
                let cassette = self.cassette.lock().expect("cassette lock");
                let entry = cassette.get(&fp).ok_or(GatewayError::CassetteMiss(fp))?;
                Ok(LlmResponse {
                    backend: BackendKind::Replay,
                    ..entry.response.clone()
                })
            }
            BackendMode::Mock | BackendMode::Live => self.call_upstream(request),
            BackendMode::Record => {
                let resp = self.call_upstream(request)?;
                let mut cassette = self.cassette.lock().expect("cassette lock");
                cassette.insert(request.clone(), resp.clone());
                if let Some(path) = &self.cassette_path {
                    cassette.save(path)?;
                }
                Ok(resp)
            }
        }
    }

    fn call_upstream(&self, request: &LlmRequest) -> Result<LlmResponse, GatewayError> {
        let upstream = self
            .upstream
            .as_ref()
            .ok_or_else(|| GatewayError::NotConfigured("no upstream completer".into()))?;
        let mut attempt = 0u32;
        loop {
            self.upstream_calls.fetch_add(1, Ordering::SeqCst);
            let err = match upstream.attempt(request) {
                Ok(r) => return Ok(r),
                Err(e) => e,
            };
            let attempts = attempt + 1;
            let (retryable, final_err) = match err {
                AttemptError::Fatal(e) => (false, e),
                AttemptError::Auth(d) => (false, GatewayError::Auth(d)),
                AttemptError::RateLimited(detail) => (true, GatewayError::RateLimited { attempts, detail }),
                AttemptError::Transport(detail) => (true, GatewayError::Transport { attempts, detail }),
            };
            if !retryable || attempt >= self.retry.max_retries {
                return Err(final_err);
            }
            let delay = self.retry.base_delay * 2u32.pow(attempt);
            tracing::warn!(tag = %request.request_tag, attempt = attempts, ?delay, "retrying model call: {final_err}");
            (self.retry.sleep)(delay);
            attempt += 1;
        }
    }
}

// ---------------------------------------------------------------- cost

/// USD per 1K tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl PriceTable {
    /// GPT-4 (8K context) list price.
    pub const GPT4_8K: PriceTable = PriceTable {
        prompt_per_1k: 0.03,
        completion_per_1k: 0.06,
    };
}

impl Default for PriceTable {
    fn default() -> Self {
        Self::GPT4_8K
    }
}

pub fn estimate_cost<'a>(responses: impl IntoIterator<Item = &'a LlmResponse>, price: &PriceTable) -> f64 {
    responses
        .into_iter()
        .map(|r| cost_of_tokens(r.prompt_tokens, r.completion_tokens, price))
        .sum()
}

pub(crate) fn cost_of_tokens(prompt: u64, completion: u64, price: &PriceTable) -> f64 {
    prompt as f64 / 1000.0 * price.prompt_per_1k + completion as f64 / 1000.0 * price.completion_per_1k
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scripted {
        outcomes: Mutex<Vec<Result<LlmResponse, AttemptError>>>,
        calls: AtomicUsize,
    }

    impl Scripted {
        fn new(mut outcomes: Vec<Result<LlmResponse, AttemptError>>) -> Arc<Self> {
            outcomes.reverse();
            Arc::new(Self {
                outcomes: Mutex::new(outcomes),
                calls: AtomicUsize::new(0),
            })
        }
    }

    impl Completer for Scripted {
        fn attempt(&self, _r: &LlmRequest) -> Result<LlmResponse, AttemptError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.outcomes.lock().unwrap().pop().expect("scripted outcome")
        }
    }

    fn ok(text: &str) -> Result<LlmResponse, AttemptError> {
        Ok(LlmResponse {
            text: text.into(),
            prompt_tokens: 10,
            completion_tokens: 5,
            latency: 0.1,
            backend: BackendKind::Live,
        })
    }

    fn req(prompt: &str) -> LlmRequest {
        LlmRequest::new(DEFAULT_MODEL, prompt, "code")
    }

    #[test]
    fn mock_returns_fixture_verbatim() {
        let g = LlmGateway::mock(MockScript::new().with("code", "```json\n{}\n```").with("analysis", "1. a"));
        let r = g.complete(&req("Question: q")).unwrap();
        assert_eq!(r.text, "```json\n{}\n```");
        assert_eq!(r.backend, BackendKind::Mock);
        let r = g.complete(&LlmRequest::new(DEFAULT_MODEL, "x", "analysis")).unwrap();
        assert_eq!(r.text, "1. a");
    }

    #[test]
    fn mock_contains_rule_beats_tag_default() {
        let script = MockScript::new().with("code", "default").with_match("code", "aircraft", "special");
        let g = LlmGateway::mock(script);
        assert_eq!(g.complete(&req("about aircraft")).unwrap().text, "special");
        assert_eq!(g.complete(&req("about rooms")).unwrap().text, "default");
        assert!(matches!(
            g.complete(&LlmRequest::new(DEFAULT_MODEL, "p", "other")),
            Err(GatewayError::Unscripted(t)) if t == "other"
        ));
    }

    #[test]
    fn record_then_replay_is_byte_identical_and_offline() {
        let upstream = Scripted::new(vec![ok("first answer")]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        let rec = LlmGateway::record(upstream.clone(), Some(path.clone()));
        let recorded = rec.complete(&req("prompt one")).unwrap();

        let guard = Scripted::new(vec![]);
        let replay = LlmGateway::replay_with_guard(Cassette::load(&path).unwrap(), guard.clone());
        let replayed = replay.complete(&req("prompt one")).unwrap();
        assert_eq!(replayed.text, recorded.text);
        assert_eq!(replayed.backend, BackendKind::Replay);
        assert_eq!(replay.upstream_calls(), 0);
        assert_eq!(guard.calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn replay_miss_reports_fingerprint() {
        let g = LlmGateway::replay(Cassette::new());
        let r = req("never recorded");
        assert_eq!(g.complete(&r), Err(GatewayError::CassetteMiss(r.fingerprint())));
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d2 = delays.clone();
        let policy = RetryPolicy {
            sleep: Arc::new(move |d| d2.lock().unwrap().push(d)),
            ..RetryPolicy::default()
        };
        let upstream = Scripted::new(vec![
            Err(AttemptError::RateLimited("429".into())),
            Err(AttemptError::Transport("reset".into())),
            ok("done"),
        ]);
        let g = LlmGateway::live(upstream.clone()).with_retry(policy);
        assert_eq!(g.complete(&req("p")).unwrap().text, "done");
        assert_eq!(upstream.calls.load(Ordering::SeqCst), 3);
        assert_eq!(*delays.lock().unwrap(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn exhausted_retries_and_auth_errors() {
        let upstream = Scripted::new((0..4).map(|_| Err(AttemptError::RateLimited("429".into()))).collect());
        let g = LlmGateway::live(upstream.clone()).with_retry(RetryPolicy::no_wait());
        assert!(matches!(g.complete(&req("p")), Err(GatewayError::RateLimited { attempts: 4, .. })));
        assert_eq!(upstream.calls.load(Ordering::SeqCst), 4);

        let upstream = Scripted::new(vec![Err(AttemptError::Auth("401".into()))]);
        let g = LlmGateway::live(upstream.clone()).with_retry(RetryPolicy::no_wait());
        assert!(matches!(g.complete(&req("p")), Err(GatewayError::Auth(_))));
        assert_eq!(upstream.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn request_validation() {
        let g = LlmGateway::mock(MockScript::new().with("code", "x"));
        assert!(matches!(g.complete(&req("  ")), Err(GatewayError::InvalidRequest(_))));
        assert!(matches!(
            g.complete(&req("p").with_temperature(2.5)),
            Err(GatewayError::InvalidRequest(_))
        ));
        assert!(matches!(g.complete(&req("p").with_max_tokens(0)), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn fingerprint_separates_model_prompt_temperature_tokens() {
        let base = req("p");
        let variants = [
            base.clone(),
            LlmRequest::new("other-model", "p", "code"),
            req("p2"),
            req("p").with_temperature(0.7),
            req("p").with_max_tokens(10),
        ];
        let fps: std::collections::HashSet<_> = variants.iter().map(|r| r.fingerprint()).collect();
        assert_eq!(fps.len(), variants.len());
        let mut retagged = base.clone();
        retagged.request_tag = "analysis".into();
        assert_eq!(retagged.fingerprint(), base.fingerprint());
    }

    #[test]
    fn cost_arithmetic() {
        let price = PriceTable::GPT4_8K;
        assert_eq!(estimate_cost(&[], &price), 0.0);
        let r = LlmResponse {
            text: String::new(),
            prompt_tokens: 1000,
            completion_tokens: 1000,
            latency: 0.0,
            backend: BackendKind::Mock,
        };
        assert!((estimate_cost([&r], &price) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn typical_two_call_task_costs_about_five_cents() {
        // Code step: schema-heavy prompt, a page of code back. Analysis step:
        // data table in, five bullets out.
        let mk = |p, c| LlmResponse {
            text: String::new(),
            prompt_tokens: p,
            completion_tokens: c,
            latency: 0.0,
            backend: BackendKind::Live,
        };
        let cost = estimate_cost(&[mk(500, 250), mk(350, 200)], &PriceTable::GPT4_8K);
        assert!((cost - 0.0525).abs() < 1e-12);
        assert!((cost - 0.05).abs() < 0.01);
    }
}
