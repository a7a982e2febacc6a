//! External knowledge retrieval: a search query built from the question and
//! extracted data, top-k snippets from a search backend, and a TTL cache.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ExtractedData, Value};

pub const DEFAULT_K: usize = 6;
pub const SNIPPET_MAX_CHARS: usize = 300;
pub const QUERY_MAX_CHARS: usize = 256;
pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 3600);

const STOP_PHRASES: &[&str] = &[
    "combining the data of",
    "in the database",
    "and the database",
    "from the database",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub text: String,
    pub source_url: String,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSnippets {
    pub query: String,
    pub snippets: Vec<Snippet>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("search authentication failed: {0}")]
    SearchAuth(String),
    #[error("search transport failure: {0}")]
    SearchTransport(String),
    #[error("search backend not configured: {0}")]
    NotConfigured(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("cannot read {path}: {reason}")]
    BadFile { path: PathBuf, reason: String },
}

/// One search hit as returned by a backend, before ranking and truncation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub text: String,
    pub url: String,
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, KnowledgeError>;
}

fn strip_phrase_ci(text: &str, phrase: &str) -> String {
    let lower = text.to_lowercase();
    if lower.len() != text.len() {
        return text.to_string();
    }
    let mut out = String::with_capacity(text.len());
    let mut rest = 0;
    let mut from = 0;
    while let Some(pos) = lower[from..].find(phrase) {
        let at = from + pos;
        out.push_str(&text[rest..at]);
        rest = at + phrase.len();
        from = rest;
    }
    out.push_str(&text[rest..]);
    out
}

fn truncate_chars(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Question with stop phrases removed, followed by up to three of the most
/// frequent text labels in `data`. At most 256 characters.
pub fn formulate_query(question: &str, data: &ExtractedData) -> String {
    let mut q = question.to_string();
    for p in STOP_PHRASES {
        q = strip_phrase_ci(&q, p);
    }
    let mut q = q.split_whitespace().collect::<Vec<_>>().join(" ");
    q = q.replace(" ,", ",");
    let q = q.trim_start_matches([',', ';', ' ']).trim().to_string();

    let mut counts: Vec<(&str, usize)> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for row in data.rows() {
        for v in row {
            if let Value::Text(t) = v {
                if t.trim().is_empty() || t.trim().parse::<f64>().is_ok() {
                    continue;
                }
                let slot = *index.entry(t.as_str()).or_insert_with(|| {
                    counts.push((t.as_str(), 0));
                    counts.len() - 1
                });
                counts[slot].1 += 1;
            }
        }
    }
    // Stable sort keeps first appearance as the tie-break.
    counts.sort_by_key(|c| std::cmp::Reverse(c.1));
    let mut out = q;
    for (label, _) in counts.into_iter().take(3) {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&label.replace(['\t', '\n', '\r'], " "));
    }
    truncate_chars(&out, QUERY_MAX_CHARS).trim_end().to_string()
}

fn truncate_snippet(text: &str) -> String {
    let flat = text.replace(['\n', '\r', '\t'], " ");
    if flat.chars().count() <= SNIPPET_MAX_CHARS {
        flat
    } else {
        format!("{}...", truncate_chars(&flat, SNIPPET_MAX_CHARS).trim_end())
    }
}

// ---------------------------------------------------------------- backends

/// Fixture-driven backend: a JSON map from query to hits. The key `"*"`, if
/// present, answers any query without its own entry.
pub struct CannedBackend {
    answers: BTreeMap<String, Vec<SearchHit>>,
    calls: AtomicUsize,
}

impl CannedBackend {
    pub fn new(answers: BTreeMap<String, Vec<SearchHit>>) -> Self {
        Self {
            answers,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self, KnowledgeError> {
        let bad = |reason: String| KnowledgeError::BadFile {
            path: path.to_path_buf(),
            reason,
        };
        let raw = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        let answers = serde_json::from_str(&raw).map_err(|e| bad(e.to_string()))?;
        Ok(Self::new(answers))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl SearchBackend for CannedBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, KnowledgeError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let hits = self.answers.get(query).or_else(|| self.answers.get("*"));
        Ok(hits.map(|h| h.iter().take(k).cloned().collect()).unwrap_or_default())
    }
}

/// GET `<endpoint>?q=<query>&count=<k>` with a bearer key. Accepts a
/// response of the form `{"results":[{"text"|"snippet", "url"}]}`.
pub struct HttpSearchBackend {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct HttpHit {
    #[serde(alias = "snippet")]
    text: String,
    #[serde(alias = "link")]
    url: String,
}

#[derive(Deserialize)]
struct HttpResults {
    #[serde(default)]
    results: Vec<HttpHit>,
}

impl HttpSearchBackend {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(30)))
            .build()
            .new_agent();
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            agent,
        }
    }

    /// Reads `DA_SEARCH_ENDPOINT` and `DA_SEARCH_API_KEY`.
    pub fn from_env() -> Result<Self, KnowledgeError> {
        let endpoint = std::env::var("DA_SEARCH_ENDPOINT")
            .map_err(|_| KnowledgeError::NotConfigured("DA_SEARCH_ENDPOINT is not set".into()))?;
        let key = std::env::var("DA_SEARCH_API_KEY")
            .map_err(|_| KnowledgeError::NotConfigured("DA_SEARCH_API_KEY is not set".into()))?;
        Ok(Self::new(endpoint, key))
    }
}

impl SearchBackend for HttpSearchBackend {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, KnowledgeError> {
        let mut resp = self
            .agent
            .get(&self.endpoint)
            .query("q", query)
            .query("count", k.to_string())
            .header("Authorization", format!("Bearer {}", self.api_key))
            .call()
            .map_err(|e| KnowledgeError::SearchTransport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| KnowledgeError::SearchTransport(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(KnowledgeError::SearchAuth(format!("HTTP {status}"))),
            _ => return Err(KnowledgeError::SearchTransport(format!("HTTP {status}: {body}"))),
        }
        let parsed: HttpResults =
            serde_json::from_str(&body).map_err(|e| KnowledgeError::SearchTransport(e.to_string()))?;
        Ok(parsed
            .results
            .into_iter()
            .take(k)
            .map(|h| SearchHit { text: h.text, url: h.url })
            .collect())
    }
}

// ---------------------------------------------------------------- retriever

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

type Slot = Arc<Mutex<Option<KnowledgeSnippets>>>;

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    query: String,
    k: usize,
    result: KnowledgeSnippets,
}

#[derive(Serialize, Deserialize, Default)]
struct CacheFile {
    entries: Vec<CacheEntry>,
}

/// Shared retriever. Results are cached by `(query, k)`; concurrent
/// requests for one key wait on a single backend call.
pub struct Retriever {
    backend: Arc<dyn SearchBackend>,
    ttl: chrono::Duration,
    clock: Clock,
    slots: Mutex<HashMap<(String, usize), Slot>>,
    interactions: AtomicUsize,
    backend_calls: AtomicUsize,
    cache_path: Option<PathBuf>,
}

impl Retriever {
    pub fn new(backend: Arc<dyn SearchBackend>) -> Self {
        Self {
            backend,
            ttl: chrono::Duration::from_std(DEFAULT_TTL).expect("ttl fits"),
            clock: Arc::new(Utc::now),
            slots: Mutex::new(HashMap::new()),
            interactions: AtomicUsize::new(0),
            backend_calls: AtomicUsize::new(0),
            cache_path: None,
        }
    }

    pub fn with_ttl(mut self, ttl: Duration) -> Self {
        self.ttl = chrono::Duration::from_std(ttl).unwrap_or(chrono::Duration::MAX);
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Load any existing cache at `path` and rewrite it after every fetch.
    pub fn with_cache_file(mut self, path: impl Into<PathBuf>) -> Result<Self, KnowledgeError> {
        let path = path.into();
        if path.exists() {
            let bad = |reason: String| KnowledgeError::BadFile {
                path: path.clone(),
                reason,
            };
            let raw = std::fs::read_to_string(&path).map_err(|e| bad(e.to_string()))?;
            let file: CacheFile = serde_json::from_str(&raw).map_err(|e| bad(e.to_string()))?;
            let mut slots = self.slots.lock().expect("slots lock");
            for e in file.entries {
                slots.insert((e.query, e.k), Arc::new(Mutex::new(Some(e.result))));
            }
        }
        self.cache_path = Some(path);
        Ok(self)
    }

    /// Number of `retrieve` calls, cached or not.
    pub fn interactions(&self) -> usize {
        self.interactions.load(Ordering::SeqCst)
    }

    /// Number of calls that reached the backend.
    pub fn backend_calls(&self) -> usize {
        self.backend_calls.load(Ordering::SeqCst)
    }

    pub fn retrieve(&self, query: &str, k: usize) -> Result<KnowledgeSnippets, KnowledgeError> {
        self.interactions.fetch_add(1, Ordering::SeqCst);
        if k == 0 {
            return Err(KnowledgeError::InvalidK);
        }
        let slot = self
            .slots
            .lock()
            .expect("slots lock")
            .entry((query.to_string(), k))
            .or_default()
            .clone();
        let mut guard = slot.lock().expect("slot lock");
        let now = (self.clock)();
        if let Some(hit) = guard.as_ref() {
            if now.signed_duration_since(hit.fetched_at) < self.ttl {
                return Ok(hit.clone());
            }
        }
        self.backend_calls.fetch_add(1, Ordering::SeqCst);
        let hits = self.backend.search(query, k)?;
        let snippets = hits
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, h)| Snippet {
                text: truncate_snippet(&h.text),
                source_url: h.url,
                rank: i + 1,
            })
            .collect();
        let result = KnowledgeSnippets {
            query: query.to_string(),
            snippets,
            fetched_at: now,
        };
        *guard = Some(result.clone());
        drop(guard);
        if let Some(path) = &self.cache_path {
            self.persist(path)?;
        }
        Ok(result)
    }

    fn persist(&self, path: &Path) -> Result<(), KnowledgeError> {
        let slots: Vec<((String, usize), Slot)> = self
            .slots
            .lock()
            .expect("slots lock")
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let mut entries: Vec<CacheEntry> = slots
            .into_iter()
            .filter_map(|((query, k), slot)| {
                let result = slot.try_lock().ok()?.clone()?;
                Some(CacheEntry { query, k, result })
            })
            .collect();
        entries.sort_by(|a, b| (&a.query, a.k).cmp(&(&b.query, b.k)));
        let bad = |reason: String| KnowledgeError::BadFile {
            path: path.to_path_buf(),
            reason,
        };
        let json = serde_json::to_string_pretty(&CacheFile { entries }).map_err(|e| bad(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, json).map_err(|e| bad(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| bad(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phone_data() -> ExtractedData {
        ExtractedData::new(
            vec!["Name".into(), "Stock".into()],
            vec![
                vec![Value::Text("iPhone 6s".into()), Value::Integer(4324)],
                vec![Value::Text("iPhone 5s".into()), Value::Integer(2914)],
                vec![Value::Text("iPhone X".into()), Value::Integer(2540)],
                vec![Value::Text("iPhone 7".into()), Value::Integer(874)],
            ],
        )
        .unwrap()
    }

    fn empty() -> ExtractedData {
        ExtractedData::new(vec!["a".into()], vec![]).unwrap()
    }

    const PHONE_Q: &str =
        "Combining the data of the phone market in recent years and the database, which phone is more popular?";

    #[test]
    fn query_from_phone_question() {
        let q = formulate_query(PHONE_Q, &phone_data());
        assert!(q.contains("phone market"));
        assert!(q.contains("recent years"));
        assert!(!q.to_lowercase().contains("combining the data of"));
        assert!(!q.contains("database"));
        assert!(q.ends_with("iPhone 6s iPhone 5s iPhone X"));
        assert_eq!(q, formulate_query(PHONE_Q, &phone_data()));
        assert_eq!(
            formulate_query(PHONE_Q, &empty()),
            "the phone market in recent years, which phone is more popular?"
        );
    }

    #[test]
    fn query_prefers_frequent_labels_and_is_capped() {
        let rows = ["b", "a", "a", "c", "c", "c", "d"]
            .iter()
            .map(|s| vec![Value::Text(s.to_string())])
            .collect();
        let d = ExtractedData::new(vec!["x".into()], rows).unwrap();
        assert_eq!(formulate_query("q", &d), "q c a b");
        let long = "word ".repeat(100);
        assert!(formulate_query(&long, &d).chars().count() <= QUERY_MAX_CHARS);
    }

    fn canned(n: usize) -> Arc<CannedBackend> {
        let hits = (1..=n)
            .map(|i| SearchHit {
                text: format!("snippet {i}"),
                url: format!("https://s{i}.example"),
            })
            .collect();
        Arc::new(CannedBackend::new([("q".to_string(), hits)].into_iter().collect()))
    }

    #[test]
    fn ranks_and_k() {
        let r = Retriever::new(canned(6));
        let all = r.retrieve("q", 6).unwrap();
        assert_eq!(all.snippets.iter().map(|s| s.rank).collect::<Vec<_>>(), [1, 2, 3, 4, 5, 6]);
        let one = r.retrieve("q", 1).unwrap();
        assert_eq!(one.snippets.len(), 1);
        assert_eq!(one.snippets[0].text, "snippet 1");
        assert!(r.retrieve("nothing", 3).unwrap().snippets.is_empty());
        assert!(matches!(r.retrieve("q", 0), Err(KnowledgeError::InvalidK)));
    }

    #[test]
    fn cache_hit_and_ttl() {
        let backend = canned(2);
        let now = Arc::new(Mutex::new(DateTime::UNIX_EPOCH));
        let clock_now = now.clone();
        let r = Retriever::new(backend.clone()).with_clock(Arc::new(move || *clock_now.lock().unwrap()));
        let a = r.retrieve("q", 2).unwrap();
        let b = r.retrieve("q", 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(backend.calls(), 1);
        *now.lock().unwrap() += chrono::Duration::hours(23);
        r.retrieve("q", 2).unwrap();
        assert_eq!(backend.calls(), 1);
        *now.lock().unwrap() += chrono::Duration::hours(2);
        r.retrieve("q", 2).unwrap();
        assert_eq!(backend.calls(), 2);
        assert_eq!(r.interactions(), 4);
        assert_eq!(r.backend_calls(), 2);
    }

    #[test]
    fn concurrent_requests_coalesce() {
        let backend = canned(3);
        let r = Arc::new(Retriever::new(backend.clone()));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let r = r.clone();
                s.spawn(move || r.retrieve("q", 3).unwrap());
            }
        });
        assert_eq!(backend.calls(), 1);
        assert_eq!(r.interactions(), 8);
    }

    #[test]
    fn long_snippets_truncated() {
        let hits = vec![SearchHit {
            text: "x".repeat(500),
            url: "u".into(),
        }];
        let r = Retriever::new(Arc::new(CannedBackend::new([("*".to_string(), hits)].into_iter().collect())));
        let s = r.retrieve("anything", 6).unwrap();
        assert_eq!(s.snippets[0].text.chars().count(), SNIPPET_MAX_CHARS + 3);
        assert!(s.snippets[0].text.ends_with("..."));
    }

    #[test]
    fn cache_file_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let backend = canned(2);
        Retriever::new(backend.clone())
            .with_cache_file(&path)
            .unwrap()
            .retrieve("q", 2)
            .unwrap();
        let again = Retriever::new(backend.clone()).with_cache_file(&path).unwrap();
        let hit = again.retrieve("q", 2).unwrap();
        assert_eq!(hit.snippets.len(), 2);
        assert_eq!(backend.calls(), 1);
    }
}
