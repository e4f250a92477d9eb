//! Extraction of machine-learning model mentions from titles and abstracts
//! through an OpenAI-compatible chat-completions endpoint.
//!
//! Requests go through a [`Transport`]: [`LiveTransport`] talks HTTP, while
//! [`ReplayTransport`] answers from a fixture file so runs are reproducible
//! offline. Retry backoff and throttling sleep through a [`Clock`], which tests
//! replace with [`FakeClock`].
//!
//! # Replay fixtures
//!
//! JSON Lines, one entry per request:
//!
//! ```text
//! {"request": "<sha256 hex of the request JSON>", "responses": [{"status": 429, "body": ""}, {"status": 200, "body": "..."}]}
//! {"request": "*", "responses": [{"error": "connection reset"}]}
//! ```
//!
//! Each distinct request walks its own copy of its response list; the last
//! response repeats once the list is used up. `"*"` applies to requests with
//! no entry of their own.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Corpus, Document};

pub const API_KEY_ENV: &str = "TOPICFORGE_API_KEY";
pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const SYSTEM_PROMPT: &str = "You are a helpful text summarization assistant.";
pub const USER_TEMPLATE: &str = "Given title and abstract of the research paper in the format [Title:Abstract], generate the machine learning model name if they used machine learning technique in the format [Model: your ML model] for the {user_text}";
const SLOT: &str = "{user_text}";

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt template must contain exactly one {{user_text}} slot, found {0}")]
    Template(usize),
    #[error("document `{0}` has neither title nor abstract")]
    EmptyDocument(String),
    #[error("{API_KEY_ENV} is not set")]
    MissingCredentials,
    #[error("cannot read fixture {path}: {message}")]
    Fixture { path: String, message: String },
    #[error("result for unknown document `{0}`")]
    UnknownDocument(String),
    #[error("invalid endpoint settings: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatPromptTemplate {
    system: String,
    user_template: String,
}

impl Default for ChatPromptTemplate {
    fn default() -> Self {
        ChatPromptTemplate {
            system: SYSTEM_PROMPT.to_string(),
            user_template: USER_TEMPLATE.to_string(),
        }
    }
}

impl ChatPromptTemplate {
    pub fn new(system: impl Into<String>, user_template: impl Into<String>) -> Result<Self, LlmError> {
        let user_template = user_template.into();
        let slots = user_template.matches(SLOT).count();
        if slots != 1 {
            return Err(LlmError::Template(slots));
        }
        Ok(ChatPromptTemplate {
            system: system.into(),
            user_template,
        })
    }

    pub fn system(&self) -> &str {
        &self.system
    }

    pub fn user_template(&self) -> &str {
        &self.user_template
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// System and user messages for one document; the slot receives `"title:abstract"`.
pub fn build_prompt(doc: &Document, template: &ChatPromptTemplate) -> Result<[ChatMessage; 2], LlmError> {
    if doc.title.trim().is_empty() && doc.abstract_text.trim().is_empty() {
        return Err(LlmError::EmptyDocument(doc.id.clone()));
    }
    let text = format!("{}:{}", doc.title, doc.abstract_text);
    Ok([
        ChatMessage {
            role: "system".into(),
            content: template.system.clone(),
        },
        ChatMessage {
            role: "user".into(),
            content: template.user_template.replacen(SLOT, &text, 1),
        },
    ])
}

/// `X` from the first well-formed `[Model: X]`, key matched case-insensitively.
pub fn parse_model_name(response: &str) -> Option<String> {
    let lower = response.to_ascii_lowercase();
    let mut from = 0;
    while let Some(pos) = lower[from..].find("[model") {
        let start = from + pos;
        from = start + 1;
        let rest = &response[start + "[model".len()..];
        let Some(after_colon) = rest.trim_start().strip_prefix(':') else {
            continue;
        };
        let Some(end) = after_colon.find(']') else {
            continue;
        };
        let name = after_colon[..end].trim();
        if !name.is_empty() {
            return Some(name.to_string());
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }

    /// Fixture key: SHA-256 of the compact request JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Sync {
    /// `Err` means no HTTP response was obtained.
    fn send(&self, request: &ChatRequest) -> Result<HttpResponse, String>;
}

pub struct LiveTransport {
    agent: ureq::Agent,
    url: String,
    api_key: String,
}

impl LiveTransport {
    pub fn new(url: impl Into<String>, api_key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        LiveTransport {
            agent,
            url: url.into(),
            api_key: api_key.into(),
        }
    }

    pub fn from_env(url: impl Into<String>) -> Result<Self, LlmError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => {
                Ok(Self::new(url, key, Duration::from_secs(60)))
            }
            _ => Err(LlmError::MissingCredentials),
        }
    }
}

impl Transport for LiveTransport {
    fn send(&self, request: &ChatRequest) -> Result<HttpResponse, String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .send(request.to_json())
            .map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReplayResponse {
    Http { status: u16, body: String },
    Error { error: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request: String,
    pub responses: Vec<ReplayResponse>,
}

pub struct ReplayTransport {
    entries: HashMap<String, Vec<ReplayResponse>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayTransport {
    pub fn new(entries: Vec<ReplayEntry>) -> Result<Self, LlmError> {
        let mut map = HashMap::new();
        for e in entries {
            if e.responses.is_empty() {
                return Err(LlmError::Config(format!(
                    "fixture entry `{}` has no responses",
                    e.request
                )));
            }
            map.insert(e.request, e.responses);
        }
        Ok(ReplayTransport {
            entries: map,
            cursors: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        let err = |message: String| LlmError::Fixture {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<ReplayEntry>, _>>()?;
        Self::new(entries)
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &ChatRequest) -> Result<HttpResponse, String> {
        let hash = request.hash();
        let responses = self
            .entries
            .get(&hash)
            .or_else(|| self.entries.get("*"))
            .ok_or_else(|| format!("no fixture for request {hash}"))?;
        let i = {
            let mut cursors = self.cursors.lock().unwrap();
            let c = cursors.entry(hash).or_insert(0);
            let i = (*c).min(responses.len() - 1);
            *c += 1;
            i
        };
        match &responses[i] {
            ReplayResponse::Http { status, body } => Ok(HttpResponse {
                status: *status,
                body: body.clone(),
            }),
            ReplayResponse::Error { error } => Err(error.clone()),
        }
    }
}

pub trait Clock: Sync {
    /// Time since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock whose `sleep` only advances a counter.
#[derive(Default)]
pub struct FakeClock {
    state: Mutex<(Duration, Vec<Duration>)>,
}

impl FakeClock {
    pub fn sleeps(&self) -> Vec<Duration> {
        self.state.lock().unwrap().1.clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        self.state.lock().unwrap().0
    }

    fn sleep(&self, d: Duration) {
        let mut s = self.state.lock().unwrap();
        s.0 += d;
        s.1.push(d);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub model: String,
    pub temperature: f64,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_factor: u32,
    /// `None` disables throttling.
    pub max_requests_per_minute: Option<u32>,
    pub concurrency: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_attempts: 5,
            backoff_base: Duration::from_secs(1),
            backoff_factor: 2,
            max_requests_per_minute: Some(60),
            concurrency: 4,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_attempts == 0 {
            return Err(LlmError::Config("max_attempts must be at least 1".into()));
        }
        if self.concurrency == 0 {
            return Err(LlmError::Config("concurrency must be at least 1".into()));
        }
        if self.max_requests_per_minute == Some(0) {
            return Err(LlmError::Config("max_requests_per_minute must be positive".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LlmError::Config("temperature must be a nonnegative number".into()));
        }
        Ok(())
    }

    /// Sleep before attempt `attempt` (0-based); zero for the first.
    pub fn backoff(&self, attempt: u32) -> Duration {
        if attempt == 0 {
            Duration::ZERO
        } else {
            self.backoff_base * self.backoff_factor.pow(attempt - 1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionStatus {
    Ok,
    NoModel,
    ParseFailed,
    TransportError,
}

impl ExtractionStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtractionStatus::Ok => "ok",
            ExtractionStatus::NoModel => "no_model",
            ExtractionStatus::ParseFailed => "parse_failed",
            ExtractionStatus::TransportError => "transport_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub doc_id: String,
    /// Present exactly when `status` is `Ok`.
    pub model_name: Option<String>,
    pub raw_response: String,
    pub status: ExtractionStatus,
}

struct Throttle {
    interval: Option<Duration>,
    next: Mutex<Duration>,
}

impl Throttle {
    fn wait(&self, clock: &dyn Clock) {
        let Some(interval) = self.interval else {
            return;
        };
        let delay = {
            let mut next = self.next.lock().unwrap();
            let now = clock.now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot - now
        };
        if !delay.is_zero() {
            clock.sleep(delay);
        }
    }
}

fn message_content(body: &str) -> Option<String> {
    let v: serde_json::Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

fn classify(doc_id: &str, body: String) -> ExtractionResult {
    match message_content(&body) {
        Some(content) => {
            let model_name = parse_model_name(&content);
            ExtractionResult {
                doc_id: doc_id.to_string(),
                status: if model_name.is_some() {
                    ExtractionStatus::Ok
                } else {
                    ExtractionStatus::NoModel
                },
                model_name,
                raw_response: content,
            }
        }
        None => ExtractionResult {
            doc_id: doc_id.to_string(),
            model_name: None,
            raw_response: body,
            status: ExtractionStatus::ParseFailed,
        },
    }
}

fn extract_one(
    doc_id: &str,
    request: &ChatRequest,
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    clock: &dyn Clock,
    throttle: &Throttle,
) -> ExtractionResult {
    let mut last = String::new();
    for attempt in 0..cfg.max_attempts {
        let pause = cfg.backoff(attempt);
        if !pause.is_zero() {
            clock.sleep(pause);
        }
        throttle.wait(clock);
        match transport.send(request) {
            Ok(resp) if resp.status == 200 => return classify(doc_id, resp.body),
            Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                log::debug!("{doc_id}: HTTP {} on attempt {}", resp.status, attempt + 1);
                last = resp.body;
            }
            Ok(resp) => {
                return ExtractionResult {
                    doc_id: doc_id.to_string(),
                    model_name: None,
                    raw_response: resp.body,
                    status: ExtractionStatus::TransportError,
                };
            }
            Err(e) => {
                log::debug!("{doc_id}: {e} on attempt {}", attempt + 1);
                last = e;
            }
        }
    }
    log::info!("{doc_id}: giving up after {} attempts", cfg.max_attempts);
    ExtractionResult {
        doc_id: doc_id.to_string(),
        model_name: None,
        raw_response: last,
        status: ExtractionStatus::TransportError,
    }
}

/// One result per document, in corpus order.
pub fn extract_models(
    corpus: &Corpus,
    template: &ChatPromptTemplate,
    cfg: &EndpointConfig,
    transport: &dyn Transport,
    clock: &dyn Clock,
) -> Result<Vec<ExtractionResult>, LlmError> {
    cfg.validate()?;
    let requests = corpus
        .iter()
        .map(|d| {
            Ok(ChatRequest {
                model: cfg.model.clone(),
                messages: build_prompt(d, template)?.to_vec(),
                temperature: cfg.temperature,
            })
        })
        .collect::<Result<Vec<_>, LlmError>>()?;
    let throttle = Throttle {
        interval: cfg
            .max_requests_per_minute
            .map(|r| Duration::from_secs(60) / r),
        next: Mutex::new(Duration::ZERO),
    };
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<ExtractionResult>>> = Mutex::new(vec![None; corpus.len()]);
    let docs = corpus.documents();
    std::thread::scope(|s| {
        for _ in 0..cfg.concurrency.min(corpus.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= docs.len() {
                    break;
                }
                let r = extract_one(&docs[i].id, &requests[i], cfg, transport, clock, &throttle);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    Ok(slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every document processed"))
        .collect())
}

/// Case-folded, whitespace-collapsed model name.
pub fn normalize_model_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Per-year counts of normalized model names over `ok` results.
pub fn aggregate_model_frequencies(
    results: &[ExtractionResult],
    corpus: &Corpus,
) -> Result<BTreeMap<u16, BTreeMap<String, u64>>, LlmError> {
    let years: HashMap<&str, u16> = corpus.iter().map(|d| (d.id.as_str(), d.date.year)).collect();
    let mut out: BTreeMap<u16, BTreeMap<String, u64>> = BTreeMap::new();
    for r in results {
        let year = *years
            .get(r.doc_id.as_str())
            .ok_or_else(|| LlmError::UnknownDocument(r.doc_id.clone()))?;
        if let (ExtractionStatus::Ok, Some(name)) = (r.status, &r.model_name) {
            *out.entry(year)
                .or_default()
                .entry(normalize_model_name(name))
                .or_insert(0) += 1;
        }
    }
    Ok(out)
}

pub fn write_results_csv(results: &[ExtractionResult], out: &mut impl Write) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["doc_id", "status", "model_name", "raw_response"])?;
    for r in results {
        w.write_record([
            r.doc_id.as_str(),
            r.status.as_str(),
            r.model_name.as_deref().unwrap_or(""),
            r.raw_response.as_str(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{DocDate, Source};

    fn doc(id: &str, title: &str, abs: &str, year: u16) -> Document {
        Document {
            id: id.into(),
            title: title.into(),
            abstract_text: abs.into(),
            date: DocDate {
                year,
                month: None,
                day: None,
            },
            source: Source::Pubmed,
        }
    }

    fn body(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    fn star(responses: Vec<ReplayResponse>) -> ReplayTransport {
        ReplayTransport::new(vec![ReplayEntry {
            request: "*".into(),
            responses,
        }])
        .unwrap()
    }

    fn ok(content: &str) -> ReplayResponse {
        ReplayResponse::Http {
            status: 200,
            body: body(content),
        }
    }

    fn unthrottled() -> EndpointConfig {
        EndpointConfig {
            max_requests_per_minute: None,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn prompt_layout() {
        let t = ChatPromptTemplate::default();
        let [sys, user] = build_prompt(&doc("1", "A", "B", 2020), &t).unwrap();
        assert_eq!(sys.content, "You are a helpful text summarization assistant.");
        assert_eq!(sys.role, "system");
        assert!(user.content.ends_with("for the A:B"));
        let [_, user] = build_prompt(&doc("1", "", "B", 2020), &t).unwrap();
        assert!(user.content.ends_with("for the :B"));
        assert!(matches!(
            build_prompt(&doc("1", " ", "", 2020), &t),
            Err(LlmError::EmptyDocument(_))
        ));
        assert!(matches!(ChatPromptTemplate::new("s", "no slot"), Err(LlmError::Template(0))));
    }

    #[test]
    fn parse_cases() {
        assert_eq!(parse_model_name("[Model: Random Forest]").as_deref(), Some("Random Forest"));
        assert_eq!(parse_model_name("no machine learning used"), None);
        assert_eq!(parse_model_name("text [model:  SVM ] tail").as_deref(), Some("SVM"));
        assert_eq!(parse_model_name("[Model: ] [MODEL: CNN]").as_deref(), Some("CNN"));
        assert_eq!(parse_model_name("[Model: unterminated"), None);
    }

    #[test]
    fn retries_then_success() {
        let corpus = Corpus::new(vec![doc("1", "t", "a", 2020)]).unwrap();
        let busy = ReplayResponse::Http {
            status: 429,
            body: "slow down".into(),
        };
        let transport = star(vec![busy.clone(), busy, ok("[Model: CNN]")]);
        let clock = FakeClock::default();
        let r = extract_models(&corpus, &ChatPromptTemplate::default(), &unthrottled(), &transport, &clock)
            .unwrap();
        assert_eq!(r[0].status, ExtractionStatus::Ok);
        assert_eq!(r[0].model_name.as_deref(), Some("CNN"));
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
        assert!(clock.now() >= Duration::from_secs(2));
    }

    #[test]
    fn exhausted_and_malformed() {
        let corpus = Corpus::new(vec![doc("1", "t", "a", 2020)]).unwrap();
        let clock = FakeClock::default();
        let t = star(vec![ReplayResponse::Error {
            error: "reset".into(),
        }]);
        let r = extract_models(&corpus, &ChatPromptTemplate::default(), &unthrottled(), &t, &clock)
            .unwrap();
        assert_eq!(r[0].status, ExtractionStatus::TransportError);
        assert_eq!(r[0].raw_response, "reset");
        assert_eq!(clock.now(), Duration::from_secs(1 + 2 + 4 + 8));

        let t = star(vec![ReplayResponse::Http {
            status: 200,
            body: "{not json".into(),
        }]);
        let r = extract_models(&corpus, &ChatPromptTemplate::default(), &unthrottled(), &t, &clock)
            .unwrap();
        assert_eq!(r[0].status, ExtractionStatus::ParseFailed);
        assert_eq!(r[0].raw_response, "{not json");

        let t = star(vec![ok("none here")]);
        let r = extract_models(&corpus, &ChatPromptTemplate::default(), &unthrottled(), &t, &clock)
            .unwrap();
        assert_eq!(r[0].status, ExtractionStatus::NoModel);
        assert_eq!(r[0].model_name, None);
    }

    #[test]
    fn throttle_spacing() {
        let docs = (0..3).map(|i| doc(&i.to_string(), "t", &format!("a{i}"), 2020)).collect();
        let corpus = Corpus::new(docs).unwrap();
        let cfg = EndpointConfig {
            max_requests_per_minute: Some(30),
            concurrency: 1,
            ..EndpointConfig::default()
        };
        let clock = FakeClock::default();
        extract_models(&corpus, &ChatPromptTemplate::default(), &cfg, &star(vec![ok("x")]), &clock)
            .unwrap();
        assert_eq!(clock.now(), Duration::from_secs(4));
    }

    #[test]
    fn aggregation() {
        let corpus = Corpus::new(vec![
            doc("1", "t", "a", 2020),
            doc("2", "t", "b", 2020),
            doc("3", "t", "c", 2021),
        ])
        .unwrap();
        let r = |id: &str, name: Option<&str>| ExtractionResult {
            doc_id: id.into(),
            model_name: name.map(String::from),
            raw_response: String::new(),
            status: if name.is_some() {
                ExtractionStatus::Ok
            } else {
                ExtractionStatus::NoModel
            },
        };
        let agg = aggregate_model_frequencies(
            &[r("1", Some("cnn")), r("2", Some(" CNN ")), r("3", None)],
            &corpus,
        )
        .unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[&2020]["cnn"], 2);
        assert!(aggregate_model_frequencies(&[r("3", None)], &corpus).unwrap().is_empty());
        assert!(matches!(
            aggregate_model_frequencies(&[r("9", None)], &corpus),
            Err(LlmError::UnknownDocument(_))
        ));
    }
}
