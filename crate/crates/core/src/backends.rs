//! Interpreter and locator backends.
//!
//! Both stages are traits so the HTTP client, scripted replays, ground-truth
//! oracles and baselines can be swapped freely. Every backend is `Send + Sync`
//! and keeps no per-call mutable state.

use std::collections::BTreeMap;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{NormalizedPoint, OperationKind};
use crate::agent::{history_to_text, HistoryEntry};
use crate::parsing::{parse_structured_step, ParseError, StructuredStep};
use crate::sim::{Observation, ScreenModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("auth: {0}")]
    Auth(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("protocol: {message}")]
    Protocol { message: String, body: String },
    #[error("empty element description")]
    EmptyDescription,
    #[error("no element matches `{0}`")]
    NoMatch(String),
    #[error("observation carries no screen model")]
    NoScreenModel,
    #[error("script for task `{task}` has {len} steps, history already has {history}")]
    ScriptExhausted {
        task: String,
        len: usize,
        history: usize,
    },
    #[error("no script for task `{0}`")]
    NoScript(String),
    #[error("unparseable interpreter reply: {0}")]
    Parse(#[from] ParseError),
}

pub struct InterpreterRequest<'a> {
    pub task: &'a str,
    pub history: &'a [HistoryEntry],
    pub observation: &'a Observation,
}

pub struct LocatorRequest<'a> {
    pub description: &'a str,
    pub observation: &'a Observation,
}

/// Raw reply text plus the structured step read from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpretation {
    pub raw: String,
    pub step: StructuredStep,
}

pub trait Interpreter: Send + Sync {
    fn interpret(&self, req: &InterpreterRequest<'_>) -> Result<Interpretation, BackendError>;
}

/// Locators answer in text, as a model would; callers extract the point.
pub trait Locator: Send + Sync {
    fn locate(&self, req: &LocatorRequest<'_>) -> Result<String, BackendError>;
}

impl<T: Interpreter + ?Sized> Interpreter for Box<T> {
    fn interpret(&self, req: &InterpreterRequest<'_>) -> Result<Interpretation, BackendError> {
        (**self).interpret(req)
    }
}

impl<T: Locator + ?Sized> Locator for Box<T> {
    fn locate(&self, req: &LocatorRequest<'_>) -> Result<String, BackendError> {
        (**self).locate(req)
    }
}

pub fn build_locator_prompt(description: &str) -> Result<String, BackendError> {
    if description.is_empty() {
        return Err(BackendError::EmptyDescription);
    }
    Ok(format!(
        "In this UI screenshot, what is the position of the element corresponding to the description \"{description}\" (with point)?"
    ))
}

pub fn build_interpreter_prompt(req: &InterpreterRequest<'_>) -> String {
    let ops: Vec<&str> = OperationKind::ALL.iter().map(|k| k.as_str()).collect();
    let history = history_to_text(req.history);
    let history = if req.history.is_empty() {
        format!("History: {history}")
    } else {
        format!("History:\n{history}")
    };
    format!(
        "You are operating a graphical user interface using only the attached screenshot.\n\
         Task: {task}\n\
         {history}\n\
         Allowed operations: {ops}\n\
         Decide the single next step toward completing the task. Think briefly, then end your reply with these labeled fields, one per line:\n\
         Action: <one of the allowed operations>\n\
         Value: <text to type, option to select, scroll amount, or key combination; omit for CLICK and STOP>\n\
         Element Description: <a short visual description of the target element; omit for STOP>\n\
         Reply with Action: STOP once the task is complete.",
        task = req.task,
        ops = ops.join(", "),
    )
}

fn default_auth_header() -> String {
    "Authorization".into()
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_in_flight() -> usize {
    4
}

/// Connection settings for an HTTP chat endpoint. Model names and endpoints
/// are configuration, never code constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub endpoint_url: String,
    #[serde(default = "default_auth_header")]
    pub auth_header_name: String,
    pub auth_token_env_var: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub timeout: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.max_in_flight == 0 {
            return Err("max_in_flight must be at least 1".into());
        }
        if self.endpoint_url.is_empty() {
            return Err("endpoint_url is empty".into());
        }
        Ok(())
    }
}

struct Gate {
    count: Mutex<usize>,
    freed: Condvar,
    cap: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().expect("gate lock");
        while *n >= self.cap {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().expect("gate lock") -= 1;
        self.0.freed.notify_one();
    }
}

/// Blocking multimodal chat client. Thread-safe; concurrent calls beyond
/// `max_in_flight` wait for a free slot.
pub struct HttpClient {
    cfg: BackendConfig,
    agent: ureq::Agent,
    gate: Gate,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl HttpClient {
    pub fn new(cfg: BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout)))
            .build()
            .into();
        let gate = Gate {
            count: Mutex::new(0),
            freed: Condvar::new(),
            cap: cfg.max_in_flight.max(1),
        };
        Self { cfg, agent, gate }
    }

    pub fn config(&self) -> &BackendConfig {
        &self.cfg
    }

    pub fn request_body(&self, prompt: &str, png: &[u8]) -> Value {
        json!({
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image", "data": base64::engine::general_purpose::STANDARD.encode(png)},
                ],
            }],
        })
    }

    /// Sends one prompt with one image and returns the first text segment of
    /// the first choice. Only transport failures (and 5xx/429) are retried.
    pub fn complete(&self, prompt: &str, png: &[u8]) -> Result<String, BackendError> {
        let token = std::env::var(&self.cfg.auth_token_env_var).map_err(|_| {
            BackendError::Auth(format!(
                "environment variable {} is not set",
                self.cfg.auth_token_env_var
            ))
        })?;
        let header_value = if self.cfg.auth_header_name.eq_ignore_ascii_case("authorization") {
            format!("Bearer {token}")
        } else {
            token
        };
        let body = self.request_body(prompt, png);
        let mut attempt = 0u32;
        loop {
            let outcome = {
                let _permit = self.gate.acquire();
                self.attempt(&header_value, &body)
            };
            match outcome {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) if attempt >= self.cfg.max_retries => {
                    return Err(BackendError::Transport(msg))
                }
                Err(Attempt::Retry(msg)) => {
                    let delay = self.cfg.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("request failed ({msg}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }

    fn attempt(&self, header_value: &str, body: &Value) -> Result<String, Attempt> {
        let resp = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header(self.cfg.auth_header_name.as_str(), header_value)
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => first_text_segment(&text).map_err(Attempt::Fatal),
            429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}"))),
            401 | 403 => Err(Attempt::Fatal(BackendError::Auth(format!(
                "HTTP {status}: {text}"
            )))),
            _ => Err(Attempt::Fatal(BackendError::Protocol {
                message: format!("HTTP {status}"),
                body: text,
            })),
        }
    }
}

fn first_text_segment(body: &str) -> Result<String, BackendError> {
    let protocol = |message: &str| BackendError::Protocol {
        message: message.to_string(),
        body: body.to_string(),
    };
    let v: Value = serde_json::from_str(body).map_err(|e| protocol(&format!("malformed JSON: {e}")))?;
    let content = v
        .pointer("/choices/0/message/content")
        .ok_or_else(|| protocol("response has no choices[0].message.content"))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => parts
            .iter()
            .find(|p| p.get("type").and_then(Value::as_str) == Some("text"))
            .and_then(|p| p.get("text").and_then(Value::as_str))
            .map(str::to_string)
            .ok_or_else(|| protocol("content has no text segment")),
        _ => Err(protocol("content is neither a string nor a list")),
    }
}

/// Interpreter backed by a remote chat model.
pub struct HttpInterpreter(pub HttpClient);

impl Interpreter for HttpInterpreter {
    fn interpret(&self, req: &InterpreterRequest<'_>) -> Result<Interpretation, BackendError> {
        let raw = self.0.complete(&build_interpreter_prompt(req), &req.observation.png)?;
        let step = parse_structured_step(&raw)?;
        Ok(Interpretation { raw, step })
    }
}

/// Locator backed by a remote chat model. Only the screenshot is sent.
pub struct HttpLocator(pub HttpClient);

impl Locator for HttpLocator {
    fn locate(&self, req: &LocatorRequest<'_>) -> Result<String, BackendError> {
        let prompt = build_locator_prompt(req.description)?;
        self.0.complete(&prompt, &req.observation.png)
    }
}

/// Ground-truth locator: the center of the best-matching element.
///
/// An element matches when its description or text equals the query or
/// contains it (case-insensitive). Exact matches rank first, then smaller
/// area, then topmost, then leftmost.
pub fn oracle_locate(req: &LocatorRequest<'_>, screen: &ScreenModel) -> Result<NormalizedPoint, BackendError> {
    let query = req.description.trim().to_lowercase();
    if query.is_empty() {
        return Err(BackendError::EmptyDescription);
    }
    let fields = |e: &crate::sim::Element| {
        let mut v = vec![e.description.to_lowercase()];
        if let Some(t) = &e.text {
            v.push(t.to_lowercase());
        }
        v
    };
    screen
        .elements
        .iter()
        .filter_map(|e| {
            let f = fields(e);
            if f.contains(&query) {
                Some((0u8, e))
            } else if f.iter().any(|s| s.contains(&query)) {
                Some((1u8, e))
            } else {
                None
            }
        })
        .min_by(|(ra, a), (rb, b)| {
            ra.cmp(rb)
                .then(a.bbox.area().total_cmp(&b.bbox.area()))
                .then(a.bbox.y0.total_cmp(&b.bbox.y0))
                .then(a.bbox.x0.total_cmp(&b.bbox.x0))
        })
        .map(|(_, e)| e.bbox.center())
        .ok_or_else(|| BackendError::NoMatch(req.description.to_string()))
}

pub fn format_point(p: NormalizedPoint) -> String {
    format!("({}, {})", p.x, p.y)
}

pub struct OracleLocator;

impl Locator for OracleLocator {
    fn locate(&self, req: &LocatorRequest<'_>) -> Result<String, BackendError> {
        let screen = req.observation.screen_model.as_ref().ok_or(BackendError::NoScreenModel)?;
        oracle_locate(req, screen).map(format_point)
    }
}

pub fn naive_locate(_req: &LocatorRequest<'_>) -> NormalizedPoint {
    NormalizedPoint::CENTER
}

/// Always answers the screen center.
pub struct NaiveLocator;

impl Locator for NaiveLocator {
    fn locate(&self, req: &LocatorRequest<'_>) -> Result<String, BackendError> {
        Ok(format_point(naive_locate(req)))
    }
}

/// Oracle point plus seeded Gaussian noise (`sigma` in normalized units).
///
/// The RNG is keyed on the seed, the description and the screenshot bytes, so
/// equal requests get equal answers regardless of call order or thread.
/// Every sigma shares the same standard-normal draws.
pub fn noisy_locate(
    req: &LocatorRequest<'_>,
    screen: &ScreenModel,
    sigma: f64,
    seed: u64,
) -> Result<NormalizedPoint, BackendError> {
    let center = oracle_locate(req, screen)?;
    if sigma == 0.0 {
        return Ok(center);
    }
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((req.description.len() as u64).to_le_bytes());
    h.update(req.description.as_bytes());
    h.update(&req.observation.png);
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let dx: f64 = StandardNormal.sample(&mut rng);
    let dy: f64 = StandardNormal.sample(&mut rng);
    Ok(NormalizedPoint::clamped(center.x + sigma * dx, center.y + sigma * dy))
}

pub struct NoisyLocator {
    pub sigma: f64,
    pub seed: u64,
}

impl NoisyLocator {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, String> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(format!("sigma must be a finite value >= 0, got {sigma}"));
        }
        Ok(Self { sigma, seed })
    }
}

impl Locator for NoisyLocator {
    fn locate(&self, req: &LocatorRequest<'_>) -> Result<String, BackendError> {
        let screen = req.observation.screen_model.as_ref().ok_or(BackendError::NoScreenModel)?;
        noisy_locate(req, screen, self.sigma, self.seed).map(format_point)
    }
}

/// Returns `script[history.len()]`.
pub fn scripted_interpret(
    req: &InterpreterRequest<'_>,
    script: &[StructuredStep],
) -> Result<StructuredStep, BackendError> {
    script
        .get(req.history.len())
        .cloned()
        .ok_or_else(|| BackendError::ScriptExhausted {
            task: req.task.to_string(),
            len: script.len(),
            history: req.history.len(),
        })
}

/// Script file contents: one script for every task, or one per task text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptBook {
    Single(Vec<StructuredStep>),
    PerTask(BTreeMap<String, Vec<StructuredStep>>),
}

/// Deterministic interpreter replaying fixed steps. Position comes from the
/// request history length, so the backend itself is stateless.
pub struct ScriptedInterpreter {
    book: ScriptBook,
}

impl ScriptedInterpreter {
    pub fn new(book: ScriptBook) -> Self {
        Self { book }
    }

    pub fn single(steps: Vec<StructuredStep>) -> Self {
        Self::new(ScriptBook::Single(steps))
    }

    fn script_for(&self, task: &str) -> Result<&[StructuredStep], BackendError> {
        match &self.book {
            ScriptBook::Single(s) => Ok(s),
            ScriptBook::PerTask(m) => m
                .get(task)
                .map(Vec::as_slice)
                .ok_or_else(|| BackendError::NoScript(task.to_string())),
        }
    }
}

impl Interpreter for ScriptedInterpreter {
    fn interpret(&self, req: &InterpreterRequest<'_>) -> Result<Interpretation, BackendError> {
        let step = scripted_interpret(req, self.script_for(req.task)?)?;
        Ok(Interpretation {
            raw: step.to_labeled_text(),
            step,
        })
    }
}

/// Forces every step to CLICK, dropping any value.
pub fn always_click_interpret(
    req: &InterpreterRequest<'_>,
    inner: &dyn Interpreter,
) -> Result<Interpretation, BackendError> {
    let mut out = inner.interpret(req)?;
    out.step.operation_name = OperationKind::Click.as_str().to_string();
    out.step.value = None;
    Ok(out)
}

pub struct AlwaysClick<I>(pub I);

impl<I: Interpreter> Interpreter for AlwaysClick<I> {
    fn interpret(&self, req: &InterpreterRequest<'_>) -> Result<Interpretation, BackendError> {
        always_click_interpret(req, &self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{validate_triplet, ScreenDims};
    use crate::geometry::NormRect;
    use crate::sim::Element;
    use proptest::prelude::*;

    fn element(id: &str, desc: &str, r: [f64; 4]) -> Element {
        Element {
            id: id.into(),
            bbox: NormRect::new(r[0], r[1], r[2], r[3]).unwrap(),
            description: desc.into(),
            text: None,
            fill_color: [200, 200, 200],
        }
    }

    fn observation(elements: Vec<Element>) -> Observation {
        Observation {
            png: vec![1, 2, 3],
            dims: ScreenDims::new(100, 100).unwrap(),
            screen_model: Some(ScreenModel {
                id: "s".into(),
                elements,
                background: [0, 0, 0],
            }),
        }
    }

    fn loc<'a>(d: &'a str, o: &'a Observation) -> LocatorRequest<'a> {
        LocatorRequest {
            description: d,
            observation: o,
        }
    }

    #[test]
    fn locator_prompt_template() {
        assert_eq!(
            build_locator_prompt("close button").unwrap(),
            "In this UI screenshot, what is the position of the element corresponding to the description \"close button\" (with point)?"
        );
        assert_eq!(build_locator_prompt(""), Err(BackendError::EmptyDescription));
        assert!(build_locator_prompt("the \"OK\" button").unwrap().contains("\"the \"OK\" button\""));
    }

    fn history() -> Vec<HistoryEntry> {
        vec![
            HistoryEntry::offline(StructuredStep::new("Search bar", "TYPE", Some("Netflix"))),
            HistoryEntry::offline(StructuredStep::new("first result", "CLICK", None)),
        ]
    }

    #[test]
    fn interpreter_prompt_sections() {
        let obs = observation(vec![]);
        let empty = build_interpreter_prompt(&InterpreterRequest {
            task: "Find Netflix stock",
            history: &[],
            observation: &obs,
        });
        assert!(empty.contains("Task: Find Netflix stock"));
        assert!(empty.contains("History: (none)"));
        assert!(empty.contains("CLICK, TYPE, SELECT, SCROLL, HOTKEY, STOP"));
        assert!(empty.contains("Action:") && empty.contains("Element Description:"));

        let h = history();
        let req = InterpreterRequest {
            task: "Find Netflix stock",
            history: &h,
            observation: &obs,
        };
        let two = build_interpreter_prompt(&req);
        let first = two.find("\n1. TYPE \"Netflix\" on \"Search bar\"").unwrap();
        let second = two.find("\n2. CLICK on \"first result\"").unwrap();
        assert!(first < second);
        assert_eq!(two, build_interpreter_prompt(&req));
    }

    #[test]
    fn oracle_examples() {
        let obs = observation(vec![element("s", "search bar", [0.25, 0.05, 0.75, 0.12])]);
        let p = oracle_locate(&loc("search bar", &obs), obs.screen_model.as_ref().unwrap()).unwrap();
        assert!((p.x - 0.5).abs() < 1e-12 && (p.y - 0.085).abs() < 1e-12);

        let obs = observation(vec![
            element("big", "save button", [0.0, 0.0, 0.5, 0.1]),
            element("small", "save button", [0.5, 0.5, 0.7, 0.6]),
        ]);
        let p = oracle_locate(&loc("save", &obs), obs.screen_model.as_ref().unwrap()).unwrap();
        assert_eq!(p, NormRect::new(0.5, 0.5, 0.7, 0.6).unwrap().center());

        assert_eq!(
            oracle_locate(&loc("nonexistent", &obs), obs.screen_model.as_ref().unwrap()),
            Err(BackendError::NoMatch("nonexistent".into()))
        );
    }

    #[test]
    fn oracle_prefers_exact_then_top_then_left() {
        let obs = observation(vec![
            element("a", "menu", [0.5, 0.5, 0.6, 0.6]),
            element("b", "menu icon", [0.0, 0.0, 0.01, 0.01]),
        ]);
        let sm = obs.screen_model.as_ref().unwrap();
        assert_eq!(oracle_locate(&loc("MENU", &obs), sm).unwrap(), sm.elements[0].bbox.center());
        let obs = observation(vec![
            element("low", "tab", [0.25, 0.5, 0.5, 0.625]),
            element("right", "tab", [0.5, 0.125, 0.75, 0.25]),
            element("left", "tab", [0.25, 0.125, 0.5, 0.25]),
        ]);
        let sm = obs.screen_model.as_ref().unwrap();
        assert_eq!(oracle_locate(&loc("tab", &obs), sm).unwrap(), sm.elements[2].bbox.center());
    }

    #[test]
    fn oracle_needs_a_screen_model() {
        let obs = observation(vec![]).pixels_only();
        assert_eq!(OracleLocator.locate(&loc("x", &obs)), Err(BackendError::NoScreenModel));
    }

    #[test]
    fn naive_is_constant() {
        let a = observation(vec![]);
        let b = observation(vec![element("x", "x", [0.0, 0.0, 0.1, 0.1])]);
        assert_eq!(naive_locate(&loc("anything", &a)), NormalizedPoint::CENTER);
        assert_eq!(naive_locate(&loc("", &b)), NormalizedPoint::CENTER);
        assert_eq!(NaiveLocator.locate(&loc("q", &a)).unwrap(), "(0.5, 0.5)");
    }

    #[test]
    fn noisy_examples() {
        let obs = observation(vec![element("s", "search bar", [0.25, 0.05, 0.75, 0.12])]);
        let sm = obs.screen_model.as_ref().unwrap();
        let req = loc("search bar", &obs);
        assert_eq!(noisy_locate(&req, sm, 0.0, 9).unwrap(), oracle_locate(&req, sm).unwrap());
        assert_eq!(noisy_locate(&req, sm, 0.1, 9).unwrap(), noisy_locate(&req, sm, 0.1, 9).unwrap());
        assert_ne!(noisy_locate(&req, sm, 0.1, 9).unwrap(), noisy_locate(&req, sm, 0.1, 10).unwrap());
        let far = noisy_locate(&req, sm, 10.0, 3).unwrap();
        assert!((0.0..=1.0).contains(&far.x) && (0.0..=1.0).contains(&far.y));
        assert!(NoisyLocator::new(-1.0, 0).is_err());
        assert_eq!(
            noisy_locate(&loc("nope", &obs), sm, 0.1, 1),
            Err(BackendError::NoMatch("nope".into()))
        );
    }

    fn script() -> Vec<StructuredStep> {
        vec![
            StructuredStep::new("search bar", "TYPE", Some("netflix")),
            StructuredStep::new("first result", "CLICK", None),
            StructuredStep::new("", "STOP", None),
        ]
    }

    #[test]
    fn scripted_follows_history_length() {
        let obs = observation(vec![]);
        let s = script();
        let first = scripted_interpret(&InterpreterRequest { task: "t", history: &[], observation: &obs }, &s);
        assert_eq!(first.unwrap(), s[0]);
        let h: Vec<HistoryEntry> = s.iter().cloned().map(HistoryEntry::offline).collect();
        assert_eq!(
            scripted_interpret(&InterpreterRequest { task: "t", history: &h, observation: &obs }, &s),
            Err(BackendError::ScriptExhausted { task: "t".into(), len: 3, history: 3 })
        );
        let backend = ScriptedInterpreter::single(s.clone());
        let replay = |b: &ScriptedInterpreter| {
            (0..3)
                .map(|k| {
                    b.interpret(&InterpreterRequest { task: "t", history: &h[..k], observation: &obs })
                        .unwrap()
                        .step
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(replay(&backend), s);
        assert_eq!(replay(&backend), replay(&backend));
    }

    #[test]
    fn scripted_per_task_lookup() {
        let obs = observation(vec![]);
        let book = ScriptBook::PerTask(BTreeMap::from([("a".to_string(), script())]));
        let b = ScriptedInterpreter::new(book);
        assert!(b.interpret(&InterpreterRequest { task: "a", history: &[], observation: &obs }).is_ok());
        assert_eq!(
            b.interpret(&InterpreterRequest { task: "b", history: &[], observation: &obs }),
            Err(BackendError::NoScript("b".into()))
        );
        let parsed: ScriptBook = serde_json::from_str(r#"[{"description":"x","operation":"CLICK"}]"#).unwrap();
        assert!(matches!(parsed, ScriptBook::Single(v) if v.len() == 1));
    }

    struct Failing;
    impl Interpreter for Failing {
        fn interpret(&self, _: &InterpreterRequest<'_>) -> Result<Interpretation, BackendError> {
            Err(BackendError::Transport("down".into()))
        }
    }

    #[test]
    fn always_click_rewrites_operation() {
        let obs = observation(vec![]);
        let req = InterpreterRequest { task: "t", history: &[], observation: &obs };
        let inner = ScriptedInterpreter::single(script());
        let out = AlwaysClick(inner).interpret(&req).unwrap().step;
        assert_eq!(out, StructuredStep::new("search bar", "CLICK", None));

        let clicks = ScriptedInterpreter::single(vec![StructuredStep::new("ok", "CLICK", None)]);
        assert_eq!(
            AlwaysClick(clicks).interpret(&req).unwrap().step,
            StructuredStep::new("ok", "CLICK", None)
        );
        assert_eq!(
            AlwaysClick(Failing).interpret(&req),
            Err(BackendError::Transport("down".into()))
        );
    }

    #[test]
    fn first_text_segment_shapes() {
        assert_eq!(
            first_text_segment(r#"{"choices":[{"message":{"content":"(0.1, 0.2)"}}]}"#).unwrap(),
            "(0.1, 0.2)"
        );
        assert_eq!(
            first_text_segment(
                r#"{"choices":[{"message":{"content":[{"type":"image"},{"type":"text","text":"hi"}]}}]}"#
            )
            .unwrap(),
            "hi"
        );
        match first_text_segment("{not json") {
            Err(BackendError::Protocol { body, .. }) => assert_eq!(body, "{not json"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(first_text_segment(r#"{"choices":[]}"#), Err(BackendError::Protocol { .. })));
    }

    #[test]
    fn missing_token_fails_before_io() {
        let client = HttpClient::new(BackendConfig {
            // nothing listens here; an attempted request would be a transport error
            endpoint_url: "http://127.0.0.1:9/v1/chat".into(),
            auth_header_name: "Authorization".into(),
            auth_token_env_var: "DUOSTEP_TEST_TOKEN_THAT_IS_NEVER_SET".into(),
            model_name: "m".into(),
            temperature: 0.0,
            timeout: 1,
            max_retries: 3,
            backoff_ms: 1,
            max_in_flight: 1,
        });
        assert!(matches!(client.complete("p", &[]), Err(BackendError::Auth(_))));
        let _ = validate_triplet("STOP", None, None).unwrap();
    }

    proptest! {
        #[test]
        fn locator_prompt_embeds_description(d in ".{1,40}") {
            let p = build_locator_prompt(&d).unwrap();
            let prefix = "In this UI screenshot, what is the position of the element corresponding to the description \"";
            let suffix = "\" (with point)?";
            prop_assert!(p.starts_with(prefix) && p.ends_with(suffix));
            prop_assert_eq!(&p[prefix.len()..p.len() - suffix.len()], d.as_str());
        }

        #[test]
        fn oracle_point_lies_in_matched_bbox(
            boxes in proptest::collection::vec((0.0f64..0.9, 0.0f64..0.9, 0.001f64..0.1, 0.001f64..0.1), 1..6),
            pick in 0usize..6,
        ) {
            let elements: Vec<Element> = boxes.iter().enumerate().map(|(i, &(x, y, w, h))| {
                element(&format!("e{i}"), &format!("item {i}"), [x, y, x + w, y + h])
            }).collect();
            let i = pick % elements.len();
            let obs = observation(elements.clone());
            let p = oracle_locate(&loc(&format!("item {i}"), &obs), obs.screen_model.as_ref().unwrap()).unwrap();
            prop_assert!(elements[i].bbox.contains(p));
        }

        #[test]
        fn zero_sigma_noisy_equals_oracle(seed in any::<u64>(), x in 0.0f64..0.8, y in 0.0f64..0.8) {
            let obs = observation(vec![element("t", "target", [x, y, x + 0.1, y + 0.1])]);
            let sm = obs.screen_model.as_ref().unwrap();
            let req = loc("target", &obs);
            prop_assert_eq!(noisy_locate(&req, sm, 0.0, seed).unwrap(), oracle_locate(&req, sm).unwrap());
        }
    }
}
