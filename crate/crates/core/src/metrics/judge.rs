//! LLM-as-judge scoring: prompt, reply parsing, retries and a replay cache.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::metrics::answer_match;
use crate::provenance::sha256_hex;

pub const JUDGE_SYSTEM_PROMPT: &str = "An evaluator who rates my answer based on the correct answer.";

pub fn user_prompt(gt: &str, pred: &str) -> String {
    format!(
        "Rate my answer based on the correct answer out of 100, with higher scores indicating that the answer is closer to the correct answer, and you should be accurate to single digits like 62, 78, 41, etc. This is the correct answer: {gt}. This is my answer: {pred}."
    )
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum JudgeError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("no score in reply {0:?}")]
    Unparseable(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("prompt not in replay cache")]
    NotCached,
    #[error("judge config: {0}")]
    Config(String),
    #[error("cache {path}: {reason}")]
    Cache { path: String, reason: String },
}

pub trait JudgeBackend: Send + Sync {
    fn send(&self, system: &str, user: &str) -> Result<String, JudgeError>;
}

/// First integer in `[0, 100]` in the reply.
pub fn parse_score(reply: &str) -> Option<u8> {
    let bytes = reply.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let negative = start > 0 && bytes[start - 1] == b'-';
            if !negative {
                if let Ok(v) = reply[start..i].parse::<u32>() {
                    if v <= 100 {
                        return Some(v as u8);
                    }
                }
            }
        } else {
            i += 1;
        }
    }
    None
}

/// Splits a prompt built by [`user_prompt`] back into (gt, pred).
fn split_prompt(user: &str) -> Option<(&str, &str)> {
    let rest = user.split_once("This is the correct answer: ")?.1;
    let (gt, pred) = rest.split_once(". This is my answer: ")?;
    Some((gt, pred.strip_suffix('.').unwrap_or(pred)))
}

/// Scripted judge. Replies are served in order; once the script runs out it
/// scores by token overlap, so unscripted use stays deterministic.
#[derive(Default)]
pub struct MockJudge {
    script: Mutex<VecDeque<Result<String, JudgeError>>>,
    calls: Mutex<Vec<(String, String)>>,
}

impl MockJudge {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(replies.into_iter().map(|r| Ok(r.into())))
    }

    pub fn with_results<I: IntoIterator<Item = Result<String, JudgeError>>>(replies: I) -> Self {
        Self {
            script: Mutex::new(replies.into_iter().collect()),
            calls: Mutex::default(),
        }
    }

    /// Every (system, user) pair received so far.
    pub fn calls(&self) -> Vec<(String, String)> {
        self.calls.lock().unwrap().clone()
    }
}

impl JudgeBackend for MockJudge {
    fn send(&self, system: &str, user: &str) -> Result<String, JudgeError> {
        self.calls.lock().unwrap().push((system.to_string(), user.to_string()));
        if let Some(r) = self.script.lock().unwrap().pop_front() {
            return r;
        }
        let (gt, pred) = split_prompt(user).ok_or_else(|| JudgeError::Unparseable(user.to_string()))?;
        Ok(format!("{}", (answer_match(pred, gt) * 100.0).round() as u32))
    }
}

/// Prompt-hash → score map, persisted as sorted JSON.
#[derive(Debug, Default)]
pub struct ReplayCache {
    path: Option<PathBuf>,
    entries: Mutex<BTreeMap<String, u8>>,
}

impl ReplayCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the cache at `path`; a missing file starts empty.
    pub fn open(path: &Path) -> Result<Self, JudgeError> {
        let err = |reason: String| JudgeError::Cache {
            path: path.display().to_string(),
            reason,
        };
        let entries = match std::fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| err(e.to_string()))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(err(e.to_string())),
        };
        Ok(Self {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
        })
    }

    pub fn key(system: &str, user: &str) -> String {
        sha256_hex(format!("{system}\n{user}").as_bytes())
    }

    pub fn get(&self, key: &str) -> Option<u8> {
        self.entries.lock().unwrap().get(key).copied()
    }

    pub fn insert(&self, key: String, score: u8) {
        self.entries.lock().unwrap().insert(key, score);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&*self.entries.lock().unwrap()).expect("map serializes")
    }

    pub fn save(&self) -> Result<(), JudgeError> {
        let Some(path) = &self.path else { return Ok(()) };
        std::fs::write(path, self.to_json() + "\n").map_err(|e| JudgeError::Cache {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Backend that only answers from the cache.
pub struct ReplayJudge;

impl JudgeBackend for ReplayJudge {
    fn send(&self, _: &str, _: &str) -> Result<String, JudgeError> {
        Err(JudgeError::NotCached)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    Live,
    Mock,
    Replay,
}

impl std::str::FromStr for JudgeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "live" => Ok(JudgeMode::Live),
            "mock" => Ok(JudgeMode::Mock),
            "replay" => Ok(JudgeMode::Replay),
            other => Err(format!("unknown judge mode {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Attempts after the first one.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeConfig {
    /// Chat-completions URL.
    pub endpoint: String,
    pub model: String,
    pub timeout_s: f64,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub cache: Option<PathBuf>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            timeout_s: 30.0,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            cache: None,
        }
    }
}

/// HTTP chat-completion judge. The key comes from `DRIVEFORGE_JUDGE_KEY`.
pub struct LiveJudge {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    key: String,
}

impl LiveJudge {
    pub const KEY_VAR: &'static str = "DRIVEFORGE_JUDGE_KEY";

    pub fn from_env(config: &JudgeConfig) -> Result<Self, JudgeError> {
        let key = std::env::var(Self::KEY_VAR).map_err(|_| JudgeError::Config(format!("{} is not set", Self::KEY_VAR)))?;
        Ok(Self::new(config, key))
    }

    pub fn new(config: &JudgeConfig, key: String) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(config.timeout_s)).build(),
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            key,
        }
    }
}

impl JudgeBackend for LiveJudge {
    fn send(&self, system: &str, user: &str) -> Result<String, JudgeError> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {}", self.key))
            .send_json(body)
            .map_err(|e| JudgeError::Transport(e.to_string()))?;
        let v: serde_json::Value = resp.into_json().map_err(|e| JudgeError::Transport(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| JudgeError::Transport(format!("unexpected response body {v}")))
    }
}

/// Scores `pred` against `gt`. The question is not part of the prompt; it is
/// accepted so callers can log it alongside the score.
pub fn gpt_score(
    _question: &str,
    gt: &str,
    pred: &str,
    backend: &dyn JudgeBackend,
    cache: Option<&ReplayCache>,
    retry: RetryPolicy,
) -> Result<u8, JudgeError> {
    let user = user_prompt(gt, pred);
    let key = ReplayCache::key(JUDGE_SYSTEM_PROMPT, &user);
    if let Some(score) = cache.and_then(|c| c.get(&key)) {
        return Ok(score);
    }
    let mut last = String::new();
    for attempt in 0..=retry.retries {
        if attempt > 0 && retry.backoff_ms > 0 {
            std::thread::sleep(Duration::from_millis(retry.backoff_ms << (attempt - 1).min(16)));
        }
        match backend.send(JUDGE_SYSTEM_PROMPT, &user) {
            Ok(reply) => match parse_score(&reply) {
                Some(score) => {
                    if let Some(c) = cache {
                        c.insert(key, score);
                    }
                    return Ok(score);
                }
                None => last = JudgeError::Unparseable(reply).to_string(),
            },
            Err(JudgeError::NotCached) => return Err(JudgeError::NotCached),
            Err(e) => last = e.to_string(),
        }
        log::debug!("judge attempt {} failed: {last}", attempt + 1);
    }
    Err(JudgeError::Exhausted {
        attempts: retry.retries + 1,
        last,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct JudgeItem {
    pub id: String,
    pub question: String,
    pub gt: String,
    pub pred: String,
}

/// Scores every item with at most `max_in_flight` concurrent requests.
pub fn score_batch(
    items: &[JudgeItem],
    backend: &dyn JudgeBackend,
    cache: Option<&ReplayCache>,
    retry: RetryPolicy,
    max_in_flight: usize,
) -> BTreeMap<String, Result<u8, JudgeError>> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(BTreeMap::new());
    let workers = max_in_flight.max(1).min(items.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(i) else { break };
                let r = gpt_score(&item.question, &item.gt, &item.pred, backend, cache, retry);
                results.lock().unwrap().insert(item.id.clone(), r);
            });
        }
    });
    results.into_inner().unwrap()
}
