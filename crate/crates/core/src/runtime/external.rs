//! Bridge to an external model over newline-delimited JSON, via a child
//! process's stdio or HTTP POST.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::runtime::answerer::{AnswerError, AnswerRequest, Answerer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalConfig {
    /// Seconds to wait for all replies of one batch.
    pub timeout_s: f64,
    /// Times a missing reply is requested again.
    pub retries: u32,
}

impl Default for ExternalConfig {
    fn default() -> Self {
        Self {
            timeout_s: 60.0,
            retries: 1,
        }
    }
}

/// A reply line: `{"id": ..., "answer": ...}` or `{"id": ..., "error": ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reply {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Reply {
    fn into_result(self) -> Result<String, AnswerError> {
        match (self.answer, self.error) {
            (Some(a), None) => Ok(a),
            (_, Some(e)) => Err(AnswerError::Remote(e)),
            (None, None) => Err(AnswerError::Protocol(format!("reply {} has neither answer nor error", self.id))),
        }
    }
}

pub fn parse_reply(line: &str) -> Result<Reply, AnswerError> {
    serde_json::from_str(line).map_err(|e| AnswerError::Protocol(format!("bad reply line {line:?}: {e}")))
}

/// Collects replies for `reqs` through `exchange`, resending unanswered ids
/// up to `retries` times. `exchange` sends a batch and returns whatever
/// replies arrived in time.
fn gather<F>(reqs: &[AnswerRequest], config: &ExternalConfig, mut exchange: F) -> Vec<Result<String, AnswerError>>
where
    F: FnMut(&[&AnswerRequest]) -> Result<Vec<Reply>, AnswerError>,
{
    let mut results: HashMap<&str, Result<String, AnswerError>> = HashMap::new();
    let mut last_err = AnswerError::Timeout(config.timeout_s);
    for _ in 0..=config.retries {
        let missing: Vec<&AnswerRequest> = reqs.iter().filter(|r| !results.contains_key(r.id.as_str())).collect();
        if missing.is_empty() {
            break;
        }
        match exchange(&missing) {
            Ok(replies) => {
                for reply in replies {
                    if let Some(r) = missing.iter().find(|r| r.id == reply.id) {
                        results.insert(r.id.as_str(), reply.into_result());
                    } else {
                        log::debug!("ignoring reply for unknown id {}", reply.id);
                    }
                }
            }
            Err(e) => last_err = e,
        }
    }
    reqs.iter()
        .map(|r| results.remove(r.id.as_str()).unwrap_or_else(|| Err(last_err.clone())))
        .collect()
}

struct ExecState {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<Result<Reply, AnswerError>>,
    /// Replies that arrived for requests no longer waited on.
    stash: BTreeMap<String, Reply>,
}

/// Child process speaking the line protocol on stdin/stdout.
pub struct ExecAnswerer {
    command: String,
    config: ExternalConfig,
    state: Mutex<ExecState>,
}

impl ExecAnswerer {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str, config: ExternalConfig) -> Result<Self, AnswerError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AnswerError::Transport(format!("spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let msg = match line {
                    Ok(l) if l.trim().is_empty() => continue,
                    Ok(l) => parse_reply(&l),
                    Err(e) => Err(AnswerError::Transport(e.to_string())),
                };
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            command: command.to_string(),
            config,
            state: Mutex::new(ExecState {
                child,
                stdin,
                lines: rx,
                stash: BTreeMap::new(),
            }),
        })
    }
}

impl ExecState {
    fn exchange(&mut self, reqs: &[&AnswerRequest], timeout: f64) -> Result<Vec<Reply>, AnswerError> {
        for r in reqs {
            let line = serde_json::to_string(r).expect("request serializes");
            writeln!(self.stdin, "{line}").map_err(|e| AnswerError::Transport(e.to_string()))?;
        }
        self.stdin.flush().map_err(|e| AnswerError::Transport(e.to_string()))?;
        let mut out: Vec<Reply> = reqs.iter().filter_map(|r| self.stash.remove(&r.id)).collect();
        let deadline = Instant::now() + Duration::from_secs_f64(timeout);
        let mut protocol_err = None;
        while out.len() < reqs.len() {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.lines.recv_timeout(left) {
                Ok(Ok(reply)) => {
                    if reqs.iter().any(|r| r.id == reply.id) && !out.iter().any(|o| o.id == reply.id) {
                        out.push(reply);
                    } else {
                        self.stash.insert(reply.id.clone(), reply);
                    }
                }
                Ok(Err(e)) => protocol_err = Some(e),
                Err(RecvTimeoutError::Timeout) => break,
                Err(RecvTimeoutError::Disconnected) => {
                    if out.is_empty() {
                        return Err(AnswerError::Transport("answer process closed its output".into()));
                    }
                    break;
                }
            }
        }
        if out.is_empty() {
            if let Some(e) = protocol_err {
                return Err(e);
            }
        }
        Ok(out)
    }
}

impl Answerer for ExecAnswerer {
    fn answer(&self, req: &AnswerRequest) -> Result<String, AnswerError> {
        self.answer_batch(std::slice::from_ref(req)).pop().expect("one result")
    }

    fn answer_batch(&self, reqs: &[AnswerRequest]) -> Vec<Result<String, AnswerError>> {
        let mut state = self.state.lock().unwrap();
        let timeout = self.config.timeout_s;
        gather(reqs, &self.config, |batch| state.exchange(batch, timeout))
    }

    fn name(&self) -> String {
        format!("exec:{}", self.command)
    }
}

impl Drop for ExecAnswerer {
    fn drop(&mut self) {
        if let Ok(state) = self.state.get_mut() {
            let _ = state.child.kill();
            let _ = state.child.wait();
        }
    }
}

/// HTTP endpoint: each batch is one POST whose body and response are NDJSON.
pub struct HttpAnswerer {
    url: String,
    config: ExternalConfig,
    agent: ureq::Agent,
}

impl HttpAnswerer {
    pub fn new(url: &str, config: ExternalConfig) -> Self {
        Self {
            url: url.to_string(),
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(config.timeout_s)).build(),
            config,
        }
    }

    fn exchange(&self, reqs: &[&AnswerRequest]) -> Result<Vec<Reply>, AnswerError> {
        let body: String = reqs.iter().map(|r| serde_json::to_string(r).expect("request serializes") + "\n").collect();
        let resp = self
            .agent
            .post(&self.url)
            .set("Content-Type", "application/x-ndjson")
            .send_string(&body)
            .map_err(|e| AnswerError::Transport(e.to_string()))?;
        let text = resp.into_string().map_err(|e| AnswerError::Transport(e.to_string()))?;
        text.lines().filter(|l| !l.trim().is_empty()).map(parse_reply).collect()
    }
}

impl Answerer for HttpAnswerer {
    fn answer(&self, req: &AnswerRequest) -> Result<String, AnswerError> {
        self.answer_batch(std::slice::from_ref(req)).pop().expect("one result")
    }

    fn answer_batch(&self, reqs: &[AnswerRequest]) -> Vec<Result<String, AnswerError>> {
        gather(reqs, &self.config, |batch| self.exchange(batch))
    }

    fn name(&self) -> String {
        format!("http:{}", self.url)
    }
}
