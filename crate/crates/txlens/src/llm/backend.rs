//! Model backends and the query/parse retry layer.
//!
//! Two backends exist: `RemoteBackend` posts a chat completion to an
//! OpenAI-style HTTP endpoint, and `ScriptedBackend` replays canned replies
//! from a fixture file for offline runs and tests. Both are deterministic
//! functions of `(prompt, round)` on the scripted side and opaque on the
//! remote side.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use super::parse::{parse_model_response, ParseError};
use super::{EngineError, ModelOutput};
use crate::util::map_slice;

/// Which transport a backend uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    RemoteApi,
    Scripted,
}

/// A failure while obtaining raw text from a model.
#[derive(Debug, Error)]
pub enum QueryError {
    #[error("model {model}: transport failure: {reason}")]
    Transport { model: String, reason: String },
    #[error("model {model}: timed out after {after:?}")]
    Timeout { model: String, after: Duration },
    #[error("model {model}: no scripted reply for round {round}")]
    ScriptMiss { model: String, round: u32 },
}

/// A source of model completions.
pub trait ModelBackend: Send + Sync {
    fn id(&self) -> &str;
    fn kind(&self) -> BackendKind;
    /// Produces the raw completion text for `prompt` in reflection round
    /// `round` (0 for the initial assessment).
    fn complete(&self, prompt: &str, round: u32, timeout: Duration) -> Result<String, QueryError>;
}

/// A failure loading a scripted reply fixture.
#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("failed to read script {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid script {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

/// One prompt-matching rule in a script file.
#[derive(Debug, Deserialize)]
struct ScriptRule {
    /// Substring the prompt must contain for the rule to fire.
    contains: String,
    reply: serde_json::Value,
    /// Rounds the rule applies to; absent means every round.
    #[serde(default)]
    rounds: Option<Vec<u32>>,
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    default: Option<serde_json::Value>,
    #[serde(default)]
    rounds: HashMap<String, serde_json::Value>,
    #[serde(default)]
    rules: Vec<ScriptRule>,
}

/// Replays canned replies from a JSON fixture.
///
/// Resolution order for a `(prompt, round)` pair: the first `rules` entry
/// whose `contains` substring appears in the prompt (and whose `rounds`
/// list, if any, includes the round), then the `rounds` map keyed by the
/// round number, then `default`. No match is a `ScriptMiss`.
pub struct ScriptedBackend {
    id: String,
    script: ScriptFile,
}

fn reply_text(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl ScriptedBackend {
    pub fn from_file(id: &str, path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let script: ScriptFile =
            serde_json::from_str(&text).map_err(|e| ScriptError::Parse {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        for rule in &script.rules {
            if rule.contains.is_empty() {
                return Err(ScriptError::Parse {
                    path: path.to_path_buf(),
                    reason: "rule with empty `contains` would match every prompt".to_string(),
                });
            }
        }
        Ok(ScriptedBackend { id: id.to_string(), script })
    }
}

impl ModelBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, prompt: &str, round: u32, _timeout: Duration) -> Result<String, QueryError> {
        for rule in &self.script.rules {
            let round_ok = rule.rounds.as_ref().is_none_or(|rs| rs.contains(&round));
            if round_ok && prompt.contains(&rule.contains) {
                return Ok(reply_text(&rule.reply));
            }
        }
        if let Some(reply) = self.script.rounds.get(&round.to_string()) {
            return Ok(reply_text(reply));
        }
        if let Some(reply) = &self.script.default {
            return Ok(reply_text(reply));
        }
        Err(QueryError::ScriptMiss { model: self.id.clone(), round })
    }
}

/// Outcome of one HTTP POST attempt, before model-level error mapping.
#[derive(Debug)]
pub enum PostError {
    Timeout,
    Failed(String),
}

/// Transport seam for `RemoteBackend`, injectable in tests.
pub trait HttpPost: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<String, PostError>;
}

/// Blocking reqwest implementation of `HttpPost`.
pub struct ReqwestPost {
    client: reqwest::blocking::Client,
}

impl ReqwestPost {
    pub fn new() -> Self {
        ReqwestPost { client: reqwest::blocking::Client::new() }
    }
}

impl Default for ReqwestPost {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpPost for ReqwestPost {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<String, PostError> {
        let mut req = self.client.post(url).json(body).timeout(timeout);
        if let Some(key) = api_key {
            req = req.bearer_auth(key);
        }
        let map_err = |e: reqwest::Error| {
            if e.is_timeout() {
                PostError::Timeout
            } else {
                PostError::Failed(e.to_string())
            }
        };
        let resp = req.send().map_err(map_err)?;
        let resp = resp.error_for_status().map_err(map_err)?;
        resp.text().map_err(map_err)
    }
}

/// Posts chat completions to an OpenAI-style `/chat/completions` endpoint
/// and extracts `choices[0].message.content`.
pub struct RemoteBackend {
    id: String,
    url: String,
    api_key: Option<String>,
    poster: Box<dyn HttpPost>,
}

impl RemoteBackend {
    pub fn new(id: &str, url: &str, api_key: Option<String>) -> Self {
        Self::with_poster(id, url, api_key, Box::new(ReqwestPost::new()))
    }

    pub fn with_poster(
        id: &str,
        url: &str,
        api_key: Option<String>,
        poster: Box<dyn HttpPost>,
    ) -> Self {
        RemoteBackend { id: id.to_string(), url: url.to_string(), api_key, poster }
    }
}

impl ModelBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteApi
    }

    fn complete(&self, prompt: &str, _round: u32, timeout: Duration) -> Result<String, QueryError> {
        let body = serde_json::json!({
            "model": self.id,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        });
        let text = self
            .poster
            .post_json(&self.url, self.api_key.as_deref(), &body, timeout)
            .map_err(|e| match e {
                PostError::Timeout => QueryError::Timeout { model: self.id.clone(), after: timeout },
                PostError::Failed(reason) => QueryError::Transport { model: self.id.clone(), reason },
            })?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| QueryError::Transport {
                model: self.id.clone(),
                reason: format!("malformed completion response: {e}"),
            })?;
        match value.pointer("/choices/0/message/content").and_then(|v| v.as_str()) {
            Some(content) => Ok(content.to_string()),
            None => Err(QueryError::Transport {
                model: self.id.clone(),
                reason: "completion response has no choices[0].message.content".to_string(),
            }),
        }
    }
}

/// Fetches raw completion text, retrying exactly once on a transport
/// failure. Timeouts and script misses are not retried.
pub fn query(
    backend: &dyn ModelBackend,
    prompt: &str,
    round: u32,
    timeout: Duration,
) -> Result<String, QueryError> {
    match backend.complete(prompt, round, timeout) {
        Ok(text) => Ok(text),
        Err(QueryError::Transport { model, reason }) => {
            log::warn!("model {model}: transport failure ({reason}), retrying once");
            backend.complete(prompt, round, timeout)
        }
        Err(e) => Err(e),
    }
}

/// Queries a backend and parses the reply into a `ModelOutput`.
///
/// A reply with no JSON object in it earns exactly one fresh query; a reply
/// that has a JSON object with bad fields fails immediately, since the model
/// understood the format and a retry would just repeat the mistake.
pub fn elicit(
    backend: &dyn ModelBackend,
    prompt: &str,
    round: u32,
    timeout: Duration,
) -> Result<ModelOutput, EngineError> {
    let text = query(backend, prompt, round, timeout)?;
    match parse_model_response(&text, backend.id()) {
        Ok(output) => Ok(output),
        Err(ParseError::NoJson { model }) => {
            log::warn!("model {model}: reply had no JSON object, re-querying once");
            let text = query(backend, prompt, round, timeout)?;
            Ok(parse_model_response(&text, backend.id())?)
        }
        Err(e) => Err(e.into()),
    }
}

/// Elicits verdicts from every backend, pairing each model id with its
/// result. Runs on the rayon pool when the `parallel` feature is active;
/// output order always matches input order.
pub fn elicit_all(
    backends: &[Box<dyn ModelBackend>],
    prompt: &str,
    round: u32,
    timeout: Duration,
) -> Vec<(String, Result<ModelOutput, EngineError>)> {
    map_slice(backends, |backend| {
        (backend.id().to_string(), elicit(backend.as_ref(), prompt, round, timeout))
    })
}
