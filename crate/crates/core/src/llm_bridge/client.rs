use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{BridgeError, EndpointConfig};

/// Anything that turns a prompt into completion text.
pub trait CompletionSource: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, BridgeError>;
}

impl<F> CompletionSource for F
where
    F: Fn(&str) -> Result<String, BridgeError> + Send + Sync,
{
    fn complete(&self, prompt: &str) -> Result<String, BridgeError> {
        self(prompt)
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct InFlightLimit {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.current.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Blocking client for a completion-style JSON endpoint.
pub struct HttpCompletion {
    config: EndpointConfig,
    token: String,
    client: reqwest::blocking::Client,
    limit: InFlightLimit,
}

impl HttpCompletion {
    /// Fails without touching the network when the token variable is unset.
    pub fn new(config: EndpointConfig) -> Result<Self, BridgeError> {
        config.validate()?;
        let token = std::env::var(&config.auth_token_env_var).map_err(|_| BridgeError::MissingToken {
            var: config.auth_token_env_var.clone(),
        })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BridgeError::Config(e.to_string()))?;
        Ok(Self {
            limit: InFlightLimit::new(config.max_in_flight),
            config,
            token,
            client,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Fails fast when nothing answers at `base_url`. Any HTTP status counts
    /// as reachable.
    pub fn check_reachable(&self) -> Result<(), BridgeError> {
        self.client
            .get(&self.config.base_url)
            .send()
            .map(|_| ())
            .map_err(|e| BridgeError::Transport {
                attempts: 1,
                message: e.to_string(),
            })
    }

    fn attempt(&self, prompt: &str) -> Result<String, Attempt> {
        let _permit = self.limit.acquire();
        let body = json!({
            "model": self.config.model_name,
            "prompt": prompt,
            "max_tokens": self.config.max_tokens,
        });
        let response = self
            .client
            .post(self.config.url())
            .bearer_auth(&self.token)
            .json(&body)
            .send()
            .map_err(|e| Attempt::Transient(BridgeError::Transport {
                attempts: 0,
                message: e.to_string(),
            }))?;
        let status = response.status().as_u16();
        let text = response.text().unwrap_or_default();
        if !(200..300).contains(&status) {
            let err = BridgeError::Endpoint { status, body: text };
            return Err(if status >= 500 || status == 429 {
                Attempt::Transient(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        completion_text(&text).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Transient(BridgeError),
    Fatal(BridgeError),
}

/// Reads `completion`, falling back to `choices[0].text`.
fn completion_text(body: &str) -> Result<String, BridgeError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BridgeError::MalformedResponse(format!("{e}: {body}")))?;
    value
        .get("completion")
        .and_then(Value::as_str)
        .or_else(|| value.pointer("/choices/0/text").and_then(Value::as_str))
        .map(String::from)
        .ok_or_else(|| BridgeError::MalformedResponse(format!("no completion text in {body}")))
}

impl CompletionSource for HttpCompletion {
    fn complete(&self, prompt: &str) -> Result<String, BridgeError> {
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                thread::sleep(Duration::from_millis(wait));
            }
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Transient(e)) => last = Some(e),
            }
        }
        Err(match last {
            Some(BridgeError::Transport { message, .. }) => BridgeError::Transport { attempts, message },
            Some(other) => other,
            None => unreachable!("at least one attempt is made"),
        })
    }
}

/// One-shot convenience around [`HttpCompletion`].
pub fn complete(config: &EndpointConfig, prompt: &str) -> Result<String, BridgeError> {
    HttpCompletion::new(config.clone())?.complete(prompt)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub prompt: String,
    pub completion: String,
}

/// Passes calls through to `inner` and appends every successful exchange to a
/// JSON-lines transcript.
pub struct RecordingSource<S> {
    inner: S,
    out: Mutex<File>,
}

impl<S: CompletionSource> RecordingSource<S> {
    pub fn create(inner: S, path: impl AsRef<Path>) -> Result<Self, BridgeError> {
        let file = File::create(path.as_ref()).map_err(|e| BridgeError::Io(e.to_string()))?;
        Ok(Self {
            inner,
            out: Mutex::new(file),
        })
    }
}

impl<S: CompletionSource> CompletionSource for RecordingSource<S> {
    fn complete(&self, prompt: &str) -> Result<String, BridgeError> {
        let completion = self.inner.complete(prompt)?;
        let entry = TranscriptEntry {
            prompt: prompt.to_string(),
            completion: completion.clone(),
        };
        let line = serde_json::to_string(&entry).expect("entry serializes");
        let mut out = self.out.lock().unwrap();
        writeln!(out, "{line}").map_err(|e| BridgeError::Io(e.to_string()))?;
        Ok(completion)
    }
}

/// Serves completions from a recorded transcript. Repeated prompts are
/// answered in recording order.
#[derive(Debug, Default)]
pub struct ReplaySource {
    entries: Mutex<HashMap<String, VecDeque<String>>>,
}

impl ReplaySource {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut map: HashMap<String, VecDeque<String>> = HashMap::new();
        for e in entries {
            map.entry(e.prompt).or_default().push_back(e.completion);
        }
        Self {
            entries: Mutex::new(map),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BridgeError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| BridgeError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| BridgeError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry = serde_json::from_str(&line)
                .map_err(|e| BridgeError::Replay(format!("transcript line {}: {e}", i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl CompletionSource for ReplaySource {
    fn complete(&self, prompt: &str) -> Result<String, BridgeError> {
        self.entries
            .lock()
            .unwrap()
            .get_mut(prompt)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BridgeError::Replay("prompt not in transcript".into()))
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::*;
    use crate::llm_bridge::stub::StubServer;

    fn config(url: &str, var: &str) -> EndpointConfig {
        EndpointConfig {
            base_url: url.to_string(),
            auth_token_env_var: var.to_string(),
            backoff_ms: 1,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn missing_token_fails_before_any_request() {
        let stub = StubServer::start(|_, _| (200, r#"{"completion":"x"}"#.into()));
        let err = complete(&config(&stub.url(), "AFFORDPLAN_TEST_UNSET_TOKEN"), "hi").unwrap_err();
        assert!(matches!(err, BridgeError::MissingToken { .. }));
        assert_eq!(stub.request_count(), 0);
    }

    #[test]
    fn echoes_completion_and_sends_the_request_body() {
        std::env::set_var("AFFORDPLAN_TEST_TOKEN_ECHO", "secret");
        let canned = "workspace 10 x 10\nred block at (1, 1), height 0, clear\n";
        let body = serde_json::to_string(&json!({ "completion": canned })).unwrap();
        let stub = StubServer::start(move |_, _| (200, body.clone()));
        let text = complete(&config(&stub.url(), "AFFORDPLAN_TEST_TOKEN_ECHO"), "the prompt").unwrap();
        assert_eq!(text, canned);
        let sent: Value = serde_json::from_str(&stub.requests()[0]).unwrap();
        assert_eq!(sent["prompt"], "the prompt");
        assert!(sent["max_tokens"].is_u64());
        assert!(sent["model"].is_string());
    }

    #[test]
    fn choices_fallback() {
        assert_eq!(completion_text(r#"{"choices":[{"text":"abc"}]}"#).unwrap(), "abc");
        assert!(completion_text(r#"{"other":1}"#).is_err());
        assert!(completion_text("not json").is_err());
    }

    #[test]
    fn retries_server_errors() {
        std::env::set_var("AFFORDPLAN_TEST_TOKEN_RETRY", "t");
        let stub = StubServer::start(|i, _| {
            if i < 2 {
                (500, "oops".into())
            } else {
                (200, r#"{"completion":"ok"}"#.into())
            }
        });
        let cfg = EndpointConfig {
            max_retries: 2,
            ..config(&stub.url(), "AFFORDPLAN_TEST_TOKEN_RETRY")
        };
        assert_eq!(complete(&cfg, "p").unwrap(), "ok");
        assert_eq!(stub.request_count(), 3);

        let stub = StubServer::start(|_, _| (503, "down".into()));
        let cfg = EndpointConfig {
            max_retries: 1,
            ..config(&stub.url(), "AFFORDPLAN_TEST_TOKEN_RETRY")
        };
        assert!(matches!(complete(&cfg, "p"), Err(BridgeError::Endpoint { status: 503, .. })));
        assert_eq!(stub.request_count(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        std::env::set_var("AFFORDPLAN_TEST_TOKEN_404", "t");
        let stub = StubServer::start(|_, _| (404, "missing".into()));
        let err = complete(&config(&stub.url(), "AFFORDPLAN_TEST_TOKEN_404"), "p").unwrap_err();
        assert!(matches!(err, BridgeError::Endpoint { status: 404, .. }));
        assert_eq!(stub.request_count(), 1);
    }

    #[test]
    fn unreachable_endpoint_is_a_transport_error() {
        std::env::set_var("AFFORDPLAN_TEST_TOKEN_DOWN", "t");
        let url = {
            let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            format!("http://{}", listener.local_addr().unwrap())
        };
        let cfg = EndpointConfig {
            max_retries: 1,
            ..config(&url, "AFFORDPLAN_TEST_TOKEN_DOWN")
        };
        assert!(matches!(complete(&cfg, "p"), Err(BridgeError::Transport { attempts: 2, .. })));
    }

    #[test]
    fn in_flight_requests_are_bounded() {
        std::env::set_var("AFFORDPLAN_TEST_TOKEN_LIMIT", "t");
        let active = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (a, p) = (active.clone(), peak.clone());
        let stub = StubServer::start(move |_, _| {
            let now = a.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(30));
            a.fetch_sub(1, Ordering::SeqCst);
            (200, r#"{"completion":"ok"}"#.into())
        });
        let cfg = EndpointConfig {
            max_in_flight: 2,
            ..config(&stub.url(), "AFFORDPLAN_TEST_TOKEN_LIMIT")
        };
        let client = HttpCompletion::new(cfg).unwrap();
        thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| client.complete("p").unwrap());
            }
        });
        assert_eq!(stub.request_count(), 8);
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let counter = AtomicUsize::new(0);
        let source = move |p: &str| Ok(format!("{p}#{}", counter.fetch_add(1, Ordering::SeqCst)));
        let rec = RecordingSource::create(source, &path).unwrap();
        let live: Vec<String> = ["a", "b", "a"].iter().map(|p| rec.complete(p).unwrap()).collect();
        drop(rec);
        let replay = ReplaySource::load(&path).unwrap();
        assert_eq!(replay.remaining(), 3);
        let again: Vec<String> = ["a", "b", "a"].iter().map(|p| replay.complete(p).unwrap()).collect();
        assert_eq!(live, again);
        assert!(matches!(replay.complete("a"), Err(BridgeError::Replay(_))));
    }
}
