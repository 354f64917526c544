//! Scriptable mock transports. Outcomes are consumed in call order; the call
//! log records (call index, prompt hash) pairs so multi-iteration agent loops
//! can be replayed and asserted on.

use super::{ChatRequest, ChatTransport, EmbedTransport, TransportError};
use crate::embed::{Embedder, HashEmbedder};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

/// One scripted transport outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockOutcome {
    Reply(String),
    RateLimit,
    Timeout,
    ServerError,
    BadRequest,
}

impl MockOutcome {
    fn into_result(self) -> Result<String, TransportError> {
        match self {
            Self::Reply(text) => Ok(text),
            Self::RateLimit => Err(TransportError::Retryable {
                kind: "rate_limit",
                message: "scripted 429".into(),
            }),
            Self::Timeout => Err(TransportError::Retryable {
                kind: "timeout",
                message: "scripted timeout".into(),
            }),
            Self::ServerError => Err(TransportError::Retryable {
                kind: "server_error",
                message: "scripted 500".into(),
            }),
            Self::BadRequest => Err(TransportError::Fatal {
                message: "scripted 400".into(),
            }),
        }
    }
}

/// A recorded call: its global index and the stable hash of the full prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub index: usize,
    pub prompt_hash: u64,
}

/// Scripted chat transport with a concurrency probe.
pub struct ScriptedChat {
    script: Mutex<VecDeque<MockOutcome>>,
    log: Mutex<Vec<CallRecord>>,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    delay: Option<Duration>,
}

impl ScriptedChat {
    pub fn new(outcomes: Vec<MockOutcome>) -> Self {
        Self {
            script: Mutex::new(outcomes.into()),
            log: Mutex::new(Vec::new()),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            delay: None,
        }
    }

    /// `n` identical replies.
    pub fn replies_n(text: &str, n: usize) -> Self {
        Self::new(vec![MockOutcome::Reply(text.to_string()); n])
    }

    /// Sleep inside each call so concurrent in-flight counts are observable.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn call_log(&self) -> Vec<CallRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn max_concurrent(&self) -> usize {
        self.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

impl ChatTransport for ScriptedChat {
    fn chat_once(&self, req: &ChatRequest) -> Result<String, TransportError> {
        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(current, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }

        let outcome = {
            let mut script = self.script.lock().unwrap();
            script.pop_front()
        };
        {
            let mut log = self.log.lock().unwrap();
            let index = log.len();
            log.push(CallRecord { index, prompt_hash: req.prompt_hash() });
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);

        match outcome {
            Some(outcome) => outcome.into_result(),
            None => Err(TransportError::Fatal { message: "mock script exhausted".into() }),
        }
    }
}

/// Scripted embedding transport: optional scripted failures first, then
/// deterministic hash-seeded vectors.
pub struct ScriptedEmbed {
    failures: Mutex<VecDeque<MockOutcome>>,
    inner: HashEmbedder,
}

impl ScriptedEmbed {
    pub fn hash_backed(dim: usize) -> Self {
        Self {
            failures: Mutex::new(VecDeque::new()),
            inner: HashEmbedder { dim },
        }
    }

    pub fn with_failures(self, failures: Vec<MockOutcome>) -> Self {
        *self.failures.lock().unwrap() = failures.into();
        self
    }
}

impl EmbedTransport for ScriptedEmbed {
    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError> {
        if let Some(outcome) = self.failures.lock().unwrap().pop_front() {
            outcome.into_result()?;
        }
        self.inner
            .embed(texts)
            .map_err(|e| TransportError::Fatal { message: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_log_is_reproducible_for_identical_prompt_sequences() {
        let run = |texts: &[&str]| -> Vec<CallRecord> {
            let mock = ScriptedChat::replies_n("ok", texts.len());
            for t in texts {
                let _ = mock.chat_once(&ChatRequest::new("sys", *t, "m"));
            }
            mock.call_log()
        };
        let a = run(&["one", "two", "three"]);
        let b = run(&["one", "two", "three"]);
        assert_eq!(a, b);
        assert_eq!(a[0].index, 0);
        assert_ne!(a[0].prompt_hash, a[1].prompt_hash);
    }

    #[test]
    fn exhausted_script_is_fatal() {
        let mock = ScriptedChat::new(vec![]);
        assert!(matches!(
            mock.chat_once(&ChatRequest::new("s", "u", "m")),
            Err(TransportError::Fatal { .. })
        ));
    }
}
