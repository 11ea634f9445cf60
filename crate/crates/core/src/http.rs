//! Blocking JSON-over-HTTP client for remote analyzers and assessors.

use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RemoteError {
    #[error("remote-unavailable: {0}")]
    Unavailable(String),
    #[error("remote-bad-response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EndpointConfig {
    pub url: String,
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub retry_backoff_ms: u64,
    /// Upper bound on concurrent requests through one client.
    pub max_in_flight: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            timeout_ms: 10_000,
            retries: 2,
            retry_backoff_ms: 200,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Default)]
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
}

/// Cloneable client; clones share the in-flight limit.
#[derive(Debug, Clone)]
pub struct JsonClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    gate: Arc<Gate>,
}

impl JsonClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            agent,
            gate: Arc::new(Gate::default()),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// POSTs `body` and decodes the JSON reply, retrying transport failures
    /// and 5xx replies.
    pub fn post(&self, body: &Value) -> Result<Value, RemoteError> {
        let _permit = self.acquire();
        let mut last = RemoteError::Unavailable("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(self.config.retry_backoff_ms * attempt as u64));
            }
            match self.post_once(body) {
                Ok(v) => return Ok(v),
                Err(e @ RemoteError::BadResponse(_)) => return Err(e),
                Err(e) => {
                    log::warn!("attempt {} to {} failed: {e}", attempt + 1, self.config.url);
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn post_once(&self, body: &Value) -> Result<Value, RemoteError> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(body)
            .map_err(|e| RemoteError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if status >= 500 {
            return Err(RemoteError::Unavailable(format!("status {status}")));
        }
        if status >= 400 {
            return Err(RemoteError::BadResponse(format!("status {status}")));
        }
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| RemoteError::Unavailable(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| RemoteError::BadResponse(e.to_string()))
    }

    fn acquire(&self) -> Permit<'_> {
        let limit = self.config.max_in_flight.max(1);
        let mut n = self.gate.in_flight.lock().expect("gate lock");
        while *n >= limit {
            n = self.gate.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        Permit { gate: &self.gate }
    }
}

struct Permit<'a> {
    gate: &'a Gate,
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().expect("gate lock");
        *n -= 1;
        self.gate.freed.notify_one();
    }
}
