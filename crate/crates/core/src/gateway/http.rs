//! Chat-completion client over HTTP.
//!
//! Sends `{model, messages: [{role: "user", content}], temperature}` and
//! reads `choices[0].message.content`. Retries 429, 5xx and transport
//! failures with exponential backoff; 401/403 fail immediately.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{BackendConfig, CompletionBackend, CompletionRequest, GatewayError};

#[derive(Clone, Debug, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub multiplier: f64,
    /// Each delay is scaled by a factor drawn uniformly from `[1 - jitter, 1 + jitter]`.
    pub jitter: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_backoff: Duration::from_millis(500),
            multiplier: 2.0,
            jitter: 0.1,
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Un-jittered delay before retry number `retry` (0 = first retry).
    pub fn nominal_delay(&self, retry: u32) -> Duration {
        let d = self.base_backoff.as_secs_f64() * self.multiplier.powi(retry as i32);
        Duration::from_secs_f64(d.min(self.max_backoff.as_secs_f64()))
    }

    fn jittered_delay(&self, retry: u32) -> Duration {
        let factor = if self.jitter > 0.0 {
            rand::thread_rng().gen_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        self.nominal_delay(retry).mul_f64(factor)
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Limiter {
    cap: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.cap {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HttpStats {
    pub requests: u64,
    pub attempts: u64,
    /// Backoff delays actually slept, in order.
    pub backoffs: Vec<Duration>,
}

#[derive(Debug)]
pub struct HttpBackend {
    client: Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    policy: RetryPolicy,
    limiter: Limiter,
    stats: Mutex<HttpStats>,
}

impl HttpBackend {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        token: Option<String>,
        policy: RetryPolicy,
        max_concurrent: usize,
        request_timeout: Duration,
    ) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(request_timeout)
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            model: model.into(),
            token,
            policy,
            limiter: Limiter { cap: max_concurrent.max(1), in_flight: Mutex::new(0), freed: Condvar::new() },
            stats: Mutex::new(HttpStats::default()),
        })
    }

    /// The token comes only from the environment variable the config names.
    pub fn from_config(config: &BackendConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let token = match &config.auth_env {
            Some(var) => Some(std::env::var(var).map_err(|_| GatewayError::Auth {
                status: 0,
                message: format!("environment variable {var} is not set"),
            })?),
            None => None,
        };
        Self::new(
            config.endpoint.clone().unwrap_or_default(),
            config.model.clone().unwrap_or_default(),
            token,
            config.retry_policy(),
            config.max_concurrent_requests,
            Duration::from_millis(config.request_timeout_ms),
        )
    }

    pub fn stats(&self) -> HttpStats {
        self.stats.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn body(&self, request: &CompletionRequest) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let _permit = self.limiter.acquire();
        let mut builder = self.client.post(&self.endpoint).json(body);
        if let Some(token) = &self.token {
            builder = builder.bearer_auth(token);
        }
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(GatewayError::Transport(e.to_string())),
        };
        let status = response.status();
        let text = response.text().unwrap_or_default();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Attempt::Fatal(GatewayError::Auth { status: status.as_u16(), message: truncate(&text) });
        }
        if status == StatusCode::TOO_MANY_REQUESTS {
            return Attempt::Retry(GatewayError::RateLimited { attempts: 0 });
        }
        if status.is_server_error() {
            return Attempt::Retry(GatewayError::Transport(format!("HTTP {}: {}", status.as_u16(), truncate(&text))));
        }
        if !status.is_success() {
            return Attempt::Fatal(GatewayError::Transport(format!("HTTP {}: {}", status.as_u16(), truncate(&text))));
        }
        Attempt::Done(parse_content(&text))
    }
}

enum Attempt {
    Done(Result<String, GatewayError>),
    Retry(GatewayError),
    Fatal(GatewayError),
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

fn parse_content(text: &str) -> Result<String, GatewayError> {
    let v: Value = serde_json::from_str(text).map_err(|e| GatewayError::MalformedReply(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| GatewayError::MalformedReply("missing choices[0].message.content".into()))
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let body = self.body(request);
        self.stats.lock().unwrap_or_else(|e| e.into_inner()).requests += 1;
        let mut last = GatewayError::Transport("no attempt made".into());
        for attempt in 0..self.policy.max_attempts {
            if attempt > 0 {
                let delay = self.policy.jittered_delay(attempt - 1);
                self.stats.lock().unwrap_or_else(|e| e.into_inner()).backoffs.push(delay);
                std::thread::sleep(delay);
            }
            self.stats.lock().unwrap_or_else(|e| e.into_inner()).attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => last = e,
            }
        }
        Err(match last {
            GatewayError::RateLimited { .. } => GatewayError::RateLimited { attempts: self.policy.max_attempts },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_delays_are_geometric_and_capped() {
        let p = RetryPolicy {
            base_backoff: Duration::from_millis(100),
            max_backoff: Duration::from_millis(500),
            ..RetryPolicy::default()
        };
        let d: Vec<u128> = (0..5).map(|i| p.nominal_delay(i).as_millis()).collect();
        assert_eq!(d, vec![100, 200, 400, 500, 500]);
    }

    #[test]
    fn jitter_stays_in_bounds() {
        let p = RetryPolicy { base_backoff: Duration::from_millis(100), jitter: 0.2, ..RetryPolicy::default() };
        for _ in 0..200 {
            let d = p.jittered_delay(1).as_secs_f64();
            assert!((0.16..=0.24 + 1e-9).contains(&d), "{d}");
        }
    }

    #[test]
    fn content_extraction() {
        let ok = r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}]}"#;
        assert_eq!(parse_content(ok).unwrap(), "hi");
        assert!(matches!(parse_content(r#"{"choices":[]}"#), Err(GatewayError::MalformedReply(_))));
    }
}
