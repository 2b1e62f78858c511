//! Live chat-completions client.
//!
//! Speaks the common `POST {base_url}/chat/completions` JSON shape and reads
//! the completion from `choices[0].message.content`. Transient failures
//! (network errors, 5xx, 429) are retried with exponential backoff; 401/403
//! fail immediately.

use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;
use tracing::{debug, warn};

use crate::domain::TokenUsage;

use super::{
    validate_messages, ChatMessage, ChatProvider, ChatSettings, ProviderError, ProviderResponse,
};

pub const API_KEY_ENV: &str = "MARCO_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

/// Minimal blocking HTTP seam so the retry policy can be exercised without
/// a network.
pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpReply, String>;
}

#[derive(Debug, Clone)]
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ProviderError::Other(format!("http client: {e}")))?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &serde_json::Value,
        timeout: Duration,
    ) -> Result<HttpReply, String> {
        let mut req = self.client.post(url).timeout(timeout).json(body);
        if let Some(key) = bearer {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpReply {
            status,
            body,
            retry_after,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (attempts are 1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub struct HttpProvider {
    base_url: String,
    api_key: Option<String>,
    timeout: Duration,
    retry: RetryPolicy,
    transport: Box<dyn HttpTransport>,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider")
            .field("base_url", &self.base_url)
            .field("timeout", &self.timeout)
            .field("retry", &self.retry)
            .finish_non_exhaustive()
    }
}

impl HttpProvider {
    pub fn new(
        base_url: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, ProviderError> {
        Ok(Self::with_transport(
            base_url,
            api_key,
            Box::new(ReqwestTransport::new()?),
        ))
    }

    /// Reads the key from `env_var` (or `MARCO_API_KEY`).
    pub fn from_env(
        base_url: impl Into<String>,
        env_var: Option<&str>,
    ) -> Result<Self, ProviderError> {
        let key = std::env::var(env_var.unwrap_or(API_KEY_ENV)).ok();
        Self::new(base_url, key)
    }

    pub fn with_transport(
        base_url: impl Into<String>,
        api_key: Option<String>,
        transport: Box<dyn HttpTransport>,
    ) -> Self {
        Self {
            base_url: base_url.into(),
            api_key,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            transport,
        }
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

pub fn request_body(messages: &[ChatMessage], settings: &ChatSettings) -> serde_json::Value {
    json!({
        "model": settings.model,
        "messages": messages,
        "temperature": settings.temperature,
        "max_tokens": settings.max_tokens,
    })
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub fn parse_completion(body: &str) -> Result<(String, TokenUsage), ProviderError> {
    let parsed: CompletionBody =
        serde_json::from_str(body).map_err(|e| ProviderError::MalformedResponse(e.to_string()))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::MalformedResponse("no choices".into()))?;
    let usage = parsed.usage.map_or(TokenUsage::default(), |u| TokenUsage {
        prompt_tokens: u.prompt_tokens,
        completion_tokens: u.completion_tokens,
    });
    Ok((choice.message.content.unwrap_or_default(), usage))
}

enum Attempt {
    Done(ProviderResponse),
    Fatal(ProviderError),
    Retry {
        error: ProviderError,
        wait: Option<Duration>,
    },
}

impl HttpProvider {
    fn attempt(&self, body: &serde_json::Value, attempts: u32, started: Instant) -> Attempt {
        let reply = match self.transport.post_json(
            &self.endpoint(),
            self.api_key.as_deref(),
            body,
            self.timeout,
        ) {
            Ok(r) => r,
            Err(message) => {
                return Attempt::Retry {
                    error: ProviderError::Transport { attempts, message },
                    wait: None,
                }
            }
        };
        match reply.status {
            200..=299 => match parse_completion(&reply.body) {
                Ok((text, usage)) => Attempt::Done(ProviderResponse {
                    text,
                    usage,
                    latency: started.elapsed(),
                    attempts,
                }),
                Err(e) => Attempt::Fatal(e),
            },
            401 | 403 => Attempt::Fatal(ProviderError::Auth {
                status: reply.status,
            }),
            429 => Attempt::Retry {
                error: ProviderError::RateLimited { attempts },
                wait: reply.retry_after,
            },
            500..=599 => Attempt::Retry {
                error: ProviderError::Transport {
                    attempts,
                    message: format!("HTTP {}", reply.status),
                },
                wait: None,
            },
            status => Attempt::Fatal(ProviderError::InvalidRequest(format!(
                "HTTP {status}: {}",
                crate::domain::truncate_chars(&reply.body, 300)
            ))),
        }
    }
}

impl ChatProvider for HttpProvider {
    fn chat(
        &self,
        messages: &[ChatMessage],
        settings: &ChatSettings,
    ) -> Result<ProviderResponse, ProviderError> {
        validate_messages(messages)?;
        let body = request_body(messages, settings);
        let started = Instant::now();
        let max = self.retry.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body, attempts, started) {
                Attempt::Done(r) => {
                    debug!(
                        attempts,
                        latency_ms = r.latency.as_millis() as u64,
                        "chat completed"
                    );
                    return Ok(r);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { error, wait } => {
                    if attempts >= max {
                        return Err(error);
                    }
                    let delay = wait
                        .map(|w| w.min(self.retry.max_delay))
                        .unwrap_or_else(|| self.retry.backoff(attempts));
                    warn!(attempts, %error, delay_ms = delay.as_millis() as u64, "retrying chat");
                    std::thread::sleep(delay);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    struct Flaky {
        failures: u32,
        status: u16,
        calls: Arc<AtomicU32>,
    }

    impl HttpTransport for Flaky {
        fn post_json(
            &self,
            _url: &str,
            _bearer: Option<&str>,
            _body: &serde_json::Value,
            _timeout: Duration,
        ) -> Result<HttpReply, String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                if self.status == 0 {
                    return Err("connection reset".into());
                }
                return Ok(HttpReply {
                    status: self.status,
                    body: String::new(),
                    retry_after: None,
                });
            }
            Ok(HttpReply {
                status: 200,
                body: r#"{"choices":[{"message":{"role":"assistant","content":"hi"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#.into(),
                retry_after: None,
            })
        }
    }

    fn provider(failures: u32, status: u16, max_attempts: u32) -> (HttpProvider, Arc<AtomicU32>) {
        let calls = Arc::new(AtomicU32::new(0));
        let p = HttpProvider::with_transport(
            "http://fake/v1/",
            None,
            Box::new(Flaky {
                failures,
                status,
                calls: calls.clone(),
            }),
        )
        .retry(RetryPolicy {
            max_attempts,
            base_delay: Duration::from_millis(1),
            max_delay: Duration::from_millis(2),
        });
        (p, calls)
    }

    fn ask(p: &HttpProvider) -> Result<ProviderResponse, ProviderError> {
        p.chat(&[ChatMessage::user("q")], &ChatSettings::new("m", 0.7))
    }

    #[test]
    fn retries_until_success() {
        for (n, status) in [(0, 500), (1, 503), (2, 0), (3, 429)] {
            let (p, calls) = provider(n, status, 4);
            let r = ask(&p).unwrap();
            assert_eq!(r.text, "hi");
            assert_eq!(r.attempts, n + 1);
            assert_eq!(calls.load(Ordering::SeqCst), n + 1);
            assert_eq!(r.usage.prompt_tokens, 3);
        }
    }

    #[test]
    fn gives_up_after_cap() {
        let (p, calls) = provider(10, 502, 3);
        assert!(matches!(
            ask(&p),
            Err(ProviderError::Transport { attempts: 3, .. })
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 3);
        let (p, _) = provider(10, 429, 2);
        assert_eq!(ask(&p), Err(ProviderError::RateLimited { attempts: 2 }));
    }

    #[test]
    fn auth_is_not_retried() {
        let (p, calls) = provider(10, 401, 5);
        assert_eq!(ask(&p), Err(ProviderError::Auth { status: 401 }));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn body_shape() {
        let b = request_body(&[ChatMessage::user("q")], &ChatSettings::new("m", 0.2));
        assert_eq!(b["model"], "m");
        assert_eq!(b["messages"][0]["role"], "user");
        assert_eq!(b["messages"][0]["content"], "q");
        assert!((b["temperature"].as_f64().unwrap() - 0.2).abs() < 1e-6);
        assert_eq!(b["max_tokens"], 2048);
    }

    #[test]
    fn malformed_and_null_content() {
        assert!(matches!(
            parse_completion("{}"),
            Err(ProviderError::MalformedResponse(_))
        ));
        assert!(matches!(
            parse_completion(r#"{"choices":[]}"#),
            Err(ProviderError::MalformedResponse(_))
        ));
        let (text, usage) =
            parse_completion(r#"{"choices":[{"message":{"content":null}}]}"#).unwrap();
        assert_eq!(text, "");
        assert_eq!(usage, TokenUsage::default());
    }

    #[test]
    fn endpoint_joins_path() {
        let (p, _) = provider(0, 200, 1);
        assert_eq!(p.endpoint(), "http://fake/v1/chat/completions");
    }

    #[test]
    fn backoff_grows_and_caps() {
        let r = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(300),
        };
        assert_eq!(r.backoff(1), Duration::from_millis(100));
        assert_eq!(r.backoff(2), Duration::from_millis(200));
        assert_eq!(r.backoff(3), Duration::from_millis(300));
    }
    #[test]
    fn real_transport_maps_401_to_auth() {
        use std::io::{Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = std::thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = sock.read(&mut buf);
            let body = r#"{"error":"bad key"}"#;
            let _ = write!(
                sock,
                "HTTP/1.1 401 Unauthorized\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                body.len(),
                body
            );
        });
        let p = HttpProvider::new(format!("http://{addr}/v1"), Some("nope".into()))
            .unwrap()
            .timeout(Duration::from_secs(5));
        let err = ask(&p).unwrap_err();
        server.join().unwrap();
        assert_eq!(err, ProviderError::Auth { status: 401 });
    }
}
