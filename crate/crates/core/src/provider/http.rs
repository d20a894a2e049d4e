use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde_json::Value;

use super::{CompletionProvider, CompletionRequest, ProviderConfig, ProviderError};
use crate::rng::SeededRng;

/// Raw HTTP answer handed back by a [`Transport`].
#[derive(Debug, Clone)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
    pub retry_after: Option<Duration>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TransportError {
    #[error("timed out")]
    Timeout,
    #[error("{0}")]
    Other(String),
}

/// One JSON POST with bearer authentication.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, TransportError> {
        let resp = self
            .client
            .post(url)
            .bearer_auth(bearer)
            .json(body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    TransportError::Timeout
                } else {
                    TransportError::Other(e.to_string())
                }
            })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.text().map_err(|e| {
            if e.is_timeout() {
                TransportError::Timeout
            } else {
                TransportError::Other(e.to_string())
            }
        })?;
        Ok(HttpReply {
            status,
            body,
            retry_after,
        })
    }
}

/// Counting semaphore capping in-flight requests.
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry { err: ProviderError, after: Option<Duration> },
    Fatal(ProviderError),
}

/// Chat-completions client with retry, backoff, and a concurrency cap.
pub struct HttpProvider<T: Transport = ReqwestTransport> {
    cfg: ProviderConfig,
    transport: T,
    gate: Semaphore,
    retries: AtomicU64,
    jitter: Mutex<SeededRng>,
}

impl HttpProvider<ReqwestTransport> {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let transport = ReqwestTransport::new(cfg.timeout())?;
        Self::with_transport(cfg, transport)
    }
}

impl<T: Transport> HttpProvider<T> {
    pub fn with_transport(cfg: ProviderConfig, transport: T) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        Ok(Self {
            gate: Semaphore::new(cfg.max_concurrency),
            cfg,
            transport,
            retries: AtomicU64::new(0),
            jitter: Mutex::new(SeededRng::new(nanos)),
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Total retries performed by this client so far.
    pub fn retry_count(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    /// Full-jitter exponential backoff for the given retry (0-based).
    fn backoff(&self, retry: u32) -> Duration {
        let ceiling = self
            .cfg
            .backoff_initial_ms
            .saturating_mul(1u64 << retry.min(30))
            .min(self.cfg.backoff_cap_ms);
        let u = self.jitter.lock().unwrap_or_else(|e| e.into_inner()).unit();
        Duration::from_millis((ceiling as f64 * u) as u64)
    }

    fn attempt(&self, body: &Value, key: &str, attempts: u32) -> Attempt {
        let reply = {
            let _permit = self.gate.acquire();
            self.transport.post_json(&self.cfg.endpoint(), key, body)
        };
        let reply = match reply {
            Ok(r) => r,
            Err(TransportError::Timeout) => {
                return Attempt::Retry {
                    err: ProviderError::Timeout { attempts },
                    after: None,
                }
            }
            Err(TransportError::Other(detail)) => {
                return Attempt::Retry {
                    err: ProviderError::Transport { attempts, detail },
                    after: None,
                }
            }
        };
        match reply.status {
            200..=299 => match extract_content(&reply.body) {
                Ok(s) => Attempt::Done(s),
                Err(e) => Attempt::Fatal(e),
            },
            429 => Attempt::Retry {
                err: ProviderError::RateLimited { attempts },
                after: reply.retry_after,
            },
            401 | 403 => Attempt::Fatal(ProviderError::AuthRejected {
                status: reply.status,
                body: reply.body,
            }),
            500..=599 => Attempt::Retry {
                err: ProviderError::Server {
                    status: reply.status,
                    attempts,
                    body: reply.body,
                },
                after: reply.retry_after,
            },
            status => Attempt::Fatal(ProviderError::BadRequest {
                status,
                body: reply.body,
            }),
        }
    }
}

/// Pulls `choices[0].message.content` out of a response body.
fn extract_content(body: &str) -> Result<String, ProviderError> {
    let v: Value = serde_json::from_str(body).map_err(|_| ProviderError::MalformedResponse {
        missing: "JSON body".into(),
    })?;
    let missing = |what: &str| ProviderError::MalformedResponse { missing: what.into() };
    let choices = v.get("choices").ok_or_else(|| missing("choices"))?;
    let first = choices
        .as_array()
        .and_then(|a| a.first())
        .ok_or_else(|| missing("choices[0]"))?;
    first
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| missing("choices[0].message.content"))
}

impl<T: Transport> CompletionProvider for HttpProvider<T> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, ProviderError> {
        let key = std::env::var(&self.cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ProviderError::AuthMissing(self.cfg.api_key_env.clone()))?;
        let mut req = req.clone();
        if req.model.is_empty() {
            req.model = self.cfg.model.clone();
        }
        req.validate()?;
        let body = serde_json::to_value(&req).expect("request serializes");

        let mut attempts = 0u32;
        loop {
            attempts += 1;
            match self.attempt(&body, &key, attempts) {
                Attempt::Done(s) => {
                    if attempts > 1 {
                        tracing::info!(retries = attempts - 1, "completion succeeded after retries");
                    }
                    return Ok(s);
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { err, after } => {
                    let retry = attempts - 1;
                    if retry >= self.cfg.max_retries {
                        return Err(err);
                    }
                    let wait = match after {
                        Some(a) => a.min(Duration::from_millis(self.cfg.backoff_cap_ms)),
                        None => self.backoff(retry),
                    };
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    tracing::warn!(attempt = attempts, wait_ms = wait.as_millis() as u64, error = %err, "retrying completion");
                    std::thread::sleep(wait);
                }
            }
        }
    }

    fn default_model(&self) -> &str {
        &self.cfg.model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::ChatMessage;
    use std::collections::VecDeque;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Arc;

    struct Scripted {
        replies: Mutex<VecDeque<Result<HttpReply, TransportError>>>,
        calls: AtomicUsize,
        bodies: Mutex<Vec<(String, String, Value)>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<HttpReply, TransportError>>) -> Self {
            Self {
                replies: Mutex::new(replies.into()),
                calls: AtomicUsize::new(0),
                bodies: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for Scripted {
        fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, TransportError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.bodies
                .lock()
                .unwrap()
                .push((url.to_string(), bearer.to_string(), body.clone()));
            self.replies.lock().unwrap().pop_front().expect("script exhausted")
        }
    }

    fn reply(status: u16, body: &str) -> Result<HttpReply, TransportError> {
        Ok(HttpReply {
            status,
            body: body.into(),
            retry_after: None,
        })
    }

    const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"great work\nsuperb job"}}]}"#;

    fn cfg(env: &str) -> ProviderConfig {
        let mut c = ProviderConfig::new("http://example.test/v1/", "gpt-4o");
        c.api_key_env = env.into();
        c.backoff_initial_ms = 1;
        c.backoff_cap_ms = 4;
        c
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("", vec![ChatMessage::system("s"), ChatMessage::user("u")], 0.0)
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        std::env::set_var("SPANAUG_TEST_KEY_A", "sk-test");
        let t = Scripted::new(vec![reply(429, "slow down"), reply(429, "slow down"), reply(200, OK_BODY)]);
        let p = HttpProvider::with_transport(cfg("SPANAUG_TEST_KEY_A"), t).unwrap();
        assert_eq!(p.complete(&req()).unwrap(), "great work\nsuperb job");
        assert_eq!(p.retry_count(), 2);
        let bodies = p.transport().bodies.lock().unwrap();
        let (url, key, body) = &bodies[0];
        assert_eq!(url, "http://example.test/v1/chat/completions");
        assert_eq!(key, "sk-test");
        assert_eq!(body["model"], "gpt-4o");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][1]["role"], "user");
    }

    #[test]
    fn rate_limit_surfaces_after_max_retries() {
        std::env::set_var("SPANAUG_TEST_KEY_B", "k");
        let mut c = cfg("SPANAUG_TEST_KEY_B");
        c.max_retries = 2;
        let t = Scripted::new((0..3).map(|_| reply(429, "")).collect());
        let p = HttpProvider::with_transport(c, t).unwrap();
        assert!(matches!(p.complete(&req()), Err(ProviderError::RateLimited { attempts: 3 })));
        assert_eq!(p.transport().calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn auth_and_bad_requests_are_not_retried() {
        std::env::set_var("SPANAUG_TEST_KEY_C", "k");
        for (status, expect_auth) in [(401, true), (400, false)] {
            let t = Scripted::new(vec![reply(status, "no")]);
            let p = HttpProvider::with_transport(cfg("SPANAUG_TEST_KEY_C"), t).unwrap();
            let err = p.complete(&req()).unwrap_err();
            assert_eq!(matches!(err, ProviderError::AuthRejected { .. }), expect_auth);
            assert_eq!(p.transport().calls.load(Ordering::SeqCst), 1);
        }
    }

    #[test]
    fn missing_key_fails_before_any_call() {
        let t = Scripted::new(vec![]);
        let p = HttpProvider::with_transport(cfg("SPANAUG_TEST_KEY_UNSET_XYZ"), t).unwrap();
        assert!(matches!(p.complete(&req()), Err(ProviderError::AuthMissing(_))));
        assert_eq!(p.transport().calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn missing_choices_is_malformed() {
        std::env::set_var("SPANAUG_TEST_KEY_D", "k");
        let t = Scripted::new(vec![reply(200, r#"{"id":"x"}"#)]);
        let p = HttpProvider::with_transport(cfg("SPANAUG_TEST_KEY_D"), t).unwrap();
        match p.complete(&req()) {
            Err(ProviderError::MalformedResponse { missing }) => assert_eq!(missing, "choices"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timeouts_retry_then_surface() {
        std::env::set_var("SPANAUG_TEST_KEY_E", "k");
        let mut c = cfg("SPANAUG_TEST_KEY_E");
        c.max_retries = 1;
        let t = Scripted::new(vec![Err(TransportError::Timeout), Err(TransportError::Timeout)]);
        let p = HttpProvider::with_transport(c, t).unwrap();
        assert!(matches!(p.complete(&req()), Err(ProviderError::Timeout { attempts: 2 })));
    }

    /// Records the peak number of concurrent calls.
    struct Counting {
        live: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Transport for Counting {
        fn post_json(&self, _: &str, _: &str, _: &Value) -> Result<HttpReply, TransportError> {
            let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.live.fetch_sub(1, Ordering::SeqCst);
            reply(200, OK_BODY)
        }
    }

    #[test]
    fn concurrency_cap_is_respected() {
        std::env::set_var("SPANAUG_TEST_KEY_F", "k");
        let mut c = cfg("SPANAUG_TEST_KEY_F");
        c.max_concurrency = 3;
        let p = Arc::new(
            HttpProvider::with_transport(
                c,
                Counting {
                    live: AtomicUsize::new(0),
                    peak: AtomicUsize::new(0),
                },
            )
            .unwrap(),
        );
        std::thread::scope(|s| {
            for _ in 0..16 {
                let p = Arc::clone(&p);
                s.spawn(move || p.complete(&req()).unwrap());
            }
        });
        let peak = p.transport().peak.load(Ordering::SeqCst);
        assert!((1..=3).contains(&peak), "peak {peak}");
    }

    #[test]
    fn backoff_is_capped() {
        let mut c = cfg("X");
        c.backoff_initial_ms = 1000;
        c.backoff_cap_ms = 32_000;
        let p = HttpProvider::with_transport(c, Scripted::new(vec![])).unwrap();
        for retry in 0..12 {
            assert!(p.backoff(retry) <= Duration::from_millis(32_000));
        }
        assert!(p.backoff(0) <= Duration::from_millis(1000));
    }
}
