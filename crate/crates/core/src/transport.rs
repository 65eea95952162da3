//! Blocking HTTP transport shared by every remote client.
//!
//! Remote classifiers, embedders, rerankers, chat models, search backends and
//! threat-intel providers all speak through [`HttpTransport`]. Wrapping a
//! transport in [`LoopbackOnly`] enforces offline operation and
//! [`RecordingTransport`] keeps a log of every request host, which is how the
//! test suite proves that no non-loopback connection is ever attempted.

use std::fmt;
use std::net::IpAddr;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Get => "GET",
            Method::Post => "POST",
        })
    }
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<Vec<u8>>,
    pub timeout: Duration,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            headers: Vec::new(),
            body: None,
            timeout: Duration::from_secs(5),
        }
    }

    pub fn post_json<T: Serialize + ?Sized>(url: impl Into<String>, body: &T) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: Some(serde_json::to_vec(body).expect("request body serializes")),
            timeout: Duration::from_secs(5),
        }
    }

    pub fn header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Host component of the URL, if it parses.
    pub fn host(&self) -> Option<String> {
        url::Url::parse(&self.url)
            .ok()
            .and_then(|u| u.host_str().map(|h| h.trim_matches(['[', ']']).to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn json<T: DeserializeOwned>(&self, url: &str) -> Result<T, TransportError> {
        serde_json::from_slice(&self.body).map_err(|e| TransportError::Decode {
            url: url.to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("connection to {url} failed: {message}")]
    Connect { url: String, message: String },
    #[error("request to {url} timed out")]
    Timeout { url: String },
    #[error("{url} returned HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("refusing non-loopback request to {host} in offline mode")]
    Blocked { host: String },
    #[error("malformed response from {url}: {message}")]
    Decode { url: String, message: String },
    #[error("invalid url: {0}")]
    InvalidUrl(String),
}

impl TransportError {
    /// Errors worth retrying: connection failures, timeouts and 5xx/429.
    pub fn is_transient(&self) -> bool {
        match self {
            TransportError::Connect { .. } | TransportError::Timeout { .. } => true,
            TransportError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

impl<T: HttpTransport + ?Sized> HttpTransport for Arc<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).send(request)
    }
}

impl<T: HttpTransport + ?Sized> HttpTransport for Box<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (**self).send(request)
    }
}

/// Sends a request and decodes a JSON body, mapping non-2xx to an error.
pub fn send_json<T: DeserializeOwned>(
    transport: &dyn HttpTransport,
    request: &HttpRequest,
) -> Result<T, TransportError> {
    let response = transport.send(request)?;
    if !(200..300).contains(&response.status) {
        return Err(TransportError::Status {
            url: request.url.clone(),
            status: response.status,
        });
    }
    response.json(&request.url)
}

/// Real network transport backed by `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self {
            agent: ureq::AgentBuilder::new().build(),
        }
    }
}

impl HttpTransport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let mut req = self
            .agent
            .request(&request.method.to_string(), &request.url)
            .timeout(request.timeout);
        for (name, value) in &request.headers {
            req = req.set(name, value);
        }
        let result = match &request.body {
            Some(body) => req.send_bytes(body),
            None => req.call(),
        };
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                return Err(if message.contains("timed out") {
                    TransportError::Timeout {
                        url: request.url.clone(),
                    }
                } else {
                    TransportError::Connect {
                        url: request.url.clone(),
                        message,
                    }
                });
            }
        };
        let status = response.status();
        let mut body = Vec::new();
        std::io::Read::read_to_end(&mut response.into_reader(), &mut body).map_err(|e| {
            TransportError::Connect {
                url: request.url.clone(),
                message: e.to_string(),
            }
        })?;
        Ok(HttpResponse { status, body })
    }
}

pub fn is_loopback_host(host: &str) -> bool {
    if host.eq_ignore_ascii_case("localhost") {
        return true;
    }
    host.parse::<IpAddr>().map(|ip| ip.is_loopback()).unwrap_or(false)
}

/// Rejects any request whose host is not a loopback address.
pub struct LoopbackOnly<T> {
    inner: T,
}

impl<T> LoopbackOnly<T> {
    pub fn new(inner: T) -> Self {
        Self { inner }
    }
}

impl<T: HttpTransport> HttpTransport for LoopbackOnly<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let host = request
            .host()
            .ok_or_else(|| TransportError::InvalidUrl(request.url.clone()))?;
        if !is_loopback_host(&host) {
            return Err(TransportError::Blocked { host });
        }
        self.inner.send(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordedRequest {
    pub method: Method,
    pub url: String,
    pub host: String,
}

/// Records every request before forwarding it.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<Vec<RecordedRequest>>,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn non_loopback(&self) -> Vec<RecordedRequest> {
        self.requests()
            .into_iter()
            .filter(|r| !is_loopback_host(&r.host))
            .collect()
    }
}

impl<T: HttpTransport> HttpTransport for RecordingTransport<T> {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.log.lock().unwrap().push(RecordedRequest {
            method: request.method,
            url: request.url.clone(),
            host: request.host().unwrap_or_default(),
        });
        self.inner.send(request)
    }
}

type Handler = dyn Fn(&HttpRequest) -> Result<HttpResponse, TransportError> + Send + Sync;

/// In-memory transport answering from a closure. Used for fault injection.
pub struct StubTransport {
    handler: Box<Handler>,
}

impl StubTransport {
    pub fn new<F>(handler: F) -> Self
    where
        F: Fn(&HttpRequest) -> Result<HttpResponse, TransportError> + Send + Sync + 'static,
    {
        Self {
            handler: Box::new(handler),
        }
    }

    /// Transport on which every request fails to connect.
    pub fn unreachable() -> Self {
        Self::new(|req| {
            Err(TransportError::Connect {
                url: req.url.clone(),
                message: "connection refused".into(),
            })
        })
    }

    pub fn json_ok(value: serde_json::Value) -> HttpResponse {
        HttpResponse {
            status: 200,
            body: serde_json::to_vec(&value).unwrap(),
        }
    }
}

impl HttpTransport for StubTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        (self.handler)(request)
    }
}

/// Shared retry policy: one retry with exponential backoff, per-try timeout.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub retries: u32,
    pub backoff_base: Duration,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            retries: 1,
            backoff_base: Duration::from_millis(500),
            timeout: Duration::from_secs(5),
        }
    }
}

impl RetryPolicy {
    pub fn no_backoff() -> Self {
        Self {
            backoff_base: Duration::ZERO,
            ..Self::default()
        }
    }

    pub fn send(
        &self,
        transport: &dyn HttpTransport,
        request: &HttpRequest,
    ) -> Result<HttpResponse, TransportError> {
        let request = request.clone().timeout(self.timeout);
        let mut attempt = 0;
        loop {
            let outcome = transport.send(&request).and_then(|r| {
                if (200..300).contains(&r.status) {
                    Ok(r)
                } else {
                    Err(TransportError::Status {
                        url: request.url.clone(),
                        status: r.status,
                    })
                }
            });
            match outcome {
                Err(e) if e.is_transient() && attempt < self.retries => {
                    thread::sleep(self.backoff_base * 2u32.pow(attempt));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn loopback_guard_blocks_public_hosts() {
        let guarded = LoopbackOnly::new(StubTransport::new(|_| Ok(StubTransport::json_ok(serde_json::json!({})))));
        let err = guarded
            .send(&HttpRequest::get("https://internetdb.shodan.io/8.8.8.8"))
            .unwrap_err();
        assert_eq!(
            err,
            TransportError::Blocked {
                host: "internetdb.shodan.io".into()
            }
        );
        assert!(guarded.send(&HttpRequest::get("http://127.0.0.1:9/x")).is_ok());
        assert!(guarded.send(&HttpRequest::get("http://[::1]:9/x")).is_ok());
        assert!(guarded.send(&HttpRequest::get("http://localhost/x")).is_ok());
    }

    #[test]
    fn recorder_sees_every_host() {
        let rec = RecordingTransport::new(StubTransport::unreachable());
        let _ = rec.send(&HttpRequest::get("http://127.0.0.1:1/a"));
        let _ = rec.send(&HttpRequest::get("https://example.org/b"));
        assert_eq!(rec.requests().len(), 2);
        assert_eq!(rec.non_loopback()[0].host, "example.org");
    }

    #[test]
    fn retry_policy_retries_once_on_transient_errors() {
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let stub = StubTransport::new(move |req| {
            seen.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::Timeout { url: req.url.clone() })
        });
        let err = RetryPolicy::no_backoff()
            .send(&stub, &HttpRequest::get("http://127.0.0.1/x"))
            .unwrap_err();
        assert!(matches!(err, TransportError::Timeout { .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn retry_policy_does_not_retry_client_errors() {
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let stub = StubTransport::new(move |_| {
            seen.fetch_add(1, Ordering::SeqCst);
            Ok(HttpResponse { status: 404, body: vec![] })
        });
        let err = RetryPolicy::no_backoff()
            .send(&stub, &HttpRequest::get("http://127.0.0.1/x"))
            .unwrap_err();
        assert!(matches!(err, TransportError::Status { status: 404, .. }));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}
