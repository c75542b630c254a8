//! HTTP client for the hidden-state service, plus endpoint resolution.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use hxr_core::mock::{MockConfig, MockReservoir};
use hxr_core::service::{
    EmbedTermsRequest, EmbedTermsResponse, ReservoirOutput, ReservoirRequest, ReservoirService, ServerInfo,
    ServiceError, PROTOCOL_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::protocol::{
    decode_error, CORRELATION_HEADER, EMBED_TERMS_PATH, INFO_PATH, MAX_BODY_BYTES, PROTOCOL_HEADER, RESERVOIR_PATH,
};

/// Endpoint value selecting the in-process mock.
pub const INPROC: &str = "inproc";
/// Environment variable consulted for the default endpoint.
pub const ENDPOINT_ENV: &str = "HXR_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Deadline for one call, retries included.
    pub deadline_ms: u64,
    /// Extra attempts after a connection failure or a 5xx status.
    pub retries: u32,
    /// First back-off pause; doubled after every retry.
    pub backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            deadline_ms: 30_000,
            retries: 2,
            backoff_ms: 100,
        }
    }
}

#[derive(Debug)]
pub struct HttpReservoir {
    base: String,
    agent: ureq::Agent,
    config: ClientConfig,
    next_id: AtomicU64,
}

enum Attempt {
    Done(Result<Vec<u8>, ServiceError>),
    Retry(String),
}

impl HttpReservoir {
    pub fn new(endpoint: &str, config: ClientConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self {
            base: endpoint.trim_end_matches('/').to_owned(),
            agent,
            config,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    fn attempt(&self, path: &str, body: Option<&[u8]>, timeout: Duration, id: &str) -> Attempt {
        let url = format!("{}{path}", self.base);
        let version = PROTOCOL_VERSION.to_string();
        let sent = match body {
            None => self
                .agent
                .get(&url)
                .config()
                .timeout_global(Some(timeout))
                .build()
                .header(PROTOCOL_HEADER, &version)
                .header(CORRELATION_HEADER, id)
                .call(),
            Some(b) => self
                .agent
                .post(&url)
                .config()
                .timeout_global(Some(timeout))
                .build()
                .header(PROTOCOL_HEADER, &version)
                .header(CORRELATION_HEADER, id)
                .content_type("application/json")
                .send(b),
        };
        let mut resp = match sent {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Done(Err(ServiceError::Deadline {
                    millis: self.config.deadline_ms,
                }))
            }
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let echoed = resp
            .headers()
            .get(CORRELATION_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned);
        let bytes = match resp.body_mut().with_config().limit(MAX_BODY_BYTES as u64).read_to_vec() {
            Ok(b) => b,
            Err(ureq::Error::Timeout(_)) => {
                return Attempt::Done(Err(ServiceError::Deadline {
                    millis: self.config.deadline_ms,
                }))
            }
            Err(e) => return Attempt::Retry(format!("reading response: {e}")),
        };
        if (500..600).contains(&status) {
            return Attempt::Retry(decode_error(status, &bytes).to_string());
        }
        if status != 200 {
            return Attempt::Done(Err(decode_error(status, &bytes)));
        }
        if let Some(e) = echoed.filter(|e| e != id) {
            return Attempt::Done(Err(ServiceError::Parse(format!(
                "correlation id {e} does not match request {id}"
            ))));
        }
        Attempt::Done(Ok(bytes))
    }

    fn call(&self, path: &str, body: Option<&[u8]>) -> Result<Vec<u8>, ServiceError> {
        let id = format!(
            "{}-{}",
            std::process::id(),
            self.next_id.fetch_add(1, Ordering::Relaxed)
        );
        let deadline = Instant::now() + Duration::from_millis(self.config.deadline_ms);
        let expired = || ServiceError::Deadline {
            millis: self.config.deadline_ms,
        };
        let mut last = String::new();
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                let pause = Duration::from_millis(self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16)));
                if Instant::now() + pause >= deadline {
                    return Err(expired());
                }
                std::thread::sleep(pause);
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(expired());
            }
            match self.attempt(path, body, remaining, &id) {
                Attempt::Done(r) => return r,
                Attempt::Retry(msg) => last = msg,
            }
        }
        Err(ServiceError::Transport {
            message: format!("{}{path}: {last}", self.base),
            retries: self.config.retries,
        })
    }

    fn decode<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<T, ServiceError> {
        json::from_slice(bytes).map_err(|e| ServiceError::Parse(e.to_string()))
    }
}

impl ReservoirService for HttpReservoir {
    fn info(&self) -> Result<ServerInfo, ServiceError> {
        Self::decode(&self.call(INFO_PATH, None)?)
    }

    fn run_reservoir(&self, request: &ReservoirRequest) -> Result<ReservoirOutput, ServiceError> {
        let body = json::to_vec(request).map_err(|e| ServiceError::Argument(e.to_string()))?;
        let out: ReservoirOutput = Self::decode(&self.call(RESERVOIR_PATH, Some(&body))?)?;
        if out.states.len() != out.entropies.len() || out.states.len() > request.return_last_k {
            return Err(ServiceError::Parse(format!(
                "{} states and {} entropies for return_last_k {}",
                out.states.len(),
                out.entropies.len(),
                request.return_last_k
            )));
        }
        Ok(out)
    }

    fn embed_terms(&self, terms: &[String]) -> Result<Vec<Vec<f64>>, ServiceError> {
        let body = json::to_vec(&EmbedTermsRequest { terms: terms.to_vec() })
            .map_err(|e| ServiceError::Argument(e.to_string()))?;
        let out: EmbedTermsResponse = Self::decode(&self.call(EMBED_TERMS_PATH, Some(&body))?)?;
        if out.vectors.len() != terms.len() {
            return Err(ServiceError::Parse(format!(
                "{} vectors for {} terms",
                out.vectors.len(),
                terms.len()
            )));
        }
        Ok(out.vectors)
    }
}

/// Fetches and checks the server's info.
pub fn fetch_info<S: ReservoirService + ?Sized>(service: &S) -> Result<ServerInfo> {
    let info = service.info()?;
    info.check_compatible()?;
    Ok(info)
}

/// `inproc` gives the in-process mock; anything else is an HTTP base URL.
pub fn open_service(endpoint: &str, mock: &MockConfig, client: &ClientConfig) -> Result<Box<dyn ReservoirService>> {
    if endpoint == INPROC {
        return Ok(Box::new(MockReservoir::new(mock.clone())?));
    }
    if !endpoint.starts_with("http://") {
        return Err(Error::Config(format!(
            "endpoint must be `{INPROC}` or an http:// URL, got `{endpoint}`"
        )));
    }
    Ok(Box::new(HttpReservoir::new(endpoint, client.clone())))
}
