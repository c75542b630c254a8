//! Hidden-state service contract: the messages exchanged with a frozen
//! language-model reservoir and the trait every transport implements.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Wire protocol version spoken by this crate.
pub const PROTOCOL_VERSION: u32 = 1;

/// Number of trailing positions used for confidence estimation by default.
pub const DEFAULT_LAST_K: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub model_id: String,
    pub hidden_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub protocol_version: u32,
}

impl ServerInfo {
    pub fn check_compatible(&self) -> Result<(), ServiceError> {
        if self.protocol_version != PROTOCOL_VERSION {
            return Err(ServiceError::Compatibility {
                server: self.protocol_version,
                client: PROTOCOL_VERSION,
            });
        }
        if self.hidden_dim == 0 || self.vocab_size < 2 || self.max_positions == 0 {
            return Err(ServiceError::Parse(alloc::format!(
                "implausible server info: hidden_dim {}, vocab_size {}, max_positions {}",
                self.hidden_dim,
                self.vocab_size,
                self.max_positions
            )));
        }
        Ok(())
    }
}

/// Prompt text plus already-projected input vectors; the service appends
/// the vectors after the prompt tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirRequest {
    pub prompt_text: String,
    pub input_vectors: Vec<Vec<f64>>,
    pub return_last_k: usize,
}

/// Final-layer states of the last `k'` positions (oldest first) and the
/// next-token entropy, in nats, at each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirOutput {
    pub states: Vec<Vec<f64>>,
    pub entropies: Vec<f64>,
}

impl ReservoirOutput {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The trailing `k` positions (all of them when fewer are available).
    pub fn last_k(&self, k: usize) -> ReservoirOutput {
        let start = self.states.len().saturating_sub(k);
        ReservoirOutput {
            states: self.states[start..].to_vec(),
            entropies: self.entropies[start..].to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedTermsRequest {
    pub terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedTermsResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Failures reported by a reservoir service or its transport.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ServiceError {
    #[error("bad request: {0}")]
    Argument(String),
    #[error("request needs {positions} positions, server allows {max_positions}")]
    Capacity { positions: usize, max_positions: usize },
    #[error("protocol version {server} is not supported (client speaks {client})")]
    Compatibility { server: u32, client: u32 },
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("transport failure after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error("deadline of {millis} ms expired")]
    Deadline { millis: u64 },
    #[error("malformed response: {0}")]
    Parse(String),
}

/// A frozen hidden-state reservoir.
pub trait ReservoirService: Send + Sync {
    fn info(&self) -> Result<ServerInfo, ServiceError>;

    fn run_reservoir(&self, request: &ReservoirRequest) -> Result<ReservoirOutput, ServiceError>;

    /// One `hidden_dim` vector per term; multi-token terms are mean-pooled.
    fn embed_terms(&self, terms: &[String]) -> Result<Vec<Vec<f64>>, ServiceError>;
}

impl<S: ReservoirService + ?Sized> ReservoirService for &S {
    fn info(&self) -> Result<ServerInfo, ServiceError> {
        (**self).info()
    }

    fn run_reservoir(&self, request: &ReservoirRequest) -> Result<ReservoirOutput, ServiceError> {
        (**self).run_reservoir(request)
    }

    fn embed_terms(&self, terms: &[String]) -> Result<Vec<Vec<f64>>, ServiceError> {
        (**self).embed_terms(terms)
    }
}

impl<S: ReservoirService + ?Sized> ReservoirService for alloc::boxed::Box<S> {
    fn info(&self) -> Result<ServerInfo, ServiceError> {
        (**self).info()
    }

    fn run_reservoir(&self, request: &ReservoirRequest) -> Result<ReservoirOutput, ServiceError> {
        (**self).run_reservoir(request)
    }

    fn embed_terms(&self, terms: &[String]) -> Result<Vec<Vec<f64>>, ServiceError> {
        (**self).embed_terms(terms)
    }
}
