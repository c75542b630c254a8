//! Recorded request/response corpus for the hidden-state protocol.
//!
//! Each fixture holds a request and the reply recorded from the mock with
//! its default configuration. [`Mode::Exact`] replays against the mock and
//! demands identical status and body, every number compared by bit
//! pattern. [`Mode::Structural`] is for other servers: same status and
//! error kind, same keys, state widths equal to the server's `hidden_dim`,
//! entropies in `[0, ln vocab_size]`, and repeat requests equal within
//! 1e-5.

use std::fs;
use std::path::Path;

use hxr_core::data::{synth_shot, GeneratorConfig};
use hxr_core::prompt::PromptBuilder;
use hxr_core::sdc::default_context_terms;
use hxr_core::service::{ReservoirService, ServerInfo, PROTOCOL_VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::protocol::{self, EMBED_TERMS_PATH, INFO_PATH, PROTOCOL_HEADER, RESERVOIR_PATH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub name: String,
    pub method: String,
    pub path: String,
    /// Value of the protocol header; `None` sends no header.
    pub protocol: Option<String>,
    /// Request body; a string is sent verbatim, anything else as JSON.
    pub request: Value,
    pub status: u16,
    pub response: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Structural,
}

/// Something that answers raw protocol requests.
pub trait Transport {
    fn send(&self, method: &str, path: &str, protocol: Option<&str>, body: &[u8]) -> Result<(u16, Vec<u8>)>;
}

/// Fetches `/v1/info` through a transport.
pub fn server_info<T: Transport>(transport: &T) -> Result<ServerInfo> {
    let (status, body) = transport.send("GET", INFO_PATH, None, b"")?;
    if status != 200 {
        return Err(Error::Transport(format!("GET {INFO_PATH} returned {status}")));
    }
    crate::json::from_slice(&body).map_err(|e| Error::Schema(format!("server info: {e}")))
}

/// Calls the request handler directly, no sockets.
#[derive(Debug)]
pub struct InProcess<S>(pub S);

impl<S: ReservoirService> Transport for InProcess<S> {
    fn send(&self, method: &str, path: &str, protocol: Option<&str>, body: &[u8]) -> Result<(u16, Vec<u8>)> {
        let r = protocol::handle(&self.0, method, path, protocol, body);
        Ok((r.status, r.body))
    }
}

/// Raw HTTP against a running server.
#[derive(Debug)]
pub struct Http {
    base: String,
    agent: ureq::Agent,
}

impl Http {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .build()
            .new_agent();
        Self {
            base: base.trim_end_matches('/').to_owned(),
            agent,
        }
    }
}

impl Transport for Http {
    fn send(&self, method: &str, path: &str, protocol: Option<&str>, body: &[u8]) -> Result<(u16, Vec<u8>)> {
        let url = format!("{}{path}", self.base);
        let result = if method.eq_ignore_ascii_case("GET") {
            let mut req = self.agent.get(&url);
            if let Some(p) = protocol {
                req = req.header(PROTOCOL_HEADER, p);
            }
            req.call()
        } else {
            let mut req = self.agent.post(&url).content_type("application/json");
            if let Some(p) = protocol {
                req = req.header(PROTOCOL_HEADER, p);
            }
            req.send(body)
        };
        let mut resp = result.map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(protocol::MAX_BODY_BYTES as u64)
            .read_to_vec()
            .map_err(|e| Error::Transport(format!("{url}: {e}")))?;
        Ok((status, bytes))
    }
}

fn request_body(request: &Value) -> Vec<u8> {
    match request {
        Value::Null => Vec::new(),
        Value::String(raw) => raw.clone().into_bytes(),
        other => crate::json::to_vec(other).expect("fixture request serializes"),
    }
}

/// Deterministic pseudo-random vectors in `[-0.5, 0.5)`.
fn vectors(n: usize, width: usize, salt: u64) -> Vec<Vec<f64>> {
    let mut x = 0x9e37_79b9_7f4a_7c15u64 ^ salt;
    (0..n)
        .map(|_| {
            (0..width)
                .map(|_| {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect()
        })
        .collect()
}

/// Requests of the corpus, sized for a server of width `hidden_dim` that
/// accepts `max_positions` positions.
pub fn corpus_requests(
    hidden_dim: usize,
    max_positions: usize,
) -> Vec<(String, String, String, Option<String>, Value)> {
    let v = Some(PROTOCOL_VERSION.to_string());
    let shot = synth_shot(&GeneratorConfig::default(), 0).expect("default generator is valid");
    let stats = hxr_core::data::input_stats(&shot.laser).expect("generated laser is non-empty");
    let prompt = PromptBuilder::default()
        .for_series(&stats, 400, 400, &shot.phase_plate)
        .expect("bundled templates render")
        .text;
    let reservoir = |prompt: &str, n: usize, width: usize, k: usize, salt: u64| json!({"prompt_text": prompt, "input_vectors": vectors(n, width, salt), "return_last_k": k});
    let case = |name: &str, method: &str, path: &str, protocol: &Option<String>, body: Value| {
        (
            name.to_owned(),
            method.to_owned(),
            path.to_owned(),
            protocol.clone(),
            body,
        )
    };
    vec![
        case("info", "GET", INFO_PATH, &None, Value::Null),
        case(
            "embed_context_terms",
            "POST",
            EMBED_TERMS_PATH,
            &v,
            json!({"terms": default_context_terms()}),
        ),
        case(
            "embed_repeated_term",
            "POST",
            EMBED_TERMS_PATH,
            &v,
            json!({"terms": ["pulse", "pulse"]}),
        ),
        case(
            "embed_multi_token_term",
            "POST",
            EMBED_TERMS_PATH,
            &v,
            json!({"terms": ["peak compression"]}),
        ),
        case("embed_empty_term", "POST", EMBED_TERMS_PATH, &v, json!({"terms": [""]})),
        case("embed_no_terms", "POST", EMBED_TERMS_PATH, &v, json!({"terms": []})),
        case(
            "reservoir_fusion_prompt_k50",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir(&prompt, 13, hidden_dim, 50, 1),
        ),
        case(
            "reservoir_k_exceeds_positions",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir("short prompt", 3, hidden_dim, 50, 2),
        ),
        case(
            "reservoir_vectors_only",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir("", 8, hidden_dim, 5, 3),
        ),
        case(
            "reservoir_prompt_only",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir(&prompt, 0, hidden_dim, 4, 4),
        ),
        case(
            "reservoir_no_positions",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir("", 0, hidden_dim, 5, 5),
        ),
        case(
            "reservoir_zero_k",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir("x", 1, hidden_dim, 0, 6),
        ),
        case(
            "reservoir_wrong_width",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir("x", 2, hidden_dim + 1, 2, 7),
        ),
        case(
            "reservoir_over_capacity",
            "POST",
            RESERVOIR_PATH,
            &v,
            reservoir(&"a ".repeat(max_positions + 16), 0, hidden_dim, 1, 8),
        ),
        case(
            "reservoir_malformed_body",
            "POST",
            RESERVOIR_PATH,
            &v,
            json!("{\"prompt_text\": "),
        ),
        case(
            "reservoir_missing_field",
            "POST",
            RESERVOIR_PATH,
            &v,
            json!({"prompt_text": "x"}),
        ),
        case(
            "reservoir_version_mismatch",
            "POST",
            RESERVOIR_PATH,
            &Some("99".into()),
            reservoir("x", 1, hidden_dim, 1, 9),
        ),
        case(
            "reservoir_without_version_header",
            "POST",
            RESERVOIR_PATH,
            &None,
            reservoir("pulse", 2, hidden_dim, 2, 10),
        ),
        case("unknown_route", "GET", "/v1/generate", &v, Value::Null),
        case("wrong_method", "GET", RESERVOIR_PATH, &v, Value::Null),
    ]
}

/// Replays the corpus requests against `transport` and records the replies.
pub fn record<T: Transport>(transport: &T, info: &ServerInfo) -> Result<Vec<Fixture>> {
    corpus_requests(info.hidden_dim, info.max_positions)
        .into_iter()
        .map(|(name, method, path, protocol, request)| {
            let (status, body) = transport.send(&method, &path, protocol.as_deref(), &request_body(&request))?;
            let response = serde_json::from_slice(&body)
                .map_err(|e| Error::Schema(format!("{name}: response is not JSON: {e}")))?;
            Ok(Fixture {
                name,
                method,
                path,
                protocol,
                request,
                status,
                response,
            })
        })
        .collect()
}

pub fn save_corpus(fixtures: &[Fixture], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    for (i, f) in fixtures.iter().enumerate() {
        let path = dir.join(format!("{i:02}_{}.json", f.name));
        let mut bytes = crate::json::to_vec(f).map_err(|e| Error::file(&path, e))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| Error::file(&path, e))?;
    }
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Vec<Fixture>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::file(p, e))?;
            crate::json::from_slice(&bytes).map_err(|e| Error::file(p, e))
        })
        .collect()
}

/// Bitwise equality of two JSON values; object key order is ignored.
pub fn bit_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_u64(), y.as_u64(), x.as_i64(), y.as_i64()) {
            (Some(p), Some(q), _, _) => p == q,
            (None, None, Some(p), Some(q)) => p == q,
            _ => match (x.as_f64(), y.as_f64()) {
                (Some(p), Some(q)) => p.to_bits() == q.to_bits() && (x.is_f64() == y.is_f64()),
                _ => false,
            },
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| bit_equal(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| bit_equal(v, w)))
        }
        _ => a == b,
    }
}

fn err_kind(v: &Value) -> Option<&str> {
    v.get("error")?.get("kind")?.as_str()
}

fn check_structure(f: &Fixture, got: &Value, info: &ServerInfo) -> std::result::Result<(), String> {
    if f.status != 200 {
        return match (err_kind(&f.response), err_kind(got)) {
            (Some(a), Some(b)) if a == b => Ok(()),
            (a, b) => Err(format!("error kind {b:?}, expected {a:?}")),
        };
    }
    let keys = |v: &Value| v.as_object().map(|o| o.keys().cloned().collect::<Vec<_>>());
    if keys(&f.response) != keys(got) {
        return Err(format!("keys {:?}, expected {:?}", keys(got), keys(&f.response)));
    }
    let rows = |v: &Value, k: &str| v.get(k).and_then(Value::as_array).map(Vec::len);
    let widths_ok = |k: &str| {
        got.get(k).and_then(Value::as_array).is_some_and(|rs| {
            rs.iter()
                .all(|r| r.as_array().is_some_and(|xs| xs.len() == info.hidden_dim))
        })
    };
    match f.path.as_str() {
        RESERVOIR_PATH => {
            if rows(got, "states") != rows(&f.response, "states")
                || rows(got, "entropies") != rows(&f.response, "entropies")
            {
                return Err("state or entropy count differs".into());
            }
            if !widths_ok("states") {
                return Err("state width differs from hidden_dim".into());
            }
            let max = (info.vocab_size as f64).ln();
            let ok = got["entropies"]
                .as_array()
                .is_some_and(|es| es.iter().all(|e| e.as_f64().is_some_and(|h| (0.0..=max).contains(&h))));
            if !ok {
                return Err(format!("entropy outside [0, {max}]"));
            }
        }
        EMBED_TERMS_PATH if rows(got, "vectors") != rows(&f.response, "vectors") || !widths_ok("vectors") => {
            return Err("vector count or width differs".into());
        }
        _ => {}
    }
    Ok(())
}

fn close(a: &Value, b: &Value, tol: f64) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(p), Some(q)) => (p - q).abs() <= tol * p.abs().max(q.abs()).max(1.0),
            _ => false,
        },
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| close(p, q, tol)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| close(v, w, tol)))
        }
        _ => a == b,
    }
}

/// Outcome of one fixture.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub failure: Option<String>,
}

/// Replays every fixture; failures are reported per case.
pub fn run_corpus<T: Transport>(transport: &T, fixtures: &[Fixture], mode: Mode) -> Result<Vec<CaseResult>> {
    let info = server_info(transport)?;
    let sized: Vec<_> = corpus_requests(info.hidden_dim, info.max_positions);
    let mut out = Vec::new();
    for f in fixtures {
        let request = match mode {
            Mode::Exact => f.request.clone(),
            Mode::Structural => sized
                .iter()
                .find(|c| c.0 == f.name)
                .map_or_else(|| f.request.clone(), |c| c.4.clone()),
        };
        let body = request_body(&request);
        let (status, bytes) = transport.send(&f.method, &f.path, f.protocol.as_deref(), &body)?;
        let failure = (|| {
            if status != f.status {
                return Some(format!("status {status}, expected {}", f.status));
            }
            let got: Value = match serde_json::from_slice(&bytes) {
                Ok(v) => v,
                Err(e) => return Some(format!("response is not JSON: {e}")),
            };
            match mode {
                Mode::Exact => {
                    (!bit_equal(&got, &f.response)).then(|| "response differs from the recording".to_owned())
                }
                Mode::Structural => {
                    if let Err(e) = check_structure(f, &got, &info) {
                        return Some(e);
                    }
                    let (s2, b2) = match transport.send(&f.method, &f.path, f.protocol.as_deref(), &body) {
                        Ok(r) => r,
                        Err(e) => return Some(e.to_string()),
                    };
                    let again: Value = serde_json::from_slice(&b2).unwrap_or(Value::Null);
                    (s2 != status || !close(&got, &again, 1e-5))
                        .then(|| "repeat request differs beyond 1e-5".to_owned())
                }
            }
        })();
        out.push(CaseResult {
            name: f.name.clone(),
            failure,
        });
    }
    Ok(out)
}
