//! Wire format of the hidden-state service and a transport-independent
//! request handler.
//!
//! | method | path              | body                                            |
//! |--------|-------------------|-------------------------------------------------|
//! | GET    | `/v1/info`        | none                                            |
//! | POST   | `/v1/reservoir`   | `prompt_text`, `input_vectors`, `return_last_k` |
//! | POST   | `/v1/embed_terms` | `terms`                                         |
//!
//! Failures carry `{"error": {"kind", "message", ...}}` with status 400
//! (argument), 413 (capacity), 426 (protocol version) or 5xx (server).

use hxr_core::service::{
    EmbedTermsRequest, EmbedTermsResponse, ReservoirRequest, ReservoirService, ServiceError, PROTOCOL_VERSION,
};
use serde::{Deserialize, Serialize};

use crate::json;

/// Request header carrying the client's protocol version.
pub const PROTOCOL_HEADER: &str = "x-hxr-protocol";
/// Echoed by the server so responses can be matched to requests.
pub const CORRELATION_HEADER: &str = "x-correlation-id";
/// Largest request body accepted.
pub const MAX_BODY_BYTES: usize = 64 << 20;

pub const INFO_PATH: &str = "/v1/info";
pub const RESERVOIR_PATH: &str = "/v1/reservoir";
pub const EMBED_TERMS_PATH: &str = "/v1/embed_terms";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_positions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol_version: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        Self {
            error: ErrorDetail {
                kind: kind.into(),
                message: message.into(),
                positions: None,
                max_positions: None,
                protocol_version: None,
            },
        }
    }
}

/// Status code and JSON body of one response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    fn ok<T: Serialize>(value: &T) -> Self {
        Self {
            status: 200,
            body: json::to_vec(value).expect("response serializes"),
        }
    }

    fn error(status: u16, body: ErrorBody) -> Self {
        Self {
            status,
            body: json::to_vec(&body).expect("error body serializes"),
        }
    }
}

/// Status code and error body for a service failure.
pub fn error_reply(e: &ServiceError) -> Reply {
    let mut body = ErrorBody::new("server", e.to_string());
    let status = match e {
        ServiceError::Argument(m) => {
            body = ErrorBody::new("argument", m.clone());
            400
        }
        ServiceError::Capacity {
            positions,
            max_positions,
        } => {
            body.error.kind = "capacity".into();
            body.error.positions = Some(*positions);
            body.error.max_positions = Some(*max_positions);
            413
        }
        ServiceError::Compatibility { server, .. } => {
            body.error.kind = "version".into();
            body.error.protocol_version = Some(*server);
            426
        }
        ServiceError::Server { status, message } => {
            body = ErrorBody::new("server", message.clone());
            if (500..600).contains(status) {
                *status
            } else {
                500
            }
        }
        _ => 500,
    };
    Reply::error(status, body)
}

/// Client-side reading of a non-200 response.
pub fn decode_error(status: u16, body: &[u8]) -> ServiceError {
    let detail = json::from_slice::<ErrorBody>(body).ok().map(|b| b.error);
    let message = detail
        .as_ref()
        .map(|d| d.message.clone())
        .unwrap_or_else(|| String::from_utf8_lossy(body).into_owned());
    match status {
        400 => ServiceError::Argument(message),
        413 => ServiceError::Capacity {
            positions: detail.as_ref().and_then(|d| d.positions).unwrap_or(0),
            max_positions: detail.as_ref().and_then(|d| d.max_positions).unwrap_or(0),
        },
        426 => ServiceError::Compatibility {
            server: detail.as_ref().and_then(|d| d.protocol_version).unwrap_or(0),
            client: PROTOCOL_VERSION,
        },
        _ => ServiceError::Server { status, message },
    }
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Reply> {
    json::from_slice(body).map_err(|e| Reply::error(400, ErrorBody::new("argument", format!("malformed body: {e}"))))
}

/// Dispatches one request. `protocol` is the value of [`PROTOCOL_HEADER`],
/// if sent; `/v1/info` answers regardless so clients can discover the
/// version.
pub fn handle<S: ReservoirService + ?Sized>(
    service: &S,
    method: &str,
    path: &str,
    protocol: Option<&str>,
    body: &[u8],
) -> Reply {
    let route = match path {
        INFO_PATH => "GET",
        RESERVOIR_PATH | EMBED_TERMS_PATH => "POST",
        _ => return Reply::error(404, ErrorBody::new("not_found", format!("no route {path}"))),
    };
    if !method.eq_ignore_ascii_case(route) {
        return Reply::error(405, ErrorBody::new("method", format!("{path} expects {route}")));
    }
    if path != INFO_PATH {
        if let Some(v) = protocol {
            if v.trim().parse::<u32>().ok() != Some(PROTOCOL_VERSION) {
                let mut body = ErrorBody::new(
                    "version",
                    format!("client protocol {v}, server speaks {PROTOCOL_VERSION}"),
                );
                body.error.protocol_version = Some(PROTOCOL_VERSION);
                return Reply::error(426, body);
            }
        }
    }
    if body.len() > MAX_BODY_BYTES {
        return Reply::error(
            413,
            ErrorBody::new("capacity", format!("body exceeds {MAX_BODY_BYTES} bytes")),
        );
    }
    let result = match path {
        INFO_PATH => service.info().map(|i| Reply::ok(&i)),
        RESERVOIR_PATH => match parse::<ReservoirRequest>(body) {
            Ok(req) => service.run_reservoir(&req).map(|o| Reply::ok(&o)),
            Err(reply) => return reply,
        },
        _ => match parse::<EmbedTermsRequest>(body) {
            Ok(req) => service
                .embed_terms(&req.terms)
                .map(|vectors| Reply::ok(&EmbedTermsResponse { vectors })),
            Err(reply) => return reply,
        },
    };
    result.unwrap_or_else(|e| error_reply(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hxr_core::mock::{MockConfig, MockReservoir};
    use hxr_core::service::ServerInfo;

    fn mock() -> MockReservoir {
        MockReservoir::new(MockConfig::default()).unwrap()
    }

    #[test]
    fn info_route() {
        let r = handle(&mock(), "GET", INFO_PATH, None, b"");
        assert_eq!(r.status, 200);
        let info: ServerInfo = json::from_slice(&r.body).unwrap();
        assert_eq!(
            (info.model_id.as_str(), info.hidden_dim, info.vocab_size),
            ("mock-esn", 64, 256)
        );
    }

    #[test]
    fn status_codes() {
        let m = mock();
        assert_eq!(handle(&m, "GET", "/v2/info", None, b"").status, 404);
        assert_eq!(handle(&m, "GET", RESERVOIR_PATH, None, b"").status, 405);
        assert_eq!(handle(&m, "POST", RESERVOIR_PATH, None, b"{").status, 400);
        assert_eq!(
            handle(&m, "POST", EMBED_TERMS_PATH, Some("99"), br#"{"terms":["a"]}"#).status,
            426
        );
        assert_eq!(
            handle(&m, "POST", EMBED_TERMS_PATH, None, br#"{"terms":[""]}"#).status,
            400
        );
        let long = format!(
            r#"{{"prompt_text":"{}","input_vectors":[],"return_last_k":1}}"#,
            "a ".repeat(2000)
        );
        let r = handle(&m, "POST", RESERVOIR_PATH, Some("1"), long.as_bytes());
        assert_eq!(r.status, 413);
        assert_eq!(
            decode_error(r.status, &r.body),
            ServiceError::Capacity {
                positions: 2000,
                max_positions: 1024
            }
        );
    }

    #[test]
    fn error_round_trip() {
        for e in [
            ServiceError::Argument("bad".into()),
            ServiceError::Capacity {
                positions: 9,
                max_positions: 4,
            },
            ServiceError::Compatibility {
                server: 7,
                client: PROTOCOL_VERSION,
            },
            ServiceError::Server {
                status: 503,
                message: "busy".into(),
            },
        ] {
            let r = error_reply(&e);
            assert_eq!(decode_error(r.status, &r.body), e);
        }
    }
}
