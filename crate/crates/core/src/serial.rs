//! Versioned JSON container used to cache trees, attack models and plans
//! between pipeline stages.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SerialError {
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported format_version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("document holds a `{found}`, expected `{expected}`")]
    Kind { found: String, expected: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<P> {
    format_version: u32,
    kind: String,
    payload: P,
}

pub fn to_json<P: Serialize>(kind: &str, payload: &P) -> Result<String, SerialError> {
    Ok(serde_json::to_string_pretty(&Envelope {
        format_version: FORMAT_VERSION,
        kind: kind.to_string(),
        payload,
    })?)
}

pub fn from_json<P: DeserializeOwned>(kind: &str, text: &str) -> Result<P, SerialError> {
    let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
    if env.format_version != FORMAT_VERSION {
        return Err(SerialError::Version { found: env.format_version });
    }
    if env.kind != kind {
        return Err(SerialError::Kind { found: env.kind, expected: kind.to_string() });
    }
    Ok(serde_json::from_value(env.payload)?)
}
