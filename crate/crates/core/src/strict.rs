//! Strict JSON decoding: unknown keys anywhere in a document are collected and
//! reported together instead of being silently dropped.

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{HawkesError, Result};

/// Decode `value` into `T`, failing with every unknown key path (prefixed by
/// `context`) when the document carries keys `T` does not know about.
pub fn from_value<T: DeserializeOwned>(value: &Value, context: &str) -> Result<T> {
    let mut unknown = Vec::new();
    let decoded: std::result::Result<T, _> = serde_ignored::deserialize(value, |path| {
        let p = path.to_string();
        unknown.push(if context.is_empty() {
            p
        } else if p == "?" {
            context.to_string()
        } else {
            format!("{context}.{p}")
        });
    });
    let decoded = decoded.map_err(|e| {
        if context.is_empty() {
            HawkesError::Config(e.to_string())
        } else {
            HawkesError::Config(format!("{context}: {e}"))
        }
    })?;
    if unknown.is_empty() {
        Ok(decoded)
    } else {
        Err(HawkesError::UnknownKeys(unknown))
    }
}
