//! Flat `key=value` config text shared by the schema map, model, scenario,
//! and generator configs.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {line}: expected key=value, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("unknown key {key:?}")]
    UnknownKey { key: String },
    #[error("key {key:?}: invalid value {value:?}: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

/// Parse `key=value` lines. Blank lines and `#` comments are skipped;
/// whitespace around keys and values is trimmed. Duplicate keys are an error.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, KvError> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(KvError::Malformed {
                line: idx + 1,
                text: line.to_string(),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(KvError::Malformed {
                line: idx + 1,
                text: line.to_string(),
            });
        }
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(KvError::Duplicate { line: idx + 1, key });
        }
        pairs.push((key, value));
    }
    Ok(pairs)
}

pub fn bad_value(key: &str, value: &str, reason: impl Into<String>) -> KvError {
    KvError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}
