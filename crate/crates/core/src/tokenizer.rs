//! Flow-to-token mapping under the two feature schemes, plus the
//! token-to-index vocabulary with reserved PAD and UNK slots.

use std::collections::HashMap;
use std::io::Write;

use crate::ingest::FlowRecord;

/// Reserved index for absent context positions.
pub const PAD: u32 = 0;
/// Reserved index for tokens unseen in the training vocabulary.
pub const UNK: u32 = 1;

pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    ProtoByte,
    ServicePort,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::ProtoByte => "proto_byte",
            SchemeKind::ServicePort => "service_port",
        }
    }

    pub fn parse(s: &str) -> Option<SchemeKind> {
        match s {
            "proto_byte" => Some(SchemeKind::ProtoByte),
            "service_port" => Some(SchemeKind::ServicePort),
            _ => None,
        }
    }
}

/// Feature scheme selection. `high_port_threshold` only affects the
/// service-port scheme: ports strictly above it collapse to `HIGH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureScheme {
    pub kind: SchemeKind,
    pub high_port_threshold: u16,
}

pub const DEFAULT_HIGH_PORT_THRESHOLD: u16 = 10_000;

impl FeatureScheme {
    pub fn proto_byte() -> Self {
        FeatureScheme {
            kind: SchemeKind::ProtoByte,
            high_port_threshold: DEFAULT_HIGH_PORT_THRESHOLD,
        }
    }

    pub fn service_port() -> Self {
        FeatureScheme {
            kind: SchemeKind::ServicePort,
            high_port_threshold: DEFAULT_HIGH_PORT_THRESHOLD,
        }
    }

    pub fn token(&self, record: &FlowRecord) -> String {
        match self.kind {
            SchemeKind::ProtoByte => proto_byte_token(record),
            SchemeKind::ServicePort => service_port_token(record, self),
        }
    }
}

/// `PROTO:BB` where BB is the floor-log2 bucket of the flow's total bytes,
/// zero-padded to two digits. Zero-byte flows clamp to bucket 00.
pub fn proto_byte_token(record: &FlowRecord) -> String {
    let bytes = record.total_bytes().max(1);
    format!("{}:{:02}", record.protocol, bytes.ilog2())
}

/// The lower of the flow's two ports, or `HIGH` when both ports exceed the
/// scheme threshold.
pub fn service_port_token(record: &FlowRecord, scheme: &FeatureScheme) -> String {
    let p = record.port_a.min(record.port_b);
    if p > scheme.high_port_threshold {
        "HIGH".to_string()
    } else {
        p.to_string()
    }
}

/// Bijection between data tokens and indices `2..V`. Index 0 is PAD, index 1
/// is UNK; no data token ever maps to either.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index_of: HashMap<String, u32>,
}

impl Vocabulary {
    /// Assign indices to distinct tokens in first-appearance order.
    pub fn build<I, S>(tokens: I) -> Vocabulary
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Vocabulary {
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index_of: HashMap::new(),
        };
        for token in tokens {
            let token = token.as_ref();
            if !vocab.index_of.contains_key(token) {
                let index = vocab.tokens.len() as u32;
                vocab.tokens.push(token.to_string());
                vocab.index_of.insert(token.to_string(), index);
            }
        }
        vocab
    }

    /// Rebuild from the ordered data-token list of a saved model.
    pub fn from_data_tokens(data_tokens: Vec<String>) -> Vocabulary {
        Vocabulary::build(data_tokens)
    }

    /// Total index count V, reserved slots included.
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Index for a token; UNK for anything outside the vocabulary.
    pub fn encode(&self, token: &str) -> u32 {
        self.index_of.get(token).copied().unwrap_or(UNK)
    }

    /// Token string at an index (PAD/UNK sentinels included).
    pub fn token_at(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    /// Data tokens in index order (indices 2..V).
    pub fn data_tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    /// Two-column `index,token` CSV for inspection.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,token")?;
        for (i, token) in self.tokens.iter().enumerate() {
            writeln!(out, "{i},{token}")?;
        }
        Ok(())
    }
}
