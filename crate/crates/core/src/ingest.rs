//! Flow-metadata ingestion: parse CSV flow logs into validated records,
//! de-duplicate, and slice by date range.

use std::collections::HashMap;
use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::kv::{self, KvError};

/// Canonical column names, in canonical file order.
pub const CANONICAL_COLUMNS: [&str; 10] = [
    "start_time",
    "duration_s",
    "src_ip",
    "dst_ip",
    "protocol",
    "src_port",
    "dst_port",
    "bytes_src",
    "bytes_dst",
    "tag",
];

/// Ground-truth tag carried by each flow record and each dyad-hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "Normal",
            Label::Attack => "Attack",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        if s.eq_ignore_ascii_case("normal") {
            Some(Label::Normal)
        } else if s.eq_ignore_ascii_case("attack") {
            Some(Label::Attack)
        } else {
            None
        }
    }
}

/// One flow-log row. Ports are 0 for portless protocols; the protocol name is
/// normalized to upper case at parse time.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlowRecord {
    pub start_time: i64,
    pub duration_s: u64,
    pub ip_a: String,
    pub ip_b: String,
    pub protocol: String,
    pub port_a: u16,
    pub port_b: u16,
    pub bytes_src: u64,
    pub bytes_dst: u64,
    pub tag: Label,
}

impl FlowRecord {
    pub fn total_bytes(&self) -> u64 {
        self.bytes_src.saturating_add(self.bytes_dst)
    }
}

/// Half-open `[start, end)` interval of epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: i64,
    pub end: i64,
}

impl DateRange {
    pub fn new(start: i64, end: i64) -> Result<Self, IngestError> {
        if start >= end {
            return Err(IngestError::InvalidRange { start, end });
        }
        Ok(DateRange { start, end })
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }
}

/// Maps canonical column names to source column names and foreign protocol
/// spellings to normalized ones. Parsed from `key=value` text where plain
/// keys are canonical column names and `protocol.<source>=<normalized>`
/// lines add protocol aliases. `tz_offset_secs` shifts naive timestamps.
#[derive(Debug, Clone, Default)]
pub struct SchemaMap {
    columns: HashMap<String, String>,
    protocol_aliases: HashMap<String, String>,
    pub tz_offset_secs: i64,
}

impl SchemaMap {
    pub fn parse(text: &str) -> Result<Self, IngestError> {
        let mut schema = SchemaMap::default();
        for (key, value) in kv::parse_kv(text)? {
            if let Some(source) = key.strip_prefix("protocol.") {
                schema
                    .protocol_aliases
                    .insert(source.to_ascii_lowercase(), value.to_ascii_uppercase());
            } else if key == "tz_offset_secs" {
                schema.tz_offset_secs = value
                    .parse()
                    .map_err(|_| kv::bad_value(&key, &value, "expected integer seconds"))?;
            } else if CANONICAL_COLUMNS.contains(&key.as_str()) {
                schema.columns.insert(key, value);
            } else {
                return Err(KvError::UnknownKey { key }.into());
            }
        }
        Ok(schema)
    }

    /// Source column name for a canonical column (identity when unmapped).
    fn source_column<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.columns
            .get(canonical)
            .map(String::as_str)
            .unwrap_or(canonical)
    }

    fn normalize_protocol(&self, raw: &str) -> String {
        let trimmed = raw.trim();
        match self.protocol_aliases.get(&trimmed.to_ascii_lowercase()) {
            Some(mapped) => mapped.clone(),
            None => trimmed.to_ascii_uppercase(),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("csv read: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema: {0}")]
    Schema(#[from] KvError),
    #[error("missing required column {column:?}")]
    MissingColumn { column: String },
    #[error("line {line}: field {field:?}: {reason} (got {value:?})")]
    BadField {
        line: usize,
        field: String,
        value: String,
        reason: String,
    },
    #[error("invalid date range: start {start} >= end {end}")]
    InvalidRange { start: i64, end: i64 },
    #[error("write: {0}")]
    Io(#[from] std::io::Error),
}

fn bad_field(
    line: usize,
    field: &str,
    value: &str,
    reason: impl Into<String>,
) -> IngestError {
    IngestError::BadField {
        line,
        field: field.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

/// Accepts integer epoch seconds or ISO-8601. Naive timestamps (no zone) are
/// interpreted at the schema's fixed offset; zoned ones are converted.
fn parse_timestamp(value: &str, tz_offset_secs: i64) -> Option<i64> {
    let v = value.trim();
    if !v.is_empty()
        && v.chars()
            .all(|c| c.is_ascii_digit() || c == '-' || c == '+')
    {
        return v.parse::<i64>().ok();
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(v) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y/%m/%d %H:%M:%S",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(v, fmt) {
            return Some(naive.and_utc().timestamp() - tz_offset_secs);
        }
    }
    None
}

/// Parse flow CSV from `input` into records, in file order. The header row
/// must name every required column (after schema mapping). Empty port fields
/// become 0; any other unparseable numeric field is an error naming the line
/// and field.
pub fn parse_flow_csv<R: Read>(
    input: R,
    schema: &SchemaMap,
) -> Result<Vec<FlowRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    let mut col_index: HashMap<&str, usize> = HashMap::new();
    for canonical in CANONICAL_COLUMNS {
        let source = schema.source_column(canonical);
        let idx = headers
            .iter()
            .position(|h| h == source)
            .ok_or_else(|| IngestError::MissingColumn {
                column: source.to_string(),
            })?;
        col_index.insert(canonical, idx);
    }

    let field = |row: &csv::StringRecord, canonical: &str| -> String {
        row.get(col_index[canonical]).unwrap_or("").to_string()
    };

    let mut records = Vec::new();
    for (row_idx, row) in reader.records().enumerate() {
        let row = row?;
        let line = row_idx + 2; // header is line 1

        let start_raw = field(&row, "start_time");
        let start_time = parse_timestamp(&start_raw, schema.tz_offset_secs)
            .ok_or_else(|| bad_field(line, "start_time", &start_raw, "unparseable timestamp"))?;

        let parse_u64 = |name: &str, raw: &str| -> Result<u64, IngestError> {
            raw.parse::<u64>()
                .map_err(|_| bad_field(line, name, raw, "expected non-negative integer"))
        };
        let parse_port = |name: &str, raw: &str| -> Result<u16, IngestError> {
            if raw.is_empty() {
                return Ok(0);
            }
            raw.parse::<u16>()
                .map_err(|_| bad_field(line, name, raw, "expected port in 0..=65535"))
        };

        let duration_s = parse_u64("duration_s", &field(&row, "duration_s"))?;
        let protocol = schema.normalize_protocol(&field(&row, "protocol"));
        if protocol.is_empty() {
            return Err(bad_field(line, "protocol", "", "protocol must be non-empty"));
        }
        let port_a = parse_port("src_port", &field(&row, "src_port"))?;
        let port_b = parse_port("dst_port", &field(&row, "dst_port"))?;
        let bytes_src = parse_u64("bytes_src", &field(&row, "bytes_src"))?;
        let bytes_dst = parse_u64("bytes_dst", &field(&row, "bytes_dst"))?;
        let tag_raw = field(&row, "tag");
        let tag = Label::parse(&tag_raw)
            .ok_or_else(|| bad_field(line, "tag", &tag_raw, "expected Normal or Attack"))?;

        records.push(FlowRecord {
            start_time,
            duration_s,
            ip_a: field(&row, "src_ip"),
            ip_b: field(&row, "dst_ip"),
            protocol,
            port_a,
            port_b,
            bytes_src,
            bytes_dst,
            tag,
        });
    }
    Ok(records)
}

/// Write records as canonical flow CSV (integer epoch timestamps).
pub fn write_flow_csv<W: Write>(records: &[FlowRecord], mut out: W) -> Result<(), IngestError> {
    writeln!(out, "{}", CANONICAL_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.start_time,
            r.duration_s,
            r.ip_a,
            r.ip_b,
            r.protocol,
            r.port_a,
            r.port_b,
            r.bytes_src,
            r.bytes_dst,
            r.tag.as_str()
        )?;
    }
    Ok(())
}

/// Remove exact duplicates (all fields equal), keeping the first occurrence
/// and the original relative order.
pub fn deduplicate(records: Vec<FlowRecord>) -> Vec<FlowRecord> {
    let mut seen: HashSet<FlowRecord> = HashSet::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if seen.insert(r.clone()) {
            out.push(r);
        }
    }
    out
}

/// Keep records with `range.start <= start_time < range.end`, order preserved.
pub fn filter_date_range(records: &[FlowRecord], range: DateRange) -> Vec<FlowRecord> {
    records
        .iter()
        .filter(|r| range.contains(r.start_time))
        .cloned()
        .collect()
}
