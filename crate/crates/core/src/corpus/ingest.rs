use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::Serialize;

use super::{Corpus, CorpusError, Message, Participant, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SourceFormat {
    Csv,
    Jsonl,
}

impl FromStr for SourceFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "ndjson" => Ok(Self::Jsonl),
            other => Err(CorpusError::Schema(format!("unknown format `{other}`"))),
        }
    }
}

/// Maps source field names onto message fields.
///
/// Parsed from `sender=<col>,receiver=<col>,time=<col>[,content=<col>][,id=<col>][,channel=<col>]`.
/// Unmapped source fields end up in [`Message::meta`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    pub sender: String,
    pub receiver: String,
    pub time: String,
    pub content: Option<String>,
    pub id: Option<String>,
    pub channel: Option<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            sender: "sender".into(),
            receiver: "receiver".into(),
            time: "time".into(),
            content: Some("content".into()),
            id: None,
            channel: None,
        }
    }
}

/// The mapping in the form [`FromStr`] reads back.
impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sender={},receiver={},time={}", self.sender, self.receiver, self.time)?;
        for (key, col) in [("content", &self.content), ("id", &self.id), ("channel", &self.channel)] {
            if let Some(col) = col {
                write!(f, ",{key}={col}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Schema {
    type Err = CorpusError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut fields: BTreeMap<&str, String> = BTreeMap::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, col) = part
                .split_once('=')
                .ok_or_else(|| CorpusError::Schema(format!("expected key=column, got `{part}`")))?;
            let key = key.trim();
            if !matches!(key, "sender" | "receiver" | "time" | "content" | "id" | "channel") {
                return Err(CorpusError::Schema(format!("unknown mapping key `{key}`")));
            }
            if fields.insert(key, col.trim().to_string()).is_some() {
                return Err(CorpusError::Schema(format!("`{key}` mapped twice")));
            }
        }
        let mut required = |k: &str| {
            fields
                .remove(k)
                .ok_or_else(|| CorpusError::Schema(format!("missing `{k}` mapping")))
        };
        Ok(Self {
            sender: required("sender")?,
            receiver: required("receiver")?,
            time: required("time")?,
            content: fields.remove("content"),
            id: fields.remove("id"),
            channel: fields.remove("channel"),
        })
    }
}

/// A source record that could not be turned into messages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug)]
pub struct IngestReport {
    pub corpus: Corpus,
    pub rejects: Vec<Reject>,
}

/// One source record after field extraction, before validation.
struct RawRecord {
    line: u64,
    fields: BTreeMap<String, FieldValue>,
}

enum FieldValue {
    Text(String),
    List(Vec<String>),
}

impl FieldValue {
    fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s.as_str()),
            FieldValue::List(_) => None,
        }
    }
}

/// Reads a record stream into a corpus.
///
/// A record with `k` recipients becomes `k` messages sharing the
/// `meta["group"]` key. Bad records are skipped and reported; ingestion only
/// fails outright on I/O or framing errors.
pub fn ingest<R: Read>(
    source: R,
    format: SourceFormat,
    schema: &Schema,
) -> Result<IngestReport, CorpusError> {
    let records = match format {
        SourceFormat::Csv => read_csv(source)?,
        SourceFormat::Jsonl => read_jsonl(source)?,
    };

    let mut rejects = Vec::new();
    let mut participants: BTreeSet<String> = BTreeSet::new();
    let mut messages = Vec::with_capacity(records.len());
    let mut seen_ids: HashSet<String> = HashSet::with_capacity(records.len());

    for record in records {
        match convert(&record, schema) {
            Ok(batch) => {
                if let Some(dup) = batch.iter().find(|m| seen_ids.contains(&m.id)) {
                    rejects.push(Reject {
                        line: record.line,
                        reason: format!("duplicate message id `{}`", dup.id),
                    });
                    continue;
                }
                for m in batch {
                    if !participants.contains(&m.sender) {
                        participants.insert(m.sender.clone());
                    }
                    if !participants.contains(&m.receiver) {
                        participants.insert(m.receiver.clone());
                    }
                    seen_ids.insert(m.id.clone());
                    messages.push(m);
                }
            }
            Err(reason) => rejects.push(Reject {
                line: record.line,
                reason,
            }),
        }
    }

    let participants = participants.into_iter().map(Participant::new).collect();
    Ok(IngestReport {
        corpus: Corpus::new(participants, messages)?,
        rejects,
    })
}

fn convert(record: &RawRecord, schema: &Schema) -> Result<Vec<Message>, String> {
    let text = |col: &str| record.fields.get(col).and_then(FieldValue::as_text);

    let sender = text(&schema.sender)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("missing sender (`{}`)", schema.sender))?
        .to_string();

    let mut recipients: Vec<String> = Vec::new();
    match record.fields.get(&schema.receiver) {
        Some(FieldValue::Text(s)) => recipients.extend(split_recipients(s)),
        Some(FieldValue::List(items)) => {
            recipients.extend(items.iter().flat_map(|s| split_recipients(s)))
        }
        None => {}
    }
    let mut uniq = HashSet::new();
    recipients.retain(|r| uniq.insert(r.clone()));
    if recipients.is_empty() {
        return Err(format!("missing recipient (`{}`)", schema.receiver));
    }

    let raw_time = text(&schema.time)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("missing timestamp (`{}`)", schema.time))?;
    let timestamp =
        parse_timestamp(raw_time).ok_or_else(|| format!("unparseable timestamp `{raw_time}`"))?;

    let content = schema
        .content
        .as_deref()
        .and_then(text)
        .unwrap_or_default()
        .to_string();
    let channel = schema
        .channel
        .as_deref()
        .and_then(text)
        .filter(|s| !s.is_empty())
        .unwrap_or("email")
        .to_string();
    let base_id = schema
        .id
        .as_deref()
        .and_then(text)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| format!("r{}", record.line));

    let mapped: HashSet<&str> = [
        Some(schema.sender.as_str()),
        Some(schema.receiver.as_str()),
        Some(schema.time.as_str()),
        schema.content.as_deref(),
        schema.id.as_deref(),
        schema.channel.as_deref(),
    ]
    .into_iter()
    .flatten()
    .collect();
    let mut meta: BTreeMap<String, String> = record
        .fields
        .iter()
        .filter(|(k, _)| !mapped.contains(k.as_str()))
        .filter_map(|(k, v)| match v {
            FieldValue::Text(s) => Some((k.clone(), s.clone())),
            FieldValue::List(items) => Some((k.clone(), items.join(";"))),
        })
        .collect();
    meta.insert("group".into(), base_id.clone());

    let fan_out = recipients.len() > 1;
    Ok(recipients
        .into_iter()
        .enumerate()
        .map(|(j, receiver)| Message {
            id: if fan_out {
                format!("{base_id}/{j}")
            } else {
                base_id.clone()
            },
            sender: sender.clone(),
            receiver,
            timestamp,
            content: content.clone(),
            channel: channel.clone(),
            meta: meta.clone(),
        })
        .collect())
}

fn split_recipients(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split([';', ','])
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(str::to_string)
}

/// Accepts integer or fractional epoch seconds, RFC 3339, RFC 2822, and
/// `YYYY-MM-DD[ HH:MM:SS]` (taken as UTC). Sub-second precision is truncated.
pub(crate) fn parse_timestamp(raw: &str) -> Option<Timestamp> {
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(secs) = raw.parse::<f64>() {
        return secs.is_finite().then(|| secs.trunc() as i64);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    if let Ok(dt) = DateTime::parse_from_rfc2822(raw) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

fn read_csv<R: Read>(source: R) -> Result<Vec<RawRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let fields = headers
            .iter()
            .zip(row.iter())
            .map(|(h, v)| (h.to_string(), FieldValue::Text(v.to_string())))
            .collect();
        out.push(RawRecord { line, fields });
    }
    Ok(out)
}

fn read_jsonl<R: Read>(source: R) -> Result<Vec<RawRecord>, CorpusError> {
    let mut out = Vec::new();
    for (n, line) in BufReader::new(source).lines().enumerate() {
        let line_no = n as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(map)) => map
                .into_iter()
                .filter_map(|(k, v)| json_field(v).map(|v| (k, v)))
                .collect(),
            // malformed lines become empty records so they are rejected with
            // their line number like any other bad record
            _ => BTreeMap::new(),
        };
        out.push(RawRecord {
            line: line_no,
            fields,
        });
    }
    Ok(out)
}

fn json_field(v: serde_json::Value) -> Option<FieldValue> {
    use serde_json::Value;
    match v {
        Value::String(s) => Some(FieldValue::Text(s)),
        Value::Number(n) => Some(FieldValue::Text(n.to_string())),
        Value::Bool(b) => Some(FieldValue::Text(b.to_string())),
        Value::Array(items) => Some(FieldValue::List(
            items
                .into_iter()
                .filter_map(|i| match i {
                    Value::String(s) => Some(s),
                    Value::Number(n) => Some(n.to_string()),
                    _ => None,
                })
                .collect(),
        )),
        Value::Null | Value::Object(_) => None,
    }
}
