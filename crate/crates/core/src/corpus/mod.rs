//! Communication corpus modelled as a multidigraph: participants are vertices,
//! every message is a directed edge carrying its own content and metadata.
//!
//! A [`Corpus`] is immutable once built. Messages are kept in a total order by
//! `(timestamp, id)` and indexed by ordered participant pair so that per-pair
//! traffic can be sliced by time without scanning the whole corpus.

mod ingest;
mod store;

pub use ingest::{ingest, IngestReport, Reject, Schema, SourceFormat};
pub use store::{CORPUS_FORMAT, CORPUS_VERSION};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// UTC epoch seconds.
pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown participant `{0}`")]
    UnknownParticipant(String),
    #[error("unknown message `{0}`")]
    UnknownMessage(String),
    #[error("participant id must be nonempty")]
    EmptyParticipantId,
    #[error("duplicate participant id `{0}`")]
    DuplicateParticipant(String),
    #[error("duplicate message id `{0}`")]
    DuplicateMessage(String),
    #[error("message `{message}` references unknown participant `{participant}`")]
    DanglingEndpoint { message: String, participant: String },
    #[error("invalid schema mapping: {0}")]
    Schema(String),
    #[error("unsupported corpus file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Closed time interval `[start, end]` in epoch seconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeRange {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.start <= t && t <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Participant {
    pub id: String,
    pub display_name: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl Participant {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        Self {
            display_name: id.clone(),
            id,
            attributes: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub sender: String,
    pub receiver: String,
    pub timestamp: Timestamp,
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub channel: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Message {
    pub fn new(
        id: impl Into<String>,
        sender: impl Into<String>,
        receiver: impl Into<String>,
        timestamp: Timestamp,
        content: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            sender: sender.into(),
            receiver: receiver.into(),
            timestamp,
            content: content.into(),
            channel: "email".to_string(),
            meta: BTreeMap::new(),
        }
    }
}

/// Position of a message in corpus order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MessageIdx(pub u32);

/// Position of a participant in id order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ParticipantIdx(pub u32);

impl MessageIdx {
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

impl ParticipantIdx {
    pub fn get(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug)]
pub struct Corpus {
    participants: Vec<Participant>,
    participant_lookup: HashMap<String, ParticipantIdx>,
    messages: Vec<Message>,
    message_lookup: HashMap<String, MessageIdx>,
    endpoints: Vec<(ParticipantIdx, ParticipantIdx)>,
    /// Copy of each message's timestamp, for scans that need nothing else.
    timestamps: Vec<Timestamp>,
    pair_index: HashMap<(ParticipantIdx, ParticipantIdx), Vec<MessageIdx>>,
    time_extent: Option<TimeRange>,
}

impl Corpus {
    /// Builds a corpus, sorting participants by id and messages by
    /// `(timestamp, id)`.
    pub fn new(
        mut participants: Vec<Participant>,
        mut messages: Vec<Message>,
    ) -> Result<Self, CorpusError> {
        participants.sort_by(|a, b| a.id.cmp(&b.id));
        let mut participant_lookup = HashMap::with_capacity(participants.len());
        for (i, p) in participants.iter().enumerate() {
            if p.id.is_empty() {
                return Err(CorpusError::EmptyParticipantId);
            }
            if participant_lookup
                .insert(p.id.clone(), ParticipantIdx(i as u32))
                .is_some()
            {
                return Err(CorpusError::DuplicateParticipant(p.id.clone()));
            }
        }

        messages.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        let mut message_lookup = HashMap::with_capacity(messages.len());
        let mut endpoints = Vec::with_capacity(messages.len());
        let mut pair_index: HashMap<_, Vec<MessageIdx>> = HashMap::new();
        for (i, m) in messages.iter().enumerate() {
            let idx = MessageIdx(i as u32);
            if message_lookup.insert(m.id.clone(), idx).is_some() {
                return Err(CorpusError::DuplicateMessage(m.id.clone()));
            }
            let resolve = |pid: &str| {
                participant_lookup
                    .get(pid)
                    .copied()
                    .ok_or_else(|| CorpusError::DanglingEndpoint {
                        message: m.id.clone(),
                        participant: pid.to_string(),
                    })
            };
            let pair = (resolve(&m.sender)?, resolve(&m.receiver)?);
            endpoints.push(pair);
            pair_index.entry(pair).or_default().push(idx);
        }

        let timestamps = messages.iter().map(|m| m.timestamp).collect();
        let time_extent = match (messages.first(), messages.last()) {
            (Some(first), Some(last)) => Some(TimeRange::new(first.timestamp, last.timestamp)),
            _ => None,
        };

        Ok(Self {
            participants,
            participant_lookup,
            messages,
            message_lookup,
            endpoints,
            timestamps,
            pair_index,
            time_extent,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::new(), Vec::new()).expect("empty corpus is valid")
    }

    pub fn participants(&self) -> &[Participant] {
        &self.participants
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn participant_count(&self) -> usize {
        self.participants.len()
    }

    pub fn message_count(&self) -> usize {
        self.messages.len()
    }

    pub fn participant(&self, idx: ParticipantIdx) -> &Participant {
        &self.participants[idx.get()]
    }

    pub fn message(&self, idx: MessageIdx) -> &Message {
        &self.messages[idx.get()]
    }

    pub fn participant_idx(&self, id: &str) -> Result<ParticipantIdx, CorpusError> {
        self.participant_lookup
            .get(id)
            .copied()
            .ok_or_else(|| CorpusError::UnknownParticipant(id.to_string()))
    }

    pub fn message_idx(&self, id: &str) -> Result<MessageIdx, CorpusError> {
        self.message_lookup
            .get(id)
            .copied()
            .ok_or_else(|| CorpusError::UnknownMessage(id.to_string()))
    }

    /// `(sender, receiver)` of a message.
    pub fn endpoints(&self, idx: MessageIdx) -> (ParticipantIdx, ParticipantIdx) {
        self.endpoints[idx.get()]
    }

    pub fn timestamp(&self, idx: MessageIdx) -> Timestamp {
        self.timestamps[idx.get()]
    }

    /// Undefined (`None`) only for an empty corpus.
    pub fn time_extent(&self) -> Option<TimeRange> {
        self.time_extent
    }

    /// Messages from `sender` to `receiver` in corpus order.
    pub fn pair_messages(&self, sender: ParticipantIdx, receiver: ParticipantIdx) -> &[MessageIdx] {
        self.pair_index
            .get(&(sender, receiver))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every nonempty directed pair bucket, in unspecified order.
    pub fn pair_buckets(
        &self,
    ) -> impl Iterator<Item = ((ParticipantIdx, ParticipantIdx), &[MessageIdx])> {
        self.pair_index.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Messages sent by `a` to `b` whose timestamp lies in `range` (inclusive),
    /// in corpus order.
    pub fn messages_between(
        &self,
        a: &str,
        b: &str,
        range: Option<TimeRange>,
    ) -> Result<Vec<&Message>, CorpusError> {
        let a = self.participant_idx(a)?;
        let b = self.participant_idx(b)?;
        Ok(self
            .slice_pair(a, b, range)
            .iter()
            .map(|&i| self.message(i))
            .collect())
    }

    /// Time-restricted slice of a pair bucket. Buckets are sorted by
    /// timestamp, so both ends are found by binary search.
    pub fn slice_pair(
        &self,
        sender: ParticipantIdx,
        receiver: ParticipantIdx,
        range: Option<TimeRange>,
    ) -> &[MessageIdx] {
        let bucket = self.pair_messages(sender, receiver);
        let Some(range) = range else {
            return bucket;
        };
        if range.is_empty() {
            return &[];
        }
        let lo = bucket.partition_point(|&i| self.timestamp(i) < range.start);
        let hi = bucket.partition_point(|&i| self.timestamp(i) <= range.end);
        &bucket[lo..hi.max(lo)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Corpus {
        let participants = ["a", "b", "c"].into_iter().map(Participant::new).collect();
        let messages = vec![
            Message::new("m3", "a", "b", 30, "third"),
            Message::new("m1", "a", "b", 10, "first"),
            Message::new("m2", "b", "a", 20, "second"),
            Message::new("m0", "a", "b", 10, "tie"),
            Message::new("self", "c", "c", 5, ""),
        ];
        Corpus::new(participants, messages).unwrap()
    }

    #[test]
    fn messages_sorted_with_id_tiebreak() {
        let c = small();
        let ids: Vec<_> = c.messages().iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["self", "m0", "m1", "m2", "m3"]);
        assert_eq!(c.time_extent(), Some(TimeRange::new(5, 30)));
    }

    #[test]
    fn pair_index_covers_every_message_once() {
        let c = small();
        let total: usize = c.pair_buckets().map(|(_, b)| b.len()).sum();
        assert_eq!(total, c.message_count());
    }

    #[test]
    fn between_respects_inclusive_range() {
        let c = small();
        let got: Vec<_> = c
            .messages_between("a", "b", Some(TimeRange::new(10, 29)))
            .unwrap()
            .into_iter()
            .map(|m| m.id.as_str())
            .collect();
        assert_eq!(got, ["m0", "m1"]);
        assert!(c.messages_between("b", "c", None).unwrap().is_empty());
        let full = c.messages_between("a", "b", c.time_extent()).unwrap();
        assert_eq!(full.len(), c.pair_messages(ParticipantIdx(0), ParticipantIdx(1)).len());
    }

    #[test]
    fn unknown_participant_is_named() {
        let err = small().messages_between("a", "zed", None).unwrap_err();
        assert!(err.to_string().contains("zed"));
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let err = Corpus::new(
            vec![Participant::new("a")],
            vec![Message::new("m", "a", "ghost", 0, "")],
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::DanglingEndpoint { .. }));
    }

    #[test]
    fn empty_corpus_has_no_extent() {
        let c = Corpus::empty();
        assert_eq!(c.participant_count(), 0);
        assert_eq!(c.time_extent(), None);
    }
}
