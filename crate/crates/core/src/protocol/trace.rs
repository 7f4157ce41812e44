use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// SHA-256 digest of a message's content.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MessageId([u8; 32]);

impl MessageId {
    pub fn of(content: &[u8]) -> Self {
        MessageId(Sha256::digest(content).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MessageId({})", &hex::encode(self.0)[..12])
    }
}

impl FromStr for MessageId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Parse(format!("message id {s:?}: {e}")))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Parse(format!("message id {s:?} is not 32 bytes")))?;
        Ok(MessageId(arr))
    }
}

impl Serialize for MessageId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MessageId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Wire messages. The token carries the step but no hop count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMessage {
    Spread(MessageId),
    Token { sender: usize, t: usize, id: MessageId },
    Flood(MessageId),
}

impl ProtocolMessage {
    pub fn id(&self) -> MessageId {
        match *self {
            ProtocolMessage::Spread(id) | ProtocolMessage::Flood(id) => id,
            ProtocolMessage::Token { id, .. } => id,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            ProtocolMessage::Spread(_) => Variant::Spread,
            ProtocolMessage::Token { .. } => Variant::Token,
            ProtocolMessage::Flood(_) => Variant::Flood,
        }
    }

    pub fn token_step(&self) -> Option<usize> {
        match *self {
            ProtocolMessage::Token { t, .. } => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Spread,
    Token,
    Flood,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Send,
    Receive,
    TokenPass,
    Keep,
    FloodStart,
    Timeout,
    Retransmit,
    /// A holder had nobody to pass the token to.
    Degenerate,
}

impl EventKind {
    const ALL: [(EventKind, &'static str); 8] = [
        (EventKind::Send, "send"),
        (EventKind::Receive, "receive"),
        (EventKind::TokenPass, "token-pass"),
        (EventKind::Keep, "keep"),
        (EventKind::FloodStart, "flood-start"),
        (EventKind::Timeout, "timeout"),
        (EventKind::Retransmit, "retransmit"),
        (EventKind::Degenerate, "degenerate"),
    ];

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(k, _)| *k == self).map(|(_, s)| *s).unwrap_or("?")
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|(_, name)| *name == s)
            .map(|(k, _)| *k)
            .ok_or_else(|| Error::Parse(format!("unknown event kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub actor: usize,
    pub kind: EventKind,
    pub message: ProtocolMessage,
    pub peer: Option<usize>,
}

/// Message column: `spread:<id>`, `token/<t>/<sender>:<id>` or `flood:<id>`.
fn message_label(m: &ProtocolMessage) -> String {
    match m {
        ProtocolMessage::Spread(id) => format!("spread:{id}"),
        ProtocolMessage::Token { sender, t, id } => format!("token/{t}/{sender}:{id}"),
        ProtocolMessage::Flood(id) => format!("flood:{id}"),
    }
}

fn parse_message(s: &str) -> Result<ProtocolMessage> {
    let bad = || Error::Parse(format!("malformed message column {s:?}"));
    let (head, id) = s.split_once(':').ok_or_else(bad)?;
    let id: MessageId = id.parse()?;
    match head {
        "spread" => Ok(ProtocolMessage::Spread(id)),
        "flood" => Ok(ProtocolMessage::Flood(id)),
        _ => {
            let mut parts = head.split('/');
            if parts.next() != Some("token") {
                return Err(bad());
            }
            let t = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            let sender = parts.next().and_then(|x| x.parse().ok()).ok_or_else(bad)?;
            Ok(ProtocolMessage::Token { sender, t, id })
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    time: String,
    actor: usize,
    kind: String,
    message: String,
    peer: Option<usize>,
}

/// Time-ordered log of everything that happened during a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
}

impl EventTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TraceRecord> {
        self.records.iter()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.records.iter().filter(|r| r.kind == kind).count()
    }

    /// CSV with header `time,actor,kind,message,peer`; times in seconds with nanosecond precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(CsvRow {
                time: format!("{:.9}", r.time),
                actor: r.actor,
                kind: r.kind.to_string(),
                message: message_label(&r.message),
                peer: r.peer,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let records = rdr
            .deserialize::<CsvRow>()
            .map(|row| {
                let row = row?;
                Ok(TraceRecord {
                    time: row
                        .time
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad time {:?}", row.time)))?,
                    actor: row.actor,
                    kind: row.kind.parse()?,
                    message: parse_message(&row.message)?,
                    peer: row.peer,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EventTrace { records })
    }
}
