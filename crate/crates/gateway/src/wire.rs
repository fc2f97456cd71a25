//! Newline-delimited JSON messages.
//!
//! Every line is one [`WireMessage`]. Each side numbers its own messages with
//! a strictly increasing `seq`, so a receiver can spot gaps. Replies carry
//! `re`, the `seq` of the request they answer; feed pushes have no `re`.
//!
//! ```text
//! -> {"kind":"hello","seq":1,"payload":{"token":"ref-token"}}
//! <- {"kind":"ack","seq":1,"re":1,"payload":{"role":"referee"}}
//! -> {"kind":"open_match","seq":2,"payload":{"match_id":"M1"}}
//! <- {"kind":"ack","seq":2,"re":2,"payload":{"match_id":"M1","recovered":false,"events":0,"pending":0}}
//! -> {"kind":"event","seq":3,"payload":{"event_id":"M1-00000", ...}}
//! <- {"kind":"ack","seq":3,"re":3,"payload":{"event_id":"M1-00000","verdict":{...},"seq":null}}
//! -> {"kind":"override","seq":4,"payload":{"event_id":"M1-00000","action":"override","label":"no_point","reviewer":"jury-2"}}
//! <- {"kind":"verdict","seq":4,"re":4,"payload":{"match_id":"M1","decision":{...}}}
//! -> {"kind":"metrics","seq":5,"payload":{"match_id":null,"filter":{"event":"head_kick"}}}
//! <- {"kind":"error","seq":5,"re":5,"payload":{"code":"unknown_scope","message":"..."}}
//! ```

use std::io::{self, BufRead};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{ErrorBody, GatewayError, Result};
use crate::service::{MetricsFilter, ReviewAction, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Event,
    Verdict,
    ReviewItem,
    Override,
    Metrics,
    Ack,
    Error,
    // requests beyond the feed kinds
    Hello,
    OpenMatch,
    CloseMatch,
    Subscribe,
    ReviewQueue,
    AuditExport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub kind: Kind,
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub re: Option<u64>,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new<T: Serialize>(kind: Kind, seq: u64, payload: &T) -> Self {
        Self {
            kind,
            seq,
            re: None,
            payload: serde_json::to_value(payload).expect("wire payloads serialize"),
        }
    }

    pub fn reply_to(mut self, re: u64) -> Self {
        self.re = Some(re);
        self
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("wire messages serialize");
        s.push('\n');
        s
    }

    pub fn parse(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| GatewayError::BadRequest(e.to_string()))
    }

    pub fn payload_as<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_value(self.payload.clone()).map_err(|e| GatewayError::BadRequest(e.to_string()))
    }

    /// `Err` with the remote error when this is an error message.
    pub fn into_result(self) -> std::result::Result<Self, ErrorBody> {
        if self.kind == Kind::Error {
            Err(serde_json::from_value(self.payload).unwrap_or_else(|e| ErrorBody {
                code: "bad_request".into(),
                message: e.to_string(),
            }))
        } else {
            Ok(self)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hello {
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloAck {
    pub role: Option<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRef {
    pub match_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscribeRequest {
    /// `None` subscribes to every match.
    #[serde(default)]
    pub match_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRequest {
    #[serde(default)]
    pub match_id: Option<String>,
    pub event_id: String,
    #[serde(flatten)]
    pub action: ReviewAction,
    pub reviewer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsRequest {
    #[serde(default)]
    pub match_id: Option<String>,
    #[serde(default)]
    pub filter: MetricsFilter,
}

/// Reads one message; `Ok(None)` at end of stream. Blank lines are skipped.
pub fn read_message<R: BufRead>(r: &mut R) -> io::Result<Option<WireMessage>> {
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Ok(None);
        }
        if line.trim().is_empty() {
            continue;
        }
        return WireMessage::parse(&line)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()));
    }
}
