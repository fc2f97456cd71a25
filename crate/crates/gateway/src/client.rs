//! Blocking client for the NDJSON protocol.

use std::collections::VecDeque;
use std::io::{self, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use ringside_core::decision::audit::AuditExport;
use ringside_core::replay::EventSink;
use ringside_core::{Error as CoreError, ScoringEvent};

use crate::error::ErrorBody;
use crate::service::{Ack, FinalVerdict, MetricsFilter, MetricsSnapshot, OpenInfo, ReviewAction, ReviewItem};
use crate::wire::{
    read_message, Hello, HelloAck, Kind, MatchRef, MetricsRequest, OverrideRequest, SubscribeRequest, WireMessage,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("server error {}: {}", .0.code, .0.message)]
    Remote(ErrorBody),
    #[error("protocol: {0}")]
    Protocol(String),
}

impl ClientError {
    /// Remote error code, if the server answered with one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Remote(b) => Some(&b.code),
            _ => None,
        }
    }
}

pub type ClientResult<T> = std::result::Result<T, ClientError>;

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    seq: u64,
    last_in: u64,
    /// Feed messages that arrived while waiting for a reply.
    feed: VecDeque<WireMessage>,
}

impl Client {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> ClientResult<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            seq: 0,
            last_in: 0,
            feed: VecDeque::new(),
        })
    }

    fn recv(&mut self) -> ClientResult<WireMessage> {
        let msg = read_message(&mut self.reader)?
            .ok_or_else(|| ClientError::Protocol("connection closed".into()))?;
        if msg.seq <= self.last_in {
            return Err(ClientError::Protocol(format!(
                "server seq {} not above {}",
                msg.seq, self.last_in
            )));
        }
        self.last_in = msg.seq;
        Ok(msg)
    }

    /// Sends a request and waits for its reply, queueing feed messages seen meanwhile.
    pub fn request<T: Serialize>(&mut self, kind: Kind, payload: &T) -> ClientResult<WireMessage> {
        self.seq += 1;
        let seq = self.seq;
        self.writer.write_all(WireMessage::new(kind, seq, payload).to_line().as_bytes())?;
        loop {
            let msg = self.recv()?;
            if msg.re == Some(seq) {
                return msg.into_result().map_err(ClientError::Remote);
            }
            self.feed.push_back(msg);
        }
    }

    fn call<T: Serialize, R: DeserializeOwned>(&mut self, kind: Kind, payload: &T) -> ClientResult<R> {
        let msg = self.request(kind, payload)?;
        serde_json::from_value(msg.payload).map_err(|e| ClientError::Protocol(e.to_string()))
    }

    pub fn hello(&mut self, token: &str) -> ClientResult<HelloAck> {
        self.call(Kind::Hello, &Hello { token: token.into() })
    }

    pub fn open_match(&mut self, match_id: &str) -> ClientResult<OpenInfo> {
        self.call(Kind::OpenMatch, &MatchRef { match_id: match_id.into() })
    }

    pub fn close_match(&mut self, match_id: &str) -> ClientResult<serde_json::Value> {
        self.call(Kind::CloseMatch, &MatchRef { match_id: match_id.into() })
    }

    pub fn ingest(&mut self, event: &ScoringEvent) -> ClientResult<Ack> {
        self.call(Kind::Event, event)
    }

    pub fn review_queue(&mut self, match_id: &str) -> ClientResult<Vec<ReviewItem>> {
        self.call(Kind::ReviewQueue, &MatchRef { match_id: match_id.into() })
    }

    pub fn submit_override(&mut self, event_id: &str, action: ReviewAction, reviewer: &str) -> ClientResult<FinalVerdict> {
        let req = OverrideRequest {
            match_id: None,
            event_id: event_id.into(),
            action,
            reviewer: reviewer.into(),
        };
        self.call(Kind::Override, &req)
    }

    pub fn metrics(&mut self, match_id: Option<&str>, filter: MetricsFilter) -> ClientResult<MetricsSnapshot> {
        let req = MetricsRequest {
            match_id: match_id.map(str::to_string),
            filter,
        };
        self.call(Kind::Metrics, &req)
    }

    pub fn audit_export(&mut self, match_id: &str) -> ClientResult<AuditExport> {
        self.call(Kind::AuditExport, &MatchRef { match_id: match_id.into() })
    }

    pub fn subscribe(&mut self, match_id: Option<&str>) -> ClientResult<()> {
        self.request(
            Kind::Subscribe,
            &SubscribeRequest {
                match_id: match_id.map(str::to_string),
            },
        )?;
        Ok(())
    }

    /// Next feed message, waiting up to `timeout`. `Ok(None)` on timeout.
    pub fn next_feed(&mut self, timeout: Duration) -> ClientResult<Option<WireMessage>> {
        if let Some(m) = self.feed.pop_front() {
            return Ok(Some(m));
        }
        self.writer.set_read_timeout(Some(timeout))?;
        let r = self.recv();
        self.writer.set_read_timeout(None)?;
        match r {
            Ok(m) => Ok(Some(m)),
            Err(ClientError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Sends replayed events to a gateway, opening each match on first sight.
pub struct GatewaySink {
    client: Client,
    opened: Vec<String>,
    pub acks: Vec<Ack>,
}

impl GatewaySink {
    pub fn new(client: Client) -> Self {
        Self {
            client,
            opened: Vec::new(),
            acks: Vec::new(),
        }
    }

    pub fn into_client(self) -> Client {
        self.client
    }
}

impl EventSink for GatewaySink {
    fn emit(&mut self, event: ScoringEvent) -> ringside_core::Result<()> {
        let to_core = |e: ClientError| CoreError::StorageFailure(e.to_string());
        let m = event.match_id().to_string();
        if !self.opened.contains(&m) {
            self.client.open_match(&m).map_err(to_core)?;
            self.opened.push(m);
        }
        let ack = self.client.ingest(&event).map_err(to_core)?;
        self.acks.push(ack);
        Ok(())
    }
}
