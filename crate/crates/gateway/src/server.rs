//! Tokio TCP server speaking the NDJSON protocol in [`crate::wire`].
//!
//! One task reads requests, another owns the socket's write half and stamps
//! outgoing `seq` numbers, so replies and feed pushes share one counter.

use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread;

use log::{debug, info, warn};
use serde::Serialize;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{broadcast, mpsc, oneshot};

use ringside_core::ScoringEvent;

use crate::error::{GatewayError, Result};
use crate::service::{Gateway, Role};
use crate::wire::{
    Hello, HelloAck, Kind, MatchRef, MetricsRequest, OverrideRequest, SubscribeRequest, WireMessage,
};

/// Outgoing message before its `seq` is assigned.
struct Outgoing {
    kind: Kind,
    re: Option<u64>,
    payload: serde_json::Value,
}

impl Outgoing {
    fn reply<T: Serialize>(kind: Kind, re: u64, payload: &T) -> Self {
        Self {
            kind,
            re: Some(re),
            payload: serde_json::to_value(payload).expect("wire payloads serialize"),
        }
    }

    fn error(re: Option<u64>, e: &GatewayError) -> Self {
        Self {
            kind: Kind::Error,
            re,
            payload: serde_json::to_value(e.body()).expect("error bodies serialize"),
        }
    }
}

struct Connection {
    gw: Arc<Gateway>,
    role: Option<Role>,
    last_seq: u64,
    out: mpsc::UnboundedSender<Outgoing>,
    feed: Option<tokio::task::JoinHandle<()>>,
}

impl Connection {
    fn authorize(&self, kind: Kind) -> Result<()> {
        if self.gw.config().tokens.is_empty() || kind == Kind::Hello {
            return Ok(());
        }
        match self.role {
            None => Err(GatewayError::Unauthorized("send hello with a token first".into())),
            Some(role) => {
                let writes = matches!(kind, Kind::Event | Kind::Override | Kind::OpenMatch | Kind::CloseMatch);
                if writes && !role.can_write() {
                    Err(GatewayError::Unauthorized(format!("{role:?} tokens are read-only")))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn handle(&mut self, msg: WireMessage) -> Result<Outgoing> {
        if msg.seq <= self.last_seq {
            return Err(GatewayError::BadRequest(format!(
                "seq {} not above previous {}",
                msg.seq, self.last_seq
            )));
        }
        self.last_seq = msg.seq;
        self.authorize(msg.kind)?;
        let re = msg.seq;
        let gw = &self.gw;
        Ok(match msg.kind {
            Kind::Hello => {
                let hello: Hello = msg.payload_as()?;
                let tokens = &gw.config().tokens;
                if tokens.is_empty() {
                    Outgoing::reply(Kind::Ack, re, &HelloAck { role: None })
                } else {
                    let role = *tokens
                        .get(&hello.token)
                        .ok_or_else(|| GatewayError::Unauthorized("unknown token".into()))?;
                    self.role = Some(role);
                    Outgoing::reply(Kind::Ack, re, &HelloAck { role: Some(role) })
                }
            }
            Kind::OpenMatch => {
                let m: MatchRef = msg.payload_as()?;
                Outgoing::reply(Kind::Ack, re, &gw.open_match(&m.match_id)?)
            }
            Kind::CloseMatch => {
                let m: MatchRef = msg.payload_as()?;
                Outgoing::reply(Kind::Ack, re, &gw.close_match(&m.match_id)?)
            }
            Kind::Event => {
                let ev: ScoringEvent =
                    msg.payload_as().map_err(|e| GatewayError::ValidationFailed(e.to_string()))?;
                Outgoing::reply(Kind::Ack, re, &gw.ingest(&ev)?)
            }
            Kind::Override => {
                let req: OverrideRequest = msg.payload_as()?;
                let fin = gw.submit_override(req.match_id.as_deref(), &req.event_id, &req.action, &req.reviewer)?;
                Outgoing::reply(Kind::Verdict, re, &fin)
            }
            Kind::ReviewQueue => {
                let m: MatchRef = msg.payload_as()?;
                Outgoing::reply(Kind::Ack, re, &gw.review_queue(&m.match_id)?)
            }
            Kind::Metrics => {
                let req: MetricsRequest = msg.payload_as()?;
                Outgoing::reply(Kind::Metrics, re, &gw.metrics_snapshot(req.match_id.as_deref(), &req.filter)?)
            }
            Kind::AuditExport => {
                let m: MatchRef = msg.payload_as()?;
                Outgoing::reply(Kind::Ack, re, &gw.audit_export(&m.match_id)?)
            }
            Kind::Subscribe => {
                let req: SubscribeRequest = msg.payload_as()?;
                self.subscribe(req.match_id.clone());
                Outgoing::reply(Kind::Ack, re, &req)
            }
            Kind::Verdict | Kind::ReviewItem | Kind::Ack | Kind::Error => {
                return Err(GatewayError::BadRequest(format!("{:?} is server-to-client only", msg.kind)))
            }
        })
    }

    fn subscribe(&mut self, match_id: Option<String>) {
        if let Some(old) = self.feed.take() {
            old.abort();
        }
        let mut rx = self.gw.subscribe();
        let out = self.out.clone();
        self.feed = Some(tokio::spawn(async move {
            loop {
                match rx.recv().await {
                    Ok(item) => {
                        if match_id.as_deref().is_some_and(|m| m != item.match_id()) {
                            continue;
                        }
                        let (kind, payload) = match &item {
                            crate::service::FeedItem::ReviewItem(r) => (Kind::ReviewItem, serde_json::to_value(r)),
                            crate::service::FeedItem::Verdict(v) => (Kind::Verdict, serde_json::to_value(v)),
                        };
                        let msg = Outgoing {
                            kind,
                            re: None,
                            payload: payload.expect("feed items serialize"),
                        };
                        if out.send(msg).is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        let e = GatewayError::BadRequest(format!("feed lagged by {n} items; resync"));
                        if out.send(Outgoing::error(None, &e)).is_err() {
                            break;
                        }
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                }
            }
        }));
    }
}

async fn connection(stream: TcpStream, gw: Arc<Gateway>) -> io::Result<()> {
    let peer = stream.peer_addr().ok();
    let (rd, mut wr) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Outgoing>();
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(o) = rx.recv().await {
            seq += 1;
            let msg = WireMessage {
                kind: o.kind,
                seq,
                re: o.re,
                payload: o.payload,
            };
            if wr.write_all(msg.to_line().as_bytes()).await.is_err() {
                break;
            }
        }
        let _ = wr.shutdown().await;
    });

    let mut conn = Connection {
        gw,
        role: None,
        last_seq: 0,
        out: tx.clone(),
        feed: None,
    };
    let mut lines = BufReader::new(rd).lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        let reply = match WireMessage::parse(&line) {
            Ok(msg) => {
                let re = msg.seq;
                debug!("{peer:?} -> {:?} #{re}", msg.kind);
                conn.handle(msg).unwrap_or_else(|e| Outgoing::error(Some(re), &e))
            }
            Err(e) => Outgoing::error(None, &e),
        };
        if tx.send(reply).is_err() {
            break;
        }
    }
    if let Some(f) = conn.feed.take() {
        f.abort();
    }
    drop(conn);
    drop(tx);
    let _ = writer.await;
    debug!("{peer:?} disconnected");
    Ok(())
}

/// Accepts connections until `shutdown` fires.
pub async fn serve(listener: TcpListener, gw: Arc<Gateway>, shutdown: oneshot::Receiver<()>) -> io::Result<()> {
    tokio::pin!(shutdown);
    loop {
        tokio::select! {
            _ = &mut shutdown => return Ok(()),
            accepted = listener.accept() => {
                let (stream, peer) = accepted?;
                info!("connection from {peer}");
                let gw = gw.clone();
                tokio::spawn(async move {
                    if let Err(e) = connection(stream, gw).await {
                        warn!("connection {peer}: {e}");
                    }
                });
            }
        }
    }
}

/// A server running on its own thread and runtime.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) -> io::Result<()> {
        self.stop()
    }

    fn stop(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub fn spawn(gw: Arc<Gateway>, addr: &str) -> io::Result<ServerHandle> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let listener = rt.block_on(TcpListener::bind(addr))?;
    let local = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let thread = thread::Builder::new()
        .name("ringside-gateway".into())
        .spawn(move || {
            let r = rt.block_on(serve(listener, gw, rx));
            rt.shutdown_background();
            r
        })?;
    Ok(ServerHandle {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
