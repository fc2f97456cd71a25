//! Network surface for the ringside scoring engine.
//!
//! [`service::Gateway`] holds one single-writer engine per match. The
//! [`server`] exposes it as newline-delimited JSON over TCP and [`client`]
//! is a small blocking counterpart used by the CLI and tests.

pub mod client;
pub mod error;
pub mod server;
pub mod service;
pub mod wire;

pub use client::{Client, ClientError, GatewaySink};
pub use error::{ErrorBody, GatewayError, Result};
pub use service::{
    default_engine_config, Ack, FeedItem, FinalVerdict, Gateway, GatewayConfig, MetricsFilter, MetricsSnapshot,
    OpenInfo, ReviewAction, ReviewItem, Role,
};
pub use wire::{Kind, WireMessage};
