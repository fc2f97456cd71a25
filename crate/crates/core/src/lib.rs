//! Uncertainty-aware scoring decisions for combat-sport officiating.
//!
//! Sensor evidence arrives as intervals, action validity as margin bounds or
//! ensembles of class probabilities. A point is awarded automatically only when
//! the worst case inside every interval clears its threshold; everything else
//! is routed to a human reviewer and every final decision lands in a
//! hash-chained audit log.

pub mod analytics;
pub mod credal;
pub mod decision;
pub mod error;
pub mod fusion;
pub mod model;
pub mod para;
pub mod recognition;
pub mod replay;

pub use error::{Error, Result};
pub use model::{
    frames_to_ms, parse_annotation, AnnotationRecord, EnsemblePrediction, EventType, Interval,
    PoseSequence, ProbVector, RefVerdict, ScoringEvent,
};
