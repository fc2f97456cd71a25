#![allow(dead_code)]

use ringside_core::fusion::{FusionConfig, SensorReading};
use ringside_core::{AnnotationRecord, EventType, Interval, RefVerdict, ScoringEvent};
use ringside_gateway::GatewayConfig;
use ringside_core::decision::EngineConfig;

pub fn engine_config() -> EngineConfig {
    let fusion = FusionConfig::new([0.5, 0.3, 0.2], 100.0)
        .unwrap()
        .with_threshold("senior", 65.0)
        .unwrap();
    EngineConfig::new(fusion, "senior", 0.7).unwrap()
}

pub fn config() -> GatewayConfig {
    GatewayConfig::new(engine_config())
}

pub fn event(
    match_id: &str,
    id: &str,
    t: u64,
    athlete: &str,
    kind: EventType,
    sensors: [(f64, f64); 3],
    reference: RefVerdict,
) -> ScoringEvent {
    ScoringEvent {
        event_id: id.into(),
        t_event: t,
        annotation: AnnotationRecord {
            match_id: match_id.into(),
            athlete_id: athlete.into(),
            event: kind,
            start_frame: 0,
            end_frame: 1,
            hit_valid: true,
            ref_verdict: reference,
            meta: Default::default(),
        },
        sensors: SensorReading::from_bounds(sensors[0], sensors[1], sensors[2]).unwrap(),
        margin: Interval::new(0.95, 1.15).unwrap(),
        pose: None,
    }
}

/// Fuses to [67.0, 75.6]; auto-awarded at 65 / 0.7.
pub const CLEAR: [(f64, f64); 3] = [(0.78, 0.86), (0.60, 0.70), (0.50, 0.58)];
/// Fuses to [62.1, 69.4]; needs review.
pub const BORDERLINE: [(f64, f64); 3] = [(0.72, 0.80), (0.55, 0.63), (0.48, 0.54)];

pub fn clear(match_id: &str, id: &str, t: u64) -> ScoringEvent {
    event(match_id, id, t, "KOR_A123", EventType::HeadKick, CLEAR, RefVerdict::PointAwarded)
}

pub fn borderline(match_id: &str, id: &str, t: u64) -> ScoringEvent {
    event(match_id, id, t, "KOR_A123", EventType::HeadKick, BORDERLINE, RefVerdict::PointAwarded)
}
