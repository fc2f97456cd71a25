//! Deterministic match replay and synthetic event generation.
//!
//! Annotation files carry labels but no sensor traces, so sensor and margin
//! intervals are synthesized from `hit_valid` with a per-event ChaCha stream
//! (`seed`, stream = position in the replayed order). The same file and seed
//! always produce the same events, bit for bit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decision::EngineConfig;
use crate::error::{Error, Result};
use crate::fusion::{fuse_interval, SensorReading};
use crate::model::{frames_to_ms, parse_annotation_lines, AnnotationRecord, EventType, Interval, RefVerdict, ScoringEvent};

/// Interval half-widths applied around each synthesized center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub pressure: f64,
    pub imu: f64,
    pub vision: f64,
    pub margin: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pressure: 0.04,
            imu: 0.05,
            vision: 0.04,
            margin: 0.1,
        }
    }
}

/// Ranges that sensor centers and validity margins are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub valid_sensor: (f64, f64),
    pub invalid_sensor: (f64, f64),
    pub valid_margin: (f64, f64),
    pub invalid_margin: (f64, f64),
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            valid_sensor: (0.78, 0.92),
            invalid_sensor: (0.20, 0.50),
            valid_margin: (1.2, 2.5),
            invalid_margin: (-2.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    /// Playback multiplier; `inf` emits without waiting.
    pub speed: f64,
    pub noise: NoiseConfig,
    /// Events per minute in synthetic mode.
    pub event_rate: f64,
    pub fps: f64,
    pub sensors: SensorModel,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            speed: f64::INFINITY,
            noise: NoiseConfig::default(),
            event_rate: 60.0,
            fps: 30.0,
            sensors: SensorModel::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.speed.is_nan() || self.speed <= 0.0 {
            return Err(Error::InvalidArgument(format!("speed {} must be > 0", self.speed)));
        }
        let n = &self.noise;
        if [n.pressure, n.imu, n.vision, n.margin].iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::InvalidArgument("noise half-widths must be >= 0".into()));
        }
        if !(self.event_rate.is_finite() && self.event_rate >= 0.0) {
            return Err(Error::InvalidArgument("event rate must be >= 0".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidArgument("fps must be > 0".into()));
        }
        let s = &self.sensors;
        for (lo, hi) in [s.valid_sensor, s.invalid_sensor] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::InvalidArgument("sensor ranges must lie in [0, 1]".into()));
            }
        }
        for (lo, hi) in [s.valid_margin, s.invalid_margin] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument("margin ranges must be finite and ordered".into()));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

fn unit_interval(center: f64, half: f64) -> Interval {
    let c = center.clamp(0.0, 1.0);
    Interval::new((c - half).max(0.0), (c + half).min(1.0)).expect("ordered and finite")
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn sensors_around(centers: [f64; 3], noise: &NoiseConfig) -> SensorReading {
    SensorReading::new(
        unit_interval(centers[0], noise.pressure),
        unit_interval(centers[1], noise.imu),
        unit_interval(centers[2], noise.vision),
    )
    .expect("unit intervals")
}

fn margin_around(center: f64, half: f64) -> Interval {
    Interval::new(center - half, center + half).expect("finite margin")
}

/// Sensor and margin intervals for a labelled record, from stream `stream`.
pub fn synthesize(record: &AnnotationRecord, stream: u64, cfg: &SimConfig) -> (SensorReading, Interval) {
    let mut rng = cfg.rng(stream);
    let m = &cfg.sensors;
    let (range, margin) = if record.hit_valid {
        (m.valid_sensor, m.valid_margin)
    } else {
        (m.invalid_sensor, m.invalid_margin)
    };
    let centers = [draw(&mut rng, range), draw(&mut rng, range), draw(&mut rng, range)];
    let mc = draw(&mut rng, margin);
    (sensors_around(centers, &cfg.noise), margin_around(mc, cfg.noise.margin))
}

/// Consumer of replayed events.
pub trait EventSink {
    fn emit(&mut self, event: ScoringEvent) -> Result<()>;
}

impl EventSink for Vec<ScoringEvent> {
    fn emit(&mut self, event: ScoringEvent) -> Result<()> {
        self.push(event);
        Ok(())
    }
}

/// Producer half of a bounded queue; `emit` blocks while the queue is full.
pub struct ChannelSink(SyncSender<ScoringEvent>);

impl EventSink for ChannelSink {
    fn emit(&mut self, event: ScoringEvent) -> Result<()> {
        self.0.send(event).map_err(|_| Error::SinkClosed)
    }
}

pub fn bounded_channel(capacity: usize) -> (ChannelSink, Receiver<ScoringEvent>) {
    let (tx, rx) = sync_channel(capacity);
    (ChannelSink(tx), rx)
}

/// Writes each event as one JSON line.
pub struct JsonLinesSink<W: Write>(pub W);

impl<W: Write> EventSink for JsonLinesSink<W> {
    fn emit(&mut self, event: ScoringEvent) -> Result<()> {
        let line = serde_json::to_string(&event).map_err(|e| Error::MalformedInput(e.to_string()))?;
        writeln!(self.0, "{line}").map_err(|_| Error::SinkClosed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub events: usize,
    pub per_type: BTreeMap<EventType, usize>,
}

/// Annotation records turned into scoring events, ordered by start frame
/// (ties keep file order). Event ids are `<match_id>-<position>`.
pub fn events_from_records(records: &[AnnotationRecord], cfg: &SimConfig) -> Result<Vec<ScoringEvent>> {
    cfg.validate()?;
    let mut order: Vec<&AnnotationRecord> = records.iter().collect();
    order.sort_by_key(|r| r.start_frame);
    order
        .into_iter()
        .enumerate()
        .map(|(i, rec)| {
            let (sensors, margin) = synthesize(rec, i as u64, cfg);
            Ok(ScoringEvent {
                event_id: format!("{}-{i:05}", rec.match_id),
                t_event: frames_to_ms(rec.start_frame, cfg.fps)?,
                annotation: rec.clone(),
                sensors,
                margin,
                pose: None,
            })
        })
        .collect()
}

/// Streams events into `sink`, spaced by `t_event / speed` of wall-clock time.
pub fn emit_paced(events: Vec<ScoringEvent>, speed: f64, sink: &mut dyn EventSink) -> Result<ReplaySummary> {
    let start = Instant::now();
    let t0 = events.first().map_or(0, |e| e.t_event);
    let mut summary = ReplaySummary::default();
    for ev in events {
        if speed.is_finite() {
            let due = Duration::from_secs_f64((ev.t_event - t0) as f64 / 1000.0 / speed);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                thread::sleep(wait);
            }
        }
        *summary.per_type.entry(ev.annotation.event).or_default() += 1;
        summary.events += 1;
        sink.emit(ev)?;
    }
    Ok(summary)
}

/// Replays an annotation JSON-Lines document.
pub fn replay(text: &str, cfg: &SimConfig, sink: &mut dyn EventSink) -> Result<ReplaySummary> {
    let records = parse_annotation_lines(text)?;
    let events = events_from_records(&records, cfg)?;
    emit_paced(events, cfg.speed, sink)
}

pub fn replay_file(path: &Path, cfg: &SimConfig, sink: &mut dyn EventSink) -> Result<ReplaySummary> {
    let text = std::fs::read_to_string(path)?;
    replay(&text, cfg, sink)
}

/// SHA-256 over the JSON lines of an event stream.
pub fn stream_digest(events: &[ScoringEvent]) -> String {
    let mut h = Sha256::new();
    for e in events {
        h.update(serde_json::to_string(e).expect("events serialize").as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Meta key marking events generated to straddle the decision thresholds.
pub const BORDERLINE_KEY: &str = "borderline";

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Seeded synthetic match of `round(rate * duration / 60)` events.
///
/// A `borderline_fraction` share of events (rounded, chosen at random) gets
/// an impact interval with `lo < T_w <= hi` and a margin centred near the
/// logit of `tau`; those events carry `borderline = "true"` in their meta.
pub fn generate_synthetic(
    cfg: &SimConfig,
    duration_s: f64,
    borderline_fraction: f64,
    engine: &EngineConfig,
) -> Result<Vec<ScoringEvent>> {
    cfg.validate()?;
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::InvalidArgument(format!("duration {duration_s} must be > 0")));
    }
    if !(0.0..=1.0).contains(&borderline_fraction) {
        return Err(Error::InvalidArgument("borderline fraction outside [0, 1]".into()));
    }
    let n = (cfg.event_rate * duration_s / 60.0).round() as usize;
    let n_border = (borderline_fraction * n as f64).round() as usize;
    let noise = &cfg.noise;
    if n_border > 0 && noise.pressure + noise.imu + noise.vision == 0.0 {
        return Err(Error::InvalidArgument(
            "borderline events need non-zero sensor noise to straddle the threshold".into(),
        ));
    }

    let mut rng = cfg.rng(u64::MAX);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..duration_s)).collect();
    times.sort_by(f64::total_cmp);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let mut borderline = vec![false; n];
    for &i in &idx[..n_border] {
        borderline[i] = true;
    }

    let t_w = engine.t_w();
    let scale = engine.fusion.scale_s;
    let match_id = format!("SYN-{}", cfg.seed);
    let mut events = Vec::with_capacity(n);
    for (i, t) in times.into_iter().enumerate() {
        let mut ev_rng = cfg.rng(i as u64);
        let start_frame = (t * cfg.fps).floor() as u64;
        let hit_valid = if borderline[i] { ev_rng.random_bool(0.5) } else { ev_rng.random_bool(0.7) };
        let mut meta = BTreeMap::new();
        if borderline[i] {
            meta.insert(BORDERLINE_KEY.to_string(), "true".to_string());
        }
        let annotation = AnnotationRecord {
            match_id: match_id.clone(),
            athlete_id: if ev_rng.random_bool(0.5) { "red" } else { "blue" }.to_string(),
            event: EventType::ALL[ev_rng.random_range(0..EventType::ALL.len())],
            start_frame,
            end_frame: start_frame + ev_rng.random_range(5..30),
            hit_valid,
            ref_verdict: if hit_valid { RefVerdict::PointAwarded } else { RefVerdict::NoAction },
            meta,
        };
        let (sensors, margin) = if borderline[i] {
            let target = t_w / scale;
            let straddles = |r: &SensorReading| {
                fuse_interval(r, &engine.fusion).is_ok_and(|iv| iv.lo() < t_w && t_w <= iv.hi())
            };
            let jitter = noise.pressure.min(noise.imu).min(noise.vision).max(1e-3) * 0.5;
            let found = (0..64).find_map(|_| {
                let c = [0; 3].map(|_| target + ev_rng.random_range(-jitter..=jitter));
                let r = sensors_around(c, noise);
                straddles(&r).then_some(r)
            });
            let reading = found.unwrap_or_else(|| sensors_around([target; 3], noise));
            let mc = logit(engine.tau) + ev_rng.random_range(-0.5..=0.5) * noise.margin;
            (reading, margin_around(mc, noise.margin))
        } else {
            synthesize(&annotation, i as u64 + (1 << 32), cfg)
        };
        events.push(ScoringEvent {
            event_id: format!("{match_id}-{i:05}"),
            t_event: frames_to_ms(start_frame, cfg.fps)?,
            annotation,
            sensors,
            margin,
            pose: None,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::FusionConfig;

    const SAMPLE: &str = r#"{"match_id":"WT2025_Cadet_042","athlete_id":"KOR_A123","event":"head_kick","start_frame":110,"end_frame":135,"hit_valid":true,"ref_verdict":"point_awarded"}"#;

    fn engine_cfg() -> EngineConfig {
        let fusion = FusionConfig::new([0.5, 0.3, 0.2], 100.0).unwrap().with_threshold("senior", 65.0).unwrap();
        EngineConfig::new(fusion, "senior", 0.7).unwrap()
    }

    #[test]
    fn single_record_replay() {
        let mut out = Vec::new();
        let s = replay(SAMPLE, &SimConfig::default(), &mut out).unwrap();
        assert_eq!(s.events, 1);
        assert_eq!(out[0].t_event, 3667);
        assert_eq!(s.per_type[&EventType::HeadKick], 1);
        assert!(out[0].sensors.validate().is_ok());
    }

    #[test]
    fn empty_file() {
        let mut out = Vec::new();
        assert_eq!(replay("", &SimConfig::default(), &mut out).unwrap().events, 0);
        assert!(out.is_empty());
    }

    #[test]
    fn deterministic_streams() {
        let text = format!("{SAMPLE}\n{}\n", SAMPLE.replace("110", "40").replace("135", "60"));
        let cfg = SimConfig {
            seed: 9,
            ..SimConfig::default()
        };
        let (mut a, mut b) = (Vec::new(), Vec::new());
        replay(&text, &cfg, &mut a).unwrap();
        replay(&text, &cfg, &mut b).unwrap();
        assert_eq!(stream_digest(&a), stream_digest(&b));
        assert!(a.windows(2).all(|w| w[0].t_event <= w[1].t_event));
        assert_eq!(a[0].annotation.start_frame, 40);
        let mut c = Vec::new();
        replay(&text, &SimConfig { seed: 10, ..cfg }, &mut c).unwrap();
        assert_ne!(stream_digest(&a), stream_digest(&c));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = replay(&format!("{SAMPLE}\nnot json\n"), &SimConfig::default(), &mut Vec::new()).unwrap_err();
        assert!(matches!(err, Error::ParseError { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn closed_channel_is_reported() {
        let (mut sink, rx) = bounded_channel(1);
        drop(rx);
        assert_eq!(replay(SAMPLE, &SimConfig::default(), &mut sink), Err(Error::SinkClosed));
    }

    #[test]
    fn paced_replay_waits() {
        let text = format!("{SAMPLE}\n{}\n", SAMPLE.replace("110", "116").replace("135", "140"));
        let cfg = SimConfig {
            speed: 2.0,
            ..SimConfig::default()
        };
        let start = Instant::now();
        replay(&text, &cfg, &mut Vec::new()).unwrap();
        // 6 frames at 30 fps is 200 ms of match time, 100 ms at double speed
        assert!(start.elapsed() >= Duration::from_millis(95));
    }

    #[test]
    fn synthetic_generation() {
        let cfg = SimConfig {
            seed: 3,
            event_rate: 0.0,
            ..SimConfig::default()
        };
        assert!(generate_synthetic(&cfg, 60.0, 0.2, &engine_cfg()).unwrap().is_empty());

        let cfg = SimConfig { seed: 3, ..SimConfig::default() };
        let a = generate_synthetic(&cfg, 60.0, 1.0, &engine_cfg()).unwrap();
        assert_eq!(a.len(), 60);
        for e in &a {
            let iv = fuse_interval(&e.sensors, &engine_cfg().fusion).unwrap();
            assert!(iv.lo() < 65.0 && 65.0 <= iv.hi(), "{iv}");
        }
        let b = generate_synthetic(&cfg, 60.0, 1.0, &engine_cfg()).unwrap();
        assert_eq!(stream_digest(&a), stream_digest(&b));
        assert!(a.windows(2).all(|w| w[0].t_event <= w[1].t_event));

        let c = generate_synthetic(&cfg, 60.0, 0.2, &engine_cfg()).unwrap();
        let marked = c.iter().filter(|e| e.annotation.meta.contains_key(BORDERLINE_KEY)).count();
        assert_eq!(marked, 12);

        assert!(generate_synthetic(&cfg, 0.0, 0.2, &engine_cfg()).is_err());
        assert!(generate_synthetic(&cfg, 10.0, 1.5, &engine_cfg()).is_err());
        let quiet = SimConfig {
            noise: NoiseConfig {
                pressure: 0.0,
                imu: 0.0,
                vision: 0.0,
                margin: 0.0,
            },
            ..cfg
        };
        assert!(generate_synthetic(&quiet, 10.0, 0.5, &engine_cfg()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { speed: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { fps: -1.0, ..SimConfig::default() }.validate().is_err());
        let mut bad = SimConfig::default();
        bad.noise.imu = -0.1;
        assert!(bad.validate().is_err());
    }
}
