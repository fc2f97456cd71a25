//! Domain types shared across the engine and the annotation record format.
//!
//! Annotation files are JSON-Lines: one object per line with the field names
//! `match_id`, `athlete_id`, `event`, `start_frame`, `end_frame`, `hit_valid`
//! and `ref_verdict`. Any other top-level field is kept in [`AnnotationRecord::meta`]
//! and written back out as a top-level string field.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fusion::SensorReading;

/// Tolerance on the simplex constraint of [`ProbVector`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Closed real interval `[lo, hi]` with finite endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

#[derive(Deserialize)]
struct RawInterval {
    lo: f64,
    hi: f64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = Error;
    fn try_from(raw: RawInterval) -> Result<Self> {
        Interval::new(raw.lo, raw.hi)
    }
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "interval endpoints must be finite, got [{lo}, {hi}]"
            )));
        }
        if lo > hi {
            return Err(Error::InvalidArgument(format!(
                "interval lower bound {lo} exceeds upper bound {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate interval `[x, x]`.
    pub fn point(x: f64) -> Result<Self> {
        Self::new(x, x)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    /// True when the interval lies inside `[0, 1]`.
    pub fn is_unit(&self) -> bool {
        self.lo >= 0.0 && self.hi <= 1.0
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "[{:.*},{:.*}]", p, self.lo, p, self.hi),
            None => write!(f, "[{},{}]", self.lo, self.hi),
        }
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(p: Vec<f64>) -> Result<Self> {
        ProbVector::new(p)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::EmptyInput("probability vector"));
        }
        if let Some(bad) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::InvalidArgument(format!(
                "probability {bad} outside [0, 1]"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self(p))
    }

    /// Scales non-negative weights onto the simplex.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::DivisionByZero("weights sum to zero"));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    /// Uniform distribution over `k` classes.
    pub fn uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::EmptyInput("probability vector"));
        }
        Ok(Self(vec![1.0 / k as f64; k]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

/// Lowest index of the maximum of a non-empty slice.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// `M >= 1` probability vectors of equal dimension, e.g. stochastic forward passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ProbVector>", into = "Vec<ProbVector>")]
pub struct EnsemblePrediction(Vec<ProbVector>);

impl TryFrom<Vec<ProbVector>> for EnsemblePrediction {
    type Error = Error;
    fn try_from(m: Vec<ProbVector>) -> Result<Self> {
        EnsemblePrediction::new(m)
    }
}

impl From<EnsemblePrediction> for Vec<ProbVector> {
    fn from(e: EnsemblePrediction) -> Self {
        e.0
    }
}

impl EnsemblePrediction {
    pub fn new(members: Vec<ProbVector>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyInput("ensemble"))?;
        let k = first.len();
        if let Some(bad) = members.iter().find(|m| m.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        Ok(Self(members))
    }

    /// Convenience constructor from raw rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows.into_iter().map(ProbVector::new).collect::<Result<_>>()?)
    }

    pub fn members(&self) -> &[ProbVector] {
        &self.0
    }

    pub fn size(&self) -> usize {
        self.0.len()
    }

    pub fn num_classes(&self) -> usize {
        self.0[0].len()
    }
}

/// `T x J x C` joint coordinates with a per-joint, per-frame validity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct PoseSequence {
    frames: usize,
    joints: usize,
    channels: usize,
    data: Vec<f64>,
    mask: Vec<bool>,
    fps: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    fps: f64,
    shape: [usize; 3],
    data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<bool>>,
}

impl TryFrom<RawPose> for PoseSequence {
    type Error = Error;
    fn try_from(raw: RawPose) -> Result<Self> {
        let [t, j, c] = raw.shape;
        let pose = PoseSequence::new(t, j, c, raw.data, raw.fps)?;
        match raw.mask {
            Some(mask) => pose.with_mask(mask),
            None => Ok(pose),
        }
    }
}

impl From<PoseSequence> for RawPose {
    fn from(p: PoseSequence) -> Self {
        let mask = if p.mask.iter().all(|&m| m) {
            None
        } else {
            Some(p.mask)
        };
        RawPose {
            fps: p.fps,
            shape: [p.frames, p.joints, p.channels],
            data: p.data,
            mask,
        }
    }
}

impl PoseSequence {
    /// Builds a fully valid sequence from frame-major data (`t`, then joint, then channel).
    pub fn new(frames: usize, joints: usize, channels: usize, data: Vec<f64>, fps: f64) -> Result<Self> {
        if frames == 0 || joints == 0 || channels == 0 {
            return Err(Error::ShapeMismatch(format!(
                "pose dimensions must be positive, got {frames}x{joints}x{channels}"
            )));
        }
        if data.len() != frames * joints * channels {
            return Err(Error::DimensionMismatch {
                expected: frames * joints * channels,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("pose coordinates must be finite".into()));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
        }
        Ok(Self {
            frames,
            joints,
            channels,
            data,
            mask: vec![true; frames * joints],
            fps,
        })
    }

    /// Replaces the validity mask (frame-major, `T x J`).
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.frames * self.joints {
            return Err(Error::DimensionMismatch {
                expected: self.frames * self.joints,
                found: mask.len(),
            });
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn coord(&self, t: usize, j: usize, c: usize) -> f64 {
        self.data[(t * self.joints + j) * self.channels + c]
    }

    /// Coordinates of joint `j` at frame `t`.
    pub fn joint(&self, t: usize, j: usize) -> &[f64] {
        let start = (t * self.joints + j) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn is_valid(&self, t: usize, j: usize) -> bool {
        self.mask[t * self.joints + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    HeadKick,
    Punch,
    Block,
    Fall,
    SpinKick,
    SideKick,
}

impl EventType {
    pub const ALL: [EventType; 6] = [
        EventType::HeadKick,
        EventType::Punch,
        EventType::Block,
        EventType::Fall,
        EventType::SpinKick,
        EventType::SideKick,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::HeadKick => "head_kick",
            EventType::Punch => "punch",
            EventType::Block => "block",
            EventType::Fall => "fall",
            EventType::SpinKick => "spin_kick",
            EventType::SideKick => "side_kick",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == s)
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefVerdict {
    PointAwarded,
    FoulCalled,
    Warning,
    NoAction,
}

impl RefVerdict {
    pub const ALL: [RefVerdict; 4] = [
        RefVerdict::PointAwarded,
        RefVerdict::FoulCalled,
        RefVerdict::Warning,
        RefVerdict::NoAction,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RefVerdict::PointAwarded => "point_awarded",
            RefVerdict::FoulCalled => "foul_called",
            RefVerdict::Warning => "warning",
            RefVerdict::NoAction => "no_action",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.as_str() == s)
    }
}

const CORE_FIELDS: [&str; 7] = [
    "match_id",
    "athlete_id",
    "event",
    "start_frame",
    "end_frame",
    "hit_valid",
    "ref_verdict",
];

/// One labelled action from an annotation file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub match_id: String,
    pub athlete_id: String,
    pub event: EventType,
    pub start_frame: u64,
    pub end_frame: u64,
    pub hit_valid: bool,
    pub ref_verdict: RefVerdict,
    /// Extra fields (round, phase, action success, ...) as strings.
    pub meta: BTreeMap<String, String>,
}

impl AnnotationRecord {
    pub fn validate(&self) -> Result<()> {
        if self.match_id.is_empty() {
            return Err(Error::SchemaViolation("match_id is empty".into()));
        }
        if self.athlete_id.is_empty() {
            return Err(Error::SchemaViolation("athlete_id is empty".into()));
        }
        if self.start_frame > self.end_frame {
            return Err(Error::SchemaViolation(format!(
                "start_frame {} exceeds end_frame {}",
                self.start_frame, self.end_frame
            )));
        }
        if let Some(k) = self.meta.keys().find(|k| CORE_FIELDS.contains(&k.as_str())) {
            return Err(Error::SchemaViolation(format!("meta key {k} shadows a core field")));
        }
        Ok(())
    }

    pub fn to_json_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("match_id".into(), Value::from(self.match_id.clone()));
        m.insert("athlete_id".into(), Value::from(self.athlete_id.clone()));
        m.insert("event".into(), Value::from(self.event.as_str()));
        m.insert("start_frame".into(), Value::from(self.start_frame));
        m.insert("end_frame".into(), Value::from(self.end_frame));
        m.insert("hit_valid".into(), Value::from(self.hit_valid));
        m.insert("ref_verdict".into(), Value::from(self.ref_verdict.as_str()));
        for (k, v) in &self.meta {
            m.insert(k.clone(), Value::from(v.clone()));
        }
        m
    }

    /// Single-line JSON form, as written to annotation files.
    pub fn to_json_line(&self) -> String {
        Value::Object(self.to_json_map()).to_string()
    }

    pub fn from_json_value(value: Value) -> Result<Self> {
        let Value::Object(mut obj) = value else {
            return Err(Error::SchemaViolation("annotation must be a JSON object".into()));
        };
        let match_id = take_string(&mut obj, "match_id")?;
        let athlete_id = take_string(&mut obj, "athlete_id")?;
        let event_s = take_string(&mut obj, "event")?;
        let event = EventType::parse(&event_s)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown event type {event_s:?}")))?;
        let start_frame = take_frame(&mut obj, "start_frame")?;
        let end_frame = take_frame(&mut obj, "end_frame")?;
        let hit_valid = match obj.remove("hit_valid") {
            Some(Value::Bool(b)) => b,
            Some(other) => {
                return Err(Error::SchemaViolation(format!(
                    "hit_valid must be a boolean, got {other}"
                )))
            }
            None => return Err(Error::SchemaViolation("missing field hit_valid".into())),
        };
        let verdict_s = take_string(&mut obj, "ref_verdict")?;
        let ref_verdict = RefVerdict::parse(&verdict_s)
            .ok_or_else(|| Error::SchemaViolation(format!("unknown ref_verdict {verdict_s:?}")))?;

        let mut meta = BTreeMap::new();
        for (k, v) in obj {
            match (k.as_str(), v) {
                ("meta", Value::Object(inner)) => {
                    for (ik, iv) in inner {
                        meta.insert(ik, value_to_meta(iv));
                    }
                }
                (_, v) => {
                    meta.insert(k, value_to_meta(v));
                }
            }
        }
        let record = AnnotationRecord {
            match_id,
            athlete_id,
            event,
            start_frame,
            end_frame,
            hit_valid,
            ref_verdict,
            meta,
        };
        record.validate()?;
        Ok(record)
    }
}

fn value_to_meta(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

fn take_string(obj: &mut Map<String, Value>, key: &str) -> Result<String> {
    match obj.remove(key) {
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(Error::SchemaViolation(format!(
            "{key} must be a string, got {other}"
        ))),
        None => Err(Error::SchemaViolation(format!("missing field {key}"))),
    }
}

fn take_frame(obj: &mut Map<String, Value>, key: &str) -> Result<u64> {
    match obj.remove(key) {
        Some(Value::Number(n)) => n.as_u64().ok_or_else(|| {
            Error::SchemaViolation(format!("{key} must be a non-negative integer, got {n}"))
        }),
        Some(other) => Err(Error::SchemaViolation(format!(
            "{key} must be an integer, got {other}"
        ))),
        None => Err(Error::SchemaViolation(format!("missing field {key}"))),
    }
}

impl Serialize for AnnotationRecord {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_map().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for AnnotationRecord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        AnnotationRecord::from_json_value(value).map_err(serde::de::Error::custom)
    }
}

/// Parses one annotation object.
pub fn parse_annotation(text: &[u8]) -> Result<AnnotationRecord> {
    let s = std::str::from_utf8(text)
        .map_err(|e| Error::MalformedInput(format!("annotation is not UTF-8: {e}")))?;
    let value: Value =
        serde_json::from_str(s).map_err(|e| Error::MalformedInput(e.to_string()))?;
    AnnotationRecord::from_json_value(value)
}

/// Parses a JSON-Lines annotation file. Blank lines are skipped.
pub fn parse_annotation_lines(text: &str) -> Result<Vec<AnnotationRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_annotation(l.as_bytes()).map_err(|e| Error::ParseError {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Converts a frame index to milliseconds, rounding half away from zero.
pub fn frames_to_ms(frame: u64, fps: f64) -> Result<u64> {
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    Ok((frame as f64 * 1000.0 / fps).round() as u64)
}

/// A contact event as it enters the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringEvent {
    pub event_id: String,
    /// Milliseconds since match start.
    pub t_event: u64,
    pub annotation: AnnotationRecord,
    pub sensors: SensorReading,
    /// Bounds on the on-edge validity classifier margin.
    pub margin: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseSequence>,
}

impl ScoringEvent {
    pub fn match_id(&self) -> &str {
        &self.annotation.match_id
    }
}

/// Logged decision tuple `(t, y, y_hat, confidence)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub t_ms: u64,
    pub y_true: Option<String>,
    pub y_hat: String,
    pub confidence: f64,
}

impl DecisionRecord {
    pub fn new(t_ms: u64, y_true: Option<String>, y_hat: impl Into<String>, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            t_ms,
            y_true,
            y_hat: y_hat.into(),
            confidence,
        })
    }
}

/// Timestamped event label, used for event-type distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMark {
    pub t_ms: u64,
    pub event: EventType,
    pub athlete_id: String,
}

/// Per-match decision tuples and event marks, ordered by time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchLog {
    pub match_id: String,
    records: Vec<DecisionRecord>,
    events: Vec<EventMark>,
}

impl MatchLog {
    pub fn new(match_id: impl Into<String>) -> Self {
        Self {
            match_id: match_id.into(),
            ..Default::default()
        }
    }

    pub fn push_record(&mut self, record: DecisionRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if record.t_ms < last.t_ms {
                return Err(Error::OutOfOrderTimestamp {
                    last: last.t_ms,
                    got: record.t_ms,
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn push_event(&mut self, mark: EventMark) -> Result<()> {
        if let Some(last) = self.events.last() {
            if mark.t_ms < last.t_ms {
                return Err(Error::OutOfOrderTimestamp {
                    last: last.t_ms,
                    got: mark.t_ms,
                });
            }
        }
        self.events.push(mark);
        Ok(())
    }

    pub fn records(&self) -> &[DecisionRecord] {
        &self.records
    }

    pub fn events(&self) -> &[EventMark] {
        &self.events
    }
}
