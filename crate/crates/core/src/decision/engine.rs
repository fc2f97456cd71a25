//! Per-match verdict pipeline.
//!
//! A [`MatchEngine`] is the single writer for one match: it turns scoring
//! events into verdicts, finalizes automatic awards immediately, queues
//! everything else for review and appends every final decision to the
//! match's audit log. Scores are a pure function of that log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::credal::{predictive_entropy, sigmoid, sigmoid_bounds, MarginBound};
use crate::decision::audit::{input_digest, AuditEntry, AuditLog, AuditRecord};
use crate::decision::verdict::{
    resolve_gate, robust_award, Action, Band, DecisionFlow, FinalLabel, Gate, GateOutcome, Verdict,
};
use crate::error::{Error, Result};
use crate::fusion::{fuse_interval, FusionConfig};
use crate::model::{
    DecisionRecord, EventMark, EventType, Interval, MatchLog, ProbVector, RefVerdict, ScoringEvent,
};
use crate::recognition::{gcn_forward, joint_heatmap, LayerWeights, SkeletonGraph};

/// Fusion weights plus the thresholds of the division being officiated.
///
/// ```toml
/// division = "senior_m58"
/// tau = 0.70
///
/// [fusion]
/// alpha_p = 0.5
/// alpha_i = 0.3
/// alpha_v = 0.2
/// scale_s = 100.0
/// [fusion.thresholds]
/// senior_m58 = 65.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub fusion: FusionConfig,
    pub division: String,
    pub tau: f64,
}

impl EngineConfig {
    pub fn new(fusion: FusionConfig, division: impl Into<String>, tau: f64) -> Result<Self> {
        let cfg = Self {
            fusion,
            division: division.into(),
            tau,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fusion.validate()?;
        match self.fusion.threshold(&self.division) {
            Some(t) if t.is_finite() && t > 0.0 => {}
            _ => {
                return Err(Error::ConfigInvalid(format!(
                    "no positive impact threshold for division {}",
                    self.division
                )))
            }
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::ConfigInvalid(format!("tau {} outside (0, 1)", self.tau)));
        }
        Ok(())
    }

    pub fn t_w(&self) -> f64 {
        self.fusion.threshold(&self.division).expect("validated")
    }
}

/// Optional pose model used to attach a joint saliency summary to review items.
#[derive(Debug, Clone, PartialEq)]
pub struct Recognizer {
    pub graph: SkeletonGraph,
    pub layers: Vec<LayerWeights>,
}

/// Everything the engine derives from one event before any gate is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub verdict: Verdict,
    pub entropy_nats: f64,
    pub input_digest: String,
    /// Mean saliency per joint, when a pose and a recognizer are available.
    pub saliency: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingReview {
    pub event_id: String,
    pub t_event: u64,
    pub athlete_id: String,
    pub event: EventType,
    /// Label implied by the referee's annotated verdict.
    pub reference: FinalLabel,
    pub assessment: Assessment,
}

impl PendingReview {
    pub fn band(&self) -> Band {
        self.assessment.verdict.band
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalDecision {
    pub event_id: String,
    pub seq: u64,
    pub t_event: u64,
    pub ts_ms: u64,
    pub athlete_id: String,
    pub event: EventType,
    pub label: FinalLabel,
    pub flow: DecisionFlow,
    pub override_by: Option<String>,
    /// Label implied by the referee's annotated verdict.
    pub reference: FinalLabel,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Processed {
    pub verdict: Verdict,
    pub finalized: Option<FinalDecision>,
}

/// Points and awarded events; one point per awarded event.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scores {
    pub points: u64,
    pub awarded: BTreeSet<String>,
    pub finalized: usize,
}

/// Scores as recorded by an audit log, independent of any engine state.
pub fn reconstruct_scores(records: &[AuditRecord]) -> Scores {
    let mut s = Scores::default();
    for r in records {
        s.finalized += 1;
        if r.y_hat == FinalLabel::Point {
            s.points += 1;
            s.awarded.insert(r.event_id.clone());
        }
    }
    s
}

fn reference_label(v: RefVerdict) -> FinalLabel {
    if v == RefVerdict::PointAwarded {
        FinalLabel::Point
    } else {
        FinalLabel::NoPoint
    }
}

/// Binary entropy of the validity probability at the margin midpoint.
fn validity_entropy(margin: Interval) -> f64 {
    let p = sigmoid(margin.midpoint());
    ProbVector::normalized(vec![p, 1.0 - p]).map_or(0.0, |pv| predictive_entropy(&pv))
}

pub struct MatchEngine {
    cfg: EngineConfig,
    audit: AuditLog,
    recognizer: Option<Recognizer>,
    pending: BTreeMap<String, PendingReview>,
    finalized: BTreeMap<String, FinalDecision>,
    marks: Vec<EventMark>,
    clock: u64,
}

impl MatchEngine {
    pub fn new(cfg: EngineConfig, audit: AuditLog) -> Result<Self> {
        cfg.validate()?;
        if !audit.records().is_empty() {
            return Err(Error::InvalidArgument(
                "audit log already has entries; use MatchEngine::recover".into(),
            ));
        }
        Ok(Self {
            cfg,
            audit,
            recognizer: None,
            pending: BTreeMap::new(),
            finalized: BTreeMap::new(),
            marks: Vec::new(),
            clock: 0,
        })
    }

    pub fn with_recognizer(mut self, r: Recognizer) -> Self {
        self.recognizer = Some(r);
        self
    }

    /// Rebuilds engine state from the original event stream and the audit log
    /// it produced. Events already in the log are not re-finalized; automatic
    /// awards missing from the log (a crash between ingest and append) are.
    pub fn recover(cfg: EngineConfig, audit: AuditLog, events: &[ScoringEvent], recognizer: Option<Recognizer>) -> Result<Self> {
        let logged: BTreeMap<String, AuditRecord> = audit
            .records()
            .iter()
            .map(|r| (r.event_id.clone(), r.clone()))
            .collect();
        if logged.len() != audit.records().len() {
            return Err(Error::StorageFailure("audit log finalizes an event twice".into()));
        }
        let mut engine = Self {
            cfg,
            audit,
            recognizer,
            pending: BTreeMap::new(),
            finalized: BTreeMap::new(),
            marks: Vec::new(),
            clock: 0,
        };
        engine.cfg.validate()?;
        let mut seen = BTreeSet::new();
        for event in events {
            if !seen.insert(event.event_id.clone()) {
                return Err(Error::DuplicateEvent(event.event_id.clone()));
            }
            if let Some(rec) = logged.get(&event.event_id) {
                let a = engine.assess(event)?;
                if a.input_digest != rec.input_digest {
                    return Err(Error::StorageFailure(format!(
                        "event {} does not match its audit digest",
                        event.event_id
                    )));
                }
                engine.note_event(event);
                let decision = FinalDecision {
                    event_id: event.event_id.clone(),
                    seq: rec.seq,
                    t_event: event.t_event,
                    ts_ms: rec.ts_ms,
                    athlete_id: event.annotation.athlete_id.clone(),
                    event: event.annotation.event,
                    label: rec.y_hat,
                    flow: rec.decision_flow,
                    override_by: rec.override_by.clone(),
                    reference: reference_label(event.annotation.ref_verdict),
                    verdict: a.verdict,
                };
                engine.finalized.insert(decision.event_id.clone(), decision);
            } else {
                engine.process(event)?;
            }
        }
        if let Some(orphan) = logged.keys().find(|id| !seen.contains(*id)) {
            return Err(Error::UnknownEvent(orphan.clone()));
        }
        Ok(engine)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn match_id(&self) -> &str {
        self.audit.match_id()
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    /// Verdict, entropy and digest of an event, with no side effects.
    pub fn assess(&self, event: &ScoringEvent) -> Result<Assessment> {
        if event.event_id.is_empty() {
            return Err(Error::SchemaViolation("event_id must be non-empty".into()));
        }
        event.annotation.validate()?;
        let impact = fuse_interval(&event.sensors, &self.cfg.fusion)?;
        let validity = sigmoid_bounds(&MarginBound::new(event.margin.lo(), event.margin.hi())?);
        let verdict = robust_award(&event.event_id, impact, validity, self.cfg.t_w(), self.cfg.tau)?;
        let saliency = match (&self.recognizer, &event.pose) {
            (Some(r), Some(pose)) => {
                let pred = gcn_forward(pose, &r.graph, &r.layers)?;
                Some(joint_heatmap(&pred.saliency, Some(pose.mask()))?)
            }
            _ => None,
        };
        Ok(Assessment {
            verdict,
            entropy_nats: validity_entropy(event.margin),
            input_digest: input_digest(event)?,
            saliency,
        })
    }

    fn note_event(&mut self, event: &ScoringEvent) {
        self.clock = self.clock.max(event.t_event);
        self.marks.push(EventMark {
            t_ms: self.clock,
            event: event.annotation.event,
            athlete_id: event.annotation.athlete_id.clone(),
        });
    }

    /// Scores one event. Automatic awards are finalized and logged at once;
    /// anything else joins the review queue.
    pub fn process(&mut self, event: &ScoringEvent) -> Result<Processed> {
        if event.match_id() != self.match_id() {
            return Err(Error::InvalidArgument(format!(
                "event for match {} sent to match {}",
                event.match_id(),
                self.match_id()
            )));
        }
        if self.pending.contains_key(&event.event_id) || self.finalized.contains_key(&event.event_id) {
            return Err(Error::DuplicateEvent(event.event_id.clone()));
        }
        let assessment = self.assess(event)?;
        self.note_event(event);
        let verdict = assessment.verdict.clone();
        let item = PendingReview {
            event_id: event.event_id.clone(),
            t_event: event.t_event,
            athlete_id: event.annotation.athlete_id.clone(),
            event: event.annotation.event,
            reference: reference_label(event.annotation.ref_verdict),
            assessment,
        };
        if verdict.action == Action::AutoAward {
            let outcome = resolve_gate(&verdict, &Gate::None, None)?;
            let decision = self.finalize(item, outcome)?;
            Ok(Processed {
                verdict,
                finalized: Some(decision),
            })
        } else {
            self.pending.insert(item.event_id.clone(), item);
            Ok(Processed {
                verdict,
                finalized: None,
            })
        }
    }

    fn finalize(&mut self, item: PendingReview, outcome: GateOutcome) -> Result<FinalDecision> {
        let verdict = item.assessment.verdict;
        let entry = AuditEntry {
            ts_ms: self.clock.max(self.audit.last_ts().unwrap_or(0)),
            event_id: item.event_id.clone(),
            input_digest: item.assessment.input_digest,
            y_hat: outcome.label,
            entropy_nats: item.assessment.entropy_nats,
            decision_flow: outcome.flow,
            override_by: outcome.override_by.clone(),
            impact: verdict.impact_bounds,
            validity: verdict.validity_bounds,
        };
        let seq = self.audit.append(&entry)?;
        let decision = FinalDecision {
            event_id: item.event_id,
            seq,
            t_event: item.t_event,
            ts_ms: entry.ts_ms,
            athlete_id: item.athlete_id,
            event: item.event,
            label: outcome.label,
            flow: outcome.flow,
            override_by: outcome.override_by,
            reference: item.reference,
            verdict,
        };
        self.finalized.insert(decision.event_id.clone(), decision.clone());
        Ok(decision)
    }

    /// Applies a reviewer decision to a queued event.
    pub fn review(&mut self, event_id: &str, gate: &Gate, reviewer: Option<&str>) -> Result<FinalDecision> {
        let Some(item) = self.pending.get(event_id) else {
            return Err(if self.finalized.contains_key(event_id) {
                Error::NotPending(event_id.to_string())
            } else {
                Error::UnknownEvent(event_id.to_string())
            });
        };
        let outcome = resolve_gate(&item.assessment.verdict, gate, reviewer)?;
        let item = self.pending.remove(event_id).expect("checked above");
        match self.finalize(item.clone(), outcome) {
            Ok(d) => Ok(d),
            Err(e) => {
                self.pending.insert(item.event_id.clone(), item);
                Err(e)
            }
        }
    }

    /// Closes every queued item without an award, flow `deferred`.
    pub fn defer_pending(&mut self) -> Result<Vec<FinalDecision>> {
        let ids: Vec<String> = self.review_queue().iter().map(|p| p.event_id.clone()).collect();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            let item = self.pending.remove(&id).expect("listed in queue");
            out.push(self.finalize(
                item,
                GateOutcome {
                    label: FinalLabel::NoPoint,
                    flow: DecisionFlow::Deferred,
                    override_by: None,
                },
            )?);
        }
        Ok(out)
    }

    /// Pending items ordered by event time, then id.
    pub fn review_queue(&self) -> Vec<&PendingReview> {
        let mut q: Vec<&PendingReview> = self.pending.values().collect();
        q.sort_by(|a, b| (a.t_event, &a.event_id).cmp(&(b.t_event, &b.event_id)));
        q
    }

    pub fn is_pending(&self, event_id: &str) -> bool {
        self.pending.contains_key(event_id)
    }

    pub fn decision(&self, event_id: &str) -> Option<&FinalDecision> {
        self.finalized.get(event_id)
    }

    /// Final decisions in audit order.
    pub fn decisions(&self) -> Vec<&FinalDecision> {
        let mut d: Vec<&FinalDecision> = self.finalized.values().collect();
        d.sort_by_key(|d| d.seq);
        d
    }

    pub fn scores(&self) -> Scores {
        let mut s = Scores::default();
        for d in self.finalized.values() {
            s.finalized += 1;
            if d.label == FinalLabel::Point {
                s.points += 1;
                s.awarded.insert(d.event_id.clone());
            }
        }
        s
    }

    /// Decision tuples `(t, reference, final, p_lo)` and event marks for analytics.
    pub fn match_log(&self) -> MatchLog {
        let mut log = MatchLog::new(self.match_id());
        for d in self.decisions() {
            let rec = DecisionRecord::new(
                d.ts_ms,
                Some(d.reference.as_str().to_string()),
                d.label.as_str(),
                d.verdict.validity_bounds.lo(),
            )
            .expect("validity bounds lie in [0, 1]");
            log.push_record(rec).expect("audit timestamps are ordered");
        }
        for m in &self.marks {
            log.push_event(m.clone()).expect("marks follow the match clock");
        }
        log
    }
}
