//! Match sessions behind the network surface.
//!
//! Each match is owned by one [`MatchEngine`] behind its own mutex, so all
//! mutations of a match are serialized while different matches proceed in
//! parallel. With a data directory, every accepted event is appended to
//! `<data_dir>/<match_id>/events.jsonl` before it is scored and decisions go
//! to `audit.jsonl` next to it; reopening a match replays both.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use ringside_core::analytics::{
    agreement_rate, cohens_kappa, disparity, event_distribution, scoring_latency, EventFilter,
};
use ringside_core::decision::{
    Band, DecisionFlow, EngineConfig, FinalDecision, FinalLabel, Gate, MatchEngine, PendingReview, Verdict,
};
use ringside_core::decision::audit::{AuditExport, AuditLog};
use ringside_core::fusion::FusionConfig;
use ringside_core::{Error as CoreError, EventType, Interval, ScoringEvent};

use crate::error::{GatewayError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Referee,
    Jury,
    Observer,
}

impl Role {
    pub fn can_write(self) -> bool {
        !matches!(self, Role::Observer)
    }
}

/// Gateway settings, loadable from TOML.
///
/// ```toml
/// disparity_delta = 0.05
/// data_dir = "/var/lib/ringside"
///
/// [engine]
/// division = "senior"
/// tau = 0.7
/// [engine.fusion]
/// alpha_p = 0.5
/// alpha_i = 0.3
/// alpha_v = 0.2
/// scale_s = 100.0
/// [engine.fusion.thresholds]
/// senior = 65.0
///
/// [tokens]
/// "s3cret-ref" = "referee"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub engine: EngineConfig,
    #[serde(default)]
    pub data_dir: Option<PathBuf>,
    /// Bearer token to role. Empty means no authentication.
    #[serde(default)]
    pub tokens: BTreeMap<String, Role>,
    #[serde(default = "default_delta")]
    pub disparity_delta: f64,
}

fn default_delta() -> f64 {
    0.05
}

impl GatewayConfig {
    pub fn new(engine: EngineConfig) -> Self {
        Self {
            engine,
            data_dir: None,
            tokens: BTreeMap::new(),
            disparity_delta: default_delta(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::ConfigInvalid(e.to_string()))?;
        cfg.engine.validate()?;
        Ok(cfg)
    }
}

/// Fusion weights `(0.5, 0.3, 0.2)`, scale 100, division `default` at 65, tau 0.7.
pub fn default_engine_config() -> EngineConfig {
    let fusion = FusionConfig::new([0.5, 0.3, 0.2], 100.0)
        .and_then(|f| f.with_threshold("default", 65.0))
        .expect("built-in fusion config is valid");
    EngineConfig::new(fusion, "default", 0.7).expect("built-in engine config is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenInfo {
    pub match_id: String,
    /// True when the session was rebuilt from files on disk.
    pub recovered: bool,
    pub events: usize,
    pub pending: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub event_id: String,
    pub verdict: Verdict,
    /// Audit sequence number when the event was finalized on arrival.
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub match_id: String,
    pub event_id: String,
    pub t_event: u64,
    pub athlete_id: String,
    pub event: EventType,
    pub impact: Interval,
    pub validity: Interval,
    pub entropy_nats: f64,
    pub band: Band,
    pub explanation: String,
    pub saliency: Option<Vec<f64>>,
}

impl ReviewItem {
    fn new(match_id: &str, p: &PendingReview) -> Self {
        let v = &p.assessment.verdict;
        Self {
            match_id: match_id.to_string(),
            event_id: p.event_id.clone(),
            t_event: p.t_event,
            athlete_id: p.athlete_id.clone(),
            event: p.event,
            impact: v.impact_bounds,
            validity: v.validity_bounds,
            entropy_nats: p.assessment.entropy_nats,
            band: v.band,
            explanation: v.explanation.clone(),
            saliency: p.assessment.saliency.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action", content = "label")]
pub enum ReviewAction {
    Confirm,
    Override(FinalLabel),
}

impl ReviewAction {
    fn gate(&self) -> Gate {
        match self {
            ReviewAction::Confirm => Gate::Confirm,
            ReviewAction::Override(l) => Gate::Override(*l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalVerdict {
    pub match_id: String,
    pub decision: FinalDecision,
}

/// Item pushed to feed subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "payload")]
pub enum FeedItem {
    ReviewItem(ReviewItem),
    Verdict(FinalVerdict),
}

impl FeedItem {
    pub fn match_id(&self) -> &str {
        match self {
            FeedItem::ReviewItem(r) => &r.match_id,
            FeedItem::Verdict(v) => &v.match_id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricsFilter {
    #[serde(default)]
    pub athlete_id: Option<String>,
    #[serde(default)]
    pub event: Option<EventType>,
    /// Restrict to one decision layer, e.g. only human overrides.
    #[serde(default)]
    pub flow: Option<DecisionFlow>,
}

impl MetricsFilter {
    fn keeps(&self, d: &FinalDecision) -> bool {
        self.athlete_id.as_ref().is_none_or(|a| *a == d.athlete_id)
            && self.event.is_none_or(|e| e == d.event)
            && self.flow.is_none_or(|f| f == d.flow)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandCounts {
    pub green: usize,
    pub yellow: usize,
    pub red: usize,
}

impl BandCounts {
    fn add(&mut self, b: Band) {
        match b {
            Band::Green => self.green += 1,
            Band::Yellow => self.yellow += 1,
            Band::Red => self.red += 1,
        }
    }
}

/// Dashboard metrics. Metrics that are undefined for the scope are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    /// Match id, or `"global"`.
    pub scope: String,
    pub events: usize,
    pub finalized: usize,
    pub pending: usize,
    pub points: u64,
    pub agreement: Option<f64>,
    pub kappa: Option<f64>,
    pub latency_mean_ms: Option<f64>,
    pub band_counts: BandCounts,
    pub disparity: Option<f64>,
    pub disparity_flagged: Vec<(String, String)>,
    pub event_distribution: BTreeMap<EventType, f64>,
    pub flow_counts: BTreeMap<DecisionFlow, usize>,
}

struct Session {
    engine: MatchEngine,
    events: Vec<ScoringEvent>,
    events_path: Option<PathBuf>,
    open: bool,
}

impl Session {
    fn store_event(&mut self, event: &ScoringEvent) -> Result<()> {
        if let Some(path) = &self.events_path {
            let line = serde_json::to_string(event).map_err(|e| CoreError::StorageFailure(e.to_string()))?;
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(CoreError::from)?;
            writeln!(f, "{line}").map_err(CoreError::from)?;
        }
        self.events.push(event.clone());
        Ok(())
    }
}

pub struct Gateway {
    cfg: GatewayConfig,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    feed: broadcast::Sender<FeedItem>,
}

fn lock(s: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    s.lock().unwrap_or_else(|p| p.into_inner())
}

fn valid_match_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(GatewayError::BadRequest(format!("invalid match id {id:?}")))
    }
}

fn load_events(path: &Path) -> Result<Vec<ScoringEvent>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(CoreError::from)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                GatewayError::Engine(CoreError::ParseError {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
        })
        .collect()
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self> {
        cfg.engine.validate()?;
        if let Some(dir) = &cfg.data_dir {
            fs::create_dir_all(dir).map_err(CoreError::from)?;
        }
        let (feed, _) = broadcast::channel(1024);
        Ok(Self {
            cfg,
            sessions: RwLock::new(BTreeMap::new()),
            feed,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn subscribe(&self) -> broadcast::Receiver<FeedItem> {
        self.feed.subscribe()
    }

    fn publish(&self, item: FeedItem) {
        // no subscribers is fine
        let _ = self.feed.send(item);
    }

    fn session(&self, match_id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).get(match_id).cloned()
    }

    /// Opens a match, rebuilding it from disk if files exist. Reopening an
    /// open match is a no-op.
    pub fn open_match(&self, match_id: &str) -> Result<OpenInfo> {
        valid_match_id(match_id)?;
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = sessions.get(match_id) {
            let mut s = lock(s);
            s.open = true;
            return Ok(OpenInfo {
                match_id: match_id.into(),
                recovered: false,
                events: s.events.len(),
                pending: s.engine.review_queue().len(),
            });
        }
        let (session, recovered) = match &self.cfg.data_dir {
            None => (
                Session {
                    engine: MatchEngine::new(self.cfg.engine.clone(), AuditLog::in_memory(match_id))?,
                    events: Vec::new(),
                    events_path: None,
                    open: true,
                },
                false,
            ),
            Some(dir) => {
                let mdir = dir.join(match_id);
                fs::create_dir_all(&mdir).map_err(CoreError::from)?;
                let audit_path = mdir.join("audit.jsonl");
                let events_path = mdir.join("events.jsonl");
                let existed = audit_path.exists();
                let audit = AuditLog::open_or_create(&audit_path, match_id)?;
                let events = load_events(&events_path)?;
                let engine = MatchEngine::recover(self.cfg.engine.clone(), audit, &events, None)?;
                (
                    Session {
                        engine,
                        events,
                        events_path: Some(events_path),
                        open: true,
                    },
                    existed,
                )
            }
        };
        let info = OpenInfo {
            match_id: match_id.into(),
            recovered,
            events: session.events.len(),
            pending: session.engine.review_queue().len(),
        };
        sessions.insert(match_id.to_string(), Arc::new(Mutex::new(session)));
        Ok(info)
    }

    /// Stops ingestion and closes outstanding reviews as deferred.
    pub fn close_match(&self, match_id: &str) -> Result<Vec<FinalDecision>> {
        let s = self.session(match_id).ok_or_else(|| GatewayError::UnknownMatch(match_id.into()))?;
        let mut s = lock(&s);
        s.open = false;
        let closed = s.engine.defer_pending()?;
        for d in &closed {
            self.publish(FeedItem::Verdict(FinalVerdict {
                match_id: match_id.into(),
                decision: d.clone(),
            }));
        }
        Ok(closed)
    }

    pub fn ingest(&self, event: &ScoringEvent) -> Result<Ack> {
        let match_id = event.match_id().to_string();
        let s = self.session(&match_id).ok_or_else(|| GatewayError::SessionClosed(match_id.clone()))?;
        let mut s = lock(&s);
        if !s.open {
            return Err(GatewayError::SessionClosed(match_id));
        }
        if s.events.iter().any(|e| e.event_id == event.event_id) {
            return Err(GatewayError::ValidationFailed(format!(
                "duplicate event_id {}",
                event.event_id
            )));
        }
        s.engine
            .assess(event)
            .map_err(|e| GatewayError::ValidationFailed(e.to_string()))?;
        s.store_event(event)?;
        let out = s.engine.process(event)?;
        match &out.finalized {
            Some(d) => self.publish(FeedItem::Verdict(FinalVerdict {
                match_id: match_id.clone(),
                decision: d.clone(),
            })),
            None => {
                let item = s
                    .engine
                    .review_queue()
                    .into_iter()
                    .find(|p| p.event_id == event.event_id)
                    .map(|p| ReviewItem::new(&match_id, p))
                    .expect("unfinalized events are queued");
                self.publish(FeedItem::ReviewItem(item));
            }
        }
        Ok(Ack {
            event_id: event.event_id.clone(),
            seq: out.finalized.as_ref().map(|d| d.seq),
            verdict: out.verdict,
        })
    }

    pub fn review_queue(&self, match_id: &str) -> Result<Vec<ReviewItem>> {
        let s = self.session(match_id).ok_or_else(|| GatewayError::UnknownMatch(match_id.into()))?;
        let s = lock(&s);
        Ok(s.engine.review_queue().into_iter().map(|p| ReviewItem::new(match_id, p)).collect())
    }

    fn locate(&self, event_id: &str) -> Option<String> {
        let sessions = self.sessions.read().unwrap_or_else(|p| p.into_inner());
        sessions
            .iter()
            .find(|(_, s)| lock(s).events.iter().any(|e| e.event_id == event_id))
            .map(|(m, _)| m.clone())
    }

    /// Finalizes a pending review. `match_id` may be omitted; the event id is then looked up.
    pub fn submit_override(
        &self,
        match_id: Option<&str>,
        event_id: &str,
        action: &ReviewAction,
        reviewer: &str,
    ) -> Result<FinalVerdict> {
        let match_id = match match_id {
            Some(m) => m.to_string(),
            None => self.locate(event_id).ok_or_else(|| GatewayError::UnknownEvent(event_id.into()))?,
        };
        let s = self.session(&match_id).ok_or_else(|| GatewayError::UnknownMatch(match_id.clone()))?;
        let mut s = lock(&s);
        let decision = s
            .engine
            .review(event_id, &action.gate(), Some(reviewer))
            .map_err(|e| match e {
                CoreError::NotPending(id) => GatewayError::NotPending(id),
                CoreError::UnknownEvent(id) => GatewayError::UnknownEvent(id),
                CoreError::InvalidArgument(m) => GatewayError::ValidationFailed(m),
                other => GatewayError::Engine(other),
            })?;
        let fin = FinalVerdict { match_id, decision };
        self.publish(FeedItem::Verdict(fin.clone()));
        Ok(fin)
    }

    /// Metrics for one match, or across all matches when `match_id` is `None`.
    pub fn metrics_snapshot(&self, match_id: Option<&str>, filter: &MetricsFilter) -> Result<MetricsSnapshot> {
        let sessions: Vec<Arc<Mutex<Session>>> = match match_id {
            Some(m) => vec![self.session(m).ok_or_else(|| GatewayError::UnknownScope(m.into()))?],
            None => self.sessions.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect(),
        };
        let mut decisions: Vec<FinalDecision> = Vec::new();
        let mut pending_bands = Vec::new();
        let mut events = 0;
        let mut marks = ringside_core::model::MatchLog::new(match_id.unwrap_or("global"));
        let mut all_marks = Vec::new();
        for s in &sessions {
            let s = lock(s);
            events += s.events.len();
            decisions.extend(s.engine.decisions().into_iter().filter(|d| filter.keeps(d)).cloned());
            pending_bands.extend(
                s.engine
                    .review_queue()
                    .into_iter()
                    .filter(|p| {
                        filter.athlete_id.as_ref().is_none_or(|a| *a == p.athlete_id)
                            && filter.event.is_none_or(|e| e == p.event)
                            && filter.flow.is_none()
                    })
                    .map(|p| p.band()),
            );
            all_marks.extend(s.engine.match_log().events().iter().cloned());
        }
        all_marks.sort_by_key(|m| m.t_ms);
        for m in all_marks {
            marks.push_event(m).expect("sorted");
        }
        build_snapshot(
            match_id.unwrap_or("global"),
            events,
            &decisions,
            &pending_bands,
            &marks,
            filter,
            self.cfg.disparity_delta,
        )
    }

    pub fn audit_export(&self, match_id: &str) -> Result<AuditExport> {
        let s = self.session(match_id).ok_or_else(|| GatewayError::UnknownMatch(match_id.into()))?;
        let s = lock(&s);
        Ok(s.engine.audit().export())
    }

    pub fn matches(&self) -> Vec<String> {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).keys().cloned().collect()
    }
}

/// Assembles a snapshot from finalized decisions using the analytics functions.
pub fn build_snapshot(
    scope: &str,
    events: usize,
    decisions: &[FinalDecision],
    pending_bands: &[Band],
    marks: &ringside_core::model::MatchLog,
    filter: &MetricsFilter,
    disparity_delta: f64,
) -> Result<MetricsSnapshot> {
    let pairs: Vec<(FinalLabel, FinalLabel)> = decisions.iter().map(|d| (d.reference, d.label)).collect();
    let agreement = agreement_rate(&pairs).ok();
    let kappa = cohens_kappa(&pairs).ok();
    let kicks: Vec<u64> = decisions.iter().map(|d| d.t_event).collect();
    let scored: Vec<u64> = decisions.iter().map(|d| d.ts_ms).collect();
    let latency_mean_ms = scoring_latency(&kicks, &scored).ok().map(|r| r.mean_ms);

    let mut band_counts = BandCounts::default();
    for d in decisions {
        band_counts.add(d.verdict.band);
    }
    for b in pending_bands {
        band_counts.add(*b);
    }

    let mut by_athlete: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for d in decisions {
        let e = by_athlete.entry(d.athlete_id.clone()).or_default();
        e.0 += if d.label == FinalLabel::Point { 1.0 } else { 0.0 };
        e.1 += 1;
    }
    let means: BTreeMap<String, f64> = by_athlete.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let (disparity_max, disparity_flagged) = match disparity(&means, disparity_delta) {
        Ok(r) => (Some(r.max), r.flagged.into_iter().map(|g| (g.a, g.b)).collect()),
        Err(_) => (None, Vec::new()),
    };

    let dist_filter = EventFilter {
        athlete_id: filter.athlete_id.clone(),
        event: filter.event,
    };
    let event_distribution = event_distribution(marks, &dist_filter)
        .map(|d| d.types.iter().copied().zip(d.probs.as_slice().iter().copied()).collect())
        .unwrap_or_default();

    let mut flow_counts = BTreeMap::new();
    for d in decisions {
        *flow_counts.entry(d.flow).or_insert(0) += 1;
    }
    Ok(MetricsSnapshot {
        scope: scope.to_string(),
        events,
        finalized: decisions.len(),
        pending: pending_bands.len(),
        points: decisions.iter().filter(|d| d.label == FinalLabel::Point).count() as u64,
        agreement,
        kappa,
        latency_mean_ms,
        band_counts,
        disparity: disparity_max,
        disparity_flagged,
        event_distribution,
        flow_counts,
    })
}
