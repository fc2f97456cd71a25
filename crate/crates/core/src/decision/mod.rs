//! Verdicts, human review and the audit trail.

pub mod audit;
pub mod engine;
pub mod latency;
pub mod verdict;

pub use audit::{verify_audit, AuditEntry, AuditExport, AuditLog, AuditRecord, AuditTip};
pub use engine::{reconstruct_scores, EngineConfig, FinalDecision, MatchEngine, PendingReview, Processed, Recognizer, Scores};
pub use latency::{record_latency, LatencyBreakdown};
pub use verdict::{confidence_band, resolve_gate, robust_award, Action, Band, DecisionFlow, FinalLabel, Gate, Verdict};
