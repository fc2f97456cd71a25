use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// End-to-end budget for capture through overlay, in milliseconds.
pub const LATENCY_BUDGET_MS: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_capture: f64,
    pub t_pose: f64,
    pub t_classify: f64,
    pub t_overlay: f64,
    pub total: f64,
    pub over_budget: bool,
}

/// Stage durations in milliseconds: capture, pose, classify, overlay.
pub fn record_latency(stages: [f64; 4]) -> Result<LatencyBreakdown> {
    if let Some(bad) = stages.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidArgument(format!("stage duration {bad} must be >= 0")));
    }
    let total: f64 = stages.iter().sum();
    Ok(LatencyBreakdown {
        t_capture: stages[0],
        t_pose: stages[1],
        t_classify: stages[2],
        t_overlay: stages[3],
        total,
        over_budget: total >= LATENCY_BUDGET_MS,
    })
}
