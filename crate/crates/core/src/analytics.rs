//! Officiating and athlete metrics.
//!
//! Everything here is a pure function of its inputs. Times are integer
//! milliseconds unless a name says otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecisionRecord, EventType, MatchLog, ProbVector};

/// Gaps below this are treated as equal to the disparity threshold.
pub const DISPARITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub deltas_ms: Vec<u64>,
    pub mean_ms: f64,
}

/// Pairwise `t_score - t_kick` and their mean.
pub fn scoring_latency(kicks_ms: &[u64], scores_ms: &[u64]) -> Result<LatencyReport> {
    if kicks_ms.len() != scores_ms.len() {
        return Err(Error::LengthMismatch {
            left: kicks_ms.len(),
            right: scores_ms.len(),
        });
    }
    if kicks_ms.is_empty() {
        return Err(Error::EmptyInput("latency pairs"));
    }
    let deltas_ms = kicks_ms
        .iter()
        .zip(scores_ms)
        .enumerate()
        .map(|(index, (k, s))| s.checked_sub(*k).ok_or(Error::NegativeLatency { index }))
        .collect::<Result<Vec<u64>>>()?;
    let mean_ms = deltas_ms.iter().map(|&d| d as f64).sum::<f64>() / deltas_ms.len() as f64;
    Ok(LatencyReport { deltas_ms, mean_ms })
}

/// Fraction of pairs whose labels agree.
pub fn agreement_rate<T: PartialEq>(pairs: &[(T, T)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("label pairs"));
    }
    Ok(pairs.iter().filter(|(a, b)| a == b).count() as f64 / pairs.len() as f64)
}

/// Prediction accuracy against ground truth; same computation as [`agreement_rate`].
pub fn accuracy<T: PartialEq>(pairs: &[(T, T)]) -> Result<f64> {
    agreement_rate(pairs)
}

/// Cohen's kappa with chance agreement from the product of the two raters' marginals.
pub fn cohens_kappa<T: Ord>(pairs: &[(T, T)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("label pairs"));
    }
    let n = pairs.len() as u128;
    let mut left: BTreeMap<&T, u128> = BTreeMap::new();
    let mut right: BTreeMap<&T, u128> = BTreeMap::new();
    let mut agree = 0u128;
    for (a, b) in pairs {
        *left.entry(a).or_default() += 1;
        *right.entry(b).or_default() += 1;
        agree += u128::from(a == b);
    }
    let chance: u128 = left.iter().map(|(k, a)| a * right.get(k).copied().unwrap_or(0)).sum();
    let nn = n * n;
    if chance == nn {
        return if agree == n {
            Ok(1.0)
        } else {
            Err(Error::DegenerateMarginals {
                observed: agree as f64 / n as f64,
            })
        };
    }
    // (p_o - p_e) / (1 - p_e) scaled by n^2
    Ok(((n * agree) as f64 - chance as f64) / (nn - chance) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 from raw counts. F1 is 0 when precision and recall are both 0.
pub fn classification_scores(tp: u64, fp: u64, fn_: u64) -> Result<ClassificationScores> {
    if tp + fp == 0 {
        return Err(Error::UndefinedScore("precision needs tp + fp > 0"));
    }
    if tp + fn_ == 0 {
        return Err(Error::UndefinedScore("recall needs tp + fn > 0"));
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    let f1 = if precision + recall == 0.0 {
        log::warn!("F1 undefined with zero precision and recall; reporting 0");
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(ClassificationScores { precision, recall, f1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillLevel {
    Novice,
    Intermediate,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillThresholds {
    pub expert: f64,
    pub intermediate: f64,
}

impl Default for SkillThresholds {
    fn default() -> Self {
        Self {
            expert: 0.9,
            intermediate: 0.75,
        }
    }
}

impl SkillThresholds {
    pub fn level(&self, f1: f64) -> SkillLevel {
        if f1 >= self.expert {
            SkillLevel::Expert
        } else if f1 >= self.intermediate {
            SkillLevel::Intermediate
        } else {
            SkillLevel::Novice
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefereeProfile {
    pub referee_id: String,
    pub per_event: BTreeMap<EventType, ClassificationScores>,
    pub mean_latency_ms: Option<f64>,
    pub agreement_history: Vec<f64>,
    pub skill_level: SkillLevel,
}

impl RefereeProfile {
    /// Scores each event type from `(tp, fp, fn)` counts; the skill level
    /// follows the mean F1 over event types with defined scores.
    pub fn build(
        referee_id: impl Into<String>,
        counts: &BTreeMap<EventType, (u64, u64, u64)>,
        latencies_ms: &[u64],
        agreement_history: Vec<f64>,
        thresholds: &SkillThresholds,
    ) -> Result<Self> {
        if agreement_history.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument("agreement history values must lie in [0, 1]".into()));
        }
        let per_event: BTreeMap<EventType, ClassificationScores> = counts
            .iter()
            .filter_map(|(e, &(tp, fp, fn_))| classification_scores(tp, fp, fn_).ok().map(|s| (*e, s)))
            .collect();
        if per_event.is_empty() {
            return Err(Error::UndefinedScore("no event type has defined scores"));
        }
        let mean_f1 = per_event.values().map(|s| s.f1).sum::<f64>() / per_event.len() as f64;
        let mean_latency_ms = (!latencies_ms.is_empty())
            .then(|| latencies_ms.iter().map(|&l| l as f64).sum::<f64>() / latencies_ms.len() as f64);
        Ok(Self {
            referee_id: referee_id.into(),
            per_event,
            mean_latency_ms,
            agreement_history,
            skill_level: thresholds.level(mean_f1),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AthleteProfile {
    pub athlete_id: String,
    pub accuracy: f64,
    pub reaction_time_ms: f64,
    pub technique_variety: f64,
    pub scoring_ratio: f64,
    /// Named markers with no fixed definition; carried through unchanged.
    #[serde(default)]
    pub fatigue_markers: BTreeMap<String, f64>,
}

impl AthleteProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("accuracy", self.accuracy), ("scoring_ratio", self.scoring_ratio)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.reaction_time_ms.is_finite() && self.reaction_time_ms >= 0.0) {
            return Err(Error::InvalidArgument("reaction time must be >= 0".into()));
        }
        if !self.technique_variety.is_finite() || self.fatigue_markers.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("profile values must be finite".into()));
        }
        Ok(())
    }
}

fn relative_drop(before: f64, after: f64, what: &'static str) -> Result<f64> {
    if before == 0.0 {
        return Err(Error::DivisionByZero(what));
    }
    Ok((before - after) / before * 100.0)
}

/// Percent reduction in mean decision time, `(before - after) / before * 100`.
pub fn efficiency_improvement(mu_before: f64, mu_after: f64) -> Result<f64> {
    relative_drop(mu_before, mu_after, "baseline decision time is zero")
}

/// Percent reduction in override rate, `(historic - pilot) / historic * 100`.
pub fn override_reduction(rho_hist: f64, rho_pilot: f64) -> Result<f64> {
    relative_drop(rho_hist, rho_pilot, "historic override rate is zero")
}

/// Sum of squared differences between model and consensus confidences.
pub fn calibration_loss(model_conf: &[f64], consensus_conf: &[f64]) -> Result<f64> {
    if model_conf.len() != consensus_conf.len() {
        return Err(Error::LengthMismatch {
            left: model_conf.len(),
            right: consensus_conf.len(),
        });
    }
    Ok(model_conf.iter().zip(consensus_conf).map(|(p, t)| (p - t).powi(2)).sum())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub athlete_id: Option<String>,
    pub event: Option<EventType>,
}

/// Empirical distribution over the event types that occur, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventDistribution {
    pub types: Vec<EventType>,
    pub probs: ProbVector,
}

impl EventDistribution {
    pub fn get(&self, e: EventType) -> f64 {
        self.types
            .iter()
            .position(|t| *t == e)
            .map_or(0.0, |i| self.probs.as_slice()[i])
    }
}

pub fn event_distribution(log: &MatchLog, filter: &EventFilter) -> Result<EventDistribution> {
    let mut counts: BTreeMap<EventType, u64> = BTreeMap::new();
    for m in log.events() {
        if filter.athlete_id.as_ref().is_some_and(|a| *a != m.athlete_id) {
            continue;
        }
        if filter.event.is_some_and(|e| e != m.event) {
            continue;
        }
        *counts.entry(m.event).or_default() += 1;
    }
    if counts.is_empty() {
        return Err(Error::EmptyInput("no events after filtering"));
    }
    let total: u64 = counts.values().sum();
    let types: Vec<EventType> = EventType::ALL.into_iter().filter(|e| counts.contains_key(e)).collect();
    let probs = types.iter().map(|e| counts[e] as f64 / total as f64).collect();
    Ok(EventDistribution {
        types,
        probs: ProbVector::normalized(probs)?,
    })
}

/// Points per valid attempt; may exceed 1 since some techniques score several points.
pub fn score_efficiency(points: u64, valid_attempts: u64) -> Result<f64> {
    if valid_attempts == 0 {
        return Err(Error::DivisionByZero("no valid attempts"));
    }
    Ok(points as f64 / valid_attempts as f64)
}

pub fn hit_accuracy(valid_hits: u64, total_hits: u64) -> Result<f64> {
    if total_hits == 0 {
        return Err(Error::DivisionByZero("no hits"));
    }
    if valid_hits > total_hits {
        return Err(Error::InvalidArgument(format!(
            "{valid_hits} valid hits out of {total_hits}"
        )));
    }
    Ok(valid_hits as f64 / total_hits as f64)
}

/// Trailing mean over `w` points; the first `w - 1` outputs average the available prefix.
///
/// Means are taken relative to the window's first value, so constant input comes back unchanged.
pub fn moving_average(series: &[f64], w: usize) -> Result<Vec<f64>> {
    if w == 0 {
        return Err(Error::InvalidWindow);
    }
    Ok((0..series.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let win = &series[lo..=i];
            let base = win[0];
            base + win.iter().map(|x| x - base).sum::<f64>() / win.len() as f64
        })
        .collect())
}

/// `exp(-mean(variances))`, in `(0, 1]`.
pub fn consistency_score(joint_variances: &[f64]) -> Result<f64> {
    if joint_variances.is_empty() {
        return Err(Error::EmptyInput("joint variances"));
    }
    if joint_variances.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("variances must be finite and >= 0".into()));
    }
    let mean = joint_variances.iter().sum::<f64>() / joint_variances.len() as f64;
    Ok((-mean).exp())
}

pub fn timing_deviation(t_planned: f64, t_executed: f64) -> Result<f64> {
    if !(t_planned.is_finite() && t_executed.is_finite()) {
        return Err(Error::InvalidArgument("times must be finite".into()));
    }
    Ok((t_planned - t_executed).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGap {
    pub a: String,
    pub b: String,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub gaps: Vec<GroupGap>,
    pub max: f64,
    /// Pairs with a gap at or above the threshold.
    pub flagged: Vec<GroupGap>,
}

/// Pairwise gaps between subgroup mean predictions.
pub fn disparity(group_means: &BTreeMap<String, f64>, delta: f64) -> Result<DisparityReport> {
    if group_means.len() < 2 {
        return Err(Error::InsufficientGroups(group_means.len()));
    }
    if group_means.values().any(|v| !v.is_finite()) || !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidArgument("group means and threshold must be finite".into()));
    }
    let groups: Vec<(&String, &f64)> = group_means.iter().collect();
    let mut gaps = Vec::new();
    for (i, (a, ma)) in groups.iter().enumerate() {
        for (b, mb) in &groups[i + 1..] {
            gaps.push(GroupGap {
                a: (*a).clone(),
                b: (*b).clone(),
                gap: (*ma - *mb).abs(),
            });
        }
    }
    let max = gaps.iter().map(|g| g.gap).fold(0.0, f64::max);
    let flagged = gaps.iter().filter(|g| g.gap >= delta - DISPARITY_TOL).cloned().collect();
    Ok(DisparityReport { gaps, max, flagged })
}

/// A reviewed clip for referee education.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clip {
    pub clip_id: String,
    pub y: String,
    pub y_hat: String,
    pub max_prob: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipPartition {
    pub correct: BTreeSet<String>,
    pub error: BTreeSet<String>,
}

pub fn partition_decisions(clips: &[Clip]) -> ClipPartition {
    let mut p = ClipPartition::default();
    for c in clips {
        if c.y == c.y_hat {
            p.correct.insert(c.clip_id.clone());
        } else {
            p.error.insert(c.clip_id.clone());
        }
    }
    p
}

/// Clips whose top class probability is below `tau`.
pub fn select_borderline(clips: &[Clip], tau: f64) -> BTreeSet<String> {
    clips.iter().filter(|c| c.max_prob < tau).map(|c| c.clip_id.clone()).collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Decision tuples as CSV with header `t_ms,y_true,y_hat,confidence`.
pub fn decisions_csv(records: &[DecisionRecord]) -> String {
    let mut out = String::from("t_ms,y_true,y_hat,confidence\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.t_ms,
            csv_field(r.y_true.as_deref().unwrap_or("")),
            csv_field(&r.y_hat),
            r.confidence
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EventMark;
    use proptest::prelude::*;

    #[test]
    fn latency_examples() {
        let r = scoring_latency(&[22_500, 55_300, 89_000], &[25_000, 58_200, 91_100]).unwrap();
        assert_eq!(r.deltas_ms, [2500, 2900, 2100]);
        assert_eq!(r.mean_ms, 2500.0);
        let r = scoring_latency(&[5, 6], &[5, 6]).unwrap();
        assert_eq!(r.mean_ms, 0.0);
        assert_eq!(scoring_latency(&[0], &[300]).unwrap().mean_ms, 300.0);
        assert_eq!(scoring_latency(&[1, 2], &[3]), Err(Error::LengthMismatch { left: 2, right: 1 }));
        assert_eq!(scoring_latency(&[0, 10], &[5, 9]), Err(Error::NegativeLatency { index: 1 }));
    }

    #[test]
    fn agreement_examples() {
        let pairs: Vec<(u8, u8)> = (0..30).map(|i| (1, if i < 26 { 1 } else { 0 })).collect();
        assert!((agreement_rate(&pairs).unwrap() - 0.86667).abs() < 1e-5);
        assert_eq!(agreement_rate(&[(1, 1), (2, 2)]).unwrap(), 1.0);
        assert_eq!(agreement_rate(&[(1, 2), (2, 1)]).unwrap(), 0.0);
        assert!(agreement_rate::<u8>(&[]).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[("a", "a"), ("b", "b"), ("a", "a")]).unwrap(), 1.0);
        let k = cohens_kappa(&[("a", "x"), ("b", "x"), ("a", "x"), ("b", "x")]).unwrap();
        assert_eq!(k, 0.0);
        assert_eq!(cohens_kappa(&[("a", "a"), ("a", "a")]).unwrap(), 1.0);
        assert!(cohens_kappa::<u8>(&[]).is_err());
    }

    #[test]
    fn classification_examples() {
        let s = classification_scores(10, 0, 0).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        let s = classification_scores(5, 5, 5).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        let s = classification_scores(0, 5, 5).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(matches!(classification_scores(0, 0, 3), Err(Error::UndefinedScore(_))));
        assert!(matches!(classification_scores(0, 3, 0), Err(Error::UndefinedScore(_))));
        let t = SkillThresholds::default();
        assert_eq!(t.level(0.9), SkillLevel::Expert);
        assert_eq!(t.level(0.75), SkillLevel::Intermediate);
        assert_eq!(t.level(0.7499), SkillLevel::Novice);
    }

    #[test]
    fn referee_profile() {
        let counts = BTreeMap::from([
            (EventType::HeadKick, (9, 1, 0)),
            (EventType::Punch, (6, 2, 2)),
            (EventType::Fall, (0, 0, 0)),
        ]);
        let p = RefereeProfile::build("r1", &counts, &[100, 300], vec![0.8], &SkillThresholds::default()).unwrap();
        assert_eq!(p.per_event.len(), 2);
        assert_eq!(p.mean_latency_ms, Some(200.0));
        assert_eq!(p.skill_level, SkillLevel::Intermediate);
    }

    #[test]
    fn pilot_ratios() {
        assert!((efficiency_improvement(89.7, 4.6).unwrap() - 94.87).abs() < 0.1);
        assert!((override_reduction(0.31, 0.18).unwrap() - 41.94).abs() < 0.1);
        assert_eq!(efficiency_improvement(12.5, 12.5).unwrap(), 0.0);
        assert!(matches!(efficiency_improvement(0.0, 1.0), Err(Error::DivisionByZero(_))));
        assert!(matches!(override_reduction(0.0, 1.0), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibration_loss(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_eq!(calibration_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert!((calibration_loss(&[0.9], &[0.8]).unwrap() - 0.01).abs() < 1e-15);
        assert!(calibration_loss(&[0.9], &[]).is_err());
    }

    fn log_with(events: &[(EventType, &str)]) -> MatchLog {
        let mut log = MatchLog::new("m");
        for (i, (e, a)) in events.iter().enumerate() {
            log.push_event(EventMark {
                t_ms: i as u64,
                event: *e,
                athlete_id: a.to_string(),
            })
            .unwrap();
        }
        log
    }

    #[test]
    fn distribution_examples() {
        let log = log_with(&[
            (EventType::HeadKick, "a"),
            (EventType::HeadKick, "a"),
            (EventType::Punch, "b"),
            (EventType::HeadKick, "b"),
        ]);
        let d = event_distribution(&log, &EventFilter::default()).unwrap();
        assert_eq!(d.types, [EventType::HeadKick, EventType::Punch]);
        assert_eq!(d.probs.as_slice(), &[0.75, 0.25]);
        let only_a = EventFilter {
            athlete_id: Some("a".into()),
            event: None,
        };
        assert_eq!(event_distribution(&log, &only_a).unwrap().probs.as_slice(), &[1.0]);
        let kicks = EventFilter {
            athlete_id: None,
            event: Some(EventType::HeadKick),
        };
        assert_eq!(event_distribution(&log, &kicks).unwrap().types, [EventType::HeadKick]);
        assert!(matches!(
            event_distribution(&MatchLog::new("m"), &EventFilter::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(score_efficiency(6, 3).unwrap(), 2.0);
        assert_eq!(score_efficiency(0, 4).unwrap(), 0.0);
        assert!(score_efficiency(1, 0).is_err());
        assert!((hit_accuracy(26, 30).unwrap() - 0.8667).abs() < 1e-4);
        assert!(hit_accuracy(31, 30).is_err());
        assert!(hit_accuracy(0, 0).is_err());
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), [1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&[4.0, 1.0, 7.0], 1).unwrap(), [4.0, 1.0, 7.0]);
        assert_eq!(moving_average(&[], 3).unwrap(), Vec::<f64>::new());
        assert_eq!(moving_average(&[1.0], 0), Err(Error::InvalidWindow));
    }

    #[test]
    fn athlete_examples() {
        assert_eq!(consistency_score(&[0.0, 0.0]).unwrap(), 1.0);
        assert!((consistency_score(&[std::f64::consts::LN_2]).unwrap() - 0.5).abs() < 1e-15);
        assert!(consistency_score(&[-1.0]).is_err());
        assert!((timing_deviation(1.2, 1.5).unwrap() - 0.3).abs() < 1e-12);
        let mut p = AthleteProfile {
            athlete_id: "a".into(),
            accuracy: 0.9,
            reaction_time_ms: 250.0,
            technique_variety: 4.0,
            scoring_ratio: 0.4,
            fatigue_markers: BTreeMap::from([("hr_drift".into(), 0.12)]),
        };
        p.validate().unwrap();
        p.scoring_ratio = 1.5;
        assert!(p.validate().is_err());
    }

    #[test]
    fn disparity_examples() {
        let eq = BTreeMap::from([("a".to_string(), 0.4), ("b".to_string(), 0.4)]);
        let r = disparity(&eq, 0.05).unwrap();
        assert_eq!(r.max, 0.0);
        assert!(r.flagged.is_empty());
        let pilot = BTreeMap::from([("a".to_string(), 0.50), ("b".to_string(), 0.562)]);
        let r = disparity(&pilot, 0.062).unwrap();
        assert!((r.max - 0.062).abs() < 1e-12);
        assert_eq!(r.flagged.len(), 1);
        let three = BTreeMap::from([("a".to_string(), 0.1), ("b".to_string(), 0.2), ("c".to_string(), 0.4)]);
        assert!((disparity(&three, 1.0).unwrap().max - 0.3).abs() < 1e-15);
        assert_eq!(
            disparity(&BTreeMap::from([("a".to_string(), 0.1)]), 0.1),
            Err(Error::InsufficientGroups(1))
        );
    }

    fn clip(id: &str, y: &str, y_hat: &str, p: f64) -> Clip {
        Clip {
            clip_id: id.into(),
            y: y.into(),
            y_hat: y_hat.into(),
            max_prob: p,
        }
    }

    #[test]
    fn clip_partition_examples() {
        let all_right = [clip("1", "a", "a", 0.9), clip("2", "b", "b", 0.8)];
        assert!(partition_decisions(&all_right).error.is_empty());
        let mixed = [
            clip("1", "a", "a", 0.9),
            clip("2", "a", "b", 0.55),
            clip("3", "b", "b", 1.0),
            clip("4", "b", "a", 0.6),
            clip("5", "a", "a", 0.99),
        ];
        let p = partition_decisions(&mixed);
        assert_eq!(p.error, BTreeSet::from(["2".to_string(), "4".to_string()]));
        assert_eq!(p.correct.len(), 3);
        assert_eq!(select_borderline(&mixed, 1.0).len(), 4);
        assert_eq!(select_borderline(&mixed, 0.6), BTreeSet::from(["2".to_string()]));
    }

    #[test]
    fn csv_export() {
        let recs = vec![
            DecisionRecord::new(10, Some("point".into()), "point", 0.75).unwrap(),
            DecisionRecord::new(20, None, "a,b", 0.5).unwrap(),
        ];
        assert_eq!(
            decisions_csv(&recs),
            "t_ms,y_true,y_hat,confidence\n10,point,point,0.75\n20,,\"a,b\",0.5\n"
        );
    }

    proptest! {
        #[test]
        fn agreement_is_permutation_invariant(pairs in proptest::collection::vec((0u8..3, 0u8..3), 1..40), seed in any::<u64>()) {
            let mut shuffled = pairs.clone();
            let n = shuffled.len();
            for i in 0..n {
                let j = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % n as u64) as usize;
                shuffled.swap(i, j);
            }
            prop_assert_eq!(agreement_rate(&pairs).unwrap(), agreement_rate(&shuffled).unwrap());
            prop_assert_eq!(accuracy(&pairs).unwrap(), accuracy(&shuffled).unwrap());
        }

        #[test]
        fn constant_series_is_fixed(c in -1e6f64..1e6, n in 0usize..30, w in 1usize..10) {
            let s = vec![c; n];
            prop_assert_eq!(moving_average(&s, w).unwrap(), s);
        }

        #[test]
        fn consistency_decreases(vars in proptest::collection::vec(0.0f64..5.0, 1..10), idx in 0usize..10, bump in 1e-6f64..1.0) {
            let i = idx % vars.len();
            let mut more = vars.clone();
            more[i] += bump;
            prop_assert!(consistency_score(&more).unwrap() < consistency_score(&vars).unwrap());
        }

        #[test]
        fn disparity_bounds(means in proptest::collection::vec(0.0f64..1.0, 2..6)) {
            let groups: BTreeMap<String, f64> = means.iter().enumerate().map(|(i, m)| (format!("g{i}"), *m)).collect();
            let r = disparity(&groups, 0.5).unwrap();
            let hi = means.iter().cloned().fold(f64::MIN, f64::max);
            let lo = means.iter().cloned().fold(f64::MAX, f64::min);
            prop_assert_eq!(r.max, hi - lo);
            for g in &r.gaps {
                prop_assert!(g.gap <= hi - lo);
            }
        }
    }
}
