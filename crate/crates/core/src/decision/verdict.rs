use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    AutoAward,
    /// Only reachable through a human confirming a non-award.
    NoAward,
    ReviewRequired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Green,
    Yellow,
    Red,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::Green => "green",
            Band::Yellow => "yellow",
            Band::Red => "red",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub event_id: String,
    pub action: Action,
    pub impact_bounds: Interval,
    pub validity_bounds: Interval,
    pub explanation: String,
    pub band: Band,
}

/// Final outcome of a scoring event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalLabel {
    Point,
    NoPoint,
}

impl FinalLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalLabel::Point => "point",
            FinalLabel::NoPoint => "no_point",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "point" => Some(FinalLabel::Point),
            "no_point" => Some(FinalLabel::NoPoint),
            _ => None,
        }
    }
}

impl fmt::Display for FinalLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionFlow {
    AiFinal,
    HumanOverride,
    HumanConfirm,
    /// Closed without a reviewer action, e.g. when a match ends with items still queued.
    Deferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "gate", content = "label")]
pub enum Gate {
    None,
    Confirm,
    Override(FinalLabel),
}

/// Up to four decimals, trailing zeros dropped: `62.1`, `65`, `0.7`.
pub(crate) fn fmt_num(x: f64) -> String {
    let s = format!("{x:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Maximin award rule: award only if the impact lower bound reaches `t_w`
/// and the validity lower bound reaches `tau`. Both comparisons are inclusive.
pub fn robust_award(event_id: &str, impact: Interval, validity: Interval, t_w: f64, tau: f64) -> Result<Verdict> {
    if !validity.is_unit() {
        return Err(Error::InvalidArgument(format!("validity {validity} not inside [0, 1]")));
    }
    if !(t_w.is_finite() && t_w > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold T_w {t_w} must be positive")));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau {tau} outside (0, 1)")));
    }
    let mut failures = Vec::new();
    if impact.lo() < t_w {
        failures.push(format!(
            "impact lower bound {} below threshold {}",
            fmt_num(impact.lo()),
            fmt_num(t_w)
        ));
    }
    if validity.lo() < tau {
        failures.push(format!(
            "validity lower bound {} below threshold {}",
            fmt_num(validity.lo()),
            fmt_num(tau)
        ));
    }
    let (action, explanation) = if failures.is_empty() {
        (
            Action::AutoAward,
            format!(
                "impact {impact:.1} and validity {validity:.3} clear thresholds {} and {}",
                fmt_num(t_w),
                fmt_num(tau)
            ),
        )
    } else {
        (Action::ReviewRequired, failures.join("; "))
    };
    Ok(Verdict {
        event_id: event_id.to_string(),
        action,
        impact_bounds: impact,
        validity_bounds: validity,
        explanation,
        band: confidence_band(validity.lo())?,
    })
}

/// `>= 0.9` green, `[0.7, 0.9)` yellow, below red.
pub fn confidence_band(conf: f64) -> Result<Band> {
    if !(0.0..=1.0).contains(&conf) {
        return Err(Error::InvalidArgument(format!("confidence {conf} outside [0, 1]")));
    }
    Ok(if conf >= 0.9 {
        Band::Green
    } else if conf >= 0.7 {
        Band::Yellow
    } else {
        Band::Red
    })
}

/// Result of passing a verdict through the override gate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub label: FinalLabel,
    pub flow: DecisionFlow,
    pub override_by: Option<String>,
}

/// Selects between the machine verdict and the reviewer's label.
///
/// A confirmed `review_required` verdict stands as not awarded. The reviewer
/// id is recorded for confirmations and overrides.
pub fn resolve_gate(v: &Verdict, gate: &Gate, reviewer: Option<&str>) -> Result<GateOutcome> {
    let ai_label = match v.action {
        Action::AutoAward => FinalLabel::Point,
        Action::NoAward | Action::ReviewRequired => FinalLabel::NoPoint,
    };
    let reviewer = reviewer.map(str::to_string);
    let needs_reviewer = || {
        reviewer
            .clone()
            .filter(|r| !r.is_empty())
            .ok_or_else(|| Error::InvalidArgument("reviewer id required for human decisions".into()))
    };
    Ok(match gate {
        Gate::None => {
            if v.action == Action::ReviewRequired {
                return Err(Error::UnreviewedFinalization(v.event_id.clone()));
            }
            GateOutcome {
                label: ai_label,
                flow: DecisionFlow::AiFinal,
                override_by: None,
            }
        }
        Gate::Confirm => GateOutcome {
            label: ai_label,
            flow: DecisionFlow::HumanConfirm,
            override_by: Some(needs_reviewer()?),
        },
        Gate::Override(label) => GateOutcome {
            label: *label,
            flow: DecisionFlow::HumanOverride,
            override_by: Some(needs_reviewer()?),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credal::{sigmoid, sigmoid_bounds, MarginBound};
    use crate::fusion::{fuse_interval, FusionConfig, SensorReading};
    use proptest::prelude::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    #[test]
    fn worked_example_awards() {
        let v = robust_award("e1", iv(67.0, 75.6), iv(0.721, 0.760), 65.0, 0.70).unwrap();
        assert_eq!(v.action, Action::AutoAward);
        assert!(v.explanation.contains("[67.0,75.6]"), "{}", v.explanation);
        assert!(v.explanation.contains("[0.721,0.760]"), "{}", v.explanation);
        assert_eq!(v.band, Band::Yellow);
    }

    #[test]
    fn borderline_routes_to_review() {
        let v = robust_award("e2", iv(62.1, 69.4), iv(0.71, 0.76), 65.0, 0.70).unwrap();
        assert_eq!(v.action, Action::ReviewRequired);
        assert_eq!(v.explanation, "impact lower bound 62.1 below threshold 65");
    }

    #[test]
    fn both_failures_are_named() {
        let v = robust_award("e", iv(60.0, 70.0), iv(0.5, 0.8), 65.0, 0.7).unwrap();
        assert_eq!(
            v.explanation,
            "impact lower bound 60 below threshold 65; validity lower bound 0.5 below threshold 0.7"
        );
    }

    #[test]
    fn boundary_is_inclusive() {
        let v = robust_award("e", iv(65.0, 65.0), iv(0.7, 0.7), 65.0, 0.7).unwrap();
        assert_eq!(v.action, Action::AutoAward);
    }

    #[test]
    fn preconditions() {
        assert!(robust_award("e", iv(1.0, 2.0), iv(0.5, 1.2), 65.0, 0.7).is_err());
        assert!(robust_award("e", iv(1.0, 2.0), iv(0.5, 0.6), 0.0, 0.7).is_err());
        assert!(robust_award("e", iv(1.0, 2.0), iv(0.5, 0.6), 65.0, 1.0).is_err());
        assert!(robust_award("e", iv(1.0, 2.0), iv(0.5, 0.6), 65.0, 0.0).is_err());
    }

    #[test]
    fn bands() {
        assert_eq!(confidence_band(0.95).unwrap(), Band::Green);
        assert_eq!(confidence_band(0.9).unwrap(), Band::Green);
        assert_eq!(confidence_band(0.7).unwrap(), Band::Yellow);
        assert_eq!(confidence_band(0.6999).unwrap(), Band::Red);
        assert!(confidence_band(1.01).is_err());
        assert!(confidence_band(f64::NAN).is_err());
    }

    #[test]
    fn gate_paths() {
        let award = robust_award("a", iv(67.0, 75.6), iv(0.721, 0.76), 65.0, 0.7).unwrap();
        let review = robust_award("r", iv(62.1, 69.7), iv(0.71, 0.76), 65.0, 0.7).unwrap();
        let g = resolve_gate(&award, &Gate::None, None).unwrap();
        assert_eq!((g.label, g.flow), (FinalLabel::Point, DecisionFlow::AiFinal));
        let g = resolve_gate(&review, &Gate::Override(FinalLabel::NoPoint), Some("jury-1")).unwrap();
        assert_eq!((g.label, g.flow), (FinalLabel::NoPoint, DecisionFlow::HumanOverride));
        assert_eq!(g.override_by.as_deref(), Some("jury-1"));
        let g = resolve_gate(&review, &Gate::Confirm, Some("ref-2")).unwrap();
        assert_eq!((g.label, g.flow), (FinalLabel::NoPoint, DecisionFlow::HumanConfirm));
        assert_eq!(
            resolve_gate(&review, &Gate::None, None),
            Err(Error::UnreviewedFinalization("r".into()))
        );
        assert!(resolve_gate(&review, &Gate::Confirm, None).is_err());
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(62.1), "62.1");
        assert_eq!(fmt_num(62.099999999999994), "62.1");
        assert_eq!(fmt_num(65.0), "65");
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(-0.00001), "0");
        assert_eq!(fmt_num(64.99), "64.99");
    }

    fn arb_reading() -> impl Strategy<Value = [(f64, f64); 3]> {
        let one = (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| (a.min(b), a.max(b)));
        [one.clone(), one.clone(), one]
    }

    proptest! {
        /// Every interior point of an awarded event clears both thresholds.
        #[test]
        fn maximin_soundness(r in arb_reading(), m in (-4.0f64..4.0, -4.0f64..4.0),
                             t_w in 10.0f64..90.0, tau in 0.05f64..0.95,
                             u in proptest::collection::vec(0.0f64..=1.0, 4)) {
            let cfg = FusionConfig::new([0.5, 0.3, 0.2], 100.0).unwrap();
            let reading = SensorReading::from_bounds(r[0], r[1], r[2]).unwrap();
            let (m_lo, m_hi) = (m.0.min(m.1), m.0.max(m.1));
            let impact = fuse_interval(&reading, &cfg).unwrap();
            let validity = sigmoid_bounds(&MarginBound::new(m_lo, m_hi).unwrap());
            let v = robust_award("p", impact, validity, t_w, tau).unwrap();
            if v.action == Action::AutoAward {
                let pick = |(lo, hi): (f64, f64), s: f64| lo + s * (hi - lo);
                let x = [pick(r[0], u[0]), pick(r[1], u[1]), pick(r[2], u[2])];
                let fused = 100.0 * (0.5 * x[0] + 0.3 * x[1] + 0.2 * x[2]);
                prop_assert!(fused >= t_w - 1e-9);
                prop_assert!(sigmoid(pick((m_lo, m_hi), u[3])) >= tau - 1e-12);
            }
        }

        /// Widening the inputs never turns a review into an award.
        #[test]
        fn widening_is_conservative(lo in 0.0f64..100.0, w in 0.0f64..20.0, grow in 0.0f64..20.0,
                                    p in 0.0f64..1.0, pw in 0.0f64..0.3, pgrow in 0.0f64..0.3) {
            let narrow_i = iv(lo, lo + w);
            let wide_i = iv(lo - grow, lo + w + grow);
            let narrow_p = iv(p, (p + pw).min(1.0));
            let wide_p = iv((p - pgrow).max(0.0), (p + pw + pgrow).min(1.0));
            let a = robust_award("n", narrow_i, narrow_p, 50.0, 0.6).unwrap();
            let b = robust_award("w", wide_i, wide_p, 50.0, 0.6).unwrap();
            if a.action == Action::ReviewRequired {
                prop_assert_eq!(b.action, Action::ReviewRequired);
            }
        }
    }
}
