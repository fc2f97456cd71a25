//! Impairment-class assignment with review flags.
//!
//! Motor features are taken from joint-angle trajectories: the hip angle is
//! measured at the hip between the shoulder and the knee, the knee angle at
//! the knee between the hip and the ankle. Range of motion is max minus min
//! of the angle over the sequence; the symmetry score compares left and right
//! angle trajectories, which makes it invariant to translation, uniform
//! scaling and rotation of the coordinates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::credal::{self, predictive_entropy};
use crate::error::{Error, Result};
use crate::model::{EnsemblePrediction, Interval, PoseSequence, ProbVector};
use crate::recognition::matrix::softmax;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorFeatures {
    /// Degrees.
    pub rom_hip: f64,
    /// Degrees.
    pub rom_knee: f64,
    pub symmetry_score: f64,
    /// Seconds.
    pub impact_delay: f64,
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl MotorFeatures {
    pub fn validate(&self) -> Result<()> {
        for (name, rom) in [("rom_hip", self.rom_hip), ("rom_knee", self.rom_knee)] {
            if !(0.0..=360.0).contains(&rom) {
                return Err(Error::InvalidArgument(format!("{name} {rom} outside [0, 360]")));
            }
        }
        if !(0.0..=1.0).contains(&self.symmetry_score) {
            return Err(Error::InvalidArgument(format!(
                "symmetry_score {} outside [0, 1]",
                self.symmetry_score
            )));
        }
        if !(self.impact_delay.is_finite() && self.impact_delay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "impact_delay {} must be >= 0",
                self.impact_delay
            )));
        }
        if self.extra.values().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("extra features must be finite".into()));
        }
        Ok(())
    }

    /// `[rom_hip, rom_knee, symmetry_score, impact_delay, extra...]`, extras by name.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![self.rom_hip, self.rom_knee, self.symmetry_score, self.impact_delay];
        v.extend(self.extra.values());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LimbJoints {
    pub shoulder: usize,
    pub hip: usize,
    pub knee: usize,
    pub ankle: usize,
}

impl LimbJoints {
    fn all(&self) -> [(&'static str, usize); 4] {
        [
            ("shoulder", self.shoulder),
            ("hip", self.hip),
            ("knee", self.knee),
            ("ankle", self.ankle),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Where the limb joints live in the skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointMap {
    pub left: LimbJoints,
    pub right: LimbJoints,
    /// Side whose range of motion is reported.
    pub primary: Side,
}

impl JointMap {
    /// Indices for the 18-keypoint layout of
    /// [`OPENPOSE_18_EDGES`](crate::recognition::graph::OPENPOSE_18_EDGES).
    pub fn openpose18(primary: Side) -> Self {
        Self {
            right: LimbJoints {
                shoulder: 2,
                hip: 8,
                knee: 9,
                ankle: 10,
            },
            left: LimbJoints {
                shoulder: 5,
                hip: 11,
                knee: 12,
                ankle: 13,
            },
            primary,
        }
    }
}

/// Angle at `b` between `a - b` and `c - b`, in degrees. `None` if a segment has zero length.
fn angle_deg(a: &[f64], b: &[f64], c: &[f64]) -> Option<f64> {
    let u = [a[0] - b[0], a[1] - b[1]];
    let v = [c[0] - b[0], c[1] - b[1]];
    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    let cos = ((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0);
    Some(cos.acos().to_degrees())
}

struct LimbAngles {
    hip: f64,
    knee: f64,
}

fn limb_angles(x: &PoseSequence, t: usize, limb: &LimbJoints) -> Option<LimbAngles> {
    if limb.all().iter().any(|(_, j)| !x.is_valid(t, *j)) {
        return None;
    }
    let p = |j: usize| x.joint(t, j);
    Some(LimbAngles {
        hip: angle_deg(p(limb.shoulder), p(limb.hip), p(limb.knee))?,
        knee: angle_deg(p(limb.hip), p(limb.knee), p(limb.ankle))?,
    })
}

fn range(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.fold(f64::INFINITY, f64::min);
    max - min
}

/// Motor features of one sequence. Frames where any limb joint is masked or a
/// limb segment collapses to a point are skipped.
pub fn extract_motor_features(x: &PoseSequence, joints: &JointMap, impact_delay_s: f64) -> Result<MotorFeatures> {
    for (side, limb) in [("left", &joints.left), ("right", &joints.right)] {
        for (name, j) in limb.all() {
            if j >= x.joints() {
                return Err(Error::MissingJoint(format!(
                    "{side} {name} index {j} not in a {}-joint skeleton",
                    x.joints()
                )));
            }
        }
    }
    if x.channels() < 2 {
        return Err(Error::ShapeMismatch("motor features need planar coordinates".into()));
    }
    if x.frames() < 2 {
        return Err(Error::DegenerateSequence { frames: x.frames() });
    }
    let frames: Vec<(LimbAngles, LimbAngles)> = (0..x.frames())
        .filter_map(|t| Some((limb_angles(x, t, &joints.left)?, limb_angles(x, t, &joints.right)?)))
        .collect();
    if frames.len() < 2 {
        return Err(Error::DegenerateSequence { frames: frames.len() });
    }
    let primary = |f: &(LimbAngles, LimbAngles)| -> (f64, f64) {
        let l = match joints.primary {
            Side::Left => &f.0,
            Side::Right => &f.1,
        };
        (l.hip, l.knee)
    };
    let rom_hip = range(frames.iter().map(|f| primary(f).0));
    let rom_knee = range(frames.iter().map(|f| primary(f).1));
    let discrepancy = frames
        .iter()
        .map(|(l, r)| ((l.hip - r.hip).abs() + (l.knee - r.knee).abs()) / 360.0)
        .sum::<f64>()
        / frames.len() as f64;
    let features = MotorFeatures {
        rom_hip,
        rom_knee,
        symmetry_score: (1.0 - discrepancy).clamp(0.0, 1.0),
        impact_delay: impact_delay_s,
        extra: BTreeMap::new(),
    };
    features.validate()?;
    Ok(features)
}

/// Softmax over linear class scores `w_k . f`.
pub fn classify_para(features: &[f64], weights: &[Vec<f64>]) -> Result<ProbVector> {
    if weights.is_empty() {
        return Err(Error::EmptyInput("class weights"));
    }
    let scores = weights
        .iter()
        .map(|w| {
            if w.len() != features.len() {
                return Err(Error::DimensionMismatch {
                    expected: w.len(),
                    found: features.len(),
                });
            }
            Ok(w.iter().zip(features).map(|(a, b)| a * b).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    ProbVector::normalized(softmax(&scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagThresholds {
    /// Nats.
    pub entropy_threshold: f64,
    pub theta: f64,
    pub tau: f64,
}

impl FlagThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_threshold.is_finite() && self.entropy_threshold >= 0.0) {
            return Err(Error::InvalidArgument("entropy threshold must be >= 0".into()));
        }
        for (name, v) in [("theta", self.theta), ("tau", self.tau)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} {v} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagReason {
    HighEntropy,
    AmbiguousCredalSet,
    LowConfidence,
    LowUpperBound,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum ParaOutcome {
    Assigned { class: usize },
    FlaggedForReview { reasons: Vec<FlagReason> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaDecision {
    pub probs: ProbVector,
    pub entropy_nats: f64,
    pub credal_set: BTreeSet<usize>,
    pub prob_bounds: Vec<Interval>,
    pub outcome: ParaOutcome,
}

impl ParaDecision {
    pub fn is_flagged(&self) -> bool {
        matches!(self.outcome, ParaOutcome::FlaggedForReview { .. })
    }
}

pub enum ParaInput<'a> {
    Probs(&'a ProbVector),
    Ensemble(&'a EnsemblePrediction),
}

/// Assigns the argmax class only if no uncertainty signal fires; any one of
/// high entropy, a non-singleton credal set, a low top probability or a low
/// top upper bound sends the case to review.
///
/// Ensemble inputs use the member mean and, when `bounds` is `None`, the
/// per-class member range as bounds.
pub fn decide_or_flag(input: ParaInput<'_>, thresholds: &FlagThresholds, bounds: Option<&[Interval]>) -> Result<ParaDecision> {
    thresholds.validate()?;
    let (probs, derived_bounds) = match input {
        ParaInput::Probs(p) => (p.clone(), None),
        ParaInput::Ensemble(e) => {
            let r = credal::analyze(e, thresholds.theta)?;
            (r.mean, Some(r.prob_bounds))
        }
    };
    let explicit = bounds.is_some();
    let prob_bounds: Vec<Interval> = match bounds {
        Some(b) => {
            if b.len() != probs.len() {
                return Err(Error::DimensionMismatch {
                    expected: probs.len(),
                    found: b.len(),
                });
            }
            b.to_vec()
        }
        None => match derived_bounds {
            Some(b) => b,
            None => probs
                .as_slice()
                .iter()
                .map(|&p| Interval::point(p))
                .collect::<Result<_>>()?,
        },
    };
    let entropy_nats = predictive_entropy(&probs);
    let credal_set = credal::credal_set(&probs, thresholds.theta)?;

    let mut reasons = Vec::new();
    if entropy_nats > thresholds.entropy_threshold {
        reasons.push(FlagReason::HighEntropy);
    }
    if credal_set.len() != 1 {
        reasons.push(FlagReason::AmbiguousCredalSet);
    }
    if probs.max() < thresholds.tau {
        reasons.push(FlagReason::LowConfidence);
    }
    if explicit || matches!(input, ParaInput::Ensemble(_)) {
        let top_upper = prob_bounds.iter().map(Interval::hi).fold(f64::NEG_INFINITY, f64::max);
        if top_upper < thresholds.tau {
            reasons.push(FlagReason::LowUpperBound);
        }
    }
    let outcome = if reasons.is_empty() {
        ParaOutcome::Assigned {
            class: probs.argmax(),
        }
    } else {
        ParaOutcome::FlaggedForReview { reasons }
    };
    Ok(ParaDecision {
        probs,
        entropy_nats,
        credal_set,
        prob_bounds,
        outcome,
    })
}

/// Classifier weights, class labels and flag thresholds, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParaConfig {
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub thresholds: FlagThresholds,
}

impl ParaConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ParaConfig = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.weights.len() || self.labels.is_empty() {
            return Err(Error::ConfigInvalid(format!(
                "{} labels for {} weight rows",
                self.labels.len(),
                self.weights.len()
            )));
        }
        let width = self.weights[0].len();
        if self.weights.iter().any(|w| w.len() != width || w.iter().any(|v| !v.is_finite())) {
            return Err(Error::ConfigInvalid("weight rows must be finite and equally long".into()));
        }
        self.thresholds
            .validate()
            .map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn decide(&self, features: &MotorFeatures) -> Result<ParaDecision> {
        features.validate()?;
        let probs = classify_para(&features.to_vector(), &self.weights)?;
        decide_or_flag(ParaInput::Probs(&probs), &self.thresholds, None)
    }

    pub fn label(&self, class: usize) -> Option<&str> {
        self.labels.get(class).map(String::as_str)
    }
}
