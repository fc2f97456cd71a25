//! Interval-valued fusion of pressure, IMU and vision contact features.
//!
//! Impact is a convex combination of the three normalized features scaled by
//! `s`. Because every weight is non-negative, fusing the lower endpoints gives
//! the lower bound of the impact and fusing the upper endpoints gives the
//! upper bound.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Interval;

const WEIGHT_TOL: f64 = 1e-12;

/// Normalized feature intervals for one contact, each inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub pressure: Interval,
    pub imu: Interval,
    pub vision: Interval,
}

impl SensorReading {
    pub fn new(pressure: Interval, imu: Interval, vision: Interval) -> Result<Self> {
        let r = Self { pressure, imu, vision };
        r.validate()?;
        Ok(r)
    }

    /// Shorthand taking `(lo, hi)` pairs.
    pub fn from_bounds(pressure: (f64, f64), imu: (f64, f64), vision: (f64, f64)) -> Result<Self> {
        Self::new(
            Interval::new(pressure.0, pressure.1)?,
            Interval::new(imu.0, imu.1)?,
            Interval::new(vision.0, vision.1)?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, iv) in [("pressure", self.pressure), ("imu", self.imu), ("vision", self.vision)] {
            if !iv.is_unit() {
                return Err(Error::InvalidArgument(format!(
                    "{name} interval {iv} is not inside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn lower(&self) -> [f64; 3] {
        [self.pressure.lo(), self.imu.lo(), self.vision.lo()]
    }

    pub fn upper(&self) -> [f64; 3] {
        [self.pressure.hi(), self.imu.hi(), self.vision.hi()]
    }
}

/// Affine map from raw sensor units to `[0, 1]` plus a symmetric drift half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorCalibration {
    pub gain: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub drift: f64,
}

impl Default for SensorCalibration {
    fn default() -> Self {
        Self {
            gain: 1.0,
            offset: 0.0,
            drift: 0.0,
        }
    }
}

impl SensorCalibration {
    /// Normalized interval for a raw value, clamped to `[0, 1]`.
    pub fn apply(&self, raw: f64) -> Result<Interval> {
        if !raw.is_finite() {
            return Err(Error::InvalidArgument(format!("raw sensor value {raw} is not finite")));
        }
        let x = self.gain * raw + self.offset;
        Interval::new(
            (x - self.drift).clamp(0.0, 1.0),
            (x + self.drift).clamp(0.0, 1.0),
        )
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.gain.is_finite() && self.offset.is_finite()) {
            return Err(Error::ConfigInvalid(format!("{name} calibration is not finite")));
        }
        if !(self.drift.is_finite() && self.drift >= 0.0) {
            return Err(Error::ConfigInvalid(format!("{name} drift must be >= 0")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationSet {
    #[serde(default)]
    pub pressure: SensorCalibration,
    #[serde(default)]
    pub imu: SensorCalibration,
    #[serde(default)]
    pub vision: SensorCalibration,
}

impl CalibrationSet {
    /// Maps raw `(pressure, imu, vision)` values to a [`SensorReading`].
    pub fn calibrate(&self, raw: [f64; 3]) -> Result<SensorReading> {
        SensorReading::new(
            self.pressure.apply(raw[0])?,
            self.imu.apply(raw[1])?,
            self.vision.apply(raw[2])?,
        )
    }
}

/// Fusion weights, impact scale and per-division impact thresholds.
///
/// TOML layout:
///
/// ```toml
/// alpha_p = 0.5
/// alpha_i = 0.3
/// alpha_v = 0.2
/// scale_s = 100.0
///
/// [thresholds]
/// "senior-m-68" = 65.0
///
/// [calibration.pressure]
/// gain = 0.01
/// drift = 0.02
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub alpha_p: f64,
    pub alpha_i: f64,
    pub alpha_v: f64,
    pub scale_s: f64,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub calibration: CalibrationSet,
}

impl FusionConfig {
    pub fn new(alpha: [f64; 3], scale_s: f64) -> Result<Self> {
        let cfg = Self {
            alpha_p: alpha[0],
            alpha_i: alpha[1],
            alpha_v: alpha[2],
            scale_s,
            thresholds: BTreeMap::new(),
            calibration: CalibrationSet::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_threshold(mut self, division: impl Into<String>, t_w: f64) -> Result<Self> {
        self.thresholds.insert(division.into(), t_w);
        self.validate()?;
        Ok(self)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: FusionConfig =
            toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn alphas(&self) -> [f64; 3] {
        [self.alpha_p, self.alpha_i, self.alpha_v]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.alphas();
        if a.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::ConfigInvalid(format!("fusion weights {a:?} must be >= 0")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::ConfigInvalid(format!("fusion weights sum to {sum}, not 1")));
        }
        if !(self.scale_s.is_finite() && self.scale_s > 0.0) {
            return Err(Error::ConfigInvalid(format!("scale {} must be > 0", self.scale_s)));
        }
        if let Some((k, t)) = self.thresholds.iter().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::ConfigInvalid(format!("threshold {t} for division {k} must be > 0")));
        }
        self.calibration.pressure.validate("pressure")?;
        self.calibration.imu.validate("imu")?;
        self.calibration.vision.validate("vision")?;
        Ok(())
    }

    /// Impact threshold `T_w` for a division key.
    pub fn threshold(&self, division: &str) -> Option<f64> {
        self.thresholds.get(division).copied()
    }
}

/// Point impact `s * (a_p x_p + a_i x_i + a_v x_v)`.
pub fn fuse_point(x: [f64; 3], cfg: &FusionConfig) -> Result<f64> {
    cfg.validate()?;
    fuse_unchecked(x, cfg)
}

fn fuse_unchecked(x: [f64; 3], cfg: &FusionConfig) -> Result<f64> {
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("feature {bad} outside [0, 1]")));
    }
    let a = cfg.alphas();
    Ok(cfg.scale_s * (a[0] * x[0] + a[1] * x[1] + a[2] * x[2]))
}

/// Impact bounds `[I_lo, I_hi]` for interval features.
pub fn fuse_interval(r: &SensorReading, cfg: &FusionConfig) -> Result<Interval> {
    cfg.validate()?;
    r.validate()?;
    let lo = fuse_unchecked(r.lower(), cfg)?;
    let hi = fuse_unchecked(r.upper(), cfg)?;
    Interval::new(lo, hi)
}
