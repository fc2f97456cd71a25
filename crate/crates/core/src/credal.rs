//! Imprecise-probability helpers: ensemble moments, entropy, credal sets and
//! margin-to-probability bounds.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnsemblePrediction, Interval, ProbVector};

/// Summary of an ensemble under a credal membership threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredalResult {
    pub mean: ProbVector,
    pub variance: Vec<f64>,
    pub entropy_nats: f64,
    pub credal_set: BTreeSet<usize>,
    pub prob_bounds: Vec<Interval>,
}

/// Bounds on a linear classifier margin under parameter uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginBound {
    pub margin: Interval,
}

impl MarginBound {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        Ok(Self {
            margin: Interval::new(lo, hi)?,
        })
    }
}

/// Component-wise arithmetic mean of the members.
pub fn ensemble_mean(e: &EnsemblePrediction) -> Result<ProbVector> {
    let k = e.num_classes();
    let m = e.size() as f64;
    let mut mean = vec![0.0; k];
    for member in e.members() {
        if member.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                found: member.len(),
            });
        }
        for (acc, p) in mean.iter_mut().zip(member.as_slice()) {
            *acc += p;
        }
    }
    mean.iter_mut().for_each(|x| *x /= m);
    // The mean of simplex points is on the simplex up to rounding.
    ProbVector::normalized(mean)
}

/// Per-class population variance (divides by `M`).
pub fn ensemble_variance(e: &EnsemblePrediction) -> Result<Vec<f64>> {
    let k = e.num_classes();
    let m = e.size() as f64;
    (0..k)
        .map(|c| {
            let column = class_column(e, c)?;
            let mu = column.iter().sum::<f64>() / m;
            Ok(column.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / m)
        })
        .collect()
}

fn class_column(e: &EnsemblePrediction, class_idx: usize) -> Result<Vec<f64>> {
    e.members()
        .iter()
        .map(|p| {
            p.get(class_idx).ok_or(Error::IndexOutOfRange {
                index: class_idx,
                len: p.len(),
            })
        })
        .collect()
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn predictive_entropy(p: &ProbVector) -> f64 {
    let h: f64 = p
        .as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| -x * x.ln())
        .sum();
    h.clamp(0.0, (p.len() as f64).ln())
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

/// Classes whose probability reaches `theta`. May be empty.
pub fn credal_set(p: &ProbVector, theta: f64) -> Result<BTreeSet<usize>> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta {theta} outside (0, 1]")));
    }
    Ok(p.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &x)| x >= theta)
        .map(|(i, _)| i)
        .collect())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Lower/upper probability induced by a margin interval through the logistic link.
pub fn sigmoid_bounds(m: &MarginBound) -> Interval {
    let lo = sigmoid(m.margin.lo());
    let hi = sigmoid(m.margin.hi());
    Interval::new(lo, hi).expect("sigmoid is monotone and bounded")
}

/// Aleatoric and epistemic parts of the predictive variance for the predicted class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySplit {
    pub aleatoric: f64,
    pub epistemic: f64,
}

impl UncertaintySplit {
    pub fn total(&self) -> f64 {
        self.aleatoric + self.epistemic
    }
}

/// Splits predictive variance into the mean of per-member variances (aleatoric)
/// and the spread of member means (epistemic), both for the argmax class of the
/// ensemble mean.
pub fn uncertainty_decompose(
    e: &EnsemblePrediction,
    aleatoric_vars: Option<&[f64]>,
) -> Result<UncertaintySplit> {
    let aleatoric = match aleatoric_vars {
        Some(v) if v.len() != e.size() => {
            return Err(Error::DimensionMismatch {
                expected: e.size(),
                found: v.len(),
            })
        }
        Some(v) => {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidArgument("aleatoric variances must be >= 0".into()));
            }
            v.iter().sum::<f64>() / v.len() as f64
        }
        None => 0.0,
    };
    let class = ensemble_mean(e)?.argmax();
    let epistemic = ensemble_variance(e)?[class];
    Ok(UncertaintySplit {
        aleatoric,
        epistemic,
    })
}

/// `[min, max]` of one class probability across members.
pub fn confidence_interval(e: &EnsemblePrediction, class_idx: usize) -> Result<Interval> {
    let column = class_column(e, class_idx)?;
    let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Interval::new(lo, hi)
}

/// Full credal summary of an ensemble.
pub fn analyze(e: &EnsemblePrediction, theta: f64) -> Result<CredalResult> {
    let mean = ensemble_mean(e)?;
    let variance = ensemble_variance(e)?;
    let entropy_nats = predictive_entropy(&mean);
    let credal_set = credal_set(&mean, theta)?;
    let prob_bounds = (0..e.num_classes())
        .map(|c| confidence_interval(e, c))
        .collect::<Result<_>>()?;
    Ok(CredalResult {
        mean,
        variance,
        entropy_nats,
        credal_set,
        prob_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn three_member_ensemble() -> EnsemblePrediction {
        EnsemblePrediction::from_rows(vec![
            vec![0.60, 0.25, 0.15],
            vec![0.65, 0.20, 0.15],
            vec![0.50, 0.30, 0.20],
        ])
        .unwrap()
    }

    /// E[f^2] - E[f]^2, evaluated independently of the two-pass implementation.
    fn raw_moment_variance(xs: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n;
        let m1 = xs.iter().sum::<f64>() / n;
        m2 - m1 * m1
    }

    #[test]
    fn mean_examples() {
        let mean = ensemble_mean(&three_member_ensemble()).unwrap();
        let expected = [0.583_333_333_333, 0.25, 0.166_666_666_667];
        for (a, b) in mean.as_slice().iter().zip(expected) {
            assert!((a - b).abs() < 1e-9);
        }
        let single = EnsemblePrediction::from_rows(vec![vec![0.2, 0.8]]).unwrap();
        assert_eq!(ensemble_mean(&single).unwrap().as_slice(), &[0.2, 0.8]);
        let twins = EnsemblePrediction::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(ensemble_mean(&twins).unwrap().as_slice(), &[0.3, 0.7]);
    }

    #[test]
    fn variance_examples() {
        let var = ensemble_variance(&three_member_ensemble()).unwrap();
        assert!((var[0] - 0.003_888_888_888_889).abs() < 1e-12);
        assert!((var[2] - 0.000_555_555_555_556).abs() < 1e-12);
        assert!((var[2] - 0.0006).abs() < 5e-5);
        for (c, v) in var.iter().enumerate() {
            let col: Vec<f64> = three_member_ensemble().members().iter().map(|m| m.as_slice()[c]).collect();
            assert!((v - raw_moment_variance(&col)).abs() < 1e-12);
        }
        let twins = EnsemblePrediction::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        assert_eq!(ensemble_variance(&twins).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn entropy_examples() {
        let h = predictive_entropy(&ProbVector::new(vec![1.0, 0.0, 0.0]).unwrap());
        assert_eq!(h, 0.0);
        let u = predictive_entropy(&ProbVector::uniform(3).unwrap());
        assert!((u - 3f64.ln()).abs() < 1e-12);
        let p = predictive_entropy(&ProbVector::new(vec![0.42, 0.39, 0.19]).unwrap());
        assert!((p - 1.047_116_498_276_891).abs() < 1e-9);
        assert!((nats_to_bits(u) - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn credal_set_examples() {
        let p = ProbVector::new(vec![0.42, 0.39, 0.19]).unwrap();
        assert_eq!(credal_set(&p, 0.35).unwrap(), BTreeSet::from([0, 1]));
        let p = ProbVector::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(credal_set(&p, 0.5).unwrap(), BTreeSet::from([0]));
        let p = ProbVector::new(vec![0.3, 0.3, 0.4]).unwrap();
        assert!(credal_set(&p, 0.5).unwrap().is_empty());
        assert!(credal_set(&p, 0.0).is_err());
        assert!(credal_set(&p, 1.5).is_err());
    }

    #[test]
    fn sigmoid_examples() {
        let b = sigmoid_bounds(&MarginBound::new(0.95, 1.15).unwrap());
        assert!((b.lo() - 0.7211).abs() < 1e-4);
        assert!((b.hi() - 0.7595).abs() < 1e-4);
        let z = sigmoid_bounds(&MarginBound::new(0.0, 0.0).unwrap());
        assert_eq!((z.lo(), z.hi()), (0.5, 0.5));
        let s = sigmoid_bounds(&MarginBound::new(-1.7, 1.7).unwrap());
        assert!((s.lo() + s.hi() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decomposition_examples() {
        let twins = EnsemblePrediction::from_rows(vec![vec![0.3, 0.7], vec![0.3, 0.7]]).unwrap();
        let d = uncertainty_decompose(&twins, None).unwrap();
        assert_eq!((d.aleatoric, d.epistemic), (0.0, 0.0));

        let d = uncertainty_decompose(&three_member_ensemble(), None).unwrap();
        assert_eq!(d.aleatoric, 0.0);
        assert!((d.epistemic - 0.003_888_888_888_889).abs() < 1e-12);

        let d = uncertainty_decompose(&three_member_ensemble(), Some(&[0.01, 0.01, 0.01])).unwrap();
        assert!((d.aleatoric - 0.01).abs() < 1e-15);
        assert!((d.total() - 0.013_888_888_888_889).abs() < 1e-12);
        assert!(matches!(
            uncertainty_decompose(&three_member_ensemble(), Some(&[0.01])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn confidence_interval_examples() {
        let e = three_member_ensemble();
        let c1 = confidence_interval(&e, 0).unwrap();
        assert_eq!((c1.lo(), c1.hi()), (0.50, 0.65));
        let c2 = confidence_interval(&e, 1).unwrap();
        assert_eq!((c2.lo(), c2.hi()), (0.20, 0.30));
        let single = EnsemblePrediction::from_rows(vec![vec![0.2, 0.8]]).unwrap();
        assert_eq!(confidence_interval(&single, 1).unwrap().width(), 0.0);
        assert!(matches!(
            confidence_interval(&e, 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn analyze_bundles_everything() {
        let r = analyze(&three_member_ensemble(), 0.3).unwrap();
        assert_eq!(r.credal_set, BTreeSet::from([0]));
        assert_eq!(r.prob_bounds.len(), 3);
        assert!(r.entropy_nats > 0.0 && r.entropy_nats <= 3f64.ln());
    }

    fn arb_prob(k: usize) -> impl Strategy<Value = ProbVector> {
        proptest::collection::vec(0.0f64..1.0, k).prop_filter_map("zero mass", |w| {
            ProbVector::normalized(w).ok()
        })
    }

    fn arb_ensemble() -> impl Strategy<Value = EnsemblePrediction> {
        (2usize..5).prop_flat_map(|k| {
            proptest::collection::vec(arb_prob(k), 1..6)
                .prop_map(|m| EnsemblePrediction::new(m).unwrap())
        })
    }

    proptest! {
        #[test]
        fn entropy_grows_toward_uniform(p in arb_prob(4), lambda in 0.0f64..=1.0) {
            let u = 0.25;
            let mixed = ProbVector::normalized(
                p.as_slice().iter().map(|x| (1.0 - lambda) * x + lambda * u).collect()).unwrap();
            prop_assert!(predictive_entropy(&mixed) >= predictive_entropy(&p) - 1e-12);
            prop_assert!(predictive_entropy(&p) <= 4f64.ln());
        }

        #[test]
        fn credal_set_shrinks_with_theta(p in arb_prob(5), a in 0.001f64..=1.0, b in 0.001f64..=1.0) {
            let (t1, t2) = (a.min(b), a.max(b));
            let small = credal_set(&p, t2).unwrap();
            let big = credal_set(&p, t1).unwrap();
            prop_assert!(small.is_subset(&big));
        }

        #[test]
        fn sigmoid_bounds_ordered(a in -30.0f64..30.0, b in -30.0f64..30.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            let iv = sigmoid_bounds(&MarginBound::new(lo, hi).unwrap());
            prop_assert!(iv.lo() <= iv.hi());
            prop_assert!(iv.lo() > 0.0 && iv.hi() < 1.0);
        }

        #[test]
        fn zero_variance_iff_equal_members(e in arb_ensemble()) {
            let var = ensemble_variance(&e).unwrap();
            let first = &e.members()[0];
            let all_equal = e.members().iter().all(|m| {
                m.as_slice().iter().zip(first.as_slice()).all(|(a, b)| (a - b).abs() <= 1e-12)
            });
            let zero = var.iter().all(|v| *v <= 1e-24);
            prop_assert_eq!(all_equal, zero);
            prop_assert!(var.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn interval_contains_mean(e in arb_ensemble()) {
            let mean = ensemble_mean(&e).unwrap();
            for c in 0..e.num_classes() {
                let ci = confidence_interval(&e, c).unwrap();
                let m = mean.as_slice()[c];
                prop_assert!(ci.lo() - 1e-12 <= m && m <= ci.hi() + 1e-12);
            }
        }
    }
}
