//! Spatial-temporal graph convolution over skeleton sequences.
//!
//! Each layer computes `H' = act(sum_k A_k H W_k)` over the three partitions of
//! [`SkeletonGraph`], where `H` holds one feature row per (frame, joint) node.
//! The last layer's output width is the number of classes; its mean over all
//! valid nodes gives the logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{PoseSequence, ProbVector};
use crate::recognition::graph::{SkeletonGraph, NUM_PARTITIONS};
use crate::recognition::matrix::{softmax, Matrix};
use crate::recognition::saliency::{saliency_gradcam, FeatureMaps};

const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

/// One weight matrix per partition, all `in_dim x out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    partitions: Vec<Matrix>,
    activation: Activation,
}

impl LayerWeights {
    pub fn new(partitions: Vec<Matrix>, activation: Activation) -> Result<Self> {
        let first = partitions
            .first()
            .ok_or(Error::EmptyInput("layer partitions"))?;
        let (rows, cols) = (first.rows(), first.cols());
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeMismatch("layer widths must be positive".into()));
        }
        for w in &partitions {
            if w.rows() != rows || w.cols() != cols {
                return Err(Error::ShapeMismatch(format!(
                    "partition weights {}x{} differ from {rows}x{cols}",
                    w.rows(),
                    w.cols()
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument("layer weights must be finite".into()));
            }
        }
        Ok(Self {
            partitions,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.partitions[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.partitions[0].cols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn partitions(&self) -> &[Matrix] {
        &self.partitions
    }
}

/// Node features stored frame-major: `frames x joints x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub frames: usize,
    pub joints: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl NodeFeatures {
    fn zeros(frames: usize, joints: usize, channels: usize) -> Self {
        Self {
            frames,
            joints,
            channels,
            data: vec![0.0; frames * joints * channels],
        }
    }

    pub fn node(&self, t: usize, j: usize) -> &[f64] {
        let s = (t * self.joints + j) * self.channels;
        &self.data[s..s + self.channels]
    }

    fn node_mut(&mut self, t: usize, j: usize) -> &mut [f64] {
        let s = (t * self.joints + j) * self.channels;
        &mut self.data[s..s + self.channels]
    }

    /// Channel-major maps with joints as rows and frames as columns.
    pub fn to_feature_maps(&self) -> FeatureMaps {
        let mut data = vec![0.0; self.channels * self.joints * self.frames];
        for t in 0..self.frames {
            for j in 0..self.joints {
                for (k, v) in self.node(t, j).iter().enumerate() {
                    data[(k * self.joints + j) * self.frames + t] = *v;
                }
            }
        }
        FeatureMaps::new(self.channels, self.joints, self.frames, data).expect("consistent dims")
    }
}

/// Output of a recognition forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPrediction {
    pub probs: ProbVector,
    pub label: usize,
    pub logits: Vec<f64>,
    /// Class distribution per frame; `None` for frames with no valid joint.
    pub per_frame_probs: Vec<Option<ProbVector>>,
    /// Probability of the predicted label per frame, 0 where undefined.
    pub per_frame_scores: Vec<f64>,
    /// Non-negative `joints x frames` relevance map.
    pub saliency: Matrix,
}

impl ActionPrediction {
    /// Per-frame probability mass on a set of scoring classes.
    pub fn score_trace(&self, scoring_classes: &[usize]) -> Vec<f64> {
        self.per_frame_probs
            .iter()
            .map(|p| match p {
                Some(p) => scoring_classes.iter().filter_map(|&c| p.get(c)).sum(),
                None => 0.0,
            })
            .collect()
    }

    pub(crate) fn from_frame_logits(
        logits: Vec<f64>,
        frame_logits: Vec<Option<Vec<f64>>>,
        saliency: Matrix,
    ) -> Result<Self> {
        let probs = ProbVector::normalized(softmax(&logits))?;
        let label = probs.argmax();
        let per_frame_probs: Vec<Option<ProbVector>> = frame_logits
            .into_iter()
            .map(|l| l.map(|l| ProbVector::normalized(softmax(&l))).transpose())
            .collect::<Result<_>>()?;
        let per_frame_scores = per_frame_probs
            .iter()
            .map(|p| p.as_ref().and_then(|p| p.get(label)).unwrap_or(0.0))
            .collect();
        Ok(Self {
            probs,
            label,
            logits,
            per_frame_probs,
            per_frame_scores,
            saliency,
        })
    }
}

/// Precomputed sparse aggregation rows for one sequence's validity pattern.
struct Aggregation {
    frames: usize,
    joints: usize,
    valid: Vec<bool>,
    /// `spatial[t][i]`: `(j, w)` pairs.
    spatial: Vec<Vec<Vec<(usize, f64)>>>,
    /// `temporal[i][t]`: `(u, w)` pairs.
    temporal: Vec<Vec<Vec<(usize, f64)>>>,
}

impl Aggregation {
    fn new(g: &SkeletonGraph, frames: usize, joints: usize, valid: &[bool]) -> Self {
        let spatial = (0..frames)
            .map(|t| g.spatial_rows(&valid[t * joints..(t + 1) * joints]))
            .collect();
        let temporal = (0..joints)
            .map(|j| {
                let column: Vec<bool> = (0..frames).map(|t| valid[t * joints + j]).collect();
                g.temporal_rows(&column)
            })
            .collect();
        Self {
            frames,
            joints,
            valid: valid.to_vec(),
            spatial,
            temporal,
        }
    }

    fn is_valid(&self, t: usize, j: usize) -> bool {
        self.valid[t * self.joints + j]
    }

    fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Pre-activation `sum_k A_k H W_k` for every node.
    fn pre_activation(&self, h: &NodeFeatures, layer: &LayerWeights) -> NodeFeatures {
        let out_dim = layer.out_dim();
        let projected: Vec<NodeFeatures> = layer
            .partitions()
            .iter()
            .map(|w| {
                let mut p = NodeFeatures::zeros(self.frames, self.joints, out_dim);
                for t in 0..self.frames {
                    for j in 0..self.joints {
                        if self.is_valid(t, j) {
                            p.node_mut(t, j).copy_from_slice(&w.left_mul(h.node(t, j)));
                        }
                    }
                }
                p
            })
            .collect();
        let mut z = NodeFeatures::zeros(self.frames, self.joints, out_dim);
        for t in 0..self.frames {
            for i in 0..self.joints {
                if !self.is_valid(t, i) {
                    continue;
                }
                let acc = z.node_mut(t, i);
                for (a, v) in acc.iter_mut().zip(projected[0].node(t, i)) {
                    *a += v;
                }
                for &(j, w) in &self.spatial[t][i] {
                    for (a, v) in acc.iter_mut().zip(projected[1].node(t, j)) {
                        *a += w * v;
                    }
                }
                for &(u, w) in &self.temporal[i][t] {
                    for (a, v) in acc.iter_mut().zip(projected[2].node(u, i)) {
                        *a += w * v;
                    }
                }
            }
        }
        z
    }

    /// Output nodes reached from input node `(t, j)` with per-partition coefficients.
    fn fan_out(&self, t: usize, j: usize) -> Vec<((usize, usize), [f64; NUM_PARTITIONS])> {
        let mut out: Vec<((usize, usize), [f64; NUM_PARTITIONS])> = Vec::new();
        if !self.is_valid(t, j) {
            return out;
        }
        let mut add = |node: (usize, usize), p: usize, w: f64| {
            if let Some(entry) = out.iter_mut().find(|(n, _)| *n == node) {
                entry.1[p] += w;
            } else {
                let mut c = [0.0; NUM_PARTITIONS];
                c[p] = w;
                out.push((node, c));
            }
        };
        add((t, j), 0, 1.0);
        for i in 0..self.joints {
            for &(src, w) in &self.spatial[t][i] {
                if src == j {
                    add((t, i), 1, w);
                }
            }
        }
        for u in 0..self.frames {
            for &(src, w) in &self.temporal[j][u] {
                if src == t {
                    add((u, j), 2, w);
                }
            }
        }
        out
    }
}

fn input_features(x: &PoseSequence) -> NodeFeatures {
    let mut h = NodeFeatures::zeros(x.frames(), x.joints(), x.channels());
    for t in 0..x.frames() {
        for j in 0..x.joints() {
            if x.is_valid(t, j) {
                h.node_mut(t, j).copy_from_slice(x.joint(t, j));
            }
        }
    }
    h
}

fn check_shapes(x: &PoseSequence, g: &SkeletonGraph, layers: &[LayerWeights]) -> Result<()> {
    if x.joints() != g.joints() {
        return Err(Error::DimensionMismatch {
            expected: g.joints(),
            found: x.joints(),
        });
    }
    let first = layers.first().ok_or(Error::EmptyInput("gcn layers"))?;
    if first.in_dim() != x.channels() {
        return Err(Error::DimensionMismatch {
            expected: first.in_dim(),
            found: x.channels(),
        });
    }
    for pair in layers.windows(2) {
        if pair[0].out_dim() != pair[1].in_dim() {
            return Err(Error::DimensionMismatch {
                expected: pair[0].out_dim(),
                found: pair[1].in_dim(),
            });
        }
    }
    if let Some(l) = layers.iter().find(|l| l.partitions().len() != g.num_partitions()) {
        return Err(Error::DimensionMismatch {
            expected: g.num_partitions(),
            found: l.partitions().len(),
        });
    }
    if !x.mask().iter().any(|&v| v) {
        return Err(Error::InvalidArgument("every joint is masked".into()));
    }
    Ok(())
}

/// Runs the layer stack and returns every layer's output (index 0 is the masked input).
pub fn gcn_embeddings(x: &PoseSequence, g: &SkeletonGraph, layers: &[LayerWeights]) -> Result<Vec<NodeFeatures>> {
    check_shapes(x, g, layers)?;
    let agg = Aggregation::new(g, x.frames(), x.joints(), x.mask());
    let mut outs = vec![input_features(x)];
    for (l, layer) in layers.iter().enumerate() {
        let mut z = agg.pre_activation(outs.last().expect("non-empty"), layer);
        z.data.iter_mut().for_each(|v| *v = layer.activation().apply(*v));
        if z.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteActivation { layer: l });
        }
        outs.push(z);
    }
    Ok(outs)
}

/// Full forward pass: layers, mean pool over valid nodes, softmax.
///
/// The saliency map is Grad-CAM over the input of the last layer, with the
/// gradient of the predicted logit taken by central finite differences.
pub fn gcn_forward(x: &PoseSequence, g: &SkeletonGraph, layers: &[LayerWeights]) -> Result<ActionPrediction> {
    let outs = gcn_embeddings(x, g, layers)?;
    let agg = Aggregation::new(g, x.frames(), x.joints(), x.mask());
    let last = outs.last().expect("non-empty");
    let classes = last.channels;

    let n_valid = agg.valid_count() as f64;
    let mut logits = vec![0.0; classes];
    let mut frame_logits = Vec::with_capacity(x.frames());
    for t in 0..x.frames() {
        let mut acc = vec![0.0; classes];
        let mut count = 0usize;
        for j in 0..x.joints() {
            if agg.is_valid(t, j) {
                for (a, v) in acc.iter_mut().zip(last.node(t, j)) {
                    *a += v;
                }
                count += 1;
            }
        }
        for (l, a) in logits.iter_mut().zip(&acc) {
            *l += a;
        }
        frame_logits.push((count > 0).then(|| acc.iter().map(|a| a / count as f64).collect()));
    }
    logits.iter_mut().for_each(|l| *l /= n_valid);

    let probs = ProbVector::normalized(softmax(&logits))?;
    let label = probs.argmax();
    let feature_input = &outs[outs.len() - 2];
    let last_layer = layers.last().expect("non-empty");
    let grads = logit_gradient(&agg, feature_input, last_layer, label);
    let saliency = saliency_gradcam(&feature_input.to_feature_maps(), &grads.to_feature_maps())?;
    ActionPrediction::from_frame_logits(logits, frame_logits, saliency)
}

/// d(pooled logit `class`)/d(input of `layer`), by central differences.
///
/// A perturbation of one input entry only moves the pre-activations of the
/// nodes it aggregates into, so each difference is evaluated on that fan-out.
fn logit_gradient(agg: &Aggregation, input: &NodeFeatures, layer: &LayerWeights, class: usize) -> NodeFeatures {
    let z = agg.pre_activation(input, layer);
    let act = layer.activation();
    let n_valid = agg.valid_count() as f64;
    let mut grad = NodeFeatures::zeros(input.frames, input.joints, input.channels);
    for t in 0..input.frames {
        for j in 0..input.joints {
            let fan = agg.fan_out(t, j);
            for k in 0..input.channels {
                let mut diff = 0.0;
                for ((u, i), coef) in &fan {
                    let dir: f64 = coef
                        .iter()
                        .zip(layer.partitions())
                        .map(|(c, w)| c * w.get(k, class))
                        .sum();
                    let z0 = z.node(*u, *i)[class];
                    let delta = FD_STEP * dir;
                    diff += act.apply(z0 + delta) - act.apply(z0 - delta);
                }
                grad.node_mut(t, j)[k] = diff / (2.0 * FD_STEP * n_valid);
            }
        }
    }
    grad
}
