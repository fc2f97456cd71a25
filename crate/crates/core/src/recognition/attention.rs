//! Single-head self-attention over frame tokens.
//!
//! Each frame's flattened pose goes through a two-layer MLP, a learned
//! positional row is added, and scaled dot-product attention mixes the
//! tokens. The attended tokens are mean-pooled into a linear class head.

use crate::error::{Error, Result};
use crate::model::PoseSequence;
use crate::recognition::gcn::ActionPrediction;
use crate::recognition::matrix::{softmax, Matrix};
use crate::recognition::saliency::attention_to_joint_weights;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    /// `(joints * channels) x hidden`
    pub embed_hidden: Matrix,
    pub embed_hidden_bias: Vec<f64>,
    /// `hidden x d_model`
    pub embed_out: Matrix,
    pub embed_out_bias: Vec<f64>,
    /// `max_frames x d_model`
    pub positional: Matrix,
    /// `d_model x d_k`
    pub query: Matrix,
    /// `d_model x d_k`
    pub key: Matrix,
    /// `d_model x d_v`
    pub value: Matrix,
    /// `d_v x classes`
    pub head: Matrix,
    pub head_bias: Vec<f64>,
}

impl AttentionWeights {
    pub fn input_dim(&self) -> usize {
        self.embed_hidden.rows()
    }

    pub fn max_frames(&self) -> usize {
        self.positional.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.head.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let dim = |expected: usize, found: usize| -> Result<()> {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { expected, found })
            }
        };
        let hidden = self.embed_hidden.cols();
        let d_model = self.embed_out.cols();
        dim(hidden, self.embed_hidden_bias.len())?;
        dim(hidden, self.embed_out.rows())?;
        dim(d_model, self.embed_out_bias.len())?;
        dim(d_model, self.positional.cols())?;
        dim(d_model, self.query.rows())?;
        dim(d_model, self.key.rows())?;
        dim(d_model, self.value.rows())?;
        dim(self.query.cols(), self.key.cols())?;
        dim(self.value.cols(), self.head.rows())?;
        dim(self.head.cols(), self.head_bias.len())?;
        if self.query.cols() == 0 || self.head.cols() == 0 {
            return Err(Error::ShapeMismatch("attention widths must be positive".into()));
        }
        let finite = [
            &self.embed_hidden,
            &self.embed_out,
            &self.positional,
            &self.query,
            &self.key,
            &self.value,
            &self.head,
        ]
        .iter()
        .all(|m| m.is_finite())
            && self
                .embed_hidden_bias
                .iter()
                .chain(&self.embed_out_bias)
                .chain(&self.head_bias)
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("attention weights must be finite".into()));
        }
        Ok(())
    }
}

fn add_bias(mut rows: Matrix, bias: &[f64]) -> Matrix {
    for r in 0..rows.rows() {
        for (c, b) in bias.iter().enumerate() {
            rows.set(r, c, rows.get(r, c) + b);
        }
    }
    rows
}

/// Frame tokens `z_t = MLP(p_t) + e_t`, one row per frame.
pub fn embed_tokens(x: &PoseSequence, w: &AttentionWeights) -> Result<Matrix> {
    w.validate()?;
    let flat = x.joints() * x.channels();
    if flat != w.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: w.input_dim(),
            found: flat,
        });
    }
    if x.frames() > w.max_frames() {
        return Err(Error::DimensionMismatch {
            expected: w.max_frames(),
            found: x.frames(),
        });
    }
    let mut poses = Matrix::zeros(x.frames(), flat);
    for t in 0..x.frames() {
        for j in 0..x.joints() {
            if x.is_valid(t, j) {
                for (c, v) in x.joint(t, j).iter().enumerate() {
                    poses.set(t, j * x.channels() + c, *v);
                }
            }
        }
    }
    let mut hidden = add_bias(poses.matmul(&w.embed_hidden)?, &w.embed_hidden_bias);
    for r in 0..hidden.rows() {
        for c in 0..hidden.cols() {
            hidden.set(r, c, hidden.get(r, c).max(0.0));
        }
    }
    let mut tokens = add_bias(hidden.matmul(&w.embed_out)?, &w.embed_out_bias);
    for t in 0..tokens.rows() {
        for c in 0..tokens.cols() {
            tokens.set(t, c, tokens.get(t, c) + w.positional.get(t, c));
        }
    }
    Ok(tokens)
}

/// `softmax(Q K^T / sqrt(d_k)) V` and the attention matrix itself.
pub fn scaled_dot_product(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<(Matrix, Matrix)> {
    let scale = (q.cols() as f64).sqrt();
    let mut scores = q.matmul(&k.transpose())?;
    for r in 0..scores.rows() {
        let row: Vec<f64> = scores.row(r).iter().map(|s| s / scale).collect();
        for (c, p) in softmax(&row).into_iter().enumerate() {
            scores.set(r, c, p);
        }
    }
    let out = scores.matmul(v)?;
    Ok((out, scores))
}

/// Forward pass returning the prediction and the `frames x frames` attention matrix.
pub fn attention_forward(x: &PoseSequence, w: &AttentionWeights) -> Result<(ActionPrediction, Matrix)> {
    let tokens = embed_tokens(x, w)?;
    let q = tokens.matmul(&w.query)?;
    let k = tokens.matmul(&w.key)?;
    let v = tokens.matmul(&w.value)?;
    let (attended, attn) = scaled_dot_product(&q, &k, &v)?;

    let frame_logits = add_bias(attended.matmul(&w.head)?, &w.head_bias);
    let frames = x.frames() as f64;
    let mut logits = vec![0.0; w.num_classes()];
    for t in 0..frame_logits.rows() {
        for (l, v) in logits.iter_mut().zip(frame_logits.row(t)) {
            *l += v;
        }
    }
    logits.iter_mut().for_each(|l| *l /= frames);
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFiniteActivation { layer: 0 });
    }

    let mut saliency = attention_to_joint_weights(&attn, x.joints())?;
    for t in 0..x.frames() {
        for j in 0..x.joints() {
            if !x.is_valid(t, j) {
                saliency.set(j, t, 0.0);
            }
        }
    }
    let per_frame = (0..frame_logits.rows())
        .map(|t| Some(frame_logits.row(t).to_vec()))
        .collect();
    let pred = ActionPrediction::from_frame_logits(logits, per_frame, saliency)?;
    Ok((pred, attn))
}
