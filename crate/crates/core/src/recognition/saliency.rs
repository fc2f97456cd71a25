//! Grad-CAM relevance maps and per-joint heatmaps.

use crate::error::{Error, Result};
use crate::recognition::matrix::Matrix;

/// `channels` stacked `rows x cols` maps, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMaps {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channels} maps of {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn from_maps(maps: &[Matrix]) -> Result<Self> {
        let first = maps.first().ok_or(Error::EmptyInput("feature maps"))?;
        let (rows, cols) = (first.rows(), first.cols());
        let mut data = Vec::with_capacity(maps.len() * rows * cols);
        for m in maps {
            if (m.rows(), m.cols()) != (rows, cols) {
                return Err(Error::ShapeMismatch(format!(
                    "map {}x{} differs from {rows}x{cols}",
                    m.rows(),
                    m.cols()
                )));
            }
            data.extend_from_slice(m.data());
        }
        Self::new(maps.len(), rows, cols, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn map(&self, k: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[k * n..(k + 1) * n]
    }
}

/// `ReLU(sum_k alpha_k A^k)` with `alpha_k` the mean of the k-th gradient map.
pub fn saliency_gradcam(activations: &FeatureMaps, gradients: &FeatureMaps) -> Result<Matrix> {
    if (activations.channels, activations.rows, activations.cols)
        != (gradients.channels, gradients.rows, gradients.cols)
    {
        return Err(Error::ShapeMismatch(format!(
            "activations {}x{}x{} vs gradients {}x{}x{}",
            activations.channels,
            activations.rows,
            activations.cols,
            gradients.channels,
            gradients.rows,
            gradients.cols
        )));
    }
    let area = (activations.rows * activations.cols) as f64;
    let mut heat = vec![0.0; activations.rows * activations.cols];
    for k in 0..activations.channels {
        let alpha = gradients.map(k).iter().sum::<f64>() / area;
        if alpha == 0.0 {
            continue;
        }
        for (h, a) in heat.iter_mut().zip(activations.map(k)) {
            *h += alpha * a;
        }
    }
    heat.iter_mut().for_each(|h| *h = h.max(0.0));
    Matrix::new(activations.rows, activations.cols, heat)
}

/// Time-averaged weight per joint from a `joints x frames` relevance map.
///
/// `valid` is the frame-major validity mask of the pose; masked entries count as zero.
pub fn joint_heatmap(weights: &Matrix, valid: Option<&[bool]>) -> Result<Vec<f64>> {
    let (joints, frames) = (weights.rows(), weights.cols());
    if frames == 0 {
        return Err(Error::ShapeMismatch("heatmap has no frames".into()));
    }
    if let Some(mask) = valid {
        if mask.len() != joints * frames {
            return Err(Error::ShapeMismatch(format!(
                "mask of {} entries for {joints}x{frames} weights",
                mask.len()
            )));
        }
    }
    if weights.data().iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("heatmap weights must be non-negative".into()));
    }
    Ok((0..joints)
        .map(|j| {
            (0..frames)
                .filter(|&t| valid.is_none_or(|m| m[t * joints + j]))
                .map(|t| weights.get(j, t))
                .sum::<f64>()
                / frames as f64
        })
        .collect())
}

/// Spreads frame-level attention (mean attention each frame receives) over the
/// joints, giving a `joints x frames` map.
pub fn attention_to_joint_weights(attn: &Matrix, joints: usize) -> Result<Matrix> {
    if attn.rows() != attn.cols() {
        return Err(Error::ShapeMismatch("attention matrix must be square".into()));
    }
    let frames = attn.cols();
    let mut out = Matrix::zeros(joints, frames);
    for t in 0..frames {
        let received = (0..frames).map(|r| attn.get(r, t)).sum::<f64>() / frames as f64;
        for j in 0..joints {
            out.set(j, t, received);
        }
    }
    Ok(out)
}
