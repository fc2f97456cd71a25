//! Skeleton graph with three adjacency partitions: self links, spatial
//! (bone) links within a frame, and temporal links joining each joint to
//! itself in neighbouring frames.
//!
//! Every partition is normalized as `D^-1/2 (A + I) D^-1/2`. When some joints
//! are missing in a frame the normalization is recomputed on the subgraph of
//! valid nodes, so a missing joint behaves exactly as if it were not part of
//! the skeleton.

use crate::error::{Error, Result};
use crate::recognition::matrix::Matrix;

pub const NUM_PARTITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    SelfLink = 0,
    Spatial = 1,
    Temporal = 2,
}

/// 18-keypoint body layout used by common 2D pose estimators.
pub const OPENPOSE_18_EDGES: [(usize, usize); 17] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 4),
    (1, 5),
    (5, 6),
    (6, 7),
    (1, 8),
    (8, 9),
    (9, 10),
    (1, 11),
    (11, 12),
    (12, 13),
    (0, 14),
    (14, 16),
    (0, 15),
    (15, 17),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    joints: usize,
    temporal_window: usize,
    neighbors: Vec<Vec<usize>>,
    partitions: [Matrix; NUM_PARTITIONS],
    normalized: [Matrix; NUM_PARTITIONS],
}

/// Builds the skeleton graph. Self-loops and duplicate edges in the list are ignored.
pub fn build_graph(edges: &[(usize, usize)], joints: usize, temporal_window: usize) -> Result<SkeletonGraph> {
    if joints == 0 {
        return Err(Error::InvalidArgument("skeleton needs at least one joint".into()));
    }
    let mut spatial = Matrix::zeros(joints, joints);
    for &(a, b) in edges {
        if a >= joints || b >= joints {
            return Err(Error::InvalidEdge(a, b, joints));
        }
        if a != b {
            spatial.set(a, b, 1.0);
            spatial.set(b, a, 1.0);
        }
    }
    let neighbors = (0..joints)
        .map(|i| (0..joints).filter(|&j| spatial.get(i, j) != 0.0).collect())
        .collect();
    let partitions = [Matrix::identity(joints), spatial, Matrix::identity(joints)];
    let normalized = [
        sym_normalize(&partitions[0]),
        sym_normalize(&partitions[1]),
        sym_normalize(&partitions[2]),
    ];
    Ok(SkeletonGraph {
        joints,
        temporal_window,
        neighbors,
        partitions,
        normalized,
    })
}

/// `D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
///
/// The self partition has `A = I`, so `A + I = 2I` and the result is `I` again.
pub fn sym_normalize(a: &Matrix) -> Matrix {
    let n = a.rows();
    let self_partition = *a == Matrix::identity(n);
    let mut with_loops = a.clone();
    if !self_partition {
        for i in 0..n {
            with_loops.set(i, i, a.get(i, i) + 1.0);
        }
    } else {
        for i in 0..n {
            with_loops.set(i, i, 2.0);
        }
    }
    let deg: Vec<f64> = (0..n).map(|i| with_loops.row(i).iter().sum()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = with_loops.get(i, j);
            if v != 0.0 {
                out.set(i, j, v / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    out
}

impl SkeletonGraph {
    pub fn joints(&self) -> usize {
        self.joints
    }

    pub fn temporal_window(&self) -> usize {
        self.temporal_window
    }

    pub fn num_partitions(&self) -> usize {
        NUM_PARTITIONS
    }

    /// Raw 0/1 adjacency of a partition.
    pub fn partition(&self, p: Partition) -> &Matrix {
        &self.partitions[p as usize]
    }

    /// Normalized adjacency of a partition with every joint present.
    pub fn normalized(&self, p: Partition) -> &Matrix {
        &self.normalized[p as usize]
    }

    pub fn neighbors(&self, joint: usize) -> &[usize] {
        &self.neighbors[joint]
    }

    /// Sparse rows of the normalized spatial partition restricted to `valid` joints.
    ///
    /// Entry `i` lists `(j, weight)` pairs in increasing `j`; invalid rows are empty.
    pub fn spatial_rows(&self, valid: &[bool]) -> Vec<Vec<(usize, f64)>> {
        let deg: Vec<f64> = (0..self.joints)
            .map(|i| 1.0 + self.neighbors[i].iter().filter(|&&j| valid[j]).count() as f64)
            .collect();
        (0..self.joints)
            .map(|i| {
                if !valid[i] {
                    return Vec::new();
                }
                let mut row: Vec<(usize, f64)> = self.neighbors[i]
                    .iter()
                    .filter(|&&j| valid[j])
                    .map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                    .collect();
                row.push((i, 1.0 / deg[i]));
                row.sort_by_key(|(j, _)| *j);
                row
            })
            .collect()
    }

    /// Sparse rows of the normalized temporal band for one joint, given which
    /// frames hold a valid observation of it.
    pub fn temporal_rows(&self, valid: &[bool]) -> Vec<Vec<(usize, f64)>> {
        temporal_rows(valid, self.temporal_window)
    }
}

pub(crate) fn temporal_rows(valid: &[bool], window: usize) -> Vec<Vec<(usize, f64)>> {
    let frames = valid.len();
    let span = |t: usize| t.saturating_sub(window)..(t + window + 1).min(frames);
    let deg: Vec<f64> = (0..frames)
        .map(|t| span(t).filter(|&u| valid[u]).count() as f64)
        .collect();
    (0..frames)
        .map(|t| {
            if !valid[t] {
                return Vec::new();
            }
            span(t)
                .filter(|&u| valid[u])
                .map(|u| (u, 1.0 / (deg[t] * deg[u]).sqrt()))
                .collect()
        })
        .collect()
}
