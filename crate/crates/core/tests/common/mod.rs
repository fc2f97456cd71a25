//! Test-only oracles and fixture generators.
//!
//! The recognition oracle assembles the full `(T*J) x (T*J)` adjacency of
//! every partition as a dense matrix and runs the layer recurrence with
//! nalgebra, sharing no code with the sparse per-frame implementation.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ringside_core::recognition::{Activation, AttentionWeights, LayerWeights, Matrix};
use ringside_core::PoseSequence;

pub struct GcnFixture {
    pub pose: PoseSequence,
    pub edges: Vec<(usize, usize)>,
    pub window: usize,
    pub layers: Vec<LayerWeights>,
}

pub struct AttentionFixture {
    pub pose: PoseSequence,
    pub weights: AttentionWeights,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_pose(rng: &mut ChaCha8Rng, frames: usize, joints: usize, channels: usize, masked: bool) -> PoseSequence {
    let data = (0..frames * joints * channels).map(|_| rng.random_range(0.0..1.0)).collect();
    let pose = PoseSequence::new(frames, joints, channels, data, 30.0).unwrap();
    if !masked {
        return pose;
    }
    let mut mask: Vec<bool> = (0..frames * joints).map(|_| rng.random_bool(0.8)).collect();
    mask[0] = true;
    pose.with_mask(mask).unwrap()
}

pub fn gcn_fixture(seed: u64) -> GcnFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joints = rng.random_range(1..=6);
    let frames = rng.random_range(1..=8);
    let channels = 2;
    let mut edges = Vec::new();
    for a in 0..joints {
        for b in (a + 1)..joints {
            if rng.random_bool(0.4) {
                edges.push((a, b));
            }
        }
    }
    let window = rng.random_range(0..=2);
    let depth = rng.random_range(1..=3);
    let classes = rng.random_range(2..=4);
    let mut widths = vec![channels];
    for _ in 1..depth {
        widths.push(rng.random_range(2..=5));
    }
    widths.push(classes);
    let layers = (0..depth)
        .map(|l| {
            let act = if l + 1 == depth { Activation::Identity } else { Activation::Relu };
            LayerWeights::new(
                (0..3).map(|_| random_matrix(&mut rng, widths[l], widths[l + 1])).collect(),
                act,
            )
            .unwrap()
        })
        .collect();
    let masked = seed % 2 == 1;
    GcnFixture {
        pose: random_pose(&mut rng, frames, joints, channels, masked),
        edges,
        window,
        layers,
    }
}

pub fn attention_fixture(seed: u64) -> AttentionFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa77e);
    let joints = rng.random_range(1..=6);
    let frames = rng.random_range(1..=8);
    let channels = 2;
    let input = joints * channels;
    let hidden = rng.random_range(2..=6);
    let d_model = rng.random_range(2..=5);
    let d_k = rng.random_range(1..=4);
    let d_v = rng.random_range(1..=4);
    let classes = rng.random_range(2..=4);
    let mut bias = |n: usize| (0..n).map(|_| rng.random_range(-0.5..0.5)).collect::<Vec<f64>>();
    let embed_hidden_bias = bias(hidden);
    let embed_out_bias = bias(d_model);
    let head_bias = bias(classes);
    let weights = AttentionWeights {
        embed_hidden: random_matrix(&mut rng, input, hidden),
        embed_hidden_bias,
        embed_out: random_matrix(&mut rng, hidden, d_model),
        embed_out_bias,
        positional: random_matrix(&mut rng, 8, d_model),
        query: random_matrix(&mut rng, d_model, d_k),
        key: random_matrix(&mut rng, d_model, d_k),
        value: random_matrix(&mut rng, d_model, d_v),
        head: random_matrix(&mut rng, d_v, classes),
        head_bias,
    };
    let masked = seed % 3 == 0;
    AttentionFixture {
        pose: random_pose(&mut rng, frames, joints, channels, masked),
        weights,
    }
}

fn dense(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Symmetric normalization of a 0/1 matrix that already carries its self loops.
fn normalize_with_loops(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let deg: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    DMatrix::from_fn(n, n, |i, j| {
        if a[(i, j)] == 0.0 {
            0.0
        } else {
            a[(i, j)] / (deg[i] * deg[j]).sqrt()
        }
    })
}

/// Dense spatio-temporal adjacency of the three partitions, rows indexed `t*J + j`.
pub fn dense_adjacency(f: &GcnFixture) -> [DMatrix<f64>; 3] {
    let (t_n, j_n) = (f.pose.frames(), f.pose.joints());
    let n = t_n * j_n;
    let idx = |t: usize, j: usize| t * j_n + j;
    let valid = |t: usize, j: usize| f.pose.is_valid(t, j);

    let self_part = DMatrix::from_fn(n, n, |r, c| if r == c && valid(r / j_n, r % j_n) { 1.0 } else { 0.0 });

    let mut spatial = DMatrix::zeros(n, n);
    for t in 0..t_n {
        let mut a = DMatrix::zeros(j_n, j_n);
        for j in 0..j_n {
            if valid(t, j) {
                a[(j, j)] = 1.0;
            }
        }
        for &(x, y) in &f.edges {
            if valid(t, x) && valid(t, y) {
                a[(x, y)] = 1.0;
                a[(y, x)] = 1.0;
            }
        }
        let a = normalize_with_loops(&a);
        for x in 0..j_n {
            for y in 0..j_n {
                spatial[(idx(t, x), idx(t, y))] = a[(x, y)];
            }
        }
    }

    let mut temporal = DMatrix::zeros(n, n);
    for j in 0..j_n {
        let b = DMatrix::from_fn(t_n, t_n, |t, u| {
            if valid(t, j) && valid(u, j) && t.abs_diff(u) <= f.window {
                1.0
            } else {
                0.0
            }
        });
        let b = normalize_with_loops(&b);
        for t in 0..t_n {
            for u in 0..t_n {
                temporal[(idx(t, j), idx(u, j))] = b[(t, u)];
            }
        }
    }
    [self_part, spatial, temporal]
}

pub struct GcnOracle {
    pub probs: Vec<f64>,
    pub last_layer: DMatrix<f64>,
}

pub fn gcn_oracle(f: &GcnFixture) -> GcnOracle {
    let (t_n, j_n, c_n) = (f.pose.frames(), f.pose.joints(), f.pose.channels());
    let adj = dense_adjacency(f);
    let mut h = DMatrix::from_fn(t_n * j_n, c_n, |r, c| {
        let (t, j) = (r / j_n, r % j_n);
        if f.pose.is_valid(t, j) {
            f.pose.coord(t, j, c)
        } else {
            0.0
        }
    });
    for layer in &f.layers {
        let mut z = DMatrix::zeros(t_n * j_n, layer.out_dim());
        for (a, w) in adj.iter().zip(layer.partitions()) {
            z += a * &h * dense(w);
        }
        if layer.activation() == Activation::Relu {
            z.apply(|v| *v = v.max(0.0));
        }
        h = z;
    }
    let valid_rows: Vec<usize> = (0..t_n * j_n).filter(|&r| f.pose.is_valid(r / j_n, r % j_n)).collect();
    let logits: Vec<f64> = (0..h.ncols())
        .map(|c| valid_rows.iter().map(|&r| h[(r, c)]).sum::<f64>() / valid_rows.len() as f64)
        .collect();
    GcnOracle {
        probs: naive_softmax(&logits),
        last_layer: h,
    }
}

pub struct AttentionOracle {
    pub probs: Vec<f64>,
    pub attn: DMatrix<f64>,
}

pub fn attention_oracle(f: &AttentionFixture) -> AttentionOracle {
    let w = &f.weights;
    let p = &f.pose;
    let (t_n, j_n, c_n) = (p.frames(), p.joints(), p.channels());
    let poses = DMatrix::from_fn(t_n, j_n * c_n, |t, col| {
        let (j, c) = (col / c_n, col % c_n);
        if p.is_valid(t, j) {
            p.coord(t, j, c)
        } else {
            0.0
        }
    });
    let ones = DMatrix::from_element(t_n, 1, 1.0);
    let row = |v: &[f64]| DMatrix::from_row_slice(1, v.len(), v);
    let mut hidden = &poses * dense(&w.embed_hidden) + &ones * row(&w.embed_hidden_bias);
    hidden.apply(|v| *v = v.max(0.0));
    let pos = dense(&w.positional).rows(0, t_n).into_owned();
    let tokens = &hidden * dense(&w.embed_out) + &ones * row(&w.embed_out_bias) + pos;
    let q = &tokens * dense(&w.query);
    let k = &tokens * dense(&w.key);
    let v = &tokens * dense(&w.value);
    let scores = (&q * k.transpose()) / (w.query.cols() as f64).sqrt();
    let mut attn = DMatrix::zeros(t_n, t_n);
    for r in 0..t_n {
        let sm = naive_softmax(&scores.row(r).iter().copied().collect::<Vec<_>>());
        for c in 0..t_n {
            attn[(r, c)] = sm[c];
        }
    }
    let out = &attn * v;
    let pooled = DMatrix::from_fn(1, out.ncols(), |_, c| out.column(c).sum() / t_n as f64);
    let logits = pooled * dense(&w.head) + row(&w.head_bias);
    AttentionOracle {
        probs: naive_softmax(&logits.iter().copied().collect::<Vec<_>>()),
        attn,
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
