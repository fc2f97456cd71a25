mod common;

use common::*;
use ringside_core::recognition::gcn::gcn_embeddings;
use ringside_core::recognition::weights::{decode_gcn, encode_gcn, encode_attention, load_attention, load_gcn};
use ringside_core::recognition::{attention_forward, build_graph, gcn_forward, Matrix};
use ringside_core::PoseSequence;

#[test]
fn gcn_matches_dense_oracle() {
    for seed in 0..100 {
        let f = gcn_fixture(seed);
        let g = build_graph(&f.edges, f.pose.joints(), f.window).unwrap();
        let pred = gcn_forward(&f.pose, &g, &f.layers).unwrap();
        let oracle = gcn_oracle(&f);
        let diff = max_abs_diff(pred.probs.as_slice(), &oracle.probs);
        assert!(diff <= 1e-9, "seed {seed}: probs differ by {diff}");

        let outs = gcn_embeddings(&f.pose, &g, &f.layers).unwrap();
        let last = outs.last().unwrap();
        let dense: Vec<f64> = (0..oracle.last_layer.nrows())
            .flat_map(|r| oracle.last_layer.row(r).iter().copied().collect::<Vec<_>>())
            .collect();
        assert!(max_abs_diff(&last.data, &dense) <= 1e-9, "seed {seed}: embeddings differ");
    }
}

#[test]
fn attention_matches_dense_oracle() {
    for seed in 0..100 {
        let f = attention_fixture(seed);
        let (pred, attn) = attention_forward(&f.pose, &f.weights).unwrap();
        let oracle = attention_oracle(&f);
        assert!(max_abs_diff(pred.probs.as_slice(), &oracle.probs) <= 1e-9, "seed {seed}");
        let dense: Vec<f64> = (0..oracle.attn.nrows())
            .flat_map(|r| oracle.attn.row(r).iter().copied().collect::<Vec<_>>())
            .collect();
        assert!(max_abs_diff(attn.data(), &dense) <= 1e-9, "seed {seed}: attention differs");
        for r in 0..attn.rows() {
            assert!((attn.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

fn permute_pose(p: &PoseSequence, perm: &[usize]) -> PoseSequence {
    // perm[old] = new
    let (t_n, j_n, c_n) = (p.frames(), p.joints(), p.channels());
    let mut data = vec![0.0; p.data().len()];
    let mut mask = vec![false; t_n * j_n];
    for t in 0..t_n {
        for j in 0..j_n {
            let nj = perm[j];
            for c in 0..c_n {
                data[(t * j_n + nj) * c_n + c] = p.coord(t, j, c);
            }
            mask[t * j_n + nj] = p.is_valid(t, j);
        }
    }
    PoseSequence::new(t_n, j_n, c_n, data, p.fps()).unwrap().with_mask(mask).unwrap()
}

#[test]
fn gcn_is_permutation_equivariant() {
    for seed in 0..50 {
        let f = gcn_fixture(seed);
        let j_n = f.pose.joints();
        let perm: Vec<usize> = (0..j_n).map(|j| (j * 5 + 3) % j_n).collect();
        let mut seen = perm.clone();
        seen.sort();
        if seen != (0..j_n).collect::<Vec<_>>() {
            continue;
        }
        let g = build_graph(&f.edges, j_n, f.window).unwrap();
        let edges: Vec<(usize, usize)> = f.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let g2 = build_graph(&edges, j_n, f.window).unwrap();
        let a = gcn_forward(&f.pose, &g, &f.layers).unwrap();
        let b = gcn_forward(&permute_pose(&f.pose, &perm), &g2, &f.layers).unwrap();
        assert!(max_abs_diff(a.probs.as_slice(), b.probs.as_slice()) <= 1e-12, "seed {seed}");
        for j in 0..j_n {
            for t in 0..f.pose.frames() {
                assert!((a.saliency.get(j, t) - b.saliency.get(perm[j], t)).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn attention_is_permutation_equivariant() {
    for seed in 0..30 {
        let f = attention_fixture(seed);
        let j_n = f.pose.joints();
        let c_n = f.pose.channels();
        let perm: Vec<usize> = (0..j_n).rev().collect();
        let mut w = f.weights.clone();
        let h = w.embed_hidden.cols();
        let mut rows = vec![0.0; w.embed_hidden.data().len()];
        for j in 0..j_n {
            for c in 0..c_n {
                let old = j * c_n + c;
                let new = perm[j] * c_n + c;
                rows[new * h..(new + 1) * h].copy_from_slice(f.weights.embed_hidden.row(old));
            }
        }
        w.embed_hidden = Matrix::new(j_n * c_n, h, rows).unwrap();
        let (a, _) = attention_forward(&f.pose, &f.weights).unwrap();
        let (b, _) = attention_forward(&permute_pose(&f.pose, &perm), &w).unwrap();
        assert!(max_abs_diff(a.probs.as_slice(), b.probs.as_slice()) <= 1e-12, "seed {seed}");
    }
}

#[test]
fn masked_joint_is_neutral() {
    for seed in 0..40 {
        let f = gcn_fixture(seed);
        let j_n = f.pose.joints();
        let (t_n, c_n) = (f.pose.frames(), f.pose.channels());
        // Append an extra, fully masked joint wired to every other joint.
        let mut data = Vec::new();
        let mut mask = Vec::new();
        for t in 0..t_n {
            for j in 0..j_n {
                data.extend_from_slice(f.pose.joint(t, j));
                mask.push(f.pose.is_valid(t, j));
            }
            data.extend(std::iter::repeat_n(0.0, c_n));
            mask.push(false);
        }
        let bigger = PoseSequence::new(t_n, j_n + 1, c_n, data, 30.0).unwrap().with_mask(mask).unwrap();
        let mut edges = f.edges.clone();
        edges.extend((0..j_n).map(|j| (j, j_n)));
        let g_small = build_graph(&f.edges, j_n, f.window).unwrap();
        let g_big = build_graph(&edges, j_n + 1, f.window).unwrap();
        let a = gcn_forward(&f.pose, &g_small, &f.layers).unwrap();
        let b = gcn_forward(&bigger, &g_big, &f.layers).unwrap();
        assert!(max_abs_diff(a.probs.as_slice(), b.probs.as_slice()) <= 1e-12, "seed {seed}");
        assert!(max_abs_diff(&a.per_frame_scores, &b.per_frame_scores) <= 1e-12);
    }
}

#[test]
fn logit_shift_leaves_probabilities_unchanged() {
    for seed in 0..30 {
        let f = attention_fixture(seed);
        let (a, _) = attention_forward(&f.pose, &f.weights).unwrap();
        let mut shifted = f.weights.clone();
        shifted.head_bias.iter_mut().for_each(|b| *b += 250.0);
        let (b, _) = attention_forward(&f.pose, &shifted).unwrap();
        assert!(max_abs_diff(a.probs.as_slice(), b.probs.as_slice()) <= 1e-12, "seed {seed}");
    }
}

#[test]
fn fixture_files_drive_forward_passes() {
    let dir = tempfile::tempdir().unwrap();
    let f = gcn_fixture(7);
    let path = dir.path().join("gcn.rswf");
    std::fs::write(&path, encode_gcn(&f.layers)).unwrap();
    let loaded = load_gcn(&path).unwrap();
    assert_eq!(loaded, f.layers);
    assert_eq!(decode_gcn(&encode_gcn(&loaded)).unwrap(), loaded);
    let g = build_graph(&f.edges, f.pose.joints(), f.window).unwrap();
    assert_eq!(gcn_forward(&f.pose, &g, &loaded).unwrap(), gcn_forward(&f.pose, &g, &f.layers).unwrap());

    let a = attention_fixture(7);
    let apath = dir.path().join("attn.rswf");
    std::fs::write(&apath, encode_attention(&a.weights)).unwrap();
    assert_eq!(load_attention(&apath).unwrap(), a.weights);
}
