//! Losses as tape nodes. Batched inputs are `[B, C, T]`; per-item losses
//! are averaged over the batch.

use super::{
    batch_reg_loss, dna_loss_1, dna_loss_2, height_loss, local_joint_loss, lsgan_d_loss,
    lsgan_g_loss, path_displacement_loss, root_alignment_loss, FeatureMap,
};
use crate::keyframe::KeyframeSet;
use crate::nn::{Graph, Tensor, Var};

/// Frame-major copy of channels `c0..c1` of batch item `b`.
pub fn frames_of(t: &Tensor, b: usize, c0: usize, c1: usize) -> Vec<Vec<f64>> {
    let (_, _, n) = t.dims3();
    (0..n)
        .map(|ti| (c0..c1).map(|c| t.at3(b, c, ti)).collect())
        .collect()
}

fn scatter(g: &mut Tensor, b: usize, c0: usize, frame: usize, vals: &[f64], w: f64) {
    for (k, v) in vals.iter().enumerate() {
        let i = g.idx3(b, c0 + k, frame);
        g.data[i] += w * v;
    }
}

pub fn lsgan_d(g: &mut Graph, real: Var, fake: Var) -> Var {
    g.scalar_fn(&[real, fake], |v| {
        let (l, gr, gf) = lsgan_d_loss(&v[0].data, &v[1].data);
        (
            l,
            vec![
                Tensor::new(v[0].shape.clone(), gr).unwrap(),
                Tensor::new(v[1].shape.clone(), gf).unwrap(),
            ],
        )
    })
}

pub fn lsgan_g(g: &mut Graph, fake: Var) -> Var {
    g.scalar_fn(&[fake], |v| {
        let (l, gf) = lsgan_g_loss(&v[0].data);
        (l, vec![Tensor::new(v[0].shape.clone(), gf).unwrap()])
    })
}

pub fn batch_reg(g: &mut Graph, feats: &[Var]) -> Var {
    g.scalar_fn(feats, |v| {
        let maps: Vec<FeatureMap> = v
            .iter()
            .map(|t| {
                let (b, c, n) = t.dims3();
                FeatureMap {
                    data: &t.data,
                    batch: b,
                    channels: c,
                    frames: n,
                }
            })
            .collect();
        let (l, grads) = batch_reg_loss(&maps);
        let grads = grads
            .into_iter()
            .zip(v)
            .map(|(gd, t)| Tensor::new(t.shape.clone(), gd).unwrap())
            .collect();
        (l, grads)
    })
}

/// Non-root joint positions `[B, 3M, N]` against the keyframe poses.
pub fn local_joint(g: &mut Graph, pos: Var, keys: &[KeyframeSet]) -> Var {
    let keys = keys.to_vec();
    g.scalar_fn(&[pos], move |v| {
        let t = v[0];
        let (b, c, _) = t.dims3();
        let mut grad = Tensor::zeros(&t.shape);
        let mut total = 0.0;
        for (bi, k) in keys.iter().enumerate().take(b) {
            let pred: Vec<Vec<f64>> = k
                .indices()
                .iter()
                .map(|&f| (3..c).map(|ci| t.at3(bi, ci, f)).collect())
                .collect();
            let target: Vec<Vec<f64>> = k.poses().iter().map(|p| p[3..].to_vec()).collect();
            let mask: Vec<Vec<bool>> = k.masks().iter().map(|m| m[3..].to_vec()).collect();
            let (l, gr) = local_joint_loss(&pred, &target, &mask);
            total += l / b as f64;
            for (&f, gv) in k.indices().iter().zip(&gr) {
                scatter(&mut grad, bi, 3, f, gv, 1.0 / b as f64);
            }
        }
        (total, vec![grad])
    })
}

/// Root path positions `[B, 3, N]` (`x, y, z`) against keyframe roots; only
/// keyframes with all three root coordinates present count.
pub fn root_alignment(g: &mut Graph, path: Var, keys: &[KeyframeSet]) -> Var {
    let keys = keys.to_vec();
    g.scalar_fn(&[path], move |v| {
        let t = v[0];
        let b = t.dims3().0;
        let mut grad = Tensor::zeros(&t.shape);
        let mut total = 0.0;
        for (bi, k) in keys.iter().enumerate().take(b) {
            let used: Vec<usize> = (0..k.len())
                .filter(|&i| k.masks()[i][..3].iter().all(|&m| m))
                .collect();
            let frames: Vec<usize> = used.iter().map(|&i| k.indices()[i]).collect();
            let pred: Vec<[f64; 3]> = frames
                .iter()
                .map(|&f| [0, 1, 2].map(|c| t.at3(bi, c, f)))
                .collect();
            let target: Vec<[f64; 3]> = used
                .iter()
                .map(|&i| [0, 1, 2].map(|c| k.poses()[i][c]))
                .collect();
            let (l, gr) = root_alignment_loss(&pred, &target);
            total += l / b as f64;
            for (&f, gv) in frames.iter().zip(&gr) {
                scatter(&mut grad, bi, 0, f, gv, 1.0 / b as f64);
            }
        }
        (total, vec![grad])
    })
}

/// `Λ` positions `[B, 3M, N]` against each item's representative poses.
pub fn dna1(g: &mut Graph, lambda: Var, reps: &[Vec<Vec<f64>>]) -> Var {
    let reps = reps.to_vec();
    g.scalar_fn(&[lambda], move |v| {
        let t = v[0];
        let (b, c, _) = t.dims3();
        let mut grad = Tensor::zeros(&t.shape);
        let mut total = 0.0;
        for (bi, r) in reps.iter().enumerate().take(b) {
            let (l, gr) = dna_loss_1(&frames_of(t, bi, 3, c), r);
            total += l / b as f64;
            for (f, gv) in gr.iter().enumerate() {
                scatter(&mut grad, bi, 3, f, gv, 1.0 / b as f64);
            }
        }
        (total, vec![grad])
    })
}

/// As [`dna1`] with each item's keyframe cut points.
pub fn dna2(g: &mut Graph, lambda: Var, reps: &[Vec<Vec<f64>>], cuts: &[Vec<usize>]) -> Var {
    let reps = reps.to_vec();
    let cuts = cuts.to_vec();
    g.scalar_fn(&[lambda], move |v| {
        let t = v[0];
        let (b, c, _) = t.dims3();
        let mut grad = Tensor::zeros(&t.shape);
        let mut total = 0.0;
        for (bi, (r, cu)) in reps.iter().zip(&cuts).enumerate().take(b) {
            let (l, gr) = dna_loss_2(&frames_of(t, bi, 3, c), r, cu);
            total += l / b as f64;
            for (f, gv) in gr.iter().enumerate() {
                scatter(&mut grad, bi, 3, f, gv, 1.0 / b as f64);
            }
        }
        (total, vec![grad])
    })
}

/// Multi-scale displacement plus per-frame height error for predicted
/// channels `[B, 3, N]` against ground-truth `(dx, dz, y)` per item.
pub fn path_loss(g: &mut Graph, pred: Var, truth: &[Vec<[f64; 3]>]) -> Var {
    let truth = truth.to_vec();
    g.scalar_fn(&[pred], move |v| {
        let t = v[0];
        let (b, _, n) = t.dims3();
        let mut grad = Tensor::zeros(&t.shape);
        let mut total = 0.0;
        for (bi, tr) in truth.iter().enumerate().take(b) {
            let p: Vec<[f64; 3]> = (0..n).map(|f| [0, 1, 2].map(|c| t.at3(bi, c, f))).collect();
            let (l1, g1, _) = path_displacement_loss(&p, tr);
            let (l2, g2) = height_loss(&p, tr);
            total += (l1 + l2) / b as f64;
            for f in 0..n {
                let s: Vec<f64> = (0..3).map(|c| g1[f][c] + g2[f][c]).collect();
                scatter(&mut grad, bi, 0, f, &s, 1.0 / b as f64);
            }
        }
        (total, vec![grad])
    })
}
