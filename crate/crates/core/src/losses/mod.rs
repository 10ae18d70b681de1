//! Training objectives. Each loss is a plain function returning its value and
//! gradient; [`graph`] wraps them as fused tape nodes.

pub mod graph;

use crate::globalpath::integrate_path;
use crate::keyframe::{cut_intervals, DNA_INTERVAL};

/// LSGAN generator target.
pub const G_TARGET: f64 = 0.2361;
/// Standard-deviation floor of the batch regularizer.
pub const STD_FLOOR: f64 = 1e-5;
/// Window sizes `2^q` of the path loss, `q = 0..PATH_SCALES`.
pub const PATH_SCALES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub gan: f64,
    pub batch_reg: f64,
    pub local_joint: f64,
    pub dna1: f64,
    pub dna2: f64,
    pub path_start: f64,
    pub path_max: f64,
    /// Iterations per +1 step of the path weight.
    pub path_step: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            gan: 1.0,
            batch_reg: 5.0,
            local_joint: 300.0,
            dna1: 50.0,
            dna2: 50.0,
            path_start: 10.0,
            path_max: 80.0,
            path_step: 1000,
        }
    }
}

impl LossWeights {
    /// `min(max, start + ⌊iter / step⌋)`.
    pub fn path_weight(&self, iter: u64) -> f64 {
        (self.path_start + (iter / self.path_step.max(1)) as f64).min(self.path_max)
    }
}

fn mean_sq_to(y: &[f64], target: f64) -> (f64, Vec<f64>) {
    let n = y.len().max(1) as f64;
    let v = y.iter().map(|v| (v - target).powi(2)).sum::<f64>() / n;
    (v, y.iter().map(|v| 2.0 * (v - target) / n).collect())
}

/// `mean((y_real − 1)²) + mean((y_fake + 1)²)`; gradients for both inputs.
pub fn lsgan_d_loss(y_real: &[f64], y_fake: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let (a, ga) = mean_sq_to(y_real, 1.0);
    let (b, gb) = mean_sq_to(y_fake, -1.0);
    (a + b, ga, gb)
}

/// `mean((y_fake − 0.2361)²)`.
pub fn lsgan_g_loss(y_fake: &[f64]) -> (f64, Vec<f64>) {
    mean_sq_to(y_fake, G_TARGET)
}

/// Feature map `[B, C, T]` as one flat batch-major buffer.
#[derive(Debug, Clone, Copy)]
pub struct FeatureMap<'a> {
    pub data: &'a [f64],
    pub batch: usize,
    pub channels: usize,
    pub frames: usize,
}

/// `(1/D) Σ_c (mean_c² + log(max(std_c, ε))²)` over every channel of every
/// map, statistics over batch and time, `D` the total channel count. The
/// log term has zero gradient on floored channels.
pub fn batch_reg_loss(maps: &[FeatureMap]) -> (f64, Vec<Vec<f64>>) {
    let d: usize = maps.iter().map(|m| m.channels).sum();
    let d = d.max(1) as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(maps.len());
    for m in maps {
        let (b, c, t) = (m.batch, m.channels, m.frames);
        let n = (b * t) as f64;
        let mut g = vec![0.0; m.data.len()];
        for ci in 0..c {
            let idx = |bi: usize, ti: usize| (bi * c + ci) * t + ti;
            let mut sum = 0.0;
            for bi in 0..b {
                for ti in 0..t {
                    sum += m.data[idx(bi, ti)];
                }
            }
            let mean = sum / n;
            let mut var = 0.0;
            for bi in 0..b {
                for ti in 0..t {
                    var += (m.data[idx(bi, ti)] - mean).powi(2);
                }
            }
            let std = (var / n).sqrt();
            let floored = std < STD_FLOOR;
            let log_s = std.max(STD_FLOOR).ln();
            total += mean * mean + log_s * log_s;
            for bi in 0..b {
                for ti in 0..t {
                    let i = idx(bi, ti);
                    let mut gi = 2.0 * mean / n;
                    if !floored {
                        gi += 2.0 * log_s / std * (m.data[i] - mean) / (n * std);
                    }
                    g[i] = gi / d;
                }
            }
        }
        grads.push(g);
    }
    (total / d, grads)
}

fn centroid(p: &[[f64; 3]]) -> [f64; 3] {
    let n = p.len().max(1) as f64;
    let mut c = [0.0; 3];
    for v in p {
        for k in 0..3 {
            c[k] += v[k] / n;
        }
    }
    c
}

/// `(1/N′) Σ ‖(T − T̄) − (T′ − T̄′)‖²` over keyframe root positions, both
/// paths recentred on their keyframe mean. Gradient with respect to `pred`.
pub fn root_alignment_loss(pred: &[[f64; 3]], target: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    let n = pred.len();
    if n == 0 {
        return (0.0, Vec::new());
    }
    let (cp, ct) = (centroid(pred), centroid(target));
    let resid: Vec<[f64; 3]> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| [0, 1, 2].map(|k| (p[k] - cp[k]) - (t[k] - ct[k])))
        .collect();
    let v = resid
        .iter()
        .map(|r| r.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    let mean_r = centroid(&resid);
    let grad = resid
        .iter()
        .map(|r| [0, 1, 2].map(|k| 2.0 / n as f64 * (r[k] - mean_r[k])))
        .collect();
    (v, grad)
}

/// Mean squared error over the masked coordinates.
pub fn local_joint_loss(
    pred: &[Vec<f64>],
    target: &[Vec<f64>],
    mask: &[Vec<bool>],
) -> (f64, Vec<Vec<f64>>) {
    let count = mask.iter().flatten().filter(|&&m| m).count();
    let n = count.max(1) as f64;
    let mut v = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for ((p, t), m) in pred.iter().zip(target).zip(mask) {
        let mut g = vec![0.0; p.len()];
        for i in 0..p.len() {
            if m[i] {
                let d = p[i] - t[i];
                v += d * d;
                g[i] = 2.0 * d / n;
            }
        }
        grad.push(g);
    }
    (v / n, grad)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn add_sq_grad(g: &mut [f64], a: &[f64], b: &[f64], w: f64) {
    for i in 0..g.len() {
        g[i] += w * 2.0 * (a[i] - b[i]);
    }
}

/// `(1/N̂) Σ_j min_i ‖S_i − T̂_j‖²`; zero when `reps` is empty. The first
/// minimizing frame receives the gradient.
pub fn dna_loss_1(frames: &[Vec<f64>], reps: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let mut grad = vec![vec![0.0; frames.first().map_or(0, Vec::len)]; frames.len()];
    if reps.is_empty() || frames.is_empty() {
        return (0.0, grad);
    }
    let w = 1.0 / reps.len() as f64;
    let mut v = 0.0;
    for r in reps {
        let (best, e) = frames.iter().map(|f| sq_dist(f, r)).enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, e)| if e < acc.1 { (i, e) } else { acc },
        );
        v += e;
        add_sq_grad(&mut grad[best], &frames[best], r, w);
    }
    (v * w, grad)
}

/// Each frame's nearest representative error; for every interval of at
/// least 180 frames between cut points, its `⌊N_k/180⌋` smallest errors are
/// collected (ties by frame order). The loss is their mean.
pub fn dna_loss_2(frames: &[Vec<f64>], reps: &[Vec<f64>], cuts: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let n = frames.len();
    let mut grad = vec![vec![0.0; frames.first().map_or(0, Vec::len)]; n];
    if reps.is_empty() {
        return (0.0, grad);
    }
    let nearest: Vec<(usize, f64)> = frames
        .iter()
        .map(|f| {
            reps.iter().map(|r| sq_dist(f, r)).enumerate().fold(
                (0, f64::INFINITY),
                |acc, (j, e)| if e < acc.1 { (j, e) } else { acc },
            )
        })
        .collect();
    let mut collected: Vec<usize> = Vec::new();
    let mut start = 0;
    for len in cut_intervals(cuts, n) {
        let k = len / DNA_INTERVAL;
        if k > 0 {
            let mut order: Vec<usize> = (start..start + len).collect();
            order.sort_by(|&a, &b| nearest[a].1.total_cmp(&nearest[b].1).then(a.cmp(&b)));
            collected.extend_from_slice(&order[..k]);
        }
        start += len;
    }
    if collected.is_empty() {
        return (0.0, grad);
    }
    let w = 1.0 / collected.len() as f64;
    let mut v = 0.0;
    for &i in &collected {
        let (j, e) = nearest[i];
        v += e;
        add_sq_grad(&mut grad[i], &frames[i], &reps[j], w);
    }
    (v * w, grad)
}

/// Multi-scale displacement loss `(1/8) Σ_q mean_t ‖Δ_{t→t+2^q} − Δ′_{t→t+2^q}‖²`
/// on the integrated paths. Scales with `2^q ≥ N` are skipped; their count
/// is returned. The gradient is with respect to `pred` channels.
pub fn path_displacement_loss(
    pred: &[[f64; 3]],
    truth: &[[f64; 3]],
) -> (f64, Vec<[f64; 3]>, usize) {
    let n = pred.len();
    let (pp, pt) = (
        integrate_path(pred, [0.0, 0.0]),
        integrate_path(truth, [0.0, 0.0]),
    );
    let mut grad_pos = vec![[0.0; 3]; n];
    let mut v = 0.0;
    let mut skipped = 0;
    for q in 0..PATH_SCALES {
        let s = 1usize << q;
        if s >= n {
            skipped += 1;
            continue;
        }
        let windows = (n - s) as f64;
        let w = 1.0 / (PATH_SCALES as f64 * windows);
        for t in 0..n - s {
            for k in 0..3 {
                let e = (pp[t + s][k] - pp[t][k]) - (pt[t + s][k] - pt[t][k]);
                v += w * e * e;
                grad_pos[t + s][k] += 2.0 * w * e;
                grad_pos[t][k] -= 2.0 * w * e;
            }
        }
    }
    (v, integrate_backward(&grad_pos), skipped)
}

/// Adjoint of [`integrate_path`] with respect to its channels.
pub fn integrate_backward(grad_pos: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let n = grad_pos.len();
    let mut out = vec![[0.0; 3]; n];
    let (mut sx, mut sz) = (0.0, 0.0);
    for t in (0..n).rev() {
        out[t] = [sx, sz, grad_pos[t][1]];
        sx += grad_pos[t][0];
        sz += grad_pos[t][2];
    }
    out
}

/// Per-frame squared height error, averaged.
pub fn height_loss(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> (f64, Vec<[f64; 3]>) {
    let n = pred.len().max(1) as f64;
    let v = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p[2] - t[2]).powi(2))
        .sum::<f64>()
        / n;
    let g = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| [0.0, 0.0, 2.0 * (p[2] - t[2]) / n])
        .collect();
    (v, g)
}
