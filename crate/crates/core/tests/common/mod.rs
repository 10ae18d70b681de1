#![allow(dead_code)]

use std::sync::Arc;

use gentween::keyframe::{cut_intervals, DNA_INTERVAL, POSITION_SCALE};
use gentween::losses::graph::path_loss;
use gentween::losses::{
    batch_reg_loss, dna_loss_1, dna_loss_2, height_loss, local_joint_loss, lsgan_d_loss,
    lsgan_g_loss, path_displacement_loss, root_alignment_loss, FeatureMap, G_TARGET, PATH_SCALES,
    STD_FLOOR,
};
use gentween::nn::{
    dna_encode, grad_check, residual_block, sample_coords, Bound, Graph, LayerKind, LayerSpec,
    NetworkSpec, Tensor, Var, Weights,
};
use gentween::rcfk::{rc_fk_decode, Skeleton};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_EPS: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const ORACLE_TOL: f64 = 1e-9;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draws in `[-scale, scale)`.
pub fn noise(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Relative gap used for oracle comparisons.
pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- rc_fk

#[derive(Debug, Default, Clone, Copy)]
pub struct FkAudit {
    pub frames: usize,
    pub out_of_limits: usize,
    pub max_bone_rel: f64,
    pub max_ortho: f64,
}

/// Decodes `count` random raw vectors (wide uniform draws so the range map
/// saturates) and checks limits, bone lengths and rotation orthonormality.
pub fn fk_audit(skel: &Skeleton, count: usize, seed: u64) -> FkAudit {
    let mut r = rng(seed);
    let mut a = FkAudit::default();
    for i in 0..count {
        let scale = [0.3, 1.0, 5.0, 40.0][i % 4];
        let raw = noise(&mut r, skel.raw_channels(), scale);
        let f = rc_fk_decode(&raw, skel).unwrap();
        a.frames += 1;
        let mut ok = true;
        for j in 1..skel.len() {
            for (k, rg) in skel.ranges(j).iter().enumerate() {
                let v = f.joint_angles[j][k];
                if !(v >= rg.min && v <= rg.max) {
                    ok = false;
                }
            }
            let p = skel.parent(j).unwrap();
            let d: f64 = (0..3)
                .map(|k| (f.joint_positions[j][k] - f.joint_positions[p][k]).powi(2))
                .sum::<f64>()
                .sqrt();
            let l = skel.bone_length(j);
            let e = if l > 1e-9 { (d - l).abs() / l } else { d };
            a.max_bone_rel = a.max_bone_rel.max(e);
        }
        if !ok {
            a.out_of_limits += 1;
        }
        a.max_ortho = a.max_ortho.max(f.root_rotation.orthonormality_error());
        for m in &f.joint_rotations {
            a.max_ortho = a.max_ortho.max(m.orthonormality_error());
        }
    }
    a
}

// ---------------------------------------------------------------- gradients

/// Central-difference check of a graph built from `inputs`; the scalar is a
/// fixed random projection of the output.
pub fn graph_check(
    inputs: &[Tensor],
    seed: u64,
    max_coords: usize,
    build: impl Fn(&mut Graph, &[Var]) -> Var,
) -> f64 {
    let n: usize = inputs.iter().map(Tensor::len).sum();
    let coords = sample_coords(n, max_coords, seed ^ 0x5eed);
    graph_check_on(inputs, seed, &coords, build).0
}

/// As [`graph_check`] on explicit flat coordinates (all when empty); also
/// returns the analytic gradient.
pub fn graph_check_on(
    inputs: &[Tensor],
    seed: u64,
    coords: &[usize],
    build: impl Fn(&mut Graph, &[Var]) -> Var,
) -> (f64, Vec<f64>) {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let y = build(&mut g, &vars);
    let shape = g.value(y).shape.clone();
    let n_out = g.value(y).len();
    let proj = Tensor::new(shape, noise(&mut rng(seed), n_out, 1.0)).unwrap();
    let project = |g: &mut Graph, y: Var| {
        let p = proj.clone();
        g.scalar_fn(&[y], move |v| {
            let s = v[0].data.iter().zip(&p.data).map(|(a, b)| a * b).sum();
            (s, vec![p.clone()])
        })
    };
    let loss = project(&mut g, y);
    let grads = g.backward(loss).unwrap();
    let mut analytic = Vec::new();
    let mut x = Vec::new();
    for (t, v) in inputs.iter().zip(&vars) {
        x.extend_from_slice(&t.data);
        match grads.get(*v) {
            Some(gt) => analytic.extend_from_slice(&gt.data),
            None => analytic.extend(std::iter::repeat_n(0.0, t.len())),
        }
    }
    let f = |flat: &[f64]| {
        let mut g = Graph::new();
        let mut off = 0;
        let vars: Vec<Var> = inputs
            .iter()
            .map(|t| {
                let v = Tensor::new(t.shape.clone(), flat[off..off + t.len()].to_vec()).unwrap();
                off += t.len();
                g.input(v)
            })
            .collect();
        let y = build(&mut g, &vars);
        let l = project(&mut g, y);
        g.value(l).item()
    };
    let e = grad_check(f, &x, &analytic, GRAD_EPS, coords).max_rel_error;
    (e, analytic)
}

fn random_tensor(r: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), noise(r, n, scale)).unwrap()
}

fn block_check(kind: LayerKind, k: usize, s: usize, p: usize, ratio: f64, seed: u64) -> f64 {
    let (cin, cout, t) = (5, 4, 16);
    let layer = LayerSpec {
        name: "b".into(),
        kind,
        in_ch: cin,
        out_ch: cout,
        kernel: k,
        stride: s,
        pad: p,
        ratio,
    };
    let mut r = rng(seed);
    let wshape = match kind {
        LayerKind::ResT => [cin, cout, k],
        _ => [cout, cin, k],
    };
    let inputs = vec![
        random_tensor(&mut r, &[2, cin, t], 1.0),
        random_tensor(&mut r, &wshape, 0.4),
        random_tensor(&mut r, &[cout], 1.0),
        random_tensor(&mut r, &[cout], 0.3),
        random_tensor(&mut r, &[cout], 0.3),
    ];
    graph_check(&inputs, seed, 300, |g, v| {
        let names = ["b.w", "b.scale", "b.bias", "b.slope"];
        let bound = bound_vars(&names, &v[1..]);
        residual_block(g, &layer, "b", &bound, v[0], None).unwrap()
    })
}

fn bound_vars(names: &[&str], vars: &[Var]) -> Bound {
    Bound::from_vars(
        names
            .iter()
            .map(|s| s.to_string())
            .zip(vars.iter().copied()),
    )
}

/// `(name, max relative error)` for every block kind, the DNA encoder
/// stack, rc_fk both ways, path integration and every loss.
pub fn gradient_gate(skel: &Arc<Skeleton>) -> Vec<(String, f64)> {
    let mut out = vec![
        (
            "residual block, stride-2 conv".to_string(),
            block_check(LayerKind::Res, 4, 2, 1, 0.5, 1),
        ),
        (
            "residual block, stride-1 conv".to_string(),
            block_check(LayerKind::Res, 3, 1, 1, 0.3, 2),
        ),
        (
            "residual block, 1x1 without skip".to_string(),
            block_check(LayerKind::Res, 1, 1, 0, 1.0, 3),
        ),
        (
            "residual block, transposed".to_string(),
            block_check(LayerKind::ResT, 4, 2, 1, 0.6, 4),
        ),
        (
            "residual block, wide transposed".to_string(),
            block_check(LayerKind::ResT, 8, 2, 3, 0.25, 5),
        ),
    ];
    out.push(("dna encoder stack".into(), dna_stack_check(6)));
    let mut r = rng(7);
    let raw = random_tensor(&mut r, &[1, skel.raw_channels(), 2], 1.0);
    for apply_root in [true, false] {
        let s = Arc::clone(skel);
        // root channels carry no gradient into Λ
        let skip = if apply_root { 0 } else { 6 * 2 };
        let coords: Vec<usize> = (skip..raw.len()).collect();
        let (e, _) = graph_check_on(
            std::slice::from_ref(&raw),
            8 + apply_root as u64,
            &coords,
            move |g, v| {
                let y = g.rc_fk(v[0], &s, apply_root).unwrap();
                g.scale(y, POSITION_SCALE)
            },
        );
        out.push((format!("rc_fk (root rotation applied: {apply_root})"), e));
    }
    let ch = random_tensor(&mut r, &[2, 3, 12], 2.0);
    out.push((
        "path integration".into(),
        graph_check(&[ch], 10, 0, |g, v| g.integrate_path(v[0]).unwrap()),
    ));
    out.extend(loss_gradients(11));
    out
}

fn dna_stack_check(seed: u64) -> f64 {
    let spec = NetworkSpec::new(4, 64).unwrap();
    let w = Weights::init(&spec, seed);
    let names: Vec<String> = w
        .params
        .iter()
        .filter(|(n, _)| n.starts_with("dna_encoder."))
        .map(|(n, _)| n.to_string())
        .collect();
    let mut r = rng(seed);
    let mut inputs = vec![random_tensor(
        &mut r,
        &[1, spec.dna_encoder.in_ch(), 5],
        1.0,
    )];
    for n in &names {
        let t = w.params.get(n).unwrap();
        let mut t = t.clone();
        // lift PReLU slopes and affine scales off their initial constants
        for v in &mut t.data {
            *v += r.gen_range(-0.2..0.2);
        }
        inputs.push(t);
    }
    graph_check(&inputs, seed, 300, |g, v| {
        let b = bound_vars(
            &names.iter().map(String::as_str).collect::<Vec<_>>(),
            &v[1..],
        );
        dna_encode(g, &spec, &b, Some(v[0])).unwrap()
    })
}

fn check_plain(x: &[f64], analytic: &[f64], f: impl FnMut(&[f64]) -> f64) -> f64 {
    grad_check(f, x, analytic, GRAD_EPS, &[]).max_rel_error
}

fn to_frames(x: &[f64], w: usize) -> Vec<Vec<f64>> {
    x.chunks(w).map(<[f64]>::to_vec).collect()
}

fn to_vec3(x: &[f64]) -> Vec<[f64; 3]> {
    x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn loss_gradients(seed: u64) -> Vec<(String, f64)> {
    let mut r = rng(seed);
    let mut out = Vec::new();

    let yr = noise(&mut r, 6, 1.0);
    let yf = noise(&mut r, 6, 1.0);
    let (_, gr, gf) = lsgan_d_loss(&yr, &yf);
    let x: Vec<f64> = yr.iter().chain(&yf).copied().collect();
    let an: Vec<f64> = gr.iter().chain(&gf).copied().collect();
    out.push((
        "lsgan discriminator".into(),
        check_plain(&x, &an, |x| lsgan_d_loss(&x[..6], &x[6..]).0),
    ));
    let (_, g) = lsgan_g_loss(&yf);
    out.push((
        "lsgan generator".into(),
        check_plain(&yf, &g, |x| lsgan_g_loss(x).0),
    ));

    let a = noise(&mut r, 2 * 3 * 7, 1.5);
    let b = noise(&mut r, 2 * 2 * 7, 0.5);
    let maps = |x: &[f64]| {
        batch_reg_loss(&[
            FeatureMap {
                data: &x[..42],
                batch: 2,
                channels: 3,
                frames: 7,
            },
            FeatureMap {
                data: &x[42..],
                batch: 2,
                channels: 2,
                frames: 7,
            },
        ])
    };
    let x: Vec<f64> = a.iter().chain(&b).copied().collect();
    let (_, gs) = maps(&x);
    let an: Vec<f64> = gs.concat();
    out.push((
        "batch regularizer".into(),
        check_plain(&x, &an, |x| maps(x).0),
    ));

    let pred = noise(&mut r, 5 * 6, 20.0);
    let target = to_frames(&noise(&mut r, 5 * 6, 20.0), 6);
    let mask: Vec<Vec<bool>> = (0..5)
        .map(|_| (0..6).map(|_| r.gen_bool(0.7)).collect())
        .collect();
    let (_, g) = local_joint_loss(&to_frames(&pred, 6), &target, &mask);
    out.push((
        "local joint".into(),
        check_plain(&pred, &g.concat(), |x| {
            local_joint_loss(&to_frames(x, 6), &target, &mask).0
        }),
    ));

    let pred = noise(&mut r, 4 * 3, 50.0);
    let target = to_vec3(&noise(&mut r, 4 * 3, 50.0));
    let (_, g) = root_alignment_loss(&to_vec3(&pred), &target);
    out.push((
        "root alignment".into(),
        check_plain(&pred, &g.concat(), |x| {
            root_alignment_loss(&to_vec3(x), &target).0
        }),
    ));

    let frames = noise(&mut r, 400 * 6, 10.0);
    let reps = to_frames(&noise(&mut r, 3 * 6, 10.0), 6);
    let (_, g) = dna_loss_1(&to_frames(&frames, 6), &reps);
    let coords = sample_coords(frames.len(), 600, 3);
    let mut f1 = |x: &[f64]| dna_loss_1(&to_frames(x, 6), &reps).0;
    let e1 = grad_check(&mut f1, &frames, &g.concat(), GRAD_EPS, &coords).max_rel_error;
    out.push(("motion DNA, nearest frame".into(), e1));
    let cuts = [0, 190, 390];
    let (_, g) = dna_loss_2(&to_frames(&frames, 6), &reps, &cuts);
    let mut f2 = |x: &[f64]| dna_loss_2(&to_frames(x, 6), &reps, &cuts).0;
    let mut nz: Vec<usize> = (0..frames.len())
        .filter(|&i| g.concat()[i] != 0.0)
        .collect();
    nz.extend(&coords);
    nz.sort();
    nz.dedup();
    let e2 = grad_check(&mut f2, &frames, &g.concat(), GRAD_EPS, &nz).max_rel_error;
    out.push(("motion DNA, per-interval".into(), e2));

    let pred = noise(&mut r, 40 * 3, 3.0);
    let truth = to_vec3(&noise(&mut r, 40 * 3, 3.0));
    let (_, g, _) = path_displacement_loss(&to_vec3(&pred), &truth);
    out.push((
        "path displacement".into(),
        check_plain(&pred, &g.concat(), |x| {
            path_displacement_loss(&to_vec3(x), &truth).0
        }),
    ));
    let (_, g) = height_loss(&to_vec3(&pred), &truth);
    out.push((
        "path height".into(),
        check_plain(&pred, &g.concat(), |x| height_loss(&to_vec3(x), &truth).0),
    ));

    let batch = random_tensor(&mut r, &[2, 3, 32], 2.0);
    let truths: Vec<Vec<[f64; 3]>> = (0..2).map(|_| to_vec3(&noise(&mut r, 96, 2.0))).collect();
    out.push((
        "path loss node (batched)".into(),
        graph_check(&[batch], 12, 0, move |g, v| {
            let l = path_loss(g, v[0], &truths);
            g.scale(l, 1.0)
        }),
    ));
    out
}

// ---------------------------------------------------------------- oracles

fn o_lsgan_d(yr: &[f64], yf: &[f64]) -> f64 {
    let a: f64 = yr.iter().map(|y| (y - 1.0) * (y - 1.0)).sum::<f64>() / yr.len() as f64;
    let b: f64 = yf.iter().map(|y| (y + 1.0) * (y + 1.0)).sum::<f64>() / yf.len() as f64;
    a + b
}

fn o_lsgan_g(yf: &[f64]) -> f64 {
    yf.iter()
        .map(|y| (y - G_TARGET) * (y - G_TARGET))
        .sum::<f64>()
        / yf.len() as f64
}

/// Statistics per channel over batch and time, one channel at a time via an
/// explicit gather.
fn o_batch_reg(maps: &[(Vec<f64>, usize, usize, usize)]) -> f64 {
    let mut total = 0.0;
    let mut d = 0;
    for (data, b, c, t) in maps {
        for ci in 0..*c {
            let vals: Vec<f64> = (0..*b)
                .flat_map(|bi| (0..*t).map(move |ti| (bi, ti)))
                .map(|(bi, ti)| data[bi * c * t + ci * t + ti])
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
            let std = var.max(0.0).sqrt().max(STD_FLOOR);
            total += mean * mean + std.ln().powi(2);
            d += 1;
        }
    }
    total / d as f64
}

/// Mean squared deviation of the residuals from their mean, written as the
/// pairwise form `(1/2N²) Σ_i Σ_j ‖r_i − r_j‖²`.
pub fn o_root_alignment(pred: &[[f64; 3]], target: &[[f64; 3]]) -> f64 {
    let n = pred.len() as f64;
    let r: Vec<[f64; 3]> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| [p[0] - t[0], p[1] - t[1], p[2] - t[2]])
        .collect();
    let mut s = 0.0;
    for a in &r {
        for b in &r {
            s += (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
        }
    }
    s / (2.0 * n * n)
}

fn o_local(pred: &[Vec<f64>], target: &[Vec<f64>], mask: &[Vec<bool>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0;
    for f in 0..pred.len() {
        for c in 0..pred[f].len() {
            if mask[f][c] {
                s += (pred[f][c] - target[f][c]).powi(2);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn o_dna1(frames: &[Vec<f64>], reps: &[Vec<f64>]) -> f64 {
    if reps.is_empty() {
        return 0.0;
    }
    reps.iter()
        .map(|r| {
            frames
                .iter()
                .map(|f| sq(f, r))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        / reps.len() as f64
}

/// Exhaustive interval scan: walks every frame, closes an interval at each
/// cut, and repeatedly removes the smallest remaining error
/// `⌊len/180⌋` times. Returns the loss and the selected frame count.
pub fn o_dna2(frames: &[Vec<f64>], reps: &[Vec<f64>], cuts: &[usize]) -> (f64, usize) {
    if reps.is_empty() {
        return (0.0, 0);
    }
    let err = |i: usize| {
        reps.iter()
            .map(|r| sq(&frames[i], r))
            .fold(f64::INFINITY, f64::min)
    };
    let mut picked = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    let flush = |current: &mut Vec<usize>, picked: &mut Vec<f64>| {
        let k = current.len() / DNA_INTERVAL;
        let mut pool: Vec<(usize, f64)> = current.iter().map(|&i| (i, err(i))).collect();
        for _ in 0..k {
            let (pos, _) = pool
                .iter()
                .enumerate()
                .fold(
                    (0, f64::INFINITY),
                    |acc, (p, &(_, e))| if e < acc.1 { (p, e) } else { acc },
                );
            picked.push(pool.remove(pos).1);
        }
        current.clear();
    };
    for t in 0..frames.len() {
        if cuts.contains(&t) && !current.is_empty() {
            flush(&mut current, &mut picked);
        }
        current.push(t);
    }
    flush(&mut current, &mut picked);
    if picked.is_empty() {
        (0.0, 0)
    } else {
        (
            picked.iter().sum::<f64>() / picked.len() as f64,
            picked.len(),
        )
    }
}

/// Windows summed directly from velocities (no prefix sums).
fn o_path(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    let n = pred.len();
    let mut total = 0.0;
    for q in 0..PATH_SCALES {
        let s = 1 << q;
        if s >= n {
            continue;
        }
        let mut acc = 0.0;
        for t in 0..n - s {
            let mut e = [0.0; 3];
            for u in t..t + s {
                e[0] += pred[u][0] - truth[u][0];
                e[2] += pred[u][1] - truth[u][1];
            }
            e[1] = (pred[t + s][2] - pred[t][2]) - (truth[t + s][2] - truth[t][2]);
            acc += e.iter().map(|v| v * v).sum::<f64>();
        }
        total += acc / (n - s) as f64;
    }
    total / PATH_SCALES as f64
}

fn o_height(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p[2] - t[2]).powi(2))
        .sum::<f64>()
        / pred.len() as f64
}

/// Largest relative gap between each loss and its oracle over `cases`
/// random instances, plus the largest translation-invariance gap of the
/// root alignment loss and the number of DNA interval-count mismatches.
#[derive(Debug, Default, Clone)]
pub struct OracleReport {
    pub worst: Vec<(String, f64)>,
    pub translation_gap: f64,
    pub interval_mismatches: usize,
}

pub fn loss_oracles(cases: usize, seed: u64) -> OracleReport {
    let mut r = rng(seed);
    let mut worst: Vec<(String, f64)> = [
        "lsgan discriminator",
        "lsgan generator",
        "batch regularizer",
        "local joint",
        "root alignment",
        "motion DNA, nearest frame",
        "motion DNA, per-interval",
        "path displacement",
        "path height",
    ]
    .iter()
    .map(|s| (s.to_string(), 0.0))
    .collect();
    let mut rep = OracleReport::default();
    let bump = |k: usize, a: f64, b: f64, w: &mut Vec<(String, f64)>| {
        w[k].1 = w[k].1.max(rel_gap(a, b));
    };
    for case in 0..cases {
        let n = r.gen_range(1..20);
        let yr = noise(&mut r, n, 1.0);
        let yf = noise(&mut r, n + 1, 1.0);
        bump(0, lsgan_d_loss(&yr, &yf).0, o_lsgan_d(&yr, &yf), &mut worst);
        bump(1, lsgan_g_loss(&yf).0, o_lsgan_g(&yf), &mut worst);

        let maps: Vec<(Vec<f64>, usize, usize, usize)> = (0..r.gen_range(1..4))
            .map(|_| {
                let (b, c, t) = (r.gen_range(1..4), r.gen_range(1..6), r.gen_range(1..9));
                // every fourth map is constant to exercise the floor
                let data = if case % 4 == 0 {
                    vec![0.7; b * c * t]
                } else {
                    noise(&mut r, b * c * t, 2.0)
                };
                (data, b, c, t)
            })
            .collect();
        let fm: Vec<FeatureMap> = maps
            .iter()
            .map(|(d, b, c, t)| FeatureMap {
                data: d,
                batch: *b,
                channels: *c,
                frames: *t,
            })
            .collect();
        bump(2, batch_reg_loss(&fm).0, o_batch_reg(&maps), &mut worst);

        let k = r.gen_range(1..8);
        let w = 3 * r.gen_range(1..6);
        let pred = to_frames(&noise(&mut r, k * w, 30.0), w);
        let target = to_frames(&noise(&mut r, k * w, 30.0), w);
        let mask: Vec<Vec<bool>> = (0..k)
            .map(|_| (0..w).map(|_| r.gen_bool(0.5)).collect())
            .collect();
        bump(
            3,
            local_joint_loss(&pred, &target, &mask).0,
            o_local(&pred, &target, &mask),
            &mut worst,
        );

        let p3 = to_vec3(&noise(&mut r, 3 * k, 100.0));
        let t3 = to_vec3(&noise(&mut r, 3 * k, 100.0));
        let base = root_alignment_loss(&p3, &t3).0;
        bump(4, base, o_root_alignment(&p3, &t3), &mut worst);
        let shift = noise(&mut r, 3, 1000.0);
        let moved: Vec<[f64; 3]> = p3
            .iter()
            .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
            .collect();
        rep.translation_gap = rep
            .translation_gap
            .max((root_alignment_loss(&moved, &t3).0 - base).abs());

        let len = r.gen_range(1..900);
        let frames = to_frames(&noise(&mut r, len * 6, 10.0), 6);
        let nr = r.gen_range(0..5);
        let reps = to_frames(&noise(&mut r, nr * 6, 10.0), 6);
        bump(
            5,
            dna_loss_1(&frames, &reps).0,
            o_dna1(&frames, &reps),
            &mut worst,
        );
        let mut cuts: Vec<usize> = (0..r.gen_range(0..5))
            .map(|_| r.gen_range(0..len))
            .collect();
        cuts.sort();
        cuts.dedup();
        let (v, count) = o_dna2(&frames, &reps, &cuts);
        bump(6, dna_loss_2(&frames, &reps, &cuts).0, v, &mut worst);
        let expect: usize = cut_intervals(&cuts, len)
            .iter()
            .map(|l| l / DNA_INTERVAL)
            .sum();
        if !reps.is_empty() && expect != count {
            rep.interval_mismatches += 1;
        }

        let m = r.gen_range(1..300);
        let pp = to_vec3(&noise(&mut r, 3 * m, 3.0));
        let pt = to_vec3(&noise(&mut r, 3 * m, 3.0));
        bump(
            7,
            path_displacement_loss(&pp, &pt).0,
            o_path(&pp, &pt),
            &mut worst,
        );
        bump(8, height_loss(&pp, &pt).0, o_height(&pp, &pt), &mut worst);
    }
    rep.worst = worst;
    rep
}

/// Smallest configuration the trainer accepts, for loop-level tests.
pub fn tiny_config() -> gentween::trainer::TrainConfig {
    gentween::trainer::TrainConfig {
        width_divisor: 32,
        gen_batch: 1,
        gen_frames: 64,
        real_batch: 1,
        real_min_frames: 64,
        real_max_frames: 64,
        path_batch: 1,
        path_frames: 64,
        path_iterations: 3,
        iterations: 10,
        validate_every: 5,
        checkpoint_every: 5,
        lr: 1e-4,
        path_lr: 1e-4,
        ..Default::default()
    }
}

pub fn tiny_data(skel: &Arc<Skeleton>) -> gentween::trainer::TrainingData {
    use gentween::datapipe::{synthetic_corpus, STYLES};
    let clips = synthetic_corpus(skel, &STYLES[..2], 1, 300..=300, 5);
    gentween::trainer::TrainingData::new(clips, Arc::clone(skel)).unwrap()
}

/// Trains the path stage of `cfg`, then the inbetweener; returns the full
/// log and the final inbetweener state.
pub fn tiny_run(
    data: &gentween::trainer::TrainingData,
    cfg: &gentween::trainer::TrainConfig,
) -> (String, gentween::trainer::TrainState) {
    use gentween::trainer::{train_inbetweener, train_path_predictor, RunIo};
    let mut log = Vec::new();
    let p = train_path_predictor(
        data,
        None,
        cfg,
        None,
        &mut RunIo {
            log: &mut log,
            checkpoint: None,
        },
    )
    .unwrap();
    let t = train_inbetweener(
        data,
        None,
        cfg,
        p.state,
        &mut RunIo {
            log: &mut log,
            checkpoint: None,
        },
    )
    .unwrap();
    (String::from_utf8(log).unwrap(), t.state)
}

// ---------------------------------------------------------------- dense input

/// Scans every frame against every keyframe that carries coordinate `c`;
/// ties pick the earlier one.
pub fn brute_dense(
    keys: &gentween::keyframe::KeyframeSet,
    n: usize,
    t: usize,
    c: usize,
) -> (f64, f64) {
    let mut best: Option<(usize, f64)> = None;
    for (i, &k) in keys.indices().iter().enumerate() {
        if !keys.masks()[i][c] {
            continue;
        }
        let d = k.abs_diff(t);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, keys.poses()[i][c]));
        }
    }
    match best {
        Some((d, v)) => (v, d as f64 / gentween::keyframe::DISTANCE_SCALE),
        None => (0.0, n as f64 / gentween::keyframe::DISTANCE_SCALE),
    }
}

pub fn random_keys(
    rng: &mut ChaCha8Rng,
    n: usize,
    ch: usize,
    partial: bool,
) -> gentween::keyframe::KeyframeSet {
    let count = rng.gen_range(1..=n.min(12));
    let mut idx: Vec<usize> = (0..count).map(|_| rng.gen_range(0..n)).collect();
    // even spacing forces midpoint ties
    if rng.gen_bool(0.3) {
        let step = rng.gen_range(2..=8) * 2;
        idx = (0..n).step_by(step).take(count).collect();
    }
    idx.sort();
    idx.dedup();
    let poses = idx
        .iter()
        .map(|_| (0..ch).map(|_| rng.gen_range(-100.0..100.0)).collect())
        .collect();
    let masks = idx
        .iter()
        .map(|_| (0..ch).map(|_| !partial || rng.gen_bool(0.6)).collect())
        .collect();
    gentween::keyframe::KeyframeSet::new(idx, poses, masks).unwrap()
}

#[derive(Debug, Default, Clone, Copy)]
pub struct DenseReport {
    pub cases: usize,
    pub mismatches: usize,
    /// Keyframe pairs an even distance apart, whose midpoint is a tie.
    pub ties: usize,
}

/// `cases` random keyframe sets (`N ≤ 512`, partial masks on odd cases)
/// compared value by value against [`brute_dense`].
pub fn dense_bruteforce(cases: usize, seed: u64) -> DenseReport {
    let mut r = rng(seed);
    let mut rep = DenseReport {
        cases,
        ..Default::default()
    };
    for case in 0..cases {
        let n = r.gen_range(2..=512);
        let ch = 3 * r.gen_range(1..=4);
        let keys = random_keys(&mut r, n, ch, case % 2 == 1);
        let d = gentween::keyframe::build_dense_input(&keys, n).unwrap();
        for t in 0..n {
            for c in 0..ch {
                let (v, w) = brute_dense(&keys, n, t, c);
                if d.value(t, c) != v || d.weight_at(t, c) != w {
                    rep.mismatches += 1;
                }
            }
        }
        let idx = keys.indices();
        rep.ties += idx.windows(2).filter(|w| (w[1] - w[0]) % 2 == 0).count();
    }
    rep
}
