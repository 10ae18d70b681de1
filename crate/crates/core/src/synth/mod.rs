//! Inference pipeline, keyframe post-processing, evaluation metrics and the
//! timing harness.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::datapipe::MotionClip;
use crate::error::{Error, Result};
use crate::globalpath::{anchor_offset, integrate_path, predict_root_motion};
use crate::keyframe::{build_dense_input, KeyframeSet, MAX_GAP, POSITION_SCALE};
use crate::losses::{dna_loss_1, dna_loss_2};
use crate::nn::{dna_encode, generator_forward, Bound, Graph, Tensor, Weights};
use crate::rcfk::{rc_fk_decode, remove_root_rotation, LocalPoseFrame, Skeleton};
use crate::trainer::GENERATOR_PREFIXES;

/// Half-width of the keyframe correction blend, frames.
pub const BLEND_WINDOW: usize = 30;

/// Keyframes, sequence length and optional representative poses (`Λ`,
/// `3(M − 1)` each); no poses selects the learned empty-DNA vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisRequest {
    pub keys: KeyframeSet,
    pub frames: usize,
    pub dna: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub clip: MotionClip,
    /// `3M` pose per frame: world root position, then root-relative joints.
    pub poses: Vec<Vec<f64>>,
    /// `Λ` per frame, `3(M − 1)`.
    pub lambda: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Wall-clock split of one synthesis. `local` runs from entry through the
/// generator and FK decode; `path` covers root prediction and assembling the
/// output, so the two add up to the whole call.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimes {
    pub local: Duration,
    pub path: Duration,
}

/// Largest distance between consecutive keyframes.
pub fn max_keyframe_gap(keys: &KeyframeSet) -> usize {
    keys.indices()
        .windows(2)
        .map(|w| w[1] - w[0])
        .max()
        .unwrap_or(0)
}

fn generate_local(
    req: &SynthesisRequest,
    keys: &KeyframeSet,
    w: &Weights,
    skel: &Skeleton,
) -> Result<Vec<LocalPoseFrame>> {
    let cond = build_dense_input(keys, req.frames)?.network_input();
    let mut g = Graph::new();
    let p = Bound::new(&mut g, w, &GENERATOR_PREFIXES, false);
    let c = g.input(cond);
    let frames = if req.dna.is_empty() {
        None
    } else {
        let ch = skel.local_channels();
        if req.dna.iter().any(|f| f.len() != ch) {
            return Err(Error::Shape(format!("DNA poses need {ch} values each")));
        }
        let r = &req.dna;
        Some(g.input(Tensor::from_fn3(1, ch, r.len(), |_, c, i| {
            r[i][c] * POSITION_SCALE
        })))
    };
    let dna = dna_encode(&mut g, &w.spec, &p, frames)?;
    let raw = generator_forward(&mut g, &w.spec, &p, c, dna, None)?;
    let rv = g.value(raw);
    let ch = skel.raw_channels();
    (0..req.frames)
        .map(|t| {
            let v: Vec<f64> = (0..ch).map(|k| rv.at3(0, k, t)).collect();
            rc_fk_decode(&v, skel)
        })
        .collect()
}

/// Dense conditioning, generator, range-constrained FK, path prediction and
/// integration. The keyframes are recentred on their root centroid before
/// encoding, and the integrated path is shifted by the least-squares planar
/// offset onto the keyframe roots.
pub fn synthesize_timed(
    req: &SynthesisRequest,
    w: &Weights,
    skel: &Arc<Skeleton>,
) -> Result<(Synthesis, StageTimes)> {
    let t0 = Instant::now();
    let (s, t1) = run_stages(req, w, skel)?;
    let t2 = Instant::now();
    Ok((
        s,
        StageTimes {
            local: t1 - t0,
            path: t2 - t1,
        },
    ))
}

/// The synthesis body; returns when the local stage ended.
fn run_stages(
    req: &SynthesisRequest,
    w: &Weights,
    skel: &Arc<Skeleton>,
) -> Result<(Synthesis, Instant)> {
    if req.frames == 0 || req.frames % 64 != 0 {
        return Err(Error::Shape(format!(
            "sequence length {} is not a positive multiple of 64",
            req.frames
        )));
    }
    if req.keys.channels() != skel.pose_channels() {
        return Err(Error::Shape(format!(
            "keyframes have {} channels, skeleton needs {}",
            req.keys.channels(),
            skel.pose_channels()
        )));
    }
    let mut warnings = Vec::new();
    let gap = max_keyframe_gap(&req.keys);
    if gap > MAX_GAP {
        warnings.push(format!(
            "keyframe gap of {gap} frames exceeds the {MAX_GAP}-frame span the generator sees"
        ));
    }
    let centre = req.keys.root_centroid();
    let keys = req.keys.translated(-centre[0], -centre[1]);

    let frames = generate_local(req, &keys, w, skel)?;
    let t1 = Instant::now();
    let local: Vec<Vec<f64>> = frames.iter().map(LocalPoseFrame::local_vector).collect();
    let channels = predict_root_motion(&local, w)?;
    let path = integrate_path(&channels, [0.0, 0.0]);
    let anchored: Vec<usize> = (0..keys.len())
        .filter(|&i| keys.masks()[i][0] && keys.masks()[i][2])
        .collect();
    let idx: Vec<usize> = anchored.iter().map(|&i| keys.indices()[i]).collect();
    let targets: Vec<[f64; 3]> = anchored
        .iter()
        .map(|&i| {
            let p = &keys.poses()[i];
            [p[0], p[1], p[2]]
        })
        .collect();
    let off = if idx.is_empty() {
        [0.0, 0.0]
    } else {
        anchor_offset(&path, &idx, &targets)
    };
    let roots: Vec<[f64; 3]> = path
        .iter()
        .map(|p| [p[0] + off[0] + centre[0], p[1], p[2] + off[1] + centre[1]])
        .collect();

    let poses = frames
        .iter()
        .zip(&roots)
        .map(|(f, r)| {
            let mut v = r.to_vec();
            v.extend(f.joint_positions[1..].iter().flatten());
            v
        })
        .collect();
    let lambda = frames
        .iter()
        .map(|f| {
            remove_root_rotation(f)[1..]
                .iter()
                .flatten()
                .copied()
                .collect()
        })
        .collect();
    let clip = MotionClip {
        name: "synthesized".into(),
        class_label: "synthesized".into(),
        source: "gentween".into(),
        root_positions: roots,
        root_rotations: frames.iter().map(|f| f.root_rotation).collect(),
        angles: frames.iter().map(|f| f.joint_angles.clone()).collect(),
        clamp: vec![0.0; req.frames],
    };
    Ok((
        Synthesis {
            clip,
            poses,
            lambda,
            warnings,
        },
        t1,
    ))
}

pub fn synthesize(req: &SynthesisRequest, w: &Weights, skel: &Arc<Skeleton>) -> Result<Synthesis> {
    synthesize_timed(req, w, skel).map(|(s, _)| s)
}

/// Makes every masked keyframe coordinate exact. Each keyframe's residual is
/// spread with a raised-cosine falloff over at most [`BLEND_WINDOW`] frames
/// per side, shortened so it reaches zero at the neighbouring keyframe that
/// constrains the same coordinate; the weights of two neighbours sum to one
/// between them. Frames outside every window are untouched.
pub fn enforce_keyframes(poses: &[Vec<f64>], keys: &KeyframeSet) -> Result<Vec<Vec<f64>>> {
    let n = poses.len();
    let ch = keys.channels();
    if poses.iter().any(|p| p.len() != ch) {
        return Err(Error::Shape(format!("poses need {ch} values per frame")));
    }
    if keys.indices().last().is_some_and(|&l| l >= n) {
        return Err(Error::Keyframe("keyframe beyond the sequence".into()));
    }
    let mut out = poses.to_vec();
    for c in 0..ch {
        let set: Vec<usize> = (0..keys.len()).filter(|&i| keys.masks()[i][c]).collect();
        for (s, &i) in set.iter().enumerate() {
            let f = keys.indices()[i];
            let r = keys.poses()[i][c] - poses[f][c];
            let left = s.checked_sub(1).map_or(BLEND_WINDOW, |p| {
                (f - keys.indices()[set[p]]).min(BLEND_WINDOW)
            });
            let right = set
                .get(s + 1)
                .map_or(BLEND_WINDOW, |&q| (keys.indices()[q] - f).min(BLEND_WINDOW));
            for d in 1..left.min(f + 1) {
                let w = 0.5 * (1.0 + (PI * d as f64 / left as f64).cos());
                out[f - d][c] += w * r;
            }
            for d in 1..right.min(n - f) {
                let w = 0.5 * (1.0 + (PI * d as f64 / right as f64).cos());
                out[f + d][c] += w * r;
            }
        }
        for &i in &set {
            out[keys.indices()[i]][c] = keys.poses()[i][c];
        }
    }
    Ok(out)
}

/// Mean keyframe errors in cm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentError {
    /// Root error after recentring both paths on their keyframe means.
    pub root: f64,
    /// Non-root joint error over fully masked joints.
    pub local: f64,
}

pub fn eval_alignment(poses: &[Vec<f64>], keys: &KeyframeSet) -> AlignmentError {
    let idx = keys.indices();
    let full: Vec<usize> = (0..keys.len())
        .filter(|&i| keys.masks()[i][..3].iter().all(|&m| m))
        .collect();
    let mut root = 0.0;
    if !full.is_empty() {
        let n = full.len() as f64;
        let mut mp = [0.0; 3];
        let mut mt = [0.0; 3];
        for &i in &full {
            for k in 0..3 {
                mp[k] += poses[idx[i]][k] / n;
                mt[k] += keys.poses()[i][k] / n;
            }
        }
        for &i in &full {
            let d: f64 = (0..3)
                .map(|k| ((poses[idx[i]][k] - mp[k]) - (keys.poses()[i][k] - mt[k])).powi(2))
                .sum();
            root += d.sqrt() / n;
        }
    }
    let (mut local, mut count) = (0.0, 0usize);
    for i in 0..keys.len() {
        let m = &keys.masks()[i];
        for j in 1..keys.channels() / 3 {
            if m[3 * j..3 * j + 3].iter().all(|&x| x) {
                let d: f64 = (0..3)
                    .map(|k| (poses[idx[i]][3 * j + k] - keys.poses()[i][3 * j + k]).powi(2))
                    .sum();
                local += d.sqrt();
                count += 1;
            }
        }
    }
    AlignmentError {
        root,
        local: if count == 0 {
            0.0
        } else {
            local / count as f64
        },
    }
}

/// Square roots of the two DNA losses, in cm, for `Λ` frames against the
/// representative poses, with the sequence cut at `keyframes`.
pub fn eval_dna(lambda: &[Vec<f64>], reps: &[Vec<f64>], keyframes: &[usize]) -> (f64, f64) {
    let (a, _) = dna_loss_1(lambda, reps);
    let (b, _) = dna_loss_2(lambda, reps, keyframes);
    (a.sqrt(), b.sqrt())
}

/// Mean seconds per stage for one sequence length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRow {
    pub frames: usize,
    pub local: f64,
    pub path: f64,
    pub post: f64,
    pub total: f64,
}

/// Reference timings `(frames, local, path, post, total)` reported by the
/// original GPU implementation.
pub const REFERENCE_TIMINGS: [(usize, f64, f64, f64, f64); 4] = [
    (512, 0.019, 0.033, 0.008, 0.059),
    (1024, 0.023, 0.061, 0.017, 0.101),
    (2048, 0.021, 0.131, 0.036, 0.188),
    (4096, 0.022, 0.237, 0.070, 0.329),
];

/// Times synthesis plus post-processing at each length, averaged over
/// `repeats` runs. Keyframes are taken from `clip` every 240 frames.
pub fn benchmark_timing(
    w: &Weights,
    skel: &Arc<Skeleton>,
    clip: &MotionClip,
    lengths: &[usize],
    repeats: usize,
) -> Result<Vec<TimingRow>> {
    let repeats = repeats.max(1);
    let mut rows = Vec::with_capacity(lengths.len());
    for &n in lengths {
        let idx: Vec<usize> = (0..n).step_by(240).chain([n - 1]).collect();
        let poses = idx
            .iter()
            .map(|&t| clip.pose_vector(t % clip.len(), skel))
            .collect();
        let req = SynthesisRequest {
            keys: KeyframeSet::full(idx, poses)?,
            frames: n,
            dna: Vec::new(),
        };
        let mut row = TimingRow {
            frames: n,
            local: 0.0,
            path: 0.0,
            post: 0.0,
            total: 0.0,
        };
        for _ in 0..repeats {
            let start = Instant::now();
            let (s, t) = synthesize_timed(&req, w, skel)?;
            let p0 = Instant::now();
            let fixed = enforce_keyframes(&s.poses, &req.keys)?;
            let end = Instant::now();
            std::hint::black_box(fixed);
            row.local += t.local.as_secs_f64();
            row.path += t.path.as_secs_f64();
            row.post += (end - p0).as_secs_f64();
            row.total += (end - start).as_secs_f64();
        }
        for v in [&mut row.local, &mut row.path, &mut row.post, &mut row.total] {
            *v /= repeats as f64;
        }
        rows.push(row);
    }
    Ok(rows)
}
