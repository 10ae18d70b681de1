use rand::seq::SliceRandom;
use rand::Rng;

use super::KeyframeSet;
use crate::error::{Error, Result};
use crate::rotmath::Mat3;

/// Longest keyframe gap the dense generator can bridge.
pub const MAX_GAP: usize = 636;
/// Minimum spacing between two selected representative frames.
pub const NON_ADJACENCY: usize = 30;
/// Frames per representative pose (three seconds at 60 fps).
pub const DNA_INTERVAL: usize = 180;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub max_interval: usize,
    /// Intervals shorter than this keep both endpoints in one clip.
    pub same_clip_below: usize,
    /// Interval at which a clip switch becomes certain.
    pub switch_certain_at: usize,
    /// Upper bound of the root distance per interval frame, cm.
    pub root_speed_cap: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            max_interval: 600,
            same_clip_below: 180,
            switch_certain_at: 600,
            root_speed_cap: 1.5,
        }
    }
}

impl SamplingConfig {
    /// `p(L) = min(1, (L − 180) / 420)` with the defaults.
    pub fn switch_probability(&self, interval: usize) -> f64 {
        if interval < self.same_clip_below {
            return 0.0;
        }
        let span = (self.switch_certain_at - self.same_clip_below).max(1) as f64;
        ((interval - self.same_clip_below) as f64 / span).min(1.0)
    }
}

/// Sampled keyframes with their provenance in the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframePlan {
    pub keys: KeyframeSet,
    /// `(clip, frame)` each keyframe was copied from.
    pub sources: Vec<(usize, usize)>,
    /// Whether the keyframe started a new clip segment.
    pub switched: Vec<bool>,
}

impl KeyframePlan {
    /// Lengths of the pieces the sequence `0..n` is cut into at keyframes.
    pub fn intervals(&self, n: usize) -> Vec<usize> {
        cut_intervals(self.keys.indices(), n)
    }
}

pub fn cut_intervals(indices: &[usize], n: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = std::iter::once(0)
        .chain(indices.iter().copied())
        .chain([n])
        .collect();
    cuts.dedup();
    cuts.windows(2)
        .map(|w| w[1] - w[0])
        .filter(|&l| l > 0)
        .collect()
}

fn place(pose: &[f64], offset: [f64; 2]) -> Vec<f64> {
    let mut p = pose.to_vec();
    p[0] += offset[0];
    p[2] += offset[1];
    p
}

/// Walks from frame 0 towards `n`, drawing interval lengths in
/// `1..=max_interval`. `poses[c][t]` is the `3M` pose (root world position
/// first) of clip `c` at frame `t`.
pub fn sample_keyframes<R: Rng>(
    poses: &[Vec<Vec<f64>>],
    n: usize,
    cfg: &SamplingConfig,
    rng: &mut R,
) -> Result<KeyframePlan> {
    if poses.iter().all(Vec::is_empty) {
        return Err(Error::Keyframe("corpus has no frames".into()));
    }
    if n < 2 {
        return Err(Error::Keyframe(
            "sequence must have at least 2 frames".into(),
        ));
    }
    let usable: Vec<usize> = (0..poses.len()).filter(|&c| !poses[c].is_empty()).collect();
    let mut clip = *usable.choose(rng).unwrap();
    let mut frame = rng.gen_range(0..poses[clip].len());
    let mut offset = [0.0, 0.0];
    let mut t = 0;
    let mut indices = vec![0];
    let mut out_poses = vec![place(&poses[clip][frame], offset)];
    let mut sources = vec![(clip, frame)];
    let mut switched = vec![true];

    loop {
        let mut gap = rng.gen_range(1..=cfg.max_interval);
        if t + gap >= n {
            break;
        }
        let mut tries = 0;
        while gap < cfg.same_clip_below && frame + gap >= poses[clip].len() && tries < 32 {
            gap = rng.gen_range(1..=cfg.max_interval);
            tries += 1;
        }
        if t + gap >= n {
            break;
        }
        let fits = frame + gap < poses[clip].len();
        let switch = !fits || (usable.len() > 1 && rng.gen_bool(cfg.switch_probability(gap)));
        let prev_root = [out_poses.last().unwrap()[0], out_poses.last().unwrap()[2]];
        if switch {
            let others: Vec<usize> = usable
                .iter()
                .copied()
                .filter(|&c| c != clip || usable.len() == 1)
                .collect();
            clip = *others.choose(rng).unwrap();
            frame = rng.gen_range(0..poses[clip].len());
            let dist = rng.gen_range(0.0..=cfg.root_speed_cap * gap as f64);
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let src = &poses[clip][frame];
            offset = [
                prev_root[0] + dist * theta.cos() - src[0],
                prev_root[1] + dist * theta.sin() - src[2],
            ];
        } else {
            frame += gap;
        }
        t += gap;
        indices.push(t);
        out_poses.push(place(&poses[clip][frame], offset));
        sources.push((clip, frame));
        switched.push(switch);
    }
    Ok(KeyframePlan {
        keys: KeyframeSet::full(indices, out_poses)?,
        sources,
        switched,
    })
}

/// `N̂ = Σ ⌊N_k / 180⌋` over intervals of at least 180 frames.
pub fn dna_frame_count(intervals: &[usize]) -> usize {
    intervals.iter().map(|&l| l / DNA_INTERVAL).sum()
}

/// Representative frames of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeFrames {
    pub frames: Vec<usize>,
    /// Root-rotation-free local positions, `3(M − 1)` per frame.
    pub poses: Vec<Vec<f64>>,
    /// Set when the clip had no rotation change and frames were spaced
    /// uniformly instead.
    pub fallback: bool,
}

/// Picks the `count` frames with the largest summed geodesic rotation change
/// to their neighbours, at least [`NON_ADJACENCY`] frames apart when
/// possible. `rotations[t][j]` are local joint rotations (root included)
/// and `local[t]` the matching `Λ` vectors.
pub fn extract_representative_frames(
    rotations: &[Vec<Mat3>],
    local: &[Vec<f64>],
    count: usize,
) -> Result<RepresentativeFrames> {
    let n = rotations.len();
    if n != local.len() {
        return Err(Error::Shape(
            "rotation and position frame counts differ".into(),
        ));
    }
    if count > n {
        return Err(Error::Keyframe(format!(
            "asked for {count} representative frames from {n}"
        )));
    }
    let pick = |frames: Vec<usize>, fallback| RepresentativeFrames {
        poses: frames.iter().map(|&t| local[t].clone()).collect(),
        frames,
        fallback,
    };
    if count == n {
        return Ok(pick((0..n).collect(), false));
    }
    let step = |a: usize, b: usize| -> f64 {
        rotations[a]
            .iter()
            .zip(&rotations[b])
            .map(|(x, y)| x.angle_to(y))
            .sum()
    };
    let deltas: Vec<f64> = (1..n).map(|t| step(t - 1, t)).collect();
    let score: Vec<f64> = (0..n)
        .map(|t| {
            let before = if t > 0 { deltas[t - 1] } else { 0.0 };
            let after = if t + 1 < n { deltas[t] } else { 0.0 };
            before + after
        })
        .collect();
    if score.iter().all(|&s| s < 1e-9) {
        let frames = (0..count)
            .map(|i| (i * n + n / 2) / count.max(1))
            .map(|t| t.min(n - 1))
            .collect();
        return Ok(pick(frames, true));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::with_capacity(count);
    for &t in &order {
        if chosen.len() == count {
            break;
        }
        if chosen.iter().all(|&c| c.abs_diff(t) >= NON_ADJACENCY) {
            chosen.push(t);
        }
    }
    for &t in &order {
        if chosen.len() == count {
            break;
        }
        if !chosen.contains(&t) {
            chosen.push(t);
        }
    }
    chosen.sort_unstable();
    Ok(pick(chosen, false))
}

/// Draws the representative poses for one training sequence: one motion
/// class is picked, then `dna_frame_count(intervals)` poses are drawn from
/// that class's pool. `pools[k]` holds the representative poses of class `k`.
pub fn sample_dna<R: Rng>(
    intervals: &[usize],
    pools: &[Vec<Vec<f64>>],
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let count = dna_frame_count(intervals);
    let classes: Vec<&Vec<Vec<f64>>> = pools.iter().filter(|p| !p.is_empty()).collect();
    if count == 0 || classes.is_empty() {
        return Vec::new();
    }
    let pool = classes[rng.gen_range(0..classes.len())];
    (0..count)
        .map(|_| pool[rng.gen_range(0..pool.len())].clone())
        .collect()
}
