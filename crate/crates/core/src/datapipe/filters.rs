use serde::{Deserialize, Serialize};

use super::clip::{MotionClip, FPS, MIN_CLIP_FRAMES};
use crate::rcfk::Skeleton;
use crate::rotmath::sub;

/// Thresholds of the cleaning stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Averaging window of the lowest joint height, seconds.
    pub ground_window_s: f64,
    /// Windowed lowest height below this (cm) drops the clip.
    pub ground_min_cm: f64,
    /// Spread of the windowed lowest height (cm) above which the motion is
    /// taken to leave the flat ground.
    pub ground_drift_cm: f64,
    /// Acceleration spikes beyond `mean + k·σ` are noise.
    pub spike_sigma: f64,
    /// Accelerations below this (cm/frame²) are never spikes.
    pub spike_floor: f64,
    /// Clamp distance (radians) at import above which a frame is noise.
    pub limit_violation_rad: f64,
    pub min_frames: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            ground_window_s: 1.0,
            ground_min_cm: -2.0,
            ground_drift_cm: 15.0,
            spike_sigma: 6.0,
            spike_floor: 5.0,
            limit_violation_rad: 0.1,
            min_frames: MIN_CLIP_FRAMES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundReport {
    pub keep: bool,
    /// Smallest and largest windowed lowest height, cm.
    pub lowest: f64,
    pub highest: f64,
}

/// Averages each frame's lowest joint height over sliding windows and keeps
/// the clip when every window sits at or above `ground_min_cm` and the
/// windows agree within `ground_drift_cm`.
pub fn filter_ground_plane(clip: &MotionClip, skel: &Skeleton, cfg: &FilterConfig) -> GroundReport {
    let lows: Vec<f64> = (0..clip.len())
        .map(|t| {
            clip.world_positions(t, skel)
                .iter()
                .map(|p| p[1])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let w = ((cfg.ground_window_s * FPS).round() as usize).clamp(1, lows.len().max(1));
    let mut sums = Vec::new();
    let mut acc: f64 = lows.iter().take(w).sum();
    if lows.len() >= w {
        sums.push(acc / w as f64);
        for t in w..lows.len() {
            acc += lows[t] - lows[t - w];
            sums.push(acc / w as f64);
        }
    }
    let lowest = sums.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    GroundReport {
        keep: !sums.is_empty()
            && lowest >= cfg.ground_min_cm
            && highest - lowest <= cfg.ground_drift_cm,
        lowest,
        highest,
    }
}

/// Per-frame badness: the largest joint acceleration (cm/frame²) in world
/// space, zero at the two ends.
pub fn acceleration_scores(clip: &MotionClip, skel: &Skeleton) -> Vec<f64> {
    let pos: Vec<_> = (0..clip.len())
        .map(|t| clip.world_positions(t, skel))
        .collect();
    (0..pos.len())
        .map(|t| {
            if t == 0 || t + 1 >= pos.len() {
                return 0.0;
            }
            (0..skel.len())
                .map(|j| {
                    let a = sub(sub(pos[t + 1][j], pos[t][j]), sub(pos[t][j], pos[t - 1][j]));
                    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
                })
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Frames judged noisy: import clamps beyond the limit threshold, and
/// acceleration scores above `max(mean + k·σ, floor)` that are local maxima (a single
/// teleported frame also lifts its neighbours' scores).
pub fn noisy_frames(clip: &MotionClip, skel: &Skeleton, cfg: &FilterConfig) -> Vec<bool> {
    let s = acceleration_scores(clip, skel);
    let n = s.len().max(1) as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let cut = (mean + cfg.spike_sigma * std).max(cfg.spike_floor);
    (0..s.len())
        .map(|t| {
            let prev = if t > 0 { s[t - 1] } else { 0.0 };
            let next = s.get(t + 1).copied().unwrap_or(0.0);
            let spike = s[t] > cut && s[t] >= prev && s[t] >= next;
            spike || clip.clamp[t] > cfg.limit_violation_rad
        })
        .collect()
}

/// Removes noisy frames, splits the clip at each removal and drops pieces
/// shorter than `min_frames`. Pieces are suffixed `#0`, `#1`, …
pub fn filter_noise(clip: &MotionClip, skel: &Skeleton, cfg: &FilterConfig) -> Vec<MotionClip> {
    let bad = noisy_frames(clip, skel, cfg);
    if !bad.iter().any(|&b| b) {
        return if clip.len() >= cfg.min_frames {
            vec![clip.clone()]
        } else {
            Vec::new()
        };
    }
    let mut out = Vec::new();
    let mut start = 0;
    let mut piece = 0;
    for t in 0..=clip.len() {
        if t == clip.len() || bad[t] {
            if t - start >= cfg.min_frames {
                out.push(clip.slice(start..t, &format!("#{piece}")));
            }
            piece += 1;
            start = t + 1;
        }
    }
    out
}
