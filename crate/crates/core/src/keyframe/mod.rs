//! Keyframe conditioning: sparse and dense input tensors, keyframe sampling
//! and representative frames for Motion DNA.

mod sample;

pub use sample::{
    cut_intervals, dna_frame_count, extract_representative_frames, sample_dna, sample_keyframes,
    KeyframePlan, RepresentativeFrames, SamplingConfig, DNA_INTERVAL, MAX_GAP, NON_ADJACENCY,
};

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Dense distances are divided by this before entering the network.
pub const DISTANCE_SCALE: f64 = 300.0;
/// Centimetres to network units for conditioning positions.
pub const POSITION_SCALE: f64 = 0.01;

/// User-specified poses at sorted frame indices. A pose is `3M` values: the
/// root's world position followed by every other joint relative to the root.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeSet {
    indices: Vec<usize>,
    poses: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
}

impl KeyframeSet {
    pub fn new(indices: Vec<usize>, poses: Vec<Vec<f64>>, masks: Vec<Vec<bool>>) -> Result<Self> {
        if indices.len() != poses.len() || indices.len() != masks.len() {
            return Err(Error::Keyframe(
                "indices, poses and masks differ in count".into(),
            ));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Keyframe(
                "indices must be strictly increasing".into(),
            ));
        }
        let ch = poses.first().map_or(0, Vec::len);
        if ch % 3 != 0 {
            return Err(Error::Keyframe(format!(
                "pose width {ch} is not a multiple of 3"
            )));
        }
        for (p, m) in poses.iter().zip(&masks) {
            if p.len() != ch || m.len() != ch {
                return Err(Error::Keyframe("inconsistent pose width".into()));
            }
            if p.iter().zip(m).any(|(v, &on)| on && !v.is_finite()) {
                return Err(Error::NonFinite("keyframe pose"));
            }
        }
        Ok(KeyframeSet {
            indices,
            poses,
            masks,
        })
    }

    /// Every coordinate present.
    pub fn full(indices: Vec<usize>, poses: Vec<Vec<f64>>) -> Result<Self> {
        let masks = poses.iter().map(|p| vec![true; p.len()]).collect();
        Self::new(indices, poses, masks)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Pose width `3M`.
    pub fn channels(&self) -> usize {
        self.poses.first().map_or(0, Vec::len)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn poses(&self) -> &[Vec<f64>] {
        &self.poses
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    /// Mean root `(x, z)` over keyframes whose root planar coordinates are
    /// present.
    pub fn root_centroid(&self) -> [f64; 2] {
        let mut acc = [0.0, 0.0];
        let mut n = [0usize; 2];
        for (p, m) in self.poses.iter().zip(&self.masks) {
            for (slot, c) in [(0, 0), (1, 2)] {
                if m[c] {
                    acc[slot] += p[c];
                    n[slot] += 1;
                }
            }
        }
        [acc[0] / n[0].max(1) as f64, acc[1] / n[1].max(1) as f64]
    }

    /// Moves every root position by `(dx, dz)` in the ground plane.
    pub fn translated(&self, dx: f64, dz: f64) -> Self {
        let mut out = self.clone();
        for p in &mut out.poses {
            p[0] += dx;
            p[2] += dz;
        }
        out
    }

    fn check_range(&self, n: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= n => Err(Error::Keyframe(format!(
                "keyframe index {last} outside 0..{n}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningMode {
    Sparse,
    Dense,
}

/// Frame-major `N × 3M` values and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningTensor {
    pub mode: ConditioningMode,
    pub frames: usize,
    pub channels: usize,
    pub values: Vec<f64>,
    pub weight: Vec<f64>,
}

impl ConditioningTensor {
    pub fn value(&self, t: usize, c: usize) -> f64 {
        self.values[t * self.channels + c]
    }

    pub fn weight_at(&self, t: usize, c: usize) -> f64 {
        self.weight[t * self.channels + c]
    }

    /// `[1, 2·3M, N]`: scaled positions then weights.
    pub fn network_input(&self) -> Tensor {
        let (n, ch) = (self.frames, self.channels);
        Tensor::from_fn3(1, 2 * ch, n, |_, c, t| {
            if c < ch {
                self.values[t * ch + c] * POSITION_SCALE
            } else {
                self.weight[t * ch + c - ch]
            }
        })
    }
}

/// Keyframe poses at their frames, zero elsewhere; the weight is the 0/1
/// presence mask.
pub fn build_sparse_input(keys: &KeyframeSet, n: usize) -> Result<ConditioningTensor> {
    keys.check_range(n)?;
    let ch = keys.channels();
    let mut values = vec![0.0; n * ch];
    let mut weight = vec![0.0; n * ch];
    for ((&t, p), m) in keys.indices.iter().zip(&keys.poses).zip(&keys.masks) {
        for c in 0..ch {
            if m[c] {
                values[t * ch + c] = p[c];
                weight[t * ch + c] = 1.0;
            }
        }
    }
    Ok(ConditioningTensor {
        mode: ConditioningMode::Sparse,
        frames: n,
        channels: ch,
        values,
        weight,
    })
}

/// For each frame, the slot of the nearest entry of `keys` (sorted) and the
/// distance to it; ties go to the earlier keyframe.
fn nearest(keys: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n);
    let mut next = 0;
    for t in 0..n {
        while next < keys.len() && keys[next] < t {
            next += 1;
        }
        let after = keys.get(next).map(|&k| (next, k - t));
        let before = next.checked_sub(1).map(|i| (i, t - keys[i]));
        out.push(match (before, after) {
            (Some(b), Some(a)) => {
                if a.1 < b.1 {
                    a
                } else {
                    b
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!("at least one keyframe"),
        });
    }
    out
}

/// Every frame copies the pose of its nearest keyframe; the weight is the
/// distance to it divided by [`DISTANCE_SCALE`]. With partial masks each
/// coordinate uses only the keyframes where it is present; a coordinate
/// present nowhere gets value 0 and distance `N`.
pub fn build_dense_input(keys: &KeyframeSet, n: usize) -> Result<ConditioningTensor> {
    if keys.is_empty() {
        return Err(Error::Keyframe(
            "dense input needs at least one keyframe".into(),
        ));
    }
    keys.check_range(n)?;
    let ch = keys.channels();
    let mut values = vec![0.0; n * ch];
    let mut weight = vec![n as f64 / DISTANCE_SCALE; n * ch];
    let full = keys.masks.iter().all(|m| m.iter().all(|&b| b));
    let all_slots: Vec<usize> = (0..keys.len()).collect();
    let shared = full.then(|| nearest(&keys.indices, n));
    for c in 0..ch {
        let (slots, table) = match &shared {
            Some(t) => (all_slots.clone(), t.clone()),
            None => {
                let slots: Vec<usize> = (0..keys.len()).filter(|&i| keys.masks[i][c]).collect();
                if slots.is_empty() {
                    continue;
                }
                let idx: Vec<usize> = slots.iter().map(|&i| keys.indices[i]).collect();
                (slots, nearest(&idx, n))
            }
        };
        for (t, &(s, d)) in table.iter().enumerate() {
            values[t * ch + c] = keys.poses[slots[s]][c];
            weight[t * ch + c] = d as f64 / DISTANCE_SCALE;
        }
    }
    Ok(ConditioningTensor {
        mode: ConditioningMode::Dense,
        frames: n,
        channels: ch,
        values,
        weight,
    })
}
