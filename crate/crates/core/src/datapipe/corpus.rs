use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::clip::{MotionClip, FPS};
use crate::rcfk::Skeleton;
use crate::rotmath::{AxisRange, Mat3};

/// Test share of the reference split (242 of 1462 clips).
pub const TEST_FRACTION: f64 = 242.0 / 1462.0;

/// Train/test clips and the sorted class list.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<MotionClip>,
    pub test: Vec<MotionClip>,
    pub classes: Vec<String>,
}

impl Corpus {
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes
            .binary_search_by(|c| c.as_str().cmp(label))
            .ok()
    }
}

/// Clips held out per class of size `n`.
pub fn test_count(n: usize) -> usize {
    (n as f64 * TEST_FRACTION).round() as usize
}

/// Stratified split: within each class (in sorted order) the clips are
/// shuffled by a generator seeded with `seed` and the first
/// [`test_count`] go to the test set.
pub fn split_corpus(clips: Vec<MotionClip>, seed: u64) -> Corpus {
    let mut by_class: BTreeMap<String, Vec<MotionClip>> = BTreeMap::new();
    for c in clips {
        by_class.entry(c.class_label.clone()).or_default().push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus {
        train: Vec::new(),
        test: Vec::new(),
        classes: by_class.keys().cloned().collect(),
    };
    for (_, mut v) in by_class {
        v.shuffle(&mut rng);
        let k = test_count(v.len());
        let train = v.split_off(k);
        corpus.test.extend(v);
        corpus.train.extend(train);
    }
    corpus
}

/// Procedural motion styles for the synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionStyle {
    pub name: &'static str,
    /// Forward speed, cm per frame.
    pub speed: f64,
    /// Gait frequency, Hz.
    pub frequency: f64,
    /// Fraction of each joint's usable half-range swept.
    pub amplitude: f64,
    /// Peak yaw rate, radians per second.
    pub turn_rate: f64,
}

pub const STYLES: [MotionStyle; 4] = [
    MotionStyle {
        name: "walk",
        speed: 2.2,
        frequency: 0.9,
        amplitude: 0.35,
        turn_rate: 0.3,
    },
    MotionStyle {
        name: "run",
        speed: 5.0,
        frequency: 1.5,
        amplitude: 0.55,
        turn_rate: 0.4,
    },
    MotionStyle {
        name: "dance",
        speed: 0.6,
        frequency: 0.6,
        amplitude: 0.7,
        turn_rate: 1.0,
    },
    MotionStyle {
        name: "idle",
        speed: 0.0,
        frequency: 0.25,
        amplitude: 0.12,
        turn_rate: 0.05,
    },
];

fn swing(r: &AxisRange, amp: f64, phase: f64) -> f64 {
    if r.is_fixed() {
        return 0.0;
    }
    let w = r.max - r.min;
    let c = 0.0f64.clamp(r.min + 0.3 * w, r.max - 0.3 * w);
    let reach = (c - r.min).min(r.max - c) * 0.8;
    c + amp * reach * phase.sin()
}

/// Centered moving average with window `2·half + 1`, shrunk at the ends.
fn box_smooth(v: &[f64], half: usize) -> Vec<f64> {
    (0..v.len())
        .map(|t| {
            let w = &v[t.saturating_sub(half)..(t + half + 1).min(v.len())];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect()
}

/// One procedural clip of `frames` frames in `style`, lifted by a smoothed
/// lowest-joint height so every one-second average of the lowest joint stays at or above
/// `y = 0`.
pub fn synthesize_clip(
    skel: &Skeleton,
    style: &MotionStyle,
    frames: usize,
    name: &str,
    rng: &mut impl Rng,
) -> MotionClip {
    let m = skel.len();
    let phases: Vec<[f64; 3]> = (0..m)
        .map(|_| [0, 1, 2].map(|_| rng.gen_range(0.0..TAU)))
        .collect();
    let harm: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..0.3)).collect();
    let speed = style.speed * rng.gen_range(0.8..1.2);
    let freq = style.frequency * rng.gen_range(0.85..1.15);
    let yaw0 = rng.gen_range(0.0..TAU);
    let turn_phase = rng.gen_range(0.0..TAU);
    let mut clip = MotionClip {
        name: name.to_string(),
        class_label: style.name.to_string(),
        source: "synthetic".into(),
        root_positions: Vec::with_capacity(frames),
        root_rotations: Vec::with_capacity(frames),
        angles: Vec::with_capacity(frames),
        clamp: vec![0.0; frames],
    };
    let (mut x, mut z) = (rng.gen_range(-200.0..200.0), rng.gen_range(-200.0..200.0));
    for t in 0..frames {
        let secs = t as f64 / FPS;
        let w = TAU * freq * secs;
        let yaw = yaw0 + style.turn_rate / (0.2 * TAU) * (0.2 * TAU * secs + turn_phase).sin();
        let mut angles = vec![[0.0; 3]; m];
        for j in 1..m {
            if skel.is_end_site(j) {
                continue;
            }
            let r = skel.ranges(j);
            for k in 0..3 {
                let ph = w + phases[j][k] + harm[j] * (2.0 * w).sin();
                angles[j][k] = swing(&r[k], style.amplitude, ph);
            }
        }
        clip.root_rotations.push(Mat3::rot_y(yaw));
        clip.root_positions.push([x, 0.0, z]);
        clip.angles.push(angles);
        x += speed * yaw.sin();
        z += speed * yaw.cos();
    }
    let lows: Vec<f64> = (0..frames)
        .map(|t| {
            clip.world_positions(t, skel)
                .iter()
                .map(|p| p[1])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let half = (FPS / 8.0) as usize;
    let ground = box_smooth(&box_smooth(&lows, half), half);
    let rest: Vec<f64> = (0..frames).map(|t| lows[t] - ground[t]).collect();
    let sink = rest
        .windows((FPS as usize).min(frames.max(1)))
        .map(|w| w.iter().sum::<f64>() / w.len() as f64)
        .fold(f64::INFINITY, f64::min);
    let sink = if sink.is_finite() { sink } else { 0.0 };
    for (p, g) in clip.root_positions.iter_mut().zip(ground) {
        p[1] -= g + sink;
    }
    clip
}

/// `per_class` clips for each style, lengths drawn from `frames`.
pub fn synthetic_corpus(
    skel: &Skeleton,
    styles: &[MotionStyle],
    per_class: usize,
    frames: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Vec<MotionClip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in styles {
        for i in 0..per_class {
            let n = rng.gen_range(frames.clone());
            out.push(synthesize_clip(
                skel,
                s,
                n,
                &format!("{}_{i:03}", s.name),
                &mut rng,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_ratio() {
        assert_eq!(test_count(1462), 242);
        assert_eq!(test_count(6), 1);
        assert_eq!(test_count(2), 0);
    }

    #[test]
    fn synthetic_angles_inside_limits() {
        let skel = Skeleton::cmu();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = synthesize_clip(&skel, &STYLES[2], 120, "d", &mut rng);
        c.validate(&skel).unwrap();
        for a in &c.angles {
            for j in 1..skel.len() {
                for (k, r) in skel.ranges(j).iter().enumerate() {
                    assert!(a[j][k] >= r.min && a[j][k] <= r.max);
                }
            }
        }
    }
}
