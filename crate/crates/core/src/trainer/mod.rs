//! Two-stage training: the path predictor first, then the adversarial
//! inbetweener with the predictor frozen.

mod path;
mod state;
mod tween;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use path::{path_errors, train_path_predictor, PathErrors, PathOutcome};
pub use state::{Stage, TrainState};
pub use tween::{
    keyframe_error, substitute_keyframes, train_inbetweener, validation_batch, TweenBatch,
    TweenOutcome, GENERATOR_PREFIXES,
};

use crate::datapipe::MotionClip;
use crate::error::{Error, Result};
use crate::globalpath::differentiate;
use crate::keyframe::{extract_representative_frames, SamplingConfig, DNA_INTERVAL};
use crate::losses::LossWeights;
use crate::nn::NetworkSpec;
use crate::rcfk::Skeleton;

/// Training hyperparameters. [`Default`] is the full-scale setup;
/// [`TrainConfig::desk`] shrinks lengths, batches and widths for one CPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub width_divisor: usize,
    pub lr: f64,
    /// RMSprop smoothing constant.
    pub alpha: f64,
    pub eps: f64,
    pub gen_batch: usize,
    pub gen_frames: usize,
    pub real_batch: usize,
    pub real_min_frames: usize,
    pub real_max_frames: usize,
    pub iterations: u64,
    pub checkpoint_every: u64,
    pub validate_every: u64,
    pub path_lr: f64,
    pub path_batch: usize,
    pub path_frames: usize,
    pub path_iterations: u64,
    pub weights: LossWeights,
    pub sampling: SamplingConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            width_divisor: 1,
            lr: 1e-5,
            alpha: 0.99,
            eps: 1e-8,
            gen_batch: 4,
            gen_frames: 2048,
            real_batch: 16,
            real_min_frames: 256,
            real_max_frames: 1024,
            iterations: 560_000,
            checkpoint_every: 1000,
            validate_every: 500,
            path_lr: 1e-5,
            path_batch: 16,
            path_frames: 1024,
            path_iterations: 100_000,
            weights: LossWeights::default(),
            sampling: SamplingConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Single-CPU preset: N = 512, narrow networks, short runs.
    pub fn desk() -> Self {
        TrainConfig {
            width_divisor: 8,
            gen_frames: 512,
            real_batch: 4,
            real_max_frames: 512,
            iterations: 20_000,
            path_lr: 1e-4,
            path_batch: 4,
            path_frames: 512,
            path_iterations: 5000,
            ..TrainConfig::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.path_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.alpha) || self.eps <= 0.0 {
            return bad("alpha must lie in [0, 1) and eps be positive");
        }
        if self.width_divisor == 0 {
            return bad("width_divisor must be positive");
        }
        if self.gen_batch == 0 || self.real_batch == 0 || self.path_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if self.gen_frames == 0 || self.gen_frames % 64 != 0 {
            return bad("gen_frames must be a positive multiple of 64");
        }
        if self.real_min_frames < 64 || self.real_min_frames > self.real_max_frames {
            return bad("real frame range must be at least 64 and ordered");
        }
        if self.path_frames == 0 || self.path_frames % 16 != 0 {
            return bad("path_frames must be a positive multiple of 16");
        }
        if self.weights.path_max < self.weights.path_start {
            return bad("path weight ramp must not decrease");
        }
        Ok(())
    }

    pub fn network_spec(&self, skel: &Skeleton) -> Result<NetworkSpec> {
        NetworkSpec::new(skel.len(), self.width_divisor)
    }
}

/// Generator for iteration `iter`: stream `iter` of the run seed, so any
/// iteration can be replayed without the ones before it.
pub fn iteration_rng(seed: u64, iter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iter);
    rng
}

/// Per-clip arrays the training loops sample from.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub skel: Arc<Skeleton>,
    pub clips: Vec<MotionClip>,
    /// `3M` keyframe vectors per clip and frame.
    pub poses: Vec<Vec<Vec<f64>>>,
    /// Root-relative positions with root orientation, `3(M − 1)`.
    pub local: Vec<Vec<Vec<f64>>>,
    /// Ground-truth `(dx, dz, y)` per frame.
    pub tracks: Vec<Vec<[f64; 3]>>,
    /// Representative `Λ` poses pooled by class.
    pub class_pools: Vec<Vec<Vec<f64>>>,
    pub classes: Vec<String>,
}

impl TrainingData {
    /// Every clip contributes `max(1, len / 180)` representative frames to
    /// its class pool.
    pub fn new(clips: Vec<MotionClip>, skel: Arc<Skeleton>) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::Config("training needs at least one clip".into()));
        }
        let mut classes: Vec<String> = clips.iter().map(|c| c.class_label.clone()).collect();
        classes.sort();
        classes.dedup();
        let mut class_pools = vec![Vec::new(); classes.len()];
        let (mut poses, mut local, mut tracks) = (Vec::new(), Vec::new(), Vec::new());
        for c in &clips {
            c.validate(&skel)?;
            let frames: Vec<_> = (0..c.len()).map(|t| c.decode(t, &skel)).collect();
            poses.push(
                (0..c.len())
                    .map(|t| {
                        let mut v = c.root_positions[t].to_vec();
                        v.extend(frames[t].joint_positions[1..].iter().flatten());
                        v
                    })
                    .collect(),
            );
            local.push(frames.iter().map(|f| f.local_vector()).collect());
            tracks.push(differentiate(&c.root_positions));
            let rotations: Vec<_> = frames.iter().map(|f| f.joint_rotations.clone()).collect();
            let lambda: Vec<_> = (0..c.len()).map(|t| c.lambda_vector(t, &skel)).collect();
            let count = (c.len() / DNA_INTERVAL).max(1).min(c.len());
            let reps = extract_representative_frames(&rotations, &lambda, count)?;
            let k = classes.binary_search(&c.class_label).unwrap();
            class_pools[k].extend(reps.poses);
        }
        Ok(TrainingData {
            skel,
            clips,
            poses,
            local,
            tracks,
            class_pools,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

/// Where a training run writes its log and checkpoints.
pub struct RunIo<'a> {
    pub log: &'a mut dyn std::io::Write,
    /// Rolling checkpoint; the best validation weights go next to it with a
    /// `.best` extension.
    pub checkpoint: Option<&'a std::path::Path>,
}

impl RunIo<'_> {
    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.log, "{s}").map_err(|e| Error::io("<metrics log>", e))
    }
}
