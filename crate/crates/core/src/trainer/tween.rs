use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::path::collect_grads;
use super::{iteration_rng, RunIo, Stage, TrainConfig, TrainState, TrainingData};
use crate::error::{Error, Result};
use crate::globalpath::predict_graph;
use crate::keyframe::{
    build_dense_input, sample_dna, sample_keyframes, KeyframeSet, POSITION_SCALE,
};
use crate::losses::graph::{batch_reg, dna1, dna2, local_joint, lsgan_d, lsgan_g, root_alignment};
use crate::nn::{
    discriminator_forward, dna_encode, generator_forward, Bound, Graph, RmsProp, Tensor, Var,
    Weights,
};
use crate::rcfk::Skeleton;

/// Parameter prefixes the generator owns.
pub const GENERATOR_PREFIXES: [&str; 4] = ["encoder.", "decoder.", "dna_encoder.", "dna_empty"];

/// One generator batch: keyframes recentred on their root centroid, the
/// representative poses per item, and the stacked dense conditioning.
#[derive(Debug, Clone)]
pub struct TweenBatch {
    pub keys: Vec<KeyframeSet>,
    pub reps: Vec<Vec<Vec<f64>>>,
    pub cond: Tensor,
}

impl TweenBatch {
    pub fn sample(data: &TrainingData, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = cfg.gen_frames;
        let ch = data.skel.pose_channels();
        let mut cond = Tensor::zeros(&[cfg.gen_batch, 2 * ch, n]);
        let mut keys = Vec::with_capacity(cfg.gen_batch);
        let mut reps = Vec::with_capacity(cfg.gen_batch);
        for b in 0..cfg.gen_batch {
            let plan = sample_keyframes(&data.poses, n, &cfg.sampling, rng)?;
            let c = plan.keys.root_centroid();
            let k = plan.keys.translated(-c[0], -c[1]);
            reps.push(sample_dna(&plan.intervals(n), &data.class_pools, rng));
            let input = build_dense_input(&k, n)?.network_input();
            cond.batch_mut(b).copy_from_slice(&input.data);
            keys.push(k);
        }
        Ok(TweenBatch { keys, reps, cond })
    }
}

/// Fixed batch (its own random stream) for tracking keyframe error.
pub fn validation_batch(data: &TrainingData, cfg: &TrainConfig) -> Result<TweenBatch> {
    TweenBatch::sample(data, cfg, &mut iteration_rng(cfg.seed, u64::MAX))
}

/// Generator graph outputs: root-relative positions with root rotation
/// `[B, 3M, N]`, the same without root rotation (`Λ`), and the generator's
/// residual-block features.
struct Generated {
    pos: Var,
    lambda: Var,
    feats: Vec<Var>,
}

fn dna_batch(g: &mut Graph, w: &Weights, p: &Bound, reps: &[Vec<Vec<f64>>]) -> Result<Var> {
    let mut parts = Vec::with_capacity(reps.len());
    for r in reps {
        let frames = if r.is_empty() {
            None
        } else {
            let ch = r[0].len();
            let t = Tensor::from_fn3(1, ch, r.len(), |_, c, i| r[i][c] * POSITION_SCALE);
            Some(g.input(t))
        };
        parts.push(dna_encode(g, &w.spec, p, frames)?);
    }
    g.stack_batch(&parts)
}

fn generate(
    g: &mut Graph,
    w: &Weights,
    p: &Bound,
    batch: &TweenBatch,
    skel: &Arc<Skeleton>,
) -> Result<Generated> {
    let cond = g.input(batch.cond.clone());
    let dna = dna_batch(g, w, p, &batch.reps)?;
    let mut feats = Vec::new();
    let raw = generator_forward(g, &w.spec, p, cond, dna, Some(&mut feats))?;
    let pos = g.rc_fk(raw, skel, true)?;
    let lambda = g.rc_fk(raw, skel, false)?;
    Ok(Generated { pos, lambda, feats })
}

/// Replaces the keyframe rows of `local` (`[B, 3(M−1), N]`) with the users'
/// poses, coordinate by coordinate where the mask is set.
pub fn substitute_keyframes(g: &mut Graph, local: Var, keys: &[KeyframeSet]) -> Result<Var> {
    let shape = g.value(local).shape.clone();
    let mut values = Tensor::zeros(&shape);
    let mut mask = vec![false; values.len()];
    for (b, k) in keys.iter().enumerate() {
        for ((&f, pose), m) in k.indices().iter().zip(k.poses()).zip(k.masks()) {
            for c in 3..pose.len() {
                if m[c] {
                    let i = values.idx3(b, c - 3, f);
                    values.data[i] = pose[c];
                    mask[i] = true;
                }
            }
        }
    }
    g.substitute(local, mask, &values)
}

/// Mean Euclidean distance (cm) between generated and keyframe joints over
/// every fully masked non-root joint of every keyframe.
pub fn keyframe_error(w: &Weights, batch: &TweenBatch, skel: &Arc<Skeleton>) -> Result<f64> {
    let mut g = Graph::new();
    let p = Bound::new(&mut g, w, &GENERATOR_PREFIXES, false);
    let out = generate(&mut g, w, &p, batch, skel)?;
    let pos = g.value(out.pos);
    let (mut sum, mut n) = (0.0, 0usize);
    for (b, k) in batch.keys.iter().enumerate() {
        for ((&f, pose), m) in k.indices().iter().zip(k.poses()).zip(k.masks()) {
            for j in 1..skel.len() {
                if m[3 * j..3 * j + 3].iter().all(|&x| x) {
                    let d: f64 = (0..3)
                        .map(|c| (pos.at3(b, 3 * j + c, f) - pose[3 * j + c]).powi(2))
                        .sum();
                    sum += d.sqrt();
                    n += 1;
                }
            }
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn real_batch(data: &TrainingData, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let longest = data.clips.iter().map(|c| c.len()).max().unwrap_or(0) / 64 * 64;
    if longest == 0 {
        return Err(Error::Config("no clip has 64 frames".into()));
    }
    let lo = cfg.real_min_frames.div_ceil(64);
    let hi = (cfg.real_max_frames / 64).max(lo);
    let len = (64 * rng.gen_range(lo..=hi)).min(longest);
    let eligible: Vec<usize> = (0..data.len())
        .filter(|&c| data.clips[c].len() >= len)
        .collect();
    let ch = data.skel.local_channels();
    let mut x = Tensor::zeros(&[cfg.real_batch, ch, len]);
    for b in 0..cfg.real_batch {
        let c = eligible[rng.gen_range(0..eligible.len())];
        let s = rng.gen_range(0..=data.clips[c].len() - len);
        for t in 0..len {
            for (k, v) in data.local[c][s + t].iter().enumerate() {
                let i = x.idx3(b, k, t);
                x.data[i] = v * POSITION_SCALE;
            }
        }
    }
    Ok(x)
}

/// Final state plus the weights with the lowest validation keyframe error.
#[derive(Debug, Clone)]
pub struct TweenOutcome {
    pub state: TrainState,
    pub best_weights: Weights,
    pub best_error: f64,
}

fn start_state(start: TrainState, cfg: &TrainConfig, data: &TrainingData) -> Result<TrainState> {
    let spec = cfg.network_spec(&data.skel)?;
    if start.weights.spec != spec {
        return Err(Error::Config(
            "checkpoint was trained with a different network spec".into(),
        ));
    }
    match start.stage {
        Stage::Tween => Ok(start),
        Stage::Path if start.iteration == 0 => Err(Error::StageOrder(
            "the path predictor has not been trained".into(),
        )),
        Stage::Path => {
            let mut w = Weights::init(&spec, cfg.seed);
            for (n, t) in w.params.iter_mut() {
                if n.starts_with("path_predictor.") {
                    *t = start.weights.params.get(n).unwrap().clone();
                }
            }
            Ok(TrainState::new(
                Stage::Tween,
                w,
                RmsProp::new(cfg.lr, cfg.alpha, cfg.eps),
                RmsProp::new(cfg.lr, cfg.alpha, cfg.eps),
            ))
        }
    }
}

/// Adversarial training with the path predictor frozen. `start` is either a
/// trained first-stage state (fresh run) or a saved inbetweener state
/// (resume).
pub fn train_inbetweener(
    data: &TrainingData,
    val: Option<&TrainingData>,
    cfg: &TrainConfig,
    start: TrainState,
    io: &mut RunIo,
) -> Result<TweenOutcome> {
    cfg.validate()?;
    let mut state = start_state(start, cfg, data)?;
    let skel = Arc::clone(&data.skel);
    let frozen = state.weights.digest("path_predictor.");
    let vbatch = validation_batch(val.unwrap_or(data), cfg)?;
    let mut best_weights = state.weights.clone();
    let mut best_error = keyframe_error(&best_weights, &vbatch, &skel)?;
    let lw = cfg.weights;
    let m = skel.len();

    for it in state.iteration..cfg.iterations {
        let mut rng = iteration_rng(cfg.seed, it);
        let batch = TweenBatch::sample(data, cfg, &mut rng)?;
        let real = real_batch(data, cfg, &mut rng)?;

        let mut g = Graph::new();
        let pg = Bound::new(&mut g, &state.weights, &GENERATOR_PREFIXES, true);
        let out = generate(&mut g, &state.weights, &pg, &batch, &skel)?;
        let local = g.slice_channels(out.pos, 3, 3 * (m - 1));
        let subbed = substitute_keyframes(&mut g, local, &batch.keys)?;
        let fake = g.scale(subbed, POSITION_SCALE);

        let mut gd = Graph::new();
        let pd = Bound::new(&mut gd, &state.weights, &["discriminator."], true);
        let rv = gd.input(real);
        let fv = gd.input(g.value(fake).clone());
        let mut dfeats = Vec::new();
        let yr = discriminator_forward(&mut gd, &state.weights.spec, &pd, rv, Some(&mut dfeats))?;
        let yf = discriminator_forward(&mut gd, &state.weights.spec, &pd, fv, Some(&mut dfeats))?;
        let d_adv = lsgan_d(&mut gd, yr, yf);
        let d_br = batch_reg(&mut gd, &dfeats);
        let d_total = gd.weighted_sum(&[(d_adv, lw.gan), (d_br, lw.batch_reg)]);
        let d_val = gd.value(d_total).item();
        if !d_val.is_finite() {
            return Err(Error::Numeric(format!(
                "discriminator loss diverged at iteration {it}"
            )));
        }
        let grads = collect_grads(&gd, &pd, d_total)?;
        state.opt_d.step(&mut state.weights.params, &grads)?;

        let pdf = Bound::new(
            &mut g,
            &state.weights,
            &["discriminator.", "path_predictor."],
            false,
        );
        let ys = discriminator_forward(&mut g, &state.weights.spec, &pdf, fake, None)?;
        let adv = lsgan_g(&mut g, ys);
        let br = batch_reg(&mut g, &out.feats);
        let loc = local_joint(&mut g, out.pos, &batch.keys);
        let l1 = dna1(&mut g, out.lambda, &batch.reps);
        let cuts: Vec<Vec<usize>> = batch.keys.iter().map(|k| k.indices().to_vec()).collect();
        let l2 = dna2(&mut g, out.lambda, &batch.reps, &cuts);
        let channels = predict_graph(&mut g, &state.weights, &pdf, local)?;
        let path = g.integrate_path(channels)?;
        let root = root_alignment(&mut g, path, &batch.keys);
        let pw = lw.path_weight(it);
        let total = g.weighted_sum(&[
            (adv, lw.gan),
            (br, lw.batch_reg),
            (loc, lw.local_joint),
            (l1, lw.dna1),
            (l2, lw.dna2),
            (root, pw),
        ]);
        let g_val = g.value(total).item();
        if !g_val.is_finite() {
            return Err(Error::Numeric(format!(
                "generator loss diverged at iteration {it}"
            )));
        }
        let grads = collect_grads(&g, &pg, total)?;
        state.opt_g.step(&mut state.weights.params, &grads)?;
        state.iteration = it + 1;

        let v = |x: Var| g.value(x).item();
        io.line(&format!(
            "tween iter={it} d={d_val} adv={} br={} local={} dna1={} dna2={} root={} path_w={pw} g={g_val}",
            v(adv),
            v(br),
            v(loc),
            v(l1),
            v(l2),
            v(root)
        ))?;
        if state.iteration % cfg.validate_every.max(1) == 0 || state.iteration == cfg.iterations {
            let e = keyframe_error(&state.weights, &vbatch, &skel)?;
            io.line(&format!("tween validate iter={it} keyframe_cm={e}"))?;
            if e < state.best {
                state.best = e;
                best_weights = state.weights.clone();
                best_error = e;
                if let Some(ck) = io.checkpoint {
                    best_weights.save(&ck.with_extension("best"))?;
                }
            }
        }
        if let Some(ck) = io.checkpoint {
            if state.iteration % cfg.checkpoint_every.max(1) == 0
                || state.iteration == cfg.iterations
            {
                state.save(ck)?;
            }
        }
    }
    if state.weights.digest("path_predictor.") != frozen {
        return Err(Error::Checkpoint(
            "path predictor weights changed during inbetweener training".into(),
        ));
    }
    Ok(TweenOutcome {
        state,
        best_weights,
        best_error,
    })
}
