use rand::Rng;

use super::{iteration_rng, RunIo, Stage, TrainConfig, TrainState, TrainingData};
use crate::error::{Error, Result};
use crate::globalpath::{integrate_path, predict_graph, predict_root_motion};
use crate::losses::graph::path_loss;
use crate::nn::{Bound, Graph, RmsProp, Tensor, Weights};

/// Root-path errors in cm: mean planar displacement error over 1 and 128
/// frames, and mean absolute height error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathErrors {
    pub v1: f64,
    pub v128: f64,
    pub y: f64,
}

fn horizon_error(pred: &[[f64; 3]], truth: &[[f64; 3]], h: usize) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0;
    for t in 0..pred.len().saturating_sub(h) {
        let dx = (pred[t + h][0] - pred[t][0]) - (truth[t + h][0] - truth[t][0]);
        let dz = (pred[t + h][2] - pred[t][2]) - (truth[t + h][2] - truth[t][2]);
        sum += (dx * dx + dz * dz).sqrt();
        n += 1;
    }
    (sum, n)
}

/// Runs the predictor over every clip (cut to a multiple of 16 frames) and
/// compares the integrated paths with the ground truth.
pub fn path_errors(data: &TrainingData, w: &Weights) -> Result<PathErrors> {
    let mut acc = [(0.0, 0usize); 3];
    for c in 0..data.len() {
        let n = data.local[c].len() / 16 * 16;
        if n == 0 {
            continue;
        }
        let pred = predict_root_motion(&data.local[c][..n], w)?;
        let truth = &data.tracks[c][..n];
        let p = integrate_path(&pred, [0.0, 0.0]);
        let q = integrate_path(truth, [0.0, 0.0]);
        for (slot, h) in [(0, 1), (1, 128)] {
            let (s, k) = horizon_error(&p, &q, h);
            acc[slot].0 += s;
            acc[slot].1 += k;
        }
        for t in 0..n {
            acc[2].0 += (pred[t][2] - truth[t][2]).abs();
            acc[2].1 += 1;
        }
    }
    let mean = |(s, k): (f64, usize)| if k == 0 { 0.0 } else { s / k as f64 };
    Ok(PathErrors {
        v1: mean(acc[0]),
        v128: mean(acc[1]),
        y: mean(acc[2]),
    })
}

/// Final state, the weights with the lowest validation `V128`, and their
/// errors.
#[derive(Debug, Clone)]
pub struct PathOutcome {
    pub state: TrainState,
    pub best_weights: Weights,
    pub best_errors: PathErrors,
}

fn batch(
    data: &TrainingData,
    cfg: &TrainConfig,
    iter: u64,
) -> Result<(Tensor, Vec<Vec<[f64; 3]>>)> {
    let f = cfg.path_frames;
    let eligible: Vec<usize> = (0..data.len())
        .filter(|&c| data.clips[c].len() >= f)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Config(format!("no clip has {f} frames")));
    }
    let mut rng = iteration_rng(cfg.seed, iter);
    let ch = data.skel.local_channels();
    let mut x = Tensor::zeros(&[cfg.path_batch, ch, f]);
    let mut truth = Vec::with_capacity(cfg.path_batch);
    for b in 0..cfg.path_batch {
        let c = eligible[rng.gen_range(0..eligible.len())];
        let s = rng.gen_range(0..=data.clips[c].len() - f);
        for t in 0..f {
            for (k, v) in data.local[c][s + t].iter().enumerate() {
                let i = x.idx3(b, k, t);
                x.data[i] = *v;
            }
        }
        truth.push(data.tracks[c][s..s + f].to_vec());
    }
    Ok((x, truth))
}

pub(super) fn collect_grads(
    g: &Graph,
    p: &Bound,
    loss: crate::nn::Var,
) -> Result<Vec<(String, Tensor)>> {
    let mut grads = g.backward(loss)?;
    let mut out: Vec<(String, Tensor)> = p
        .iter()
        .filter_map(|(n, v)| grads.take(v).map(|t| (n.to_string(), t)))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Minimizes the multi-scale displacement plus height loss on random
/// `path_frames` windows. `resume` continues a saved first-stage state.
pub fn train_path_predictor(
    data: &TrainingData,
    val: Option<&TrainingData>,
    cfg: &TrainConfig,
    resume: Option<TrainState>,
    io: &mut RunIo,
) -> Result<PathOutcome> {
    cfg.validate()?;
    let spec = cfg.network_spec(&data.skel)?;
    let mut state = match resume {
        Some(s) if s.stage != Stage::Path => {
            return Err(Error::StageOrder(
                "cannot resume path training from an inbetweener state".into(),
            ))
        }
        Some(s) => s,
        None => TrainState::new(
            Stage::Path,
            Weights::init(&spec, cfg.seed),
            RmsProp::new(cfg.path_lr, cfg.alpha, cfg.eps),
            RmsProp::new(cfg.lr, cfg.alpha, cfg.eps),
        ),
    };
    let val = val.unwrap_or(data);
    let mut best_weights = state.weights.clone();
    let mut best_errors = path_errors(val, &best_weights)?;
    for it in state.iteration..cfg.path_iterations {
        let (x, truth) = batch(data, cfg, it)?;
        let mut g = Graph::new();
        let p = Bound::new(&mut g, &state.weights, &["path_predictor."], true);
        let xv = g.input(x);
        let y = predict_graph(&mut g, &state.weights, &p, xv)?;
        let loss = path_loss(&mut g, y, &truth);
        let l = g.value(loss).item();
        if !l.is_finite() {
            return Err(Error::Numeric(format!(
                "path loss diverged at iteration {it}"
            )));
        }
        let grads = collect_grads(&g, &p, loss)?;
        state.opt_g.step(&mut state.weights.params, &grads)?;
        state.iteration = it + 1;
        io.line(&format!("path iter={it} loss={l}"))?;
        if state.iteration % cfg.validate_every.max(1) == 0
            || state.iteration == cfg.path_iterations
        {
            let e = path_errors(val, &state.weights)?;
            io.line(&format!(
                "path validate iter={it} v1={} v128={} y={}",
                e.v1, e.v128, e.y
            ))?;
            if e.v128 < state.best {
                state.best = e.v128;
                best_weights = state.weights.clone();
                best_errors = e;
                if let Some(ck) = io.checkpoint {
                    best_weights.save(&ck.with_extension("best"))?;
                }
            }
        }
        if let Some(ck) = io.checkpoint {
            if state.iteration % cfg.checkpoint_every.max(1) == 0
                || state.iteration == cfg.path_iterations
            {
                state.save(ck)?;
            }
        }
    }
    Ok(PathOutcome {
        state,
        best_weights,
        best_errors,
    })
}
