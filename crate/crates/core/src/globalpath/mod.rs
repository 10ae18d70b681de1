//! Root trajectory from local motion: prediction, integration and anchoring.

use crate::error::{Error, Result};
use crate::keyframe::POSITION_SCALE;
use crate::nn::{path_forward, Bound, Graph, Tensor, Var, Weights};
use crate::rotmath::Vec3;

/// Multipliers taking predictor outputs to `(dx cm/frame, dz cm/frame, y cm)`.
pub const OUTPUT_SCALE: [f64; 3] = [1.0, 1.0, 100.0];

/// Root positions with their planar velocities and heights.
#[derive(Debug, Clone, PartialEq)]
pub struct RootTrack {
    pub positions: Vec<Vec3>,
    /// `(dx, dz)` per frame; the last frame repeats zero.
    pub velocities: Vec<[f64; 2]>,
    pub heights: Vec<f64>,
}

impl RootTrack {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        let ch = differentiate(&positions);
        RootTrack {
            velocities: ch.iter().map(|c| [c[0], c[1]]).collect(),
            heights: ch.iter().map(|c| c[2]).collect(),
            positions,
        }
    }

    pub fn from_channels(channels: &[[f64; 3]], start: [f64; 2]) -> Self {
        RootTrack {
            positions: integrate_path(channels, start),
            velocities: channels.iter().map(|c| [c[0], c[1]]).collect(),
            heights: channels.iter().map(|c| c[2]).collect(),
        }
    }

    pub fn channels(&self) -> Vec<[f64; 3]> {
        self.velocities
            .iter()
            .zip(&self.heights)
            .map(|(v, h)| [v[0], v[1], *h])
            .collect()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Positions `(x, y, z)` from `(dx, dz, y)` channels: `x_t = x₀ + Σ_{s<t} dx_s`,
/// likewise `z`, height passed through.
pub fn integrate_path(channels: &[[f64; 3]], start: [f64; 2]) -> Vec<Vec3> {
    let (mut x, mut z) = (start[0], start[1]);
    channels
        .iter()
        .map(|c| {
            let p = [x, c[2], z];
            x += c[0];
            z += c[1];
            p
        })
        .collect()
}

/// Inverse of [`integrate_path`]; the last frame's planar velocity is zero.
pub fn differentiate(positions: &[Vec3]) -> Vec<[f64; 3]> {
    (0..positions.len())
        .map(|t| match positions.get(t + 1) {
            Some(next) => [
                next[0] - positions[t][0],
                next[2] - positions[t][2],
                positions[t][1],
            ],
            None => [0.0, 0.0, positions[t][1]],
        })
        .collect()
}

/// Least-squares planar translation taking `path` at `indices` onto
/// `targets`: the mean difference in `x` and `z`.
pub fn anchor_offset(path: &[Vec3], indices: &[usize], targets: &[Vec3]) -> [f64; 2] {
    let n = indices.len().max(1) as f64;
    let mut d = [0.0, 0.0];
    for (&t, p) in indices.iter().zip(targets) {
        d[0] += (p[0] - path[t][0]) / n;
        d[1] += (p[2] - path[t][2]) / n;
    }
    d
}

/// Graph form of the predictor: `[B, 3(M−1), N]` positions in cm to
/// `[B, 3, N]` channels `(dx, dz, y)` in cm.
pub fn predict_graph(g: &mut Graph, w: &Weights, p: &Bound, local_cm: Var) -> Result<Var> {
    let x = g.scale(local_cm, POSITION_SCALE);
    let y = path_forward(g, &w.spec, p, x)?;
    let s = g.input(Tensor::new(vec![3], OUTPUT_SCALE.to_vec())?);
    let b = g.input(Tensor::zeros(&[3]));
    Ok(g.affine(y, s, b))
}

/// Per-frame `(dx, dz, y)` for frame-major root-relative positions
/// (`N × 3(M−1)`, root orientation applied). `N` must be a multiple of 16.
pub fn predict_root_motion(local: &[Vec<f64>], w: &Weights) -> Result<Vec<[f64; 3]>> {
    let n = local.len();
    let ch = w.spec.path_predictor.in_ch();
    if local.iter().any(|f| f.len() != ch) {
        return Err(Error::Shape(format!(
            "path predictor expects {ch} values per frame"
        )));
    }
    let x = Tensor::from_fn3(1, ch, n, |_, c, t| local[t][c]);
    let mut g = Graph::new();
    let p = Bound::new(&mut g, w, &["path_predictor."], false);
    let xv = g.input(x);
    let y = predict_graph(&mut g, w, &p, xv)?;
    let yv = g.value(y);
    Ok((0..n)
        .map(|t| [yv.at3(0, 0, t), yv.at3(0, 1, t), yv.at3(0, 2, t)])
        .collect())
}
