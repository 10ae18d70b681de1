//! Receptive fields: analytic interval chaining and perturbation probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{residual_block, stack_forward, Bound};
use super::spec::{LayerKind, LayerSpec, NetworkSpec, StackSpec};
use super::tape::Graph;
use super::tensor::Tensor;
use super::weights::Weights;
use crate::error::{Error, Result};
use crate::keyframe::{build_dense_input, KeyframeSet};

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -(-a).div_euclid(b)
}

/// Input index interval feeding output indices `[lo, hi]` of one layer,
/// ignoring sequence boundaries. Covers both the convolution window and the
/// skip path.
pub fn layer_input_interval(l: &LayerSpec, lo: i64, hi: i64) -> (i64, i64) {
    let (k, s, p) = (l.kernel as i64, l.stride as i64, l.pad as i64);
    match l.kind {
        LayerKind::Res | LayerKind::Conv => {
            let (a, b) = (lo * s - p, hi * s - p + k - 1);
            (a.min(lo * s), b.max(hi * s))
        }
        LayerKind::ResT => {
            let (a, b) = (ceil_div(lo + p - k + 1, s), floor_div(hi + p, s));
            (a.min(floor_div(lo, 2)), b.max(floor_div(hi, 2)))
        }
        LayerKind::Affine | LayerKind::Prelu => (lo, hi),
        LayerKind::AvgPool => (i64::MIN / 4, i64::MAX / 4),
    }
}

/// Interval of input frames influencing output `[lo, hi]` of a layer chain.
pub fn input_interval(layers: &[&LayerSpec], lo: i64, hi: i64) -> (i64, i64) {
    layers
        .iter()
        .rev()
        .fold((lo, hi), |(a, b), l| layer_input_interval(l, a, b))
}

/// Receptive field (in input frames) of output `out_index`.
pub fn receptive_field(layers: &[&LayerSpec], out_index: i64) -> usize {
    let (a, b) = input_interval(layers, out_index, out_index);
    (b - a + 1) as usize
}

/// Frames `[lo, hi]` found to influence one output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeSpan {
    pub lo: usize,
    pub hi: usize,
    pub frames: usize,
}

/// Perturbs every input frame in turn (all channels by +1) and records which
/// perturbations change any channel of output column `out_index`. `forward`
/// maps `[B, in_ch, n]` to `[B, C', T']`; perturbations are batched.
pub fn impulse_probe(
    n: usize,
    in_ch: usize,
    out_index: usize,
    seed: u64,
    mut forward: impl FnMut(&Tensor) -> Result<Tensor>,
) -> Result<ProbeSpan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..in_ch * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let reference = forward(&Tensor::new(vec![1, in_ch, n], base.clone())?)?;
    let column = |y: &Tensor, b: usize| -> Vec<f64> {
        let (_, c, _) = y.dims3();
        (0..c).map(|ci| y.at3(b, ci, out_index)).collect()
    };
    let ref_col = column(&reference, 0);
    let chunk = (4_000_000 / (in_ch * n)).clamp(1, 64);
    let mut hits = Vec::new();
    let mut t0 = 0;
    while t0 < n {
        let t1 = (t0 + chunk).min(n);
        let mut data = Vec::with_capacity((t1 - t0) * in_ch * n);
        for t in t0..t1 {
            let mut x = base.clone();
            for c in 0..in_ch {
                x[c * n + t] += 1.0;
            }
            data.extend_from_slice(&x);
        }
        let y = forward(&Tensor::new(vec![t1 - t0, in_ch, n], data)?)?;
        for (b, t) in (t0..t1).enumerate() {
            if column(&y, b) != ref_col {
                hits.push(t);
            }
        }
        t0 = t1;
    }
    match (hits.first(), hits.last()) {
        (Some(&lo), Some(&hi)) => Ok(ProbeSpan {
            lo,
            hi,
            frames: hi - lo + 1,
        }),
        _ => Err(Error::Numeric(
            "impulse probe found no influencing frame".into(),
        )),
    }
}

/// Which sub-network to measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probed {
    Encoder,
    Decoder,
    DnaEncoder,
    Discriminator,
    PathPredictor,
    /// Encoder followed by decoder layers up to `res_2`.
    Bottleneck,
}

impl Probed {
    pub const ALL: [Probed; 6] = [
        Probed::Encoder,
        Probed::Decoder,
        Probed::DnaEncoder,
        Probed::Discriminator,
        Probed::PathPredictor,
        Probed::Bottleneck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Probed::Encoder => "encoder",
            Probed::Decoder => "decoder",
            Probed::DnaEncoder => "dna_encoder",
            Probed::Discriminator => "discriminator",
            Probed::PathPredictor => "path_predictor",
            Probed::Bottleneck => "bottleneck",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RfReport {
    pub analytic: usize,
    pub probed: usize,
    pub input_len: usize,
    pub out_index: usize,
}

fn truncated(stack: &StackSpec, keep: usize) -> StackSpec {
    StackSpec {
        name: stack.name.clone(),
        layers: stack.layers[..keep].to_vec(),
    }
}

/// Analytic and probed receptive field of one sub-network at the centre
/// output, with an input of `input_len` frames (latent frames for the
/// decoder, representative frames for the DNA encoder).
pub fn measure(
    spec: &NetworkSpec,
    w: &Weights,
    which: Probed,
    input_len: usize,
) -> Result<RfReport> {
    let dna_layers = spec.dna_encoder.layers.len() - 1;
    let (layers, in_ch): (Vec<&LayerSpec>, usize) = match which {
        Probed::Encoder => (spec.encoder.layers.iter().collect(), spec.encoder.in_ch()),
        Probed::Decoder => (spec.decoder.layers.iter().collect(), spec.decoder.in_ch()),
        Probed::DnaEncoder => (
            spec.dna_encoder.layers[..dna_layers].iter().collect(),
            spec.dna_encoder.in_ch(),
        ),
        Probed::Discriminator => (
            spec.discriminator.layers.iter().collect(),
            spec.discriminator.in_ch(),
        ),
        Probed::PathPredictor => (
            spec.path_predictor.layers.iter().collect(),
            spec.path_predictor.in_ch(),
        ),
        Probed::Bottleneck => (
            spec.encoder
                .layers
                .iter()
                .chain(&spec.decoder.layers[..2])
                .collect(),
            spec.encoder.in_ch(),
        ),
    };
    let out_len = layers.iter().fold(input_len, |t, l| l.out_len(t));
    let out_index = out_len / 2;
    let analytic = receptive_field(&layers, out_index as i64);

    let forward = |x: &Tensor| -> Result<Tensor> {
        let mut g = Graph::new();
        let p = Bound::new(&mut g, w, &[""], false);
        let xv = g.input(x.clone());
        let y = match which {
            Probed::Encoder => stack_forward(&mut g, &spec.encoder, &p, xv, None)?,
            Probed::Decoder => stack_forward(&mut g, &spec.decoder, &p, xv, None)?,
            Probed::DnaEncoder => stack_forward(
                &mut g,
                &truncated(&spec.dna_encoder, dna_layers),
                &p,
                xv,
                None,
            )?,
            Probed::Discriminator => stack_forward(&mut g, &spec.discriminator, &p, xv, None)?,
            Probed::PathPredictor => stack_forward(&mut g, &spec.path_predictor, &p, xv, None)?,
            Probed::Bottleneck => bottleneck(&mut g, spec, &p, xv)?,
        };
        Ok(g.value(y).clone())
    };
    let span = impulse_probe(input_len, in_ch, out_index, 17, forward)?;
    Ok(RfReport {
        analytic,
        probed: span.frames,
        input_len,
        out_index,
    })
}

/// Encoder, zero DNA, decoder `res_1` and `res_2`.
fn bottleneck(
    g: &mut Graph,
    spec: &NetworkSpec,
    p: &Bound,
    x: super::tape::Var,
) -> Result<super::tape::Var> {
    let z = stack_forward(g, &spec.encoder, p, x, None)?;
    let b = g.value(x).shape[0];
    let dna = g.input(Tensor::zeros(&[b, spec.dna_encoder.out_ch(), 1]));
    let mut h = g.concat_broadcast(z, dna)?;
    for l in &spec.decoder.layers[..2] {
        h = residual_block(g, l, &format!("decoder.{}", l.name), p, h, None)?;
    }
    Ok(h)
}

/// Keyframe-influence probe for the dense format: keyframes sit on a grid
/// with spacing `gap` that contains candidate frame `k`; the pose of the
/// keyframe at `k` alone is perturbed and the centre bottleneck latent is
/// compared. Returns the number of candidate positions `k` (contiguous span)
/// that influence it.
pub fn dense_keyframe_span(
    spec: &NetworkSpec,
    w: &Weights,
    n: usize,
    gap: usize,
) -> Result<ProbeSpan> {
    let pose_ch = 3 * spec.joints;
    let layers: Vec<&LayerSpec> = spec
        .encoder
        .layers
        .iter()
        .chain(&spec.decoder.layers[..2])
        .collect();
    let out_len = layers.iter().fold(n, |t, l| l.out_len(t));
    let out_index = out_len / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let slots = n / gap + 2;
    let base_poses: Vec<Vec<f64>> = (0..slots)
        .map(|_| (0..pose_ch).map(|_| rng.gen_range(-50.0..50.0)).collect())
        .collect();

    let latent_column = |conds: &[Tensor]| -> Result<Vec<Vec<f64>>> {
        let mut data = Vec::new();
        for c in conds {
            data.extend_from_slice(&c.data);
        }
        let x = Tensor::new(vec![conds.len(), 2 * pose_ch, n], data)?;
        let mut g = Graph::new();
        let p = Bound::new(&mut g, w, &[""], false);
        let xv = g.input(x);
        let y = bottleneck(&mut g, spec, &p, xv)?;
        let yv = g.value(y);
        let (_, c, _) = yv.dims3();
        Ok((0..conds.len())
            .map(|b| (0..c).map(|ci| yv.at3(b, ci, out_index)).collect())
            .collect())
    };

    let mut hits = Vec::new();
    let candidates: Vec<usize> = (0..n).collect();
    for chunk in candidates.chunks(16) {
        let mut conds = Vec::with_capacity(2 * chunk.len());
        for &k in chunk {
            let first = k % gap;
            let indices: Vec<usize> = (first..n).step_by(gap).collect();
            let target_slot = (k - first) / gap;
            let poses: Vec<Vec<f64>> = (0..indices.len()).map(|s| base_poses[s].clone()).collect();
            let mut perturbed = poses.clone();
            perturbed[target_slot].iter_mut().for_each(|v| *v += 10.0);
            for ps in [poses, perturbed] {
                let keys = KeyframeSet::full(indices.clone(), ps)?;
                conds.push(build_dense_input(&keys, n)?.network_input());
            }
        }
        let cols = latent_column(&conds)?;
        for (i, &k) in chunk.iter().enumerate() {
            if cols[2 * i] != cols[2 * i + 1] {
                hits.push(k);
            }
        }
    }
    match (hits.first(), hits.last()) {
        (Some(&lo), Some(&hi)) => Ok(ProbeSpan {
            lo,
            hi,
            frames: hi - lo + 1,
        }),
        _ => Err(Error::Numeric(
            "no keyframe influenced the probed latent".into(),
        )),
    }
}
