use std::collections::HashMap;

use super::spec::{LayerKind, LayerSpec, NetworkSpec, StackSpec};
use super::tape::{Graph, Resample, Var};
use super::weights::Weights;
use crate::error::{Error, Result};

/// Parameters registered on a graph, by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    /// Registers every parameter whose name starts with one of `prefixes`.
    /// Trainable parameters accumulate gradients; frozen ones are constants.
    pub fn new(g: &mut Graph, w: &Weights, prefixes: &[&str], trainable: bool) -> Self {
        let mut b = Bound::default();
        b.extend(g, w, prefixes, trainable);
        b
    }

    pub fn extend(&mut self, g: &mut Graph, w: &Weights, prefixes: &[&str], trainable: bool) {
        for (n, t) in w.params.iter() {
            if prefixes.iter().any(|p| n.starts_with(p)) {
                let v = if trainable {
                    g.param(t.clone())
                } else {
                    g.input(t.clone())
                };
                self.vars.insert(n.to_string(), v);
            }
        }
    }

    /// Binds names to nodes already on a graph.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("parameter `{name}` not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// `y = √σ·PReLU(affine(conv x)) + √(1−σ)·skip(x)`. The raw convolution
/// output is appended to `feats` when given.
pub fn residual_block(
    g: &mut Graph,
    layer: &LayerSpec,
    prefix: &str,
    p: &Bound,
    x: Var,
    feats: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let w = p.get(&format!("{prefix}.w"))?;
    let h = match layer.kind {
        LayerKind::Res => g.conv1d(x, w, None, layer.stride, layer.pad)?,
        LayerKind::ResT => g.conv_transpose1d(x, w, layer.stride, layer.pad)?,
        _ => {
            return Err(Error::Config(format!(
                "{} is not a residual layer",
                layer.name
            )))
        }
    };
    if let Some(f) = feats {
        f.push(h);
    }
    let a = g.affine(
        h,
        p.get(&format!("{prefix}.scale"))?,
        p.get(&format!("{prefix}.bias"))?,
    );
    let r = g.prelu(a, p.get(&format!("{prefix}.slope"))?);
    let sigma = layer.ratio;
    let branch = g.scale(r, sigma.sqrt());
    if sigma >= 1.0 {
        return Ok(branch);
    }
    let mode = match (layer.kind, layer.stride) {
        (LayerKind::ResT, _) => Resample::Up2,
        (_, 2) => Resample::Down2,
        _ => Resample::Same,
    };
    let skip = g.adapt(x, mode, layer.out_ch);
    let skip = g.scale(skip, (1.0 - sigma).sqrt());
    g.add(branch, skip)
}

/// Runs a whole stack (everything but the DNA encoder's pooling semantics,
/// which [`dna_encode`] handles).
pub fn stack_forward(
    g: &mut Graph,
    stack: &StackSpec,
    p: &Bound,
    x: Var,
    mut feats: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let (_, c, _) = g.value(x).dims3();
    if c != stack.in_ch() {
        return Err(Error::Shape(format!(
            "{}: input has {c} channels, expected {}",
            stack.name,
            stack.in_ch()
        )));
    }
    let mut h = x;
    for l in &stack.layers {
        let prefix = format!("{}.{}", stack.name, l.name);
        h = match l.kind {
            LayerKind::Res | LayerKind::ResT => {
                residual_block(g, l, &prefix, p, h, feats.as_deref_mut())?
            }
            LayerKind::Conv => g.conv1d(
                h,
                p.get(&format!("{prefix}.w"))?,
                Some(p.get(&format!("{prefix}.b"))?),
                l.stride,
                l.pad,
            )?,
            LayerKind::Affine => g.affine(
                h,
                p.get(&format!("{prefix}.scale"))?,
                p.get(&format!("{prefix}.bias"))?,
            ),
            LayerKind::Prelu => g.prelu(h, p.get(&format!("{prefix}.slope"))?),
            LayerKind::AvgPool => g.mean_time(h),
        };
    }
    Ok(h)
}

fn check_len(stack: &StackSpec, t: usize) -> Result<()> {
    let f = stack.down_factor();
    if t == 0 || t % f != 0 {
        return Err(Error::Shape(format!(
            "{}: length {t} is not a positive multiple of {f}",
            stack.name
        )));
    }
    Ok(())
}

/// DNA vector `[1, latent, 1]` for representative frames `[1, 3(M−1), N̂]`;
/// `None` (N̂ = 0) gives the learned constant.
pub fn dna_encode(
    g: &mut Graph,
    spec: &NetworkSpec,
    p: &Bound,
    frames: Option<Var>,
) -> Result<Var> {
    match frames {
        Some(f) => stack_forward(g, &spec.dna_encoder, p, f, None),
        None => {
            let c = p.get("dna_empty")?;
            g.reshape(c, vec![1, spec.latent_ch(), 1])
        }
    }
}

/// Encoder, DNA concatenation and decoder. `cond` is `[B, 6M, N]`, `dna` is
/// `[B, latent, 1]`; returns raw rotations `[B, 6+3(M−1), N]`.
pub fn generator_forward(
    g: &mut Graph,
    spec: &NetworkSpec,
    p: &Bound,
    cond: Var,
    dna: Var,
    mut feats: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let (_, _, t) = g.value(cond).dims3();
    check_len(&spec.encoder, t)?;
    let z = stack_forward(g, &spec.encoder, p, cond, feats.as_deref_mut())?;
    let zc = g.concat_broadcast(z, dna)?;
    stack_forward(g, &spec.decoder, p, zc, feats)
}

/// `[B, 3(M−1), N]` local motion to `[B, 1, N/64]` realism scores.
pub fn discriminator_forward(
    g: &mut Graph,
    spec: &NetworkSpec,
    p: &Bound,
    x: Var,
    feats: Option<&mut Vec<Var>>,
) -> Result<Var> {
    let (_, _, t) = g.value(x).dims3();
    check_len(&spec.discriminator, t)?;
    stack_forward(g, &spec.discriminator, p, x, feats)
}

/// `[B, 3(M−1), N]` local motion to `[B, 3, N]` channels `(dx, dz, y)`.
pub fn path_forward(g: &mut Graph, spec: &NetworkSpec, p: &Bound, x: Var) -> Result<Var> {
    let (_, _, t) = g.value(x).dims3();
    check_len(&spec.path_predictor, t)?;
    stack_forward(g, &spec.path_predictor, p, x, None)
}
