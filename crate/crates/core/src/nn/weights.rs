use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerKind, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GTWNCKPT";
const VERSION: u32 = 1;

/// Ordered named tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Params {
    entries: Vec<(String, Tensor)>,
}

impl Params {
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Parameter count.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn round_to_f32(&mut self) {
        for (_, t) in &mut self.entries {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }
}

/// All network parameters for one [`NetworkSpec`]. Names are
/// `stack.layer.field`; the empty-DNA constant is `dna_empty`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub spec: NetworkSpec,
    pub params: Params,
}

impl Weights {
    /// Variance-scaled uniform kernels (bound `√(3 / fan_in)`), unit affine
    /// scales, zero biases, PReLU slopes 0.25. Rounded to f32.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Params::default();
        for st in spec.stacks() {
            for l in &st.layers {
                let p = format!("{}.{}", st.name, l.name);
                let kernel = |shape: [usize; 3], fan_in: usize, rng: &mut ChaCha8Rng| {
                    let bound = (3.0 / fan_in as f64).sqrt();
                    let n = shape.iter().product();
                    Tensor::new(
                        shape.to_vec(),
                        (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
                    )
                    .unwrap()
                };
                match l.kind {
                    LayerKind::Res | LayerKind::ResT => {
                        let (shape, fan_in) = if l.kind == LayerKind::Res {
                            ([l.out_ch, l.in_ch, l.kernel], l.in_ch * l.kernel)
                        } else {
                            (
                                [l.in_ch, l.out_ch, l.kernel],
                                (l.in_ch * l.kernel / l.stride).max(1),
                            )
                        };
                        params.push(format!("{p}.w"), kernel(shape, fan_in, &mut rng));
                        params.push(format!("{p}.scale"), Tensor::full(&[l.out_ch], 1.0));
                        params.push(format!("{p}.bias"), Tensor::zeros(&[l.out_ch]));
                        params.push(format!("{p}.slope"), Tensor::full(&[l.out_ch], 0.25));
                    }
                    LayerKind::Conv => {
                        params.push(
                            format!("{p}.w"),
                            kernel([l.out_ch, l.in_ch, l.kernel], l.in_ch * l.kernel, &mut rng),
                        );
                        params.push(format!("{p}.b"), Tensor::zeros(&[l.out_ch]));
                    }
                    LayerKind::Affine => {
                        params.push(format!("{p}.scale"), Tensor::full(&[l.out_ch], 1.0));
                        params.push(format!("{p}.bias"), Tensor::zeros(&[l.out_ch]));
                    }
                    LayerKind::Prelu => {
                        params.push(format!("{p}.slope"), Tensor::full(&[l.out_ch], 0.25))
                    }
                    LayerKind::AvgPool => {}
                }
            }
        }
        params.push("dna_empty", Tensor::zeros(&[spec.latent_ch()]));
        params.round_to_f32();
        Weights {
            spec: spec.clone(),
            params,
        }
    }

    /// Same spec, every value set to zero.
    pub fn zeroed(&self) -> Self {
        let mut w = self.clone();
        for (_, t) in w.params.iter_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        w
    }

    /// SHA-256 over the f32 bytes of every tensor whose name starts with
    /// `prefix`.
    pub fn digest(&self, prefix: &str) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (n, t) in self.params.iter().filter(|(n, _)| n.starts_with(prefix)) {
            h.update(n.as_bytes());
            for v in &t.data {
                h.update((*v as f32).to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.spec.hash());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (n, t) in self.params.iter() {
            out.extend_from_slice(&(n.len() as u16).to_le_bytes());
            out.extend_from_slice(n.as_bytes());
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
        }
        for (_, t) in self.params.iter() {
            for v in &t.data {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses a checkpoint written for `spec`; a different spec hash is an
    /// error.
    pub fn from_bytes(bytes: &[u8], spec: &NetworkSpec) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 4 + 32 + 4 + 4 {
            return Err(bad("file too short"));
        }
        let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc_bytes.try_into().unwrap()) {
            return Err(bad("checksum mismatch"));
        }
        let mut r = body;
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(bad("truncated"));
            }
            let (a, b) = r.split_at(n);
            r = b;
            Ok(a)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        if take(32)? != spec.hash() {
            return Err(bad("network spec hash mismatch"));
        }
        let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut manifest = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("non-UTF-8 name"))?;
            let nd = take(1)?[0] as usize;
            let mut shape = Vec::with_capacity(nd);
            for _ in 0..nd {
                shape.push(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize);
            }
            manifest.push((name, shape));
        }
        let mut params = Params::default();
        for (name, shape) in manifest {
            let count: usize = shape.iter().product();
            let raw = take(4 * count)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect();
            params.push(name, Tensor::new(shape, data)?);
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let expected = Weights::init(spec, 0);
        if expected.params.len() != params.len()
            || expected
                .params
                .iter()
                .zip(params.iter())
                .any(|(a, b)| a.0 != b.0 || a.1.shape != b.1.shape)
        {
            return Err(bad("layer manifest does not match spec"));
        }
        Ok(Weights {
            spec: spec.clone(),
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, spec: &NetworkSpec) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf, spec)
    }
}
