use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// Residual convolution block.
    Res,
    /// Residual transposed-convolution block.
    ResT,
    /// Plain convolution with bias.
    Conv,
    Affine,
    Prelu,
    AvgPool,
}

impl LayerKind {
    fn tag(self) -> &'static str {
        match self {
            LayerKind::Res => "res",
            LayerKind::ResT => "res_t",
            LayerKind::Conv => "conv",
            LayerKind::Affine => "affine",
            LayerKind::Prelu => "prelu",
            LayerKind::AvgPool => "avgpool",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Residual ratio σ; only meaningful for `Res`/`ResT`.
    pub ratio: f64,
}

impl LayerSpec {
    fn res(
        name: &str,
        kind: LayerKind,
        in_ch: usize,
        out_ch: usize,
        k: usize,
        s: usize,
        p: usize,
        ratio: f64,
    ) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            in_ch,
            out_ch,
            kernel: k,
            stride: s,
            pad: p,
            ratio,
        }
    }

    fn simple(name: &str, kind: LayerKind, in_ch: usize, out_ch: usize, k: usize) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            in_ch,
            out_ch,
            kernel: k,
            stride: 1,
            pad: 0,
            ratio: 0.0,
        }
    }

    pub fn is_residual(&self) -> bool {
        matches!(self.kind, LayerKind::Res | LayerKind::ResT)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ratio) {
            return Err(Error::Config(format!(
                "layer {}: ratio {} outside [0, 1]",
                self.name, self.ratio
            )));
        }
        if self.kernel == 0 || !(1..=2).contains(&self.stride) {
            return Err(Error::Config(format!(
                "layer {}: bad kernel/stride",
                self.name
            )));
        }
        Ok(())
    }

    /// Output length for input length `t`.
    pub fn out_len(&self, t: usize) -> usize {
        match self.kind {
            LayerKind::Res | LayerKind::Conv => (t + 2 * self.pad - self.kernel) / self.stride + 1,
            LayerKind::ResT => (t - 1) * self.stride + self.kernel - 2 * self.pad,
            LayerKind::Affine | LayerKind::Prelu => t,
            LayerKind::AvgPool => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackSpec {
    pub name: String,
    pub layers: Vec<LayerSpec>,
}

impl StackSpec {
    pub fn in_ch(&self) -> usize {
        self.layers[0].in_ch
    }

    pub fn out_ch(&self) -> usize {
        self.layers.last().unwrap().out_ch
    }

    /// Product of strides over down-sampling layers.
    pub fn down_factor(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l.kind, LayerKind::Res | LayerKind::Conv))
            .map(|l| l.stride)
            .product()
    }

    pub fn out_len(&self, t: usize) -> usize {
        self.layers.iter().fold(t, |t, l| l.out_len(t))
    }

    fn validate(&self) -> Result<()> {
        for l in &self.layers {
            l.validate()?;
        }
        for w in self.layers.windows(2) {
            if w[0].out_ch != w[1].in_ch {
                return Err(Error::Config(format!(
                    "{}: {} outputs {} channels but {} expects {}",
                    self.name, w[0].name, w[0].out_ch, w[1].name, w[1].in_ch
                )));
            }
        }
        Ok(())
    }
}

/// The five stacks. Hidden widths are divided by `width_divisor` (rounded
/// up, at least 1); skeleton-dependent input/output widths are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub joints: usize,
    pub width_divisor: usize,
    pub encoder: StackSpec,
    pub decoder: StackSpec,
    pub dna_encoder: StackSpec,
    pub discriminator: StackSpec,
    pub path_predictor: StackSpec,
}

impl NetworkSpec {
    /// Architecture table for a skeleton with `joints` joints.
    pub fn new(joints: usize, width_divisor: usize) -> Result<Self> {
        use LayerKind::*;
        if joints < 2 || width_divisor == 0 {
            return Err(Error::Config(
                "need at least 2 joints and a positive width divisor".into(),
            ));
        }
        let d = |c: usize| c.div_ceil(width_divisor).max(1);
        let pose = 3 * joints;
        let local = 3 * (joints - 1);
        let raw = 6 + 3 * (joints - 1);
        let latent = d(1024);

        let enc_ch = [d(384), d(384), d(512), d(512), d(768), latent];
        let mut encoder = Vec::new();
        let mut cin = pose + pose;
        for (i, &c) in enc_ch.iter().enumerate() {
            encoder.push(LayerSpec::res(
                &format!("res_{}", i + 1),
                Res,
                cin,
                c,
                4,
                2,
                1,
                1.0 / (i + 1) as f64,
            ));
            cin = c;
        }

        let dec_ratio = [
            1.0, 1.4, 1.6, 2.2, 2.8, 3.6, 4.6, 5.8, 7.2, 8.8, 10.6, 12.6, 14.8, 17.2,
        ];
        let dec_ch = [
            d(1024),
            d(1024),
            d(1024),
            d(768),
            d(768),
            d(768),
            d(768),
            d(512),
            d(512),
            d(512),
            d(512),
            d(512),
            d(512),
            raw,
        ];
        let mut decoder = Vec::new();
        let mut cin = 2 * latent;
        for i in 0..14 {
            let n = i + 1;
            let (kind, name, k, s, p) = if i == 0 {
                (Res, format!("res_{n}"), 1, 1, 0)
            } else if n % 2 == 1 {
                (ResT, format!("res_t_{n}"), 4, 2, 1)
            } else {
                (Res, format!("res_{n}"), 3, 1, 1)
            };
            decoder.push(LayerSpec::res(
                &name,
                kind,
                cin,
                dec_ch[i],
                k,
                s,
                p,
                1.0 / dec_ratio[i],
            ));
            cin = dec_ch[i];
        }

        let dna_encoder = vec![
            LayerSpec::simple("conv_1", Conv, local, latent, 1),
            LayerSpec::simple("affine_1", Affine, latent, latent, 1),
            LayerSpec::simple("prelu", Prelu, latent, latent, 1),
            LayerSpec::simple("conv_2", Conv, latent, latent, 1),
            LayerSpec::simple("affine_2", Affine, latent, latent, 1),
            LayerSpec::simple("avgpool", AvgPool, latent, latent, 1),
        ];

        let disc_ch = [d(512), d(512), d(512), d(512), d(1024), d(1024)];
        let mut discriminator = Vec::new();
        let mut cin = local;
        for (i, &c) in disc_ch.iter().enumerate() {
            discriminator.push(LayerSpec::res(
                &format!("res_{}", i + 1),
                Res,
                cin,
                c,
                4,
                2,
                1,
                1.0 / (i + 1) as f64,
            ));
            cin = c;
        }
        discriminator.push(LayerSpec::simple("conv_7", Conv, cin, 1, 1));

        let path_ch = [
            d(128),
            d(128),
            d(256),
            d(256),
            d(256),
            d(256),
            d(128),
            d(128),
            3,
        ];
        let mut path_predictor = Vec::new();
        let mut cin = local;
        for (i, &c) in path_ch.iter().enumerate() {
            let n = i + 1;
            let ratio = 1.0 / n as f64;
            let l = match i {
                0..=3 => LayerSpec::res(&format!("res_{n}"), Res, cin, c, 12, 2, 5, ratio),
                4..=7 => LayerSpec::res(&format!("res_t_{n}"), ResT, cin, c, 8, 2, 3, ratio),
                _ => LayerSpec::res(&format!("res_{n}"), Res, cin, c, 5, 1, 2, ratio),
            };
            path_predictor.push(l);
            cin = c;
        }

        let spec = NetworkSpec {
            joints,
            width_divisor,
            encoder: StackSpec {
                name: "encoder".into(),
                layers: encoder,
            },
            decoder: StackSpec {
                name: "decoder".into(),
                layers: decoder,
            },
            dna_encoder: StackSpec {
                name: "dna_encoder".into(),
                layers: dna_encoder,
            },
            discriminator: StackSpec {
                name: "discriminator".into(),
                layers: discriminator,
            },
            path_predictor: StackSpec {
                name: "path_predictor".into(),
                layers: path_predictor,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn stacks(&self) -> [&StackSpec; 5] {
        [
            &self.encoder,
            &self.decoder,
            &self.dna_encoder,
            &self.discriminator,
            &self.path_predictor,
        ]
    }

    pub fn latent_ch(&self) -> usize {
        self.encoder.out_ch()
    }

    fn validate(&self) -> Result<()> {
        for s in self.stacks() {
            s.validate()?;
        }
        if self.decoder.in_ch() != self.encoder.out_ch() + self.dna_encoder.out_ch() {
            return Err(Error::Config(
                "decoder input must be latent + DNA width".into(),
            ));
        }
        Ok(())
    }

    /// Canonical text form; the checkpoint hash is taken over this.
    pub fn manifest(&self) -> String {
        let mut s = format!("joints {} divisor {}\n", self.joints, self.width_divisor);
        for st in self.stacks() {
            for l in &st.layers {
                s.push_str(&format!(
                    "{} {} {} {} {} {} {} {} {:.6}\n",
                    st.name,
                    l.name,
                    l.kind.tag(),
                    l.in_ch,
                    l.out_ch,
                    l.kernel,
                    l.stride,
                    l.pad,
                    l.ratio
                ));
            }
        }
        s
    }

    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.manifest().as_bytes()).into()
    }
}
