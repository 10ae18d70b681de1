use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, RmsProp, Weights};

const MAGIC: &[u8; 8] = b"GTWNSTAT";
const VERSION: u32 = 1;

/// Which stage produced a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Path,
    Tween,
}

/// Everything needed to resume a run bit-exactly: weights, both optimizers
/// and the next iteration. Iteration randomness is derived from the seed, so
/// no generator state is stored.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub stage: Stage,
    pub iteration: u64,
    /// Best validation score so far (lower is better).
    pub best: f64,
    pub weights: Weights,
    /// Generator optimizer (the path predictor's in the first stage).
    pub opt_g: RmsProp,
    pub opt_d: RmsProp,
}

fn put_opt(out: &mut Vec<u8>, o: &RmsProp) {
    for v in [o.lr, o.alpha, o.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(o.state().len() as u32).to_le_bytes());
    for (n, v) in o.state() {
        out.extend_from_slice(&(n.len() as u16).to_le_bytes());
        out.extend_from_slice(n.as_bytes());
        out.extend_from_slice(&(v.len() as u64).to_le_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::Checkpoint("training state truncated".into()));
        }
        let (a, b) = self.0.split_at(n);
        self.0 = b;
        Ok(a)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn opt(&mut self) -> Result<RmsProp> {
        let mut o = RmsProp::new(self.f64()?, self.f64()?, self.f64()?);
        let n = self.u32()?;
        let mut state = BTreeMap::new();
        for _ in 0..n {
            let len = self.u16()? as usize;
            let name = String::from_utf8(self.take(len)?.to_vec())
                .map_err(|_| Error::Checkpoint("non-UTF-8 optimizer key".into()))?;
            let k = self.u64()? as usize;
            let v = (0..k).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            state.insert(name, v);
        }
        o.set_state(state);
        Ok(o)
    }
}

impl TrainState {
    pub fn new(stage: Stage, weights: Weights, opt_g: RmsProp, opt_d: RmsProp) -> Self {
        TrainState {
            stage,
            iteration: 0,
            best: f64::INFINITY,
            weights,
            opt_g,
            opt_d,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.stage {
            Stage::Path => 0,
            Stage::Tween => 1,
        });
        out.extend_from_slice(&self.iteration.to_le_bytes());
        out.extend_from_slice(&self.best.to_le_bytes());
        let w = self.weights.to_bytes();
        out.extend_from_slice(&(w.len() as u64).to_le_bytes());
        out.extend_from_slice(&w);
        put_opt(&mut out, &self.opt_g);
        put_opt(&mut out, &self.opt_d);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8], spec: &NetworkSpec) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Checkpoint("training state too short".into()));
        }
        let (body, crc) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
            return Err(Error::Checkpoint("training state checksum mismatch".into()));
        }
        let mut r = Reader(body);
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a training state".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported training state version {version}"
            )));
        }
        let stage = match r.take(1)?[0] {
            0 => Stage::Path,
            1 => Stage::Tween,
            s => return Err(Error::Checkpoint(format!("unknown stage {s}"))),
        };
        let iteration = r.u64()?;
        let best = r.f64()?;
        let wlen = r.u64()? as usize;
        let weights = Weights::from_bytes(r.take(wlen)?, spec)?;
        let opt_g = r.opt()?;
        let opt_d = r.opt()?;
        if !r.0.is_empty() {
            return Err(Error::Checkpoint("trailing bytes in training state".into()));
        }
        Ok(TrainState {
            stage,
            iteration,
            best,
            weights,
            opt_g,
            opt_d,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, spec: &NetworkSpec) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    #[test]
    fn round_trip_with_optimizer_state() {
        let spec = NetworkSpec::new(4, 64).unwrap();
        let mut w = Weights::init(&spec, 2);
        let mut opt = RmsProp::new(1e-3, 0.99, 1e-8);
        let name = "path_predictor.res_1.bias".to_string();
        let n = w.params.get(&name).unwrap().len();
        opt.step(&mut w.params, &[(name, Tensor::full(&[n], 0.3))])
            .unwrap();
        let mut s = TrainState::new(Stage::Path, w, opt, RmsProp::new(1e-5, 0.99, 1e-8));
        s.iteration = 41;
        s.best = 2.5;
        let bytes = s.to_bytes();
        let back = TrainState::from_bytes(&bytes, &spec).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(TrainState::from_bytes(&bad, &spec).is_err());
    }
}
