use crate::error::{Error, Result};

/// Dense row-major f64 array. Sequence data uses the `[batch, channels, time]`
/// layout throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn from_fn3(
        b: usize,
        c: usize,
        t: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(b * c * t);
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    data.push(f(bi, ci, ti));
                }
            }
        }
        Tensor {
            shape: vec![b, c, t],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// `(batch, channels, time)` of a rank-3 tensor.
    pub fn dims3(&self) -> (usize, usize, usize) {
        assert_eq!(
            self.shape.len(),
            3,
            "expected [B, C, T], got {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1], self.shape[2])
    }

    #[inline]
    pub fn at3(&self, b: usize, c: usize, t: usize) -> f64 {
        let (_, cc, tt) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(b * cc + c) * tt + t]
    }

    #[inline]
    pub fn idx3(&self, b: usize, c: usize, t: usize) -> usize {
        (b * self.shape[1] + c) * self.shape[2] + t
    }

    /// Contiguous `[C, T]` block of batch element `b`.
    pub fn batch(&self, b: usize) -> &[f64] {
        let step = self.shape[1] * self.shape[2];
        &self.data[b * step..(b + 1) * step]
    }

    pub fn batch_mut(&mut self, b: usize) -> &mut [f64] {
        let step = self.shape[1] * self.shape[2];
        &mut self.data[b * step..(b + 1) * step]
    }

    pub fn add_assign(&mut self, o: &Tensor) {
        debug_assert_eq!(self.shape, o.shape);
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, o: &Tensor, s: f64) {
        debug_assert_eq!(self.shape, o.shape);
        for (a, b) in self.data.iter_mut().zip(&o.data) {
            *a += s * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
