//! Dense 5D tensor (batch, channel, x, y, z) backing the network.

use crate::error::{IqtError, Result};

/// Row-major (b, c, x, y, z) tensor; z is the fastest axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor5 {
    pub data: Vec<f64>,
    pub shape: [usize; 5],
}

impl Tensor5 {
    pub fn zeros(shape: [usize; 5]) -> Self {
        Self {
            data: vec![0.0; shape.iter().product()],
            shape,
        }
    }

    pub fn from_vec(data: Vec<f64>, shape: [usize; 5]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if data.len() != n {
            return Err(IqtError::Shape(format!(
                "tensor data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(IqtError::Shape(format!("zero-sized tensor shape {shape:?}")));
        }
        Ok(Self { data, shape })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, x: usize, y: usize, z: usize) -> usize {
        let [_, nc, nx, ny, nz] = self.shape;
        ((((b * nc + c) * nx + x) * ny + y) * nz) + z
    }

    #[inline]
    pub fn at(&self, b: usize, c: usize, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.idx(b, c, x, y, z)]
    }

    /// Concatenate along the channel axis; all other dims must match.
    pub fn concat_channels(&self, other: &Tensor5) -> Result<Tensor5> {
        let [b, c1, x, y, z] = self.shape;
        let [b2, c2, x2, y2, z2] = other.shape;
        if (b, x, y, z) != (b2, x2, y2, z2) {
            return Err(IqtError::Shape(format!(
                "cannot concat {:?} with {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor5::zeros([b, c1 + c2, x, y, z]);
        let plane = x * y * z;
        for bi in 0..b {
            let dst = &mut out.data[bi * (c1 + c2) * plane..];
            dst[..c1 * plane].copy_from_slice(&self.data[bi * c1 * plane..(bi + 1) * c1 * plane]);
            dst[c1 * plane..(c1 + c2) * plane]
                .copy_from_slice(&other.data[bi * c2 * plane..(bi + 1) * c2 * plane]);
        }
        Ok(out)
    }

    /// Split the first `c1` channels from the rest (inverse of concat).
    pub fn split_channels(&self, c1: usize) -> (Tensor5, Tensor5) {
        let [b, c, x, y, z] = self.shape;
        assert!(c1 < c);
        let c2 = c - c1;
        let mut a = Tensor5::zeros([b, c1, x, y, z]);
        let mut bt = Tensor5::zeros([b, c2, x, y, z]);
        let plane = x * y * z;
        for bi in 0..b {
            let src = &self.data[bi * c * plane..(bi + 1) * c * plane];
            a.data[bi * c1 * plane..(bi + 1) * c1 * plane].copy_from_slice(&src[..c1 * plane]);
            bt.data[bi * c2 * plane..(bi + 1) * c2 * plane].copy_from_slice(&src[c1 * plane..]);
        }
        (a, bt)
    }

    /// Extract one batch element as a (1, C, X, Y, Z) tensor.
    pub fn batch_slice(&self, b: usize) -> Tensor5 {
        let [_, c, x, y, z] = self.shape;
        let n = c * x * y * z;
        Tensor5 {
            data: self.data[b * n..(b + 1) * n].to_vec(),
            shape: [1, c, x, y, z],
        }
    }

    /// Stack single-batch tensors into one batch.
    pub fn stack(items: &[&Tensor5]) -> Result<Tensor5> {
        if items.is_empty() {
            return Err(IqtError::Shape("cannot stack zero tensors".into()));
        }
        let [b0, c, x, y, z] = items[0].shape;
        if b0 != 1 {
            return Err(IqtError::Shape("stack expects batch-1 tensors".into()));
        }
        let mut out = Tensor5::zeros([items.len(), c, x, y, z]);
        let n = c * x * y * z;
        for (i, t) in items.iter().enumerate() {
            if t.shape != items[0].shape {
                return Err(IqtError::Shape(format!(
                    "stack shape mismatch: {:?} vs {:?}",
                    t.shape, items[0].shape
                )));
            }
            out.data[i * n..(i + 1) * n].copy_from_slice(&t.data);
        }
        Ok(out)
    }
}
