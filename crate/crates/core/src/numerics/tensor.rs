//! Dense row-major `f64` tensor used as the value type of the tape.

use crate::error::{CoreError, Result};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense tensor of 64-bit floats in row-major order.
///
/// Values are required to be finite; constructors and every recorded op
/// enforce this, so NaN/Inf surfaces as an error instead of propagating.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(CoreError::structure(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.ensure_finite("from_vec")?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![1.0; numel],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    /// Uniform draw in `[-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    /// Normal draw with mean 0 and the given standard deviation.
    pub fn normal(shape: &[usize], sigma: f64, rng: &mut ChaCha8Rng) -> Self {
        use rand_distr::{Distribution, Normal};
        let dist = Normal::new(0.0, sigma).expect("sigma must be finite and positive");
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| dist.sample(rng)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Scalar contents of a 0-d (or single-element) tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(CoreError::structure(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    /// Element at a full multi-index.
    pub fn at(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut flat = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            flat = flat * self.shape[i] + ix;
        }
        self.data[flat]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(CoreError::NonFinite { op })
        }
    }

    /// Splits the shape into (batch, rows, cols) treating the last two axes
    /// as a matrix. Rank-2 tensors have batch 1.
    pub fn matrix_split(&self) -> Result<(usize, usize, usize)> {
        if self.rank() < 2 {
            return Err(CoreError::structure(format!(
                "expected rank >= 2 tensor, got shape {:?}",
                self.shape
            )));
        }
        let n = self.shape[self.rank() - 1];
        let m = self.shape[self.rank() - 2];
        let batch = self.shape[..self.rank() - 2].iter().product();
        Ok((batch, m, n))
    }

    /// In-place elementwise add of an identically shaped tensor.
    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in self.data.iter_mut() {
            *v *= c;
        }
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&self) -> Result<Tensor> {
        let (batch, m, n) = self.matrix_split()?;
        let mut shape = self.shape.clone();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        let mut out = vec![0.0; self.data.len()];
        for b in 0..batch {
            let src = &self.data[b * m * n..(b + 1) * m * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                for j in 0..n {
                    dst[j * m + i] = src[i * n + j];
                }
            }
        }
        Ok(Tensor { shape, data: out })
    }

    /// Batched matrix product over the trailing two axes.
    ///
    /// Batch extents must either match or one operand must be rank-2, in
    /// which case it is broadcast across the other operand's batch.
    pub fn matmul_plain(&self, other: &Tensor) -> Result<Tensor> {
        let (ab, m, ka) = self.matrix_split()?;
        let (bb, kb, n) = other.matrix_split()?;
        let compatible_batch = ab == bb || self.rank() == 2 || other.rank() == 2;
        if ka != kb || !compatible_batch {
            return Err(CoreError::ShapeMismatch {
                op: "matmul",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let batch = ab.max(bb);
        let mut out_shape = if self.rank() >= other.rank() {
            self.shape[..self.rank() - 2].to_vec()
        } else {
            other.shape[..other.rank() - 2].to_vec()
        };
        out_shape.push(m);
        out_shape.push(n);
        let mut out = vec![0.0; batch * m * n];
        let k = ka;
        for b in 0..batch {
            let a_off = if ab == 1 { 0 } else { b * m * k };
            let b_off = if bb == 1 { 0 } else { b * k * n };
            let a = &self.data[a_off..a_off + m * k];
            let bm = &other.data[b_off..b_off + k * n];
            let dst = &mut out[b * m * n..(b + 1) * m * n];
            for i in 0..m {
                let arow = &a[i * k..(i + 1) * k];
                let drow = &mut dst[i * n..(i + 1) * n];
                for (kk, &av) in arow.iter().enumerate() {
                    let brow = &bm[kk * n..(kk + 1) * n];
                    for (d, &bv) in drow.iter_mut().zip(brow.iter()) {
                        *d += av * bv;
                    }
                }
            }
        }
        Ok(Tensor {
            shape: out_shape,
            data: out,
        })
    }

    /// Sums away broadcast batch axes so `self` matches `target_shape`.
    /// Used by matmul backward when one operand was rank-2.
    pub fn reduce_to_shape(&self, target_shape: &[usize]) -> Result<Tensor> {
        if self.shape == target_shape {
            return Ok(self.clone());
        }
        let target_numel: usize = target_shape.iter().product();
        if !self.numel().is_multiple_of(target_numel) {
            return Err(CoreError::ShapeMismatch {
                op: "reduce_to_shape",
                lhs: self.shape.clone(),
                rhs: target_shape.to_vec(),
            });
        }
        let batch = self.numel() / target_numel;
        let mut data = vec![0.0; target_numel];
        for b in 0..batch {
            let src = &self.data[b * target_numel..(b + 1) * target_numel];
            for (d, s) in data.iter_mut().zip(src.iter()) {
                *d += s;
            }
        }
        Ok(Tensor {
            shape: target_shape.to_vec(),
            data,
        })
    }
}
