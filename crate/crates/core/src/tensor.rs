//! Dense order-k tensors stored as a flat row-major buffer.
//!
//! The last index varies fastest. All sums run left to right in flat index
//! order so every reduction is reproducible bit for bit.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Entrywise norms of a tensor viewed as one long vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormKind {
    /// Sum of absolute values (l¹).
    E,
    /// Frobenius norm (l²).
    F,
    /// Largest absolute value (l∞).
    G,
}

/// A dense real tensor of order `k >= 1`.
///
/// Values are validated finite on construction and never mutated afterwards.
#[derive(Clone, PartialEq, Serialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl<'de> Deserialize<'de> for DenseTensor {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = RawTensor::deserialize(deserializer)?;
        DenseTensor::new(raw.shape, raw.data).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseTensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(invalid("tensor order must be at least 1"));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(invalid(format!("tensor dimensions must be positive, got {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| invalid("tensor size overflows usize"))
}

impl DenseTensor {
    /// Builds a tensor from a shape and a row-major buffer.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(invalid(format!(
                "data length {} does not match shape {shape:?} (expected {len})",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(pos));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        })
    }

    /// Builds a tensor by evaluating `f` at every multi-index in row-major order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut idx = vec![0usize; shape.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, shape);
        }
        Self::new(shape.to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Row-major strides (in elements).
    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    /// Flat offset of a multi-index, or an error if it is out of range.
    pub fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(invalid(format!(
                "index of length {} for tensor of order {}",
                idx.len(),
                self.shape.len()
            )));
        }
        let mut off = 0;
        for (&i, &d) in idx.iter().zip(&self.shape) {
            if i >= d {
                return Err(invalid(format!("index {idx:?} out of bounds for shape {:?}", self.shape)));
            }
            off = off * d + i;
        }
        Ok(off)
    }

    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.offset(idx)?])
    }

    /// The outer (Segre) product `v₁ ⊗ v₂ ⊗ … ⊗ v_k`.
    ///
    /// ```
    /// use nncp::DenseTensor;
    /// let t = DenseTensor::outer_product(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    /// assert_eq!(t.data(), &[3.0, 4.0, 6.0, 8.0]);
    /// ```
    pub fn outer_product<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        if vectors.is_empty() {
            return Err(invalid("outer product of an empty vector list"));
        }
        let shape: Vec<usize> = vectors.iter().map(|v| v.as_ref().len()).collect();
        if shape.contains(&0) {
            return Err(invalid("outer product factors must be nonempty"));
        }
        // Expand one mode at a time: the running buffer is the outer product
        // of the first m vectors in row-major order.
        let mut data = vec![1.0];
        for v in vectors {
            let v = v.as_ref();
            let mut next = Vec::with_capacity(data.len() * v.len());
            for &a in &data {
                next.extend(v.iter().map(|&b| a * b));
            }
            data = next;
        }
        Self::new(shape, data)
    }

    /// Entrywise `λ·self + μ·other`.
    pub fn add_scaled(&self, other: &DenseTensor, lambda: f64, mu: f64) -> Result<Self> {
        self.same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| lambda * a + mu * b)
            .collect();
        Self::new(self.shape.clone(), data)
    }

    /// `self - other`.
    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.add_scaled(other, 1.0, -1.0)
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        Self::new(self.shape.clone(), self.data.iter().map(|&a| s * a).collect())
    }

    pub fn norm(&self, kind: NormKind) -> f64 {
        match kind {
            NormKind::E => self.data.iter().fold(0.0, |acc, &a| acc + a.abs()),
            NormKind::F => self.data.iter().fold(0.0, |acc, &a| acc + a * a).sqrt(),
            NormKind::G => self.data.iter().fold(0.0, |acc: f64, &a| acc.max(a.abs())),
        }
    }

    /// Frobenius inner product `Σ a·b`.
    pub fn inner(&self, other: &DenseTensor) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |acc, (&a, &b)| acc + a * b))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&a| a >= 0.0)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn same_shape(&self, other: &DenseTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Advances a row-major multi-index by one, wrapping to all zeros at the end.
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for i in (0..shape.len()).rev() {
        idx[i] += 1;
        if idx[i] < shape[i] {
            return;
        }
        idx[i] = 0;
    }
}
