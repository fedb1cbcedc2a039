//! Explicit tensors with ill-posed low-rank approximation problems.
//!
//! * The Bini-Capovani-Lotti-Romani family `A_ε`: rank at most 5 for every
//!   `ε > 0`, converging to a tensor of rank at least 6 while the five
//!   summands blow up like `1/ε`.
//! * The 2×2×2 sequence `A_n = A + B/n + C/n²` of nonnegative tensors
//!   converging to the W tensor.
//! * The KL boundary example: `e⊗e⊗e` approached by strictly positive
//!   rank-1 tensors that never reach it.
//!
//! Indices in comments are 1-based to match the usual presentation of the
//! matrices; code is 0-based.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::kruskal::KruskalModel;
use crate::tensor::DenseTensor;

/// Parameters of one member of the BCLR family.
#[derive(Debug, Clone, PartialEq)]
pub struct BclrInstance {
    pub epsilon: f64,
    /// Ambient dimension of each mode, at least 4.
    pub n: usize,
    /// Four linearly independent vectors of length `n`; `None` means the
    /// first four standard basis vectors.
    pub basis: Option<[Vec<f64>; 4]>,
}

impl BclrInstance {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            n: 4,
            basis: None,
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_basis(mut self, basis: [Vec<f64>; 4]) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n < 4 {
            return Err(invalid(format!("ambient dimension must be at least 4, got {}", self.n)));
        }
        if let Some(b) = &self.basis {
            if b.iter().any(|v| v.len() != self.n) {
                return Err(invalid("basis vectors must have length n"));
            }
            let m = DMatrix::from_fn(self.n, 4, |j, i| b[i][j]);
            if m.rank(1e-10 * m.norm().max(1.0)) < 4 {
                return Err(invalid("basis vectors must be linearly independent"));
            }
        }
        Ok(())
    }

    fn basis_vectors(&self) -> [Vec<f64>; 4] {
        match &self.basis {
            Some(b) => b.clone(),
            None => std::array::from_fn(|i| unit(self.n, i)),
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// `Σ c_i x_i`.
fn combine(coeffs: &[f64; 4], x: &[Vec<f64>; 4]) -> Vec<f64> {
    let n = x[0].len();
    let mut out = vec![0.0; n];
    for (c, xi) in coeffs.iter().zip(x) {
        if *c != 0.0 {
            for (o, v) in out.iter_mut().zip(xi) {
                *o += c * v;
            }
        }
    }
    out
}

/// The 4×5 coefficient matrices `U`, `V`, `W` (row `i`, column `j`). `U` has
/// a zero fourth row; `W` carries the `ε⁻¹` entries.
pub fn bclr_uvw(epsilon: f64) -> [[[f64; 5]; 4]; 3] {
    let e = epsilon;
    let ie = 1.0 / epsilon;
    let u = [
        [1.0, 0.0, 1.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, e, e],
        [1.0, 1.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ];
    let v = [
        [e, 0.0, 0.0, -e, 0.0],
        [0.0, -1.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, e],
        [1.0, -1.0, 1.0, 0.0, 1.0],
    ];
    let w = [
        [ie, ie, -ie, ie, 0.0],
        [0.0, 0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, -ie, 0.0, ie],
        [1.0, 0.0, 0.0, 0.0, -1.0],
    ];
    [u, v, w]
}

/// `A_ε` summed column by column from `U`, `V`, `W`:
/// `Σ_j (Σ_i u_ij x_i) ⊗ (Σ_i v_ij x_i) ⊗ (Σ_i w_ij x_i)`.
pub fn bclr_a_eps_from_uvw(inst: &BclrInstance) -> Result<DenseTensor> {
    inst.validate()?;
    let x = inst.basis_vectors();
    let mats = bclr_uvw(inst.epsilon);
    let mut acc = DenseTensor::zeros(&[inst.n; 3])?;
    for j in 0..5 {
        let vecs: Vec<Vec<f64>> = mats
            .iter()
            .map(|m| combine(&std::array::from_fn(|i| m[i][j]), &x))
            .collect();
        acc = acc.add_scaled(&DenseTensor::outer_product(&vecs)?, 1.0, 1.0)?;
    }
    Ok(acc)
}

/// The five rank-1 terms of `A_ε` written out directly:
///
/// ```text
/// (x1 + x3)   ⊗ (εx1 + x4)   ⊗ (ε⁻¹x1 + x4)
/// x3          ⊗ (−x2 − x4)   ⊗ ε⁻¹x1
/// x1          ⊗ x4           ⊗ (−ε⁻¹x1 − ε⁻¹x3)
/// (εx2 + x3)  ⊗ (−εx1 + x2)  ⊗ (ε⁻¹x1 + x2)
/// (x1 + εx2)  ⊗ (εx3 + x4)   ⊗ (ε⁻¹x3 − x4)
/// ```
pub fn bclr_components(inst: &BclrInstance) -> Result<KruskalModel> {
    inst.validate()?;
    let x = inst.basis_vectors();
    let e = inst.epsilon;
    let ie = 1.0 / e;
    let terms: [[[f64; 4]; 3]; 5] = [
        [[1.0, 0.0, 1.0, 0.0], [e, 0.0, 0.0, 1.0], [ie, 0.0, 0.0, 1.0]],
        [[0.0, 0.0, 1.0, 0.0], [0.0, -1.0, 0.0, -1.0], [ie, 0.0, 0.0, 0.0]],
        [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [-ie, 0.0, -ie, 0.0]],
        [[0.0, e, 1.0, 0.0], [-e, 1.0, 0.0, 0.0], [ie, 1.0, 0.0, 0.0]],
        [[1.0, e, 0.0, 0.0], [0.0, 0.0, e, 1.0], [0.0, 0.0, ie, -1.0]],
    ];
    let columns: Vec<Vec<Vec<f64>>> = terms
        .iter()
        .map(|t| t.iter().map(|c| combine(c, &x)).collect())
        .collect();
    KruskalModel::from_components(&[inst.n; 3], vec![1.0; 5], &columns)
}

/// `A_ε` together with its explicit 5-term decomposition.
pub fn bclr_a_eps(inst: &BclrInstance) -> Result<(DenseTensor, KruskalModel)> {
    Ok((bclr_a_eps_from_uvw(inst)?, bclr_components(inst)?))
}

/// The limit `A = x1⊗x1⊗x1 + x1⊗x3⊗x3 + x2⊗x2⊗x1 + x2⊗x4⊗x3 + x3⊗x2⊗x2 + x3⊗x4⊗x4`
/// with the standard basis, a 0/1 tensor with six unit entries.
pub fn bclr_limit(n: usize) -> Result<DenseTensor> {
    if n < 4 {
        return Err(invalid(format!("ambient dimension must be at least 4, got {n}")));
    }
    bclr_limit_with_basis(&std::array::from_fn(|i| unit(n, i)))
}

/// The BCLR limit for an arbitrary basis `x1..x4`.
pub fn bclr_limit_with_basis(x: &[Vec<f64>; 4]) -> Result<DenseTensor> {
    let n = x[0].len();
    let mut acc = DenseTensor::zeros(&[n; 3])?;
    for &(i, j, k) in &BCLR_LIMIT_TERMS {
        acc = acc.add_scaled(&DenseTensor::outer_product(&[&x[i], &x[j], &x[k]])?, 1.0, 1.0)?;
    }
    Ok(acc)
}

/// Basis indices (0-based) of the six terms of the BCLR limit.
pub const BCLR_LIMIT_TERMS: [(usize, usize, usize); 6] =
    [(0, 0, 0), (0, 2, 2), (1, 1, 0), (1, 3, 2), (2, 1, 1), (2, 3, 3)];

/// The 2×2×2 sequence `A_n = A + B/n + C/n²`.
#[derive(Debug, Clone, PartialEq)]
pub struct WSequence {
    pub a_n: Vec<DenseTensor>,
    /// The limit: unit entries where exactly one index is 1 (the W tensor).
    pub a: DenseTensor,
    /// Unit entries where exactly two indices are 1.
    pub b: DenseTensor,
    /// Single unit entry at (1, 1, 1).
    pub c: DenseTensor,
}

/// Entries of `A_n` directly from its slice display
/// `[0 1; 1 1/n | 1 1/n; 1/n 1/n²]`, slices indexed by the last mode.
pub fn w_tensor_n(n: usize) -> Result<DenseTensor> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let t = 1.0 / n as f64;
    let slices = [[[0.0, 1.0], [1.0, t]], [[1.0, t], [t, t * t]]];
    DenseTensor::from_fn(&[2, 2, 2], |idx| slices[idx[2]][idx[0]][idx[1]])
}

pub fn w_sequence(n_values: &[usize]) -> Result<WSequence> {
    let by_weight = |w: usize| {
        DenseTensor::from_fn(&[2, 2, 2], |idx| {
            if idx.iter().sum::<usize>() == w {
                1.0
            } else {
                0.0
            }
        })
    };
    Ok(WSequence {
        a_n: n_values.iter().map(|&n| w_tensor_n(n)).collect::<Result<_>>()?,
        a: by_weight(1)?,
        b: by_weight(2)?,
        c: by_weight(3)?,
    })
}

/// `A = e⊗e⊗e` with `e = [1, 0]`, and `X_n = x⊗x⊗x` with `x = [1, 1/n]`.
pub fn kl_counterexample(n: usize) -> Result<(DenseTensor, DenseTensor)> {
    if n == 0 {
        return Err(invalid("n must be at least 1"));
    }
    let e = [1.0, 0.0];
    let x = [1.0, 1.0 / n as f64];
    Ok((
        DenseTensor::outer_product(&[e, e, e])?,
        DenseTensor::outer_product(&[x, x, x])?,
    ))
}
