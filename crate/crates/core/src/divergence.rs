//! Proximity measures between tensors: the E/F/G norm distances and the
//! generalized Kullback-Leibler divergence, together with the Brègman form
//! `D_φ(A, B) = φ(A) − φ(B) − ⟨∇φ(B), A − B⟩` that generates it.
//!
//! A Brègman generator must be strictly convex with bounded sublevel sets and
//! the two continuity conditions along sequences. Those are obligations on
//! the caller of [`bregman_from_phi`]; they are not checked numerically.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Result};
use crate::tensor::{DenseTensor, NormKind};

/// Floor applied to model entries before taking logs inside the solvers.
pub const KL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DivergenceKind {
    ENorm,
    FNorm,
    GNorm,
    Kl,
}

impl FromStr for DivergenceKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e" => Ok(Self::ENorm),
            "f" => Ok(Self::FNorm),
            "g" => Ok(Self::GNorm),
            "kl" => Ok(Self::Kl),
            other => Err(invalid(format!("unknown divergence kind {other:?}"))),
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ENorm => "e",
            Self::FNorm => "f",
            Self::GNorm => "g",
            Self::Kl => "kl",
        })
    }
}

/// Distance from `a` to `b`.
///
/// Norm kinds return `‖a − b‖`. The KL kind returns
/// `Σ [a log(a/b) − a + b]` with `0 log 0 = 0`, and `+∞` when some entry has
/// `a > 0` but `b = 0`.
pub fn distance(a: &DenseTensor, b: &DenseTensor, kind: DivergenceKind) -> Result<f64> {
    a.same_shape(b)?;
    match kind {
        DivergenceKind::ENorm => Ok(a.sub(b)?.norm(NormKind::E)),
        DivergenceKind::FNorm => Ok(a.sub(b)?.norm(NormKind::F)),
        DivergenceKind::GNorm => Ok(a.sub(b)?.norm(NormKind::G)),
        DivergenceKind::Kl => kl_divergence(a, b),
    }
}

fn kl_divergence(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    if !a.is_nonnegative() || !b.is_nonnegative() {
        return Err(invalid("KL divergence needs nonnegative arguments"));
    }
    let mut total = 0.0;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        total += if x == 0.0 {
            y
        } else if y == 0.0 {
            return Ok(f64::INFINITY);
        } else {
            x * (x / y).ln() - x + y
        };
    }
    Ok(total)
}

/// KL divergence with the model entries floored at [`KL_FLOOR`]; always finite.
pub(crate) fn kl_floored(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).fold(0.0, |acc, (&p, &q)| {
        let q = q.max(KL_FLOOR);
        acc + if p == 0.0 { q } else { p * (p / q).ln() - p + q }
    })
}

/// The KL generator `φ(A) = Σ a log a` with `0 log 0 = 0`.
pub fn kl_phi(a: &DenseTensor) -> Result<f64> {
    if !a.is_nonnegative() {
        return Err(invalid("KL generator is defined on nonnegative tensors only"));
    }
    Ok(a.data()
        .iter()
        .fold(0.0, |acc, &x| if x == 0.0 { acc } else { acc + x * x.ln() }))
}

/// Gradient of the KL generator, `log b + 1`, on strictly positive `b`.
pub fn kl_phi_gradient(b: &DenseTensor) -> Result<DenseTensor> {
    if b.data().iter().any(|&x| x <= 0.0) {
        return Err(invalid("KL generator gradient needs a strictly positive tensor"));
    }
    DenseTensor::new(b.shape().to_vec(), b.data().iter().map(|&x| x.ln() + 1.0).collect())
}

/// Brègman divergence from precomputed `φ(a)`, `φ(b)` and `∇φ(b)`.
pub fn bregman_from_phi(
    a: &DenseTensor,
    b: &DenseTensor,
    phi_a: f64,
    phi_b: f64,
    grad_b: &DenseTensor,
) -> Result<f64> {
    a.same_shape(b)?;
    b.same_shape(grad_b)?;
    let diff = a.sub(b)?;
    Ok(phi_a - phi_b - grad_b.inner(&diff)?)
}

/// `D_KL(a, b)` evaluated through the Brègman form with the KL generator.
pub fn kl_via_bregman(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    bregman_from_phi(a, b, kl_phi(a)?, kl_phi(b)?, &kl_phi_gradient(b)?)
}
