//! Nonnegative CP (PARAFAC) decomposition of dense tensors.
//!
//! The crate covers the full loop around nonnegative tensor approximation:
//!
//! * [`DenseTensor`]: order-k arrays with the E (l¹), F (l²) and G (l∞) norms
//!   and the Frobenius inner product.
//! * [`KruskalModel`]: weighted sums of rank-1 terms, their simplex
//!   normalization and the naïve-Bayes reading of a normalized model.
//! * [`divergence`]: norm distances, the generalized KL divergence and the
//!   Brègman form behind it.
//! * [`solvers`]: multiplicative updates for nonnegative fits (Frobenius and
//!   KL), alternating least squares for signed fits, with per-iteration traces.
//! * [`pathologies`]: explicit tensors whose best low-rank approximation does
//!   not exist.
//! * [`diagnostics`]: detection of diverging components in traces and the
//!   constrained-versus-unconstrained contrast experiment.
//!
//! ```
//! use nncp::{pathologies, solvers::{fit_nncp, FitConfig}, NormKind};
//!
//! let a = pathologies::bclr_limit(4).unwrap();
//! assert_eq!(a.norm(NormKind::E), 6.0);
//!
//! let mut cfg = FitConfig::new(5);
//! cfg.max_iters = 50;
//! let fit = fit_nncp(&a, &cfg).unwrap();
//! let (weight, mass) = fit.model.delta_l1_and_e_norm().unwrap();
//! assert!((weight - mass).abs() < 1e-10);
//! ```

pub mod cli;
pub mod diagnostics;
pub mod divergence;
mod error;
pub mod kruskal;
pub mod pathologies;
pub mod solvers;
pub mod tensor;

pub use error::{Error, Result};
pub use kruskal::{KruskalModel, NaiveBayesModel};
pub use tensor::{DenseTensor, NormKind};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/simplex.md")]
    mod simplex {}
    #[doc = include_str!("../../../book/src/divergences.md")]
    mod divergences {}
    #[doc = include_str!("../../../book/src/fitting.md")]
    mod fitting {}
    #[doc = include_str!("../../../book/src/degeneracy.md")]
    mod degeneracy {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
