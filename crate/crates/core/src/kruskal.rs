//! Kruskal (CP) models: `X = Σ_p δ_p · u_p ⊗ v_p ⊗ … ⊗ z_p`.
//!
//! A model stores the weights `δ` and one `d_i × r` factor matrix per mode;
//! column `p` of factor `i` is the mode-`i` vector of the `p`-th rank-1 term.
//! Nonnegative models are brought to simplex form by [`KruskalModel::normalize`]
//! (unit l¹ columns), after which `‖δ‖₁` equals the E-norm of the
//! reconstruction. Signed models use unit l² columns with signed weights
//! instead, see [`KruskalModel::normalize_signed`].

use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tensor::{DenseTensor, NormKind};

/// Tolerance used when checking that a model is in simplex form.
pub const NORMALIZED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct KruskalModel {
    shape: Vec<usize>,
    delta: Vec<f64>,
    factors: Vec<DMatrix<f64>>,
}

impl KruskalModel {
    pub fn new(shape: Vec<usize>, delta: Vec<f64>, factors: Vec<DMatrix<f64>>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(invalid(format!("invalid model shape {shape:?}")));
        }
        if factors.len() != shape.len() {
            return Err(invalid(format!(
                "{} factor matrices for a tensor of order {}",
                factors.len(),
                shape.len()
            )));
        }
        let r = delta.len();
        for (i, (f, &d)) in factors.iter().zip(&shape).enumerate() {
            if f.nrows() != d || f.ncols() != r {
                return Err(invalid(format!(
                    "factor {i} is {}x{}, expected {d}x{r}",
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        if delta.iter().chain(factors.iter().flat_map(|f| f.iter())).any(|v| !v.is_finite()) {
            return Err(invalid("model contains non-finite values"));
        }
        Ok(Self { shape, delta, factors })
    }

    /// Builds a model from per-component factor vectors: `columns[p][i]` is
    /// the mode-`i` vector of component `p`.
    pub fn from_components(shape: &[usize], delta: Vec<f64>, columns: &[Vec<Vec<f64>>]) -> Result<Self> {
        if columns.len() != delta.len() {
            return Err(invalid("one column set per weight is required"));
        }
        let r = delta.len();
        let mut factors = Vec::with_capacity(shape.len());
        for (i, &d) in shape.iter().enumerate() {
            let mut m = DMatrix::zeros(d, r);
            for (p, comp) in columns.iter().enumerate() {
                let col = comp
                    .get(i)
                    .ok_or_else(|| invalid(format!("component {p} lacks mode {i}")))?;
                if col.len() != d {
                    return Err(invalid(format!("component {p} mode {i} has length {}, expected {d}", col.len())));
                }
                m.column_mut(p).copy_from_slice(col);
            }
            factors.push(m);
        }
        Self::new(shape.to_vec(), delta, factors)
    }

    /// Model with no components; reconstructs to zero.
    pub fn empty(shape: &[usize]) -> Result<Self> {
        let factors = shape.iter().map(|&d| DMatrix::zeros(d, 0)).collect();
        Self::new(shape.to_vec(), Vec::new(), factors)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn rank(&self) -> usize {
        self.delta.len()
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    pub fn factors(&self) -> &[DMatrix<f64>] {
        &self.factors
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f64>, Vec<DMatrix<f64>>) {
        (self.shape, self.delta, self.factors)
    }

    /// `Σ |δ_p|`.
    pub fn delta_l1(&self) -> f64 {
        self.delta.iter().fold(0.0, |acc, d| acc + d.abs())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.delta.iter().all(|&d| d >= 0.0) && self.factors.iter().all(|f| f.iter().all(|&v| v >= 0.0))
    }

    /// Nonnegative with every factor column of unit l¹-norm.
    pub fn is_normalized(&self) -> bool {
        self.is_nonnegative()
            && self
                .factors
                .iter()
                .all(|f| f.column_iter().all(|c| (c.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() <= NORMALIZED_TOL))
    }

    /// The mode vectors of component `p`.
    pub fn component(&self, p: usize) -> Vec<Vec<f64>> {
        self.factors.iter().map(|f| f.column(p).iter().copied().collect()).collect()
    }

    /// The `p`-th rank-1 summand `δ_p u_p ⊗ … ⊗ z_p` as a dense tensor.
    pub fn summand(&self, p: usize) -> Result<DenseTensor> {
        let mut cols = self.component(p);
        for v in cols[0].iter_mut() {
            *v *= self.delta[p];
        }
        DenseTensor::outer_product(&cols)
    }

    /// F-norm of each rank-1 summand, `|δ_p| Π_i ‖col_{i,p}‖₂`.
    pub fn component_f_norms(&self) -> Vec<f64> {
        (0..self.rank())
            .map(|p| {
                self.factors
                    .iter()
                    .fold(self.delta[p].abs(), |acc, f| acc * f.column(p).norm())
            })
            .collect()
    }

    pub fn max_component_f(&self) -> f64 {
        self.component_f_norms().into_iter().fold(0.0, f64::max)
    }

    /// Dense tensor `Σ_p δ_p u_p ⊗ … ⊗ z_p`.
    pub fn reconstruct(&self) -> DenseTensor {
        let n: usize = self.shape.iter().product();
        let mut data = vec![0.0; n];
        let mut buf = Vec::with_capacity(n);
        for p in 0..self.rank() {
            // Row-major outer product of the p-th columns, scaled by δ_p.
            buf.clear();
            buf.push(self.delta[p]);
            for f in &self.factors {
                let col = f.column(p);
                let prev = std::mem::take(&mut buf);
                buf.reserve(prev.len() * col.len());
                for &a in &prev {
                    buf.extend(col.iter().map(|&b| a * b));
                }
            }
            for (acc, &v) in data.iter_mut().zip(&buf) {
                *acc += v;
            }
        }
        DenseTensor::new(self.shape.clone(), data).expect("finite model reconstructs to a finite tensor")
    }

    /// Simplex normalization of a nonnegative model.
    ///
    /// Each factor column is divided by its l¹-norm and the weights absorb the
    /// product of those norms. Components with `δ_p = 0` or a zero column are
    /// dropped, which leaves the reconstruction unchanged.
    pub fn normalize(&self) -> Result<Self> {
        if !self.is_nonnegative() {
            return Err(invalid("normalize requires a nonnegative model"));
        }
        self.rescale_columns(|c| c.iter().sum::<f64>())
    }

    /// Normalization for signed models: unit l² columns, signed weights.
    pub fn normalize_signed(&self) -> Result<Self> {
        self.rescale_columns(|c| c.norm())
    }

    fn rescale_columns(&self, col_norm: impl Fn(nalgebra::DVectorView<'_, f64>) -> f64) -> Result<Self> {
        let mut keep = Vec::new();
        let mut new_delta = Vec::new();
        let mut scales: Vec<Vec<f64>> = Vec::new();
        for p in 0..self.rank() {
            let norms: Vec<f64> = self
                .factors
                .iter()
                .map(|f| col_norm(f.column(p).as_view()))
                .collect();
            if self.delta[p] == 0.0 || norms.iter().any(|&s| s == 0.0) {
                continue;
            }
            let d = norms.iter().fold(self.delta[p], |acc, s| acc * s);
            keep.push(p);
            new_delta.push(d);
            scales.push(norms);
        }
        let factors = self
            .factors
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut m = DMatrix::zeros(f.nrows(), keep.len());
                for (q, &p) in keep.iter().enumerate() {
                    let s = scales[q][i];
                    if s == 1.0 {
                        m.set_column(q, &f.column(p));
                    } else {
                        m.set_column(q, &(f.column(p) / s));
                    }
                }
                m
            })
            .collect();
        Self::new(self.shape.clone(), new_delta, factors)
    }

    /// Reorders components by descending weight magnitude. Stable for ties.
    pub fn sorted_by_weight(&self) -> Self {
        let mut order: Vec<usize> = (0..self.rank()).collect();
        order.sort_by(|&a, &b| self.delta[b].abs().total_cmp(&self.delta[a].abs()));
        let delta = order.iter().map(|&p| self.delta[p]).collect();
        let factors = self
            .factors
            .iter()
            .map(|f| f.select_columns(order.iter()))
            .collect();
        Self {
            shape: self.shape.clone(),
            delta,
            factors,
        }
    }

    /// Returns `(‖δ‖₁, ‖reconstruct‖_E)` for a model in simplex form.
    ///
    /// The two agree for every normalized nonnegative model, minimal or not:
    /// summing `δ_p Π u_{p,j}` over all indices factorizes into `δ_p Π ‖u_p‖₁`.
    pub fn delta_l1_and_e_norm(&self) -> Result<(f64, f64)> {
        if !self.is_normalized() {
            return Err(invalid("model must be nonnegative with unit l1 columns"));
        }
        Ok((self.delta_l1(), self.reconstruct().norm(NormKind::E)))
    }

    /// Reads a normalized nonnegative model as a naïve-Bayes model with a
    /// hidden variable of `r` states.
    pub fn to_naive_bayes(&self) -> Result<NaiveBayesModel> {
        if !self.is_normalized() {
            return Err(invalid("model must be nonnegative with unit l1 columns"));
        }
        let mass = self.delta_l1();
        if mass <= 0.0 {
            return Err(invalid("weights sum to zero; no distribution"));
        }
        Ok(NaiveBayesModel {
            prior: self.delta.iter().map(|d| d / mass).collect(),
            conditionals: self.factors.clone(),
        })
    }

    /// Deterministic random model.
    ///
    /// Nonnegative models draw entries uniformly from `(0.1, 1)`, normalize
    /// columns to the simplex and split unit mass evenly across components,
    /// so the reconstruction has E-norm 1. Signed models use standard normal
    /// entries with unit weights.
    pub fn random(shape: &[usize], r: usize, seed: u64, nonneg: bool) -> Result<Self> {
        if r == 0 {
            return Err(invalid("random model needs at least one component"));
        }
        if shape.is_empty() || shape.contains(&0) {
            return Err(invalid(format!("invalid model shape {shape:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(shape.len());
        for &d in shape {
            // Fill column by column so the draw order does not depend on storage.
            let mut m = DMatrix::zeros(d, r);
            for p in 0..r {
                for j in 0..d {
                    m[(j, p)] = if nonneg {
                        rng.random_range(0.1..1.0)
                    } else {
                        rng.sample::<f64, _>(StandardNormal)
                    };
                }
            }
            factors.push(m);
        }
        if nonneg {
            for f in factors.iter_mut() {
                for mut c in f.column_iter_mut() {
                    let s: f64 = c.iter().sum();
                    c /= s;
                }
            }
            Self::new(shape.to_vec(), vec![1.0 / r as f64; r], factors)
        } else {
            Self::new(shape.to_vec(), vec![1.0; r], factors)
        }
    }

    /// Multiplies every weight by `s`.
    pub fn with_scaled_weights(&self, s: f64) -> Result<Self> {
        Self::new(
            self.shape.clone(),
            self.delta.iter().map(|d| d * s).collect(),
            self.factors.clone(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// On-disk model layout: each factor is a list of rows (`d_i` rows of `r` values).
#[derive(Serialize, Deserialize)]
struct ModelFile {
    shape: Vec<usize>,
    delta: Vec<f64>,
    factors: Vec<Vec<Vec<f64>>>,
}

impl From<&KruskalModel> for ModelFile {
    fn from(m: &KruskalModel) -> Self {
        ModelFile {
            shape: m.shape.clone(),
            delta: m.delta.clone(),
            factors: m
                .factors
                .iter()
                .map(|f| f.row_iter().map(|row| row.iter().copied().collect()).collect())
                .collect(),
        }
    }
}

impl TryFrom<ModelFile> for KruskalModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let r = file.delta.len();
        if file.factors.len() != file.shape.len() {
            return Err(invalid("factor count does not match tensor order"));
        }
        let mut factors = Vec::with_capacity(file.factors.len());
        for (i, (rows, &d)) in file.factors.iter().zip(&file.shape).enumerate() {
            if rows.len() != d {
                return Err(invalid(format!("factor {i} has {} rows, expected {d}", rows.len())));
            }
            if let Some(bad) = rows.iter().position(|row| row.len() != r) {
                return Err(invalid(format!("factor {i} row {bad} has wrong length, expected {r}")));
            }
            factors.push(DMatrix::from_fn(d, r, |j, p| rows[j][p]));
        }
        KruskalModel::new(file.shape, file.delta, factors)
    }
}

/// Joint distribution of `k` variables that are conditionally independent
/// given a hidden variable with `r` states.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    /// `Pr(Θ = θ)`.
    pub prior: Vec<f64>,
    /// Column `θ` of matrix `i` is the distribution of variable `i` given `Θ = θ`.
    pub conditionals: Vec<DMatrix<f64>>,
}

impl NaiveBayesModel {
    /// Checks the stochasticity constraints at tolerance `tol`.
    pub fn is_stochastic(&self, tol: f64) -> bool {
        let prior_ok = self.prior.iter().all(|&p| p >= 0.0) && (self.prior.iter().sum::<f64>() - 1.0).abs() <= tol;
        prior_ok
            && self.conditionals.iter().all(|m| {
                m.ncols() == self.prior.len()
                    && m.iter().all(|&v| v >= 0.0)
                    && m.column_iter().all(|c| (c.sum() - 1.0).abs() <= tol)
            })
    }

    pub fn shape(&self) -> Vec<usize> {
        self.conditionals.iter().map(|m| m.nrows()).collect()
    }

    /// The model as a Kruskal model with weights equal to the prior.
    pub fn to_kruskal(&self) -> Result<KruskalModel> {
        KruskalModel::new(self.shape(), self.prior.clone(), self.conditionals.clone())
    }

    /// The joint probability tensor.
    pub fn joint(&self) -> Result<DenseTensor> {
        Ok(self.to_kruskal()?.reconstruct())
    }

    /// A random naïve-Bayes model drawn from [`KruskalModel::random`] with a
    /// perturbed prior.
    pub fn random(shape: &[usize], r: usize, seed: u64) -> Result<Self> {
        let base = KruskalModel::random(shape, r, seed, true)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let raw: Vec<f64> = (0..r).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            prior: raw.iter().map(|w| w / total).collect(),
            conditionals: base.factors,
        })
    }
}
