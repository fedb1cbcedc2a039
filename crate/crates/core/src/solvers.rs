//! CP fitting routines.
//!
//! * [`fit_nncp`] fits a nonnegative model with multiplicative updates under
//!   the Frobenius or generalized KL loss.
//! * [`fit_cp_unconstrained`] fits a signed model by alternating least squares.
//!
//! Both work on an internal factor state where every weight is 1 and the
//! scale lives in the factor columns. The output model is normalized (l¹
//! simplex form for nonnegative fits, unit l² columns for signed fits) and
//! sorted by descending weight.
//!
//! # Update rules
//!
//! Write `F_n` for the mode-`n` factor, `M_n = X_(n) (⊙_{i≠n} F_i)` for the
//! matricized-tensor-times-Khatri-Rao product and `G_n = ∗_{i≠n} F_iᵀF_i`
//! for the Hadamard product of the other Gram matrices. The gradient of
//! `‖A − X‖_F² + ρ Σ ‖F_i‖²` in `F_n` is `2(F_n G_n − M_n + ρ F_n)`. Splitting
//! it into positive and negative parts gives the Lee-Seung step
//!
//! ```text
//! F_n ← F_n ∘ M_n ⊘ (F_n G_n + ρ F_n)
//! ```
//!
//! which never increases the objective (the diagonal majorizer
//! `diag((F_n G_n + ρF_n) ⊘ F_n)` dominates `G_n + ρI` row by row).
//!
//! For the KL loss the gradient in `F_n[j, p]` is
//! `Σ_{idx_n = j} (1 − a/x) Π_{i≠n} F_i[idx_i, p]`, and Jensen's inequality on
//! `log Σ_p` yields the majorization step
//!
//! ```text
//! F_n ← F_n ∘ ((A ⊘ X)_(n) (⊙_{i≠n} F_i)) ⊘ (1 ⊗ Π_{i≠n} colsum(F_i))
//! ```
//!
//! Denominators are floored at [`DENOM_FLOOR`]; a larger denominator only
//! shortens the step, so monotonicity survives the floor.
//!
//! ALS replaces each factor by the exact minimizer `F_n = M_n (G_n + ρI)⁻¹`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::divergence::kl_floored;
use crate::error::{invalid, Result};
use crate::kruskal::KruskalModel;
use crate::tensor::{increment, DenseTensor, NormKind};

/// Floor for multiplicative-update denominators.
pub const DENOM_FLOOR: f64 = 1e-12;
/// Initial ridge added to a singular ALS system.
pub const ALS_JITTER: f64 = 1e-12;
/// Number of iterations spanned by the relative-decrease stopping test.
pub const STOP_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    Frobenius,
    Kl,
}

impl FromStr for Loss {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frob" | "frobenius" | "f" => Ok(Self::Frobenius),
            "kl" => Ok(Self::Kl),
            other => Err(invalid(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Frobenius => "frob",
            Self::Kl => "kl",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub rank: usize,
    pub loss: Loss,
    pub nonneg: bool,
    pub max_iters: usize,
    /// Relative objective decrease over [`STOP_WINDOW`] iterations below which
    /// the fit stops. Zero disables the test so the fit runs `max_iters`.
    pub tol: f64,
    pub seed: u64,
    /// Weight of the squared l² penalty on the loading vectors.
    pub reg_rho: f64,
    pub trace_every: usize,
}

impl FitConfig {
    /// Nonnegative Frobenius fit with default budget.
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            loss: Loss::Frobenius,
            nonneg: true,
            max_iters: 500,
            tol: 1e-9,
            seed: 0,
            reg_rho: 0.0,
            trace_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(invalid("rank must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be positive"));
        }
        if self.trace_every == 0 {
            return Err(invalid("trace_every must be positive"));
        }
        if !(self.tol >= 0.0) || !self.tol.is_finite() {
            return Err(invalid("tol must be a finite nonnegative number"));
        }
        if !(self.reg_rho >= 0.0) || !self.reg_rho.is_finite() {
            return Err(invalid("reg_rho must be a finite nonnegative number"));
        }
        if self.reg_rho > 0.0 && self.loss != Loss::Frobenius {
            return Err(invalid("regularization is only defined for the Frobenius loss"));
        }
        Ok(())
    }
}

/// One traced iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    /// `‖δ‖₁` of the simplex-normalized model, or `Σ|λ_p|` with unit l² columns
    /// for signed fits.
    pub delta_l1: f64,
    /// Largest F-norm among the rank-1 summands.
    pub max_component_f: f64,
    pub residual_e: f64,
    pub residual_f: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace {
    pub rows: Vec<TraceRow>,
    /// Number of ALS solves that needed a ridge to factorize.
    pub jitter_events: usize,
}

pub const TRACE_HEADER: [&str; 5] = ["iter", "objective", "delta_l1", "max_component_F", "residual_E"];

impl FitTrace {
    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for row in &self.rows {
            w.write_record([
                row.iter.to_string(),
                row.objective.to_string(),
                row.delta_l1.to_string(),
                row.max_component_f.to_string(),
                row.residual_e.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: KruskalModel,
    pub trace: FitTrace,
    pub converged: bool,
    pub final_objective: f64,
}

/// Loss of the model against `a`, plus `ρ Σ_p Σ_i ‖col_{i,p}‖₂²`.
///
/// The penalty sees the factors as stored, with `δ_p` folded into the first
/// mode's column. With `ρ > 0` the value therefore depends on how scale is
/// split across modes.
pub fn objective(a: &DenseTensor, model: &KruskalModel, loss: Loss, reg_rho: f64) -> Result<f64> {
    if a.shape() != model.shape() {
        return Err(invalid(format!(
            "model shape {:?} does not match tensor shape {:?}",
            model.shape(),
            a.shape()
        )));
    }
    let x = model.reconstruct();
    let fit = match loss {
        Loss::Frobenius => a.sub(&x)?.norm(NormKind::F).powi(2),
        Loss::Kl => {
            if !model.is_nonnegative() {
                return Err(invalid("KL objective needs a nonnegative model"));
            }
            if !a.is_nonnegative() {
                return Err(invalid("KL objective needs a nonnegative target"));
            }
            kl_floored(a.data(), x.data())
        }
    };
    Ok(fit + reg_rho * penalty(model))
}

fn penalty(model: &KruskalModel) -> f64 {
    let mut total = 0.0;
    for p in 0..model.rank() {
        for (i, f) in model.factors().iter().enumerate() {
            let sq = f.column(p).norm_squared();
            total += if i == 0 { model.delta()[p].powi(2) * sq } else { sq };
        }
    }
    total
}

/// Coercivity cap on the total weight of a nonnegative iterate:
/// `‖δ‖₁ ≤ ‖A‖_E + √N ‖A − X‖_F`.
pub fn coercivity_cap(a_norm_e: f64, entries: usize, residual_f: f64) -> f64 {
    a_norm_e + (entries as f64).sqrt() * residual_f
}

/// Whether a trace row obeys the coercivity cap, with a relative slack of 1e-9.
pub fn satisfies_coercivity(row: &TraceRow, a_norm_e: f64, entries: usize) -> bool {
    let cap = coercivity_cap(a_norm_e, entries, row.residual_f);
    row.delta_l1 <= cap + 1e-9 * cap.max(1.0)
}

/// Fits either family according to `cfg.nonneg`.
pub fn fit(a: &DenseTensor, cfg: &FitConfig) -> Result<FitResult> {
    if cfg.nonneg {
        fit_nncp(a, cfg)
    } else {
        fit_cp_unconstrained(a, cfg)
    }
}

/// Nonnegative CP by multiplicative updates.
pub fn fit_nncp(a: &DenseTensor, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if !cfg.nonneg {
        return Err(invalid("fit_nncp requires nonneg = true"));
    }
    if !a.is_nonnegative() {
        return Err(invalid("nonnegative fit needs a nonnegative tensor"));
    }
    let mut state = init_nonneg(a, cfg)?;
    run(a, cfg, &mut state, |a, cfg, state| match cfg.loss {
        Loss::Frobenius => mu_frobenius_sweep(a, cfg.reg_rho, state),
        Loss::Kl => mu_kl_sweep(a, state),
    })
}

/// Signed CP by alternating least squares (Frobenius loss only).
pub fn fit_cp_unconstrained(a: &DenseTensor, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if cfg.nonneg {
        return Err(invalid("fit_cp_unconstrained requires nonneg = false"));
    }
    if cfg.loss != Loss::Frobenius {
        return Err(invalid("alternating least squares supports the Frobenius loss only"));
    }
    let init = KruskalModel::random(a.shape(), cfg.rank, cfg.seed, false)?;
    let mut state = FactorState::from_model(&init);
    run(a, cfg, &mut state, |a, cfg, state| als_sweep(a, cfg.reg_rho, state))
}

/// Factor matrices with all weights equal to one.
struct FactorState {
    factors: Vec<DMatrix<f64>>,
    nonneg: bool,
    jitter_events: usize,
}

impl FactorState {
    fn from_model(m: &KruskalModel) -> Self {
        let mut factors = m.factors().to_vec();
        let nonneg = m.is_nonnegative();
        for (p, &d) in m.delta().iter().enumerate() {
            let s = d.abs().powf(1.0 / factors.len() as f64);
            for f in factors.iter_mut() {
                f.column_mut(p).scale_mut(s);
            }
            if d < 0.0 {
                factors[0].column_mut(p).neg_mut();
            }
        }
        Self {
            factors,
            nonneg,
            jitter_events: 0,
        }
    }

    fn model(&self, shape: &[usize]) -> KruskalModel {
        let r = self.factors[0].ncols();
        KruskalModel::new(shape.to_vec(), vec![1.0; r], self.factors.clone()).expect("factor state is consistent")
    }

    /// Equalizes the column norms of each component across modes, keeping
    /// their product. Leaves the reconstruction unchanged.
    fn rebalance(&mut self) {
        let k = self.factors.len() as f64;
        let r = self.factors[0].ncols();
        for p in 0..r {
            let norms: Vec<f64> = self.factors.iter().map(|f| f.column(p).norm()).collect();
            if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
                continue;
            }
            let geo = norms.iter().map(|n| n.ln()).sum::<f64>() / k;
            let target = geo.exp();
            for (f, n) in self.factors.iter_mut().zip(&norms) {
                f.column_mut(p).scale_mut(target / n);
            }
        }
    }
}

fn init_nonneg(a: &DenseTensor, cfg: &FitConfig) -> Result<FactorState> {
    let mass = a.norm(NormKind::E);
    let base = KruskalModel::random(a.shape(), cfg.rank, cfg.seed, true)?;
    // Start at the target's total mass; keep a unit mass for the zero tensor
    // so the iterate stays strictly interior.
    let init = base.with_scaled_weights(if mass > 0.0 { mass } else { 1.0 })?;
    Ok(FactorState::from_model(&init))
}

fn run(
    a: &DenseTensor,
    cfg: &FitConfig,
    state: &mut FactorState,
    mut sweep: impl FnMut(&DenseTensor, &FitConfig, &mut FactorState) -> Result<()>,
) -> Result<FitResult> {
    let mut trace = FitTrace::default();
    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iters + 1);
    let first = measure(a, cfg, state, 0)?;
    history.push(first.objective);
    trace.rows.push(first);
    let mut converged = false;
    let mut last_iter = 0;

    for iter in 1..=cfg.max_iters {
        sweep(a, cfg, state)?;
        if cfg.reg_rho == 0.0 {
            state.rebalance();
        }
        last_iter = iter;
        let obj = objective(a, &state.model(a.shape()), cfg.loss, cfg.reg_rho)?;
        history.push(obj);
        if obj == 0.0 {
            converged = true;
        } else if cfg.tol > 0.0 && iter >= STOP_WINDOW {
            let before = history[iter - STOP_WINDOW];
            if before == 0.0 || (before - obj) / before.abs() < cfg.tol {
                converged = true;
            }
        }
        if converged || iter % cfg.trace_every == 0 || iter == cfg.max_iters {
            trace.rows.push(measure(a, cfg, state, iter)?);
        }
        if converged {
            break;
        }
    }
    debug_assert_eq!(trace.last().map(|r| r.iter), Some(last_iter));

    trace.jitter_events = state.jitter_events;
    let raw = state.model(a.shape());
    let model = if state.nonneg {
        raw.normalize()?
    } else {
        raw.normalize_signed()?
    }
    .sorted_by_weight();
    let final_objective = trace.last().expect("trace has the initial row").objective;
    Ok(FitResult {
        model,
        trace,
        converged,
        final_objective,
    })
}

fn measure(a: &DenseTensor, cfg: &FitConfig, state: &FactorState, iter: usize) -> Result<TraceRow> {
    let model = state.model(a.shape());
    let x = model.reconstruct();
    let resid = a.sub(&x)?;
    let objective = objective(a, &model, cfg.loss, cfg.reg_rho)?;
    // Simplex weight for nonnegative iterates, Σ|λ| with unit l² columns
    // otherwise; both are products of per-mode column norms.
    let r = model.rank();
    let delta_l1 = (0..r)
        .map(|p| {
            state.factors.iter().fold(1.0, |acc, f| {
                let c = f.column(p);
                acc * if state.nonneg { c.iter().sum::<f64>() } else { c.norm() }
            })
        })
        .sum();
    Ok(TraceRow {
        iter,
        objective,
        delta_l1,
        max_component_f: model.max_component_f(),
        residual_e: resid.norm(NormKind::E),
        residual_f: resid.norm(NormKind::F),
    })
}

/// `Y_(n) (⊙_{i≠n} F_i)` for a dense tensor `y`, computed entry by entry.
fn mttkrp(y: &[f64], shape: &[usize], factors: &[DMatrix<f64>], mode: usize) -> DMatrix<f64> {
    let r = factors[0].ncols();
    let mut out = DMatrix::zeros(shape[mode], r);
    let mut idx = vec![0usize; shape.len()];
    for &v in y {
        if v != 0.0 {
            for p in 0..r {
                let mut prod = v;
                for (i, f) in factors.iter().enumerate() {
                    if i != mode {
                        prod *= f[(idx[i], p)];
                    }
                }
                out[(idx[mode], p)] += prod;
            }
        }
        increment(&mut idx, shape);
    }
    out
}

/// `∗_{i≠n} F_iᵀ F_i`.
fn gram_hadamard(factors: &[DMatrix<f64>], mode: usize) -> DMatrix<f64> {
    let r = factors[0].ncols();
    let mut g = DMatrix::from_element(r, r, 1.0);
    for (i, f) in factors.iter().enumerate() {
        if i != mode {
            g.component_mul_assign(&(f.transpose() * f));
        }
    }
    g
}

fn mu_frobenius_sweep(a: &DenseTensor, rho: f64, state: &mut FactorState) -> Result<()> {
    for mode in 0..state.factors.len() {
        let numer = mttkrp(a.data(), a.shape(), &state.factors, mode);
        let g = gram_hadamard(&state.factors, mode);
        let f = &state.factors[mode];
        let mut denom = f * g;
        if rho > 0.0 {
            denom += f * rho;
        }
        let updated = DMatrix::from_fn(f.nrows(), f.ncols(), |j, p| {
            f[(j, p)] * numer[(j, p)] / denom[(j, p)].max(DENOM_FLOOR)
        });
        state.factors[mode] = updated;
    }
    Ok(())
}

fn mu_kl_sweep(a: &DenseTensor, state: &mut FactorState) -> Result<()> {
    let shape = a.shape();
    for mode in 0..state.factors.len() {
        let x = KruskalModel::new(shape.to_vec(), vec![1.0; state.factors[0].ncols()], state.factors.clone())?
            .reconstruct();
        let ratio: Vec<f64> = a
            .data()
            .iter()
            .zip(x.data())
            .map(|(&p, &q)| if p == 0.0 { 0.0 } else { p / q.max(crate::divergence::KL_FLOOR) })
            .collect();
        let numer = mttkrp(&ratio, shape, &state.factors, mode);
        let r = state.factors[0].ncols();
        let col_mass: Vec<f64> = (0..r)
            .map(|p| {
                state
                    .factors
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != mode)
                    .fold(1.0, |acc, (_, f)| acc * f.column(p).sum())
            })
            .collect();
        let f = &state.factors[mode];
        let updated = DMatrix::from_fn(f.nrows(), r, |j, p| {
            f[(j, p)] * numer[(j, p)] / col_mass[p].max(DENOM_FLOOR)
        });
        state.factors[mode] = updated;
    }
    Ok(())
}

fn als_sweep(a: &DenseTensor, rho: f64, state: &mut FactorState) -> Result<()> {
    for mode in 0..state.factors.len() {
        let m = mttkrp(a.data(), a.shape(), &state.factors, mode);
        let mut g = gram_hadamard(&state.factors, mode);
        let r = g.nrows();
        if rho > 0.0 {
            for p in 0..r {
                g[(p, p)] += rho;
            }
        }
        let solved = solve_spd(&g, &m.transpose(), &mut state.jitter_events);
        state.factors[mode] = solved.transpose();
    }
    Ok(())
}

/// Solves `G X = B` for symmetric positive semidefinite `G`, adding a growing
/// ridge when the Cholesky factorization fails.
fn solve_spd(g: &DMatrix<f64>, b: &DMatrix<f64>, jitter_events: &mut usize) -> DMatrix<f64> {
    if let Some(chol) = g.clone().cholesky() {
        return chol.solve(b);
    }
    *jitter_events += 1;
    let r = g.nrows();
    let scale = (g.trace() / r as f64).abs().max(1.0);
    let mut ridge = ALS_JITTER * scale;
    loop {
        let mut shifted = g.clone();
        for p in 0..r {
            shifted[(p, p)] += ridge;
        }
        if let Some(chol) = shifted.cholesky() {
            return chol.solve(b);
        }
        ridge *= 10.0;
    }
}
