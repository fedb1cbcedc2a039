//! Degeneracy detection on fit traces, and the paired experiment that fits
//! the same tensor with and without nonnegativity constraints.
//!
//! A run is flagged DEGENERATE when its rank-1 summands end up much larger
//! than the target while the residual keeps falling: the numerical signature
//! of a best low-rank approximation that does not exist. A finite run can
//! only show the signature; it never certifies that no minimizer exists,
//! hence the INCONCLUSIVE verdict.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::solvers::{fit_cp_unconstrained, fit_nncp, satisfies_coercivity, FitConfig, FitResult, FitTrace, Loss};
use crate::tensor::{DenseTensor, NormKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Degenerate,
    Bounded,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Degenerate => "DEGENERATE",
            Self::Bounded => "BOUNDED",
            Self::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// Detector knobs. The defaults classify the 4×4×4 BCLR limit correctly at
/// 2000 iterations; they are not statements about the underlying math.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Summand blow-up, as a multiple of `‖A‖_F`.
    pub blowup: f64,
    /// Required reduction factor of the residual from its initial value.
    pub residual_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            blowup: 10.0,
            residual_factor: 2.0,
        }
    }
}

/// Norms of the fitted tensor needed by the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetNorms {
    pub e: f64,
    pub f: f64,
    /// Number of entries `N`.
    pub entries: usize,
}

impl TargetNorms {
    pub fn of(a: &DenseTensor) -> Self {
        Self {
            e: a.norm(NormKind::E),
            f: a.norm(NormKind::F),
            entries: a.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evidence {
    pub iter: usize,
    pub residual: f64,
    pub max_component_f: f64,
    pub delta_l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyReport {
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    /// Final largest summand F-norm over `‖A‖_F`.
    pub blowup_ratio: f64,
    /// Final over initial F-residual.
    pub residual_trend: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

pub fn detect_degeneracy(trace: &FitTrace, norms: TargetNorms, thresholds: Thresholds) -> Result<DegeneracyReport> {
    let (first, last) = match (trace.rows.first(), trace.rows.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(invalid("cannot classify an empty trace")),
    };
    let evidence = trace
        .rows
        .iter()
        .map(|r| Evidence {
            iter: r.iter,
            residual: r.residual_f,
            max_component_f: r.max_component_f,
            delta_l1: r.delta_l1,
        })
        .collect();
    let blowup_ratio = ratio(last.max_component_f, norms.f);
    let residual_trend = ratio(last.residual_f, first.residual_f);

    let verdict = if blowup_ratio > thresholds.blowup && residual_trend * thresholds.residual_factor <= 1.0 {
        Verdict::Degenerate
    } else if trace
        .rows
        .iter()
        .all(|r| satisfies_coercivity(r, norms.e, norms.entries))
    {
        Verdict::Bounded
    } else {
        Verdict::Inconclusive
    };
    Ok(DegeneracyReport {
        verdict,
        evidence,
        blowup_ratio,
        residual_trend,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Nonneg,
    Unconstrained,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Nonneg => "nonneg",
            Self::Unconstrained => "unconstrained",
        })
    }
}

/// Budget shared by both families in a contrast experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub thresholds: Thresholds,
    pub trace_every: usize,
}

impl Default for ContrastConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            tol: 0.0,
            thresholds: Thresholds::default(),
            trace_every: 1,
        }
    }
}

/// Outcome of one fit in a sweep.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub seed: u64,
    pub family: Family,
    pub outcome: std::result::Result<RunOutcome, String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: DegeneracyReport,
    pub fit: FitResult,
}

impl RunOutcome {
    pub fn final_residual_e(&self) -> f64 {
        self.fit.trace.last().map_or(f64::NAN, |r| r.residual_e)
    }

    pub fn final_residual_f(&self) -> f64 {
        self.fit.trace.last().map_or(f64::NAN, |r| r.residual_f)
    }

    pub fn iters(&self) -> usize {
        self.fit.trace.last().map_or(0, |r| r.iter)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilyAggregate {
    pub family: Family,
    pub runs: usize,
    pub failures: usize,
    pub min_residual_e: f64,
    pub median_residual_e: f64,
    pub max_residual_e: f64,
    pub degenerate: usize,
    pub bounded: usize,
    pub inconclusive: usize,
}

#[derive(Debug, Clone)]
pub struct ContrastSummary {
    /// Ordered by seed, nonnegative run first.
    pub records: Vec<RunRecord>,
}

pub const SUMMARY_HEADER: [&str; 7] = [
    "seed",
    "family",
    "verdict",
    "final_residual_E",
    "final_residual_F",
    "blowup_ratio",
    "iters",
];

impl ContrastSummary {
    pub fn family(&self, family: Family) -> impl Iterator<Item = &RunRecord> {
        self.records.iter().filter(move |r| r.family == family)
    }

    pub fn count(&self, family: Family, verdict: Verdict) -> usize {
        self.family(family)
            .filter(|r| matches!(&r.outcome, Ok(o) if o.report.verdict == verdict))
            .count()
    }

    pub fn aggregate(&self, family: Family) -> FamilyAggregate {
        let mut residuals: Vec<f64> = self
            .family(family)
            .filter_map(|r| r.outcome.as_ref().ok().map(RunOutcome::final_residual_e))
            .collect();
        residuals.sort_by(f64::total_cmp);
        let runs = self.family(family).count();
        let median = match residuals.len() {
            0 => f64::NAN,
            n if n % 2 == 1 => residuals[n / 2],
            n => 0.5 * (residuals[n / 2 - 1] + residuals[n / 2]),
        };
        FamilyAggregate {
            family,
            runs,
            failures: runs - residuals.len(),
            min_residual_e: residuals.first().copied().unwrap_or(f64::NAN),
            median_residual_e: median,
            max_residual_e: residuals.last().copied().unwrap_or(f64::NAN),
            degenerate: self.count(family, Verdict::Degenerate),
            bounded: self.count(family, Verdict::Bounded),
            inconclusive: self.count(family, Verdict::Inconclusive),
        }
    }

    /// Writes one CSV row per (seed, family). Failed runs carry verdict
    /// `ERROR` and `NaN` metrics.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SUMMARY_HEADER)?;
        for rec in &self.records {
            let fields = match &rec.outcome {
                Ok(o) => [
                    o.report.verdict.to_string(),
                    o.final_residual_e().to_string(),
                    o.final_residual_f().to_string(),
                    o.report.blowup_ratio.to_string(),
                    o.iters().to_string(),
                ],
                Err(_) => [
                    "ERROR".to_string(),
                    "NaN".to_string(),
                    "NaN".to_string(),
                    "NaN".to_string(),
                    "0".to_string(),
                ],
            };
            w.write_record(
                [rec.seed.to_string(), rec.family.to_string()]
                    .into_iter()
                    .chain(fields),
            )?;
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

fn run_one(a: &DenseTensor, rank: usize, seed: u64, family: Family, cfg: &ContrastConfig) -> RunRecord {
    let fit_cfg = FitConfig {
        rank,
        loss: Loss::Frobenius,
        nonneg: family == Family::Nonneg,
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        seed,
        reg_rho: 0.0,
        trace_every: cfg.trace_every,
    };
    let fit = match family {
        Family::Nonneg => fit_nncp(a, &fit_cfg),
        Family::Unconstrained => fit_cp_unconstrained(a, &fit_cfg),
    };
    let outcome = fit
        .and_then(|fit| {
            let report = detect_degeneracy(&fit.trace, TargetNorms::of(a), cfg.thresholds)?;
            Ok(RunOutcome { report, fit })
        })
        .map_err(|e| e.to_string());
    RunRecord { seed, family, outcome }
}

/// Fits `a` at `rank` with both families for every seed, in parallel, and
/// collects the reports in seed order.
pub fn run_contrast_experiment(
    a: &DenseTensor,
    rank: usize,
    seeds: &[u64],
    cfg: &ContrastConfig,
) -> Result<ContrastSummary> {
    if !a.is_nonnegative() {
        return Err(invalid("contrast experiment needs a nonnegative tensor"));
    }
    let jobs: Vec<(u64, Family)> = seeds
        .iter()
        .flat_map(|&s| [(s, Family::Nonneg), (s, Family::Unconstrained)])
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(seed, family)| run_one(a, rank, seed, family, cfg))
        .collect();
    Ok(ContrastSummary { records })
}
