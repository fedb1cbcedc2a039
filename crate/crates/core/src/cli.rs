//! The `nncp` command line.
//!
//! Exit codes: 0 on success, 1 when the input is invalid (bad flags, malformed
//! or mismatched files), 2 on internal failures such as an unwritable output.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{run_contrast_experiment, ContrastConfig, Family};
use crate::divergence::{distance, DivergenceKind};
use crate::error::Error;
use crate::kruskal::KruskalModel;
use crate::pathologies::{bclr_a_eps, bclr_limit, kl_counterexample, w_sequence, BclrInstance};
use crate::solvers::{fit, FitConfig, Loss};
use crate::tensor::{DenseTensor, NormKind};

#[derive(Debug, Parser)]
#[command(name = "nncp", version, about = "Nonnegative CP decomposition toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the E, F and G norms of a tensor.
    Norms {
        #[arg(long)]
        input: PathBuf,
    },
    /// Print the distance between two tensors (`inf` when infinite).
    Divergence {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: DivergenceKind,
    },
    /// Fit a CP model.
    Decompose(DecomposeArgs),
    /// Generate one of the ill-posed example tensors.
    Pathology {
        #[command(subcommand)]
        which: Pathology,
    },
    /// Run the nonnegative vs unconstrained contrast over seeds 0..K.
    Degeneracy(DegeneracyArgs),
    /// Put a nonnegative model in simplex form.
    Normalize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, value_parser = parse_loss, default_value = "frob")]
    pub loss: Loss,
    #[arg(long)]
    pub nonneg: bool,
    #[arg(long, default_value_t = 0.0)]
    pub reg: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Pathology {
    /// The rank-5 tensor A_ε and its five summands.
    Bclr {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        components: Option<PathBuf>,
    },
    /// The limit of A_ε as ε → 0.
    BclrLimit {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// A_n = A + B/n + C/n² in 2×2×2; `--limit` also writes A.
    WSeq {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        limit: Option<PathBuf>,
    },
    /// X_n = [1, 1/n]^⊗3 approaching e⊗e⊗e; `--target` also writes e⊗e⊗e.
    KlExample {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        target: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DegeneracyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub rank: usize,
    /// Number of seeds; runs seeds 0..K.
    #[arg(long)]
    pub seeds: u64,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

fn parse_kind(s: &str) -> Result<DivergenceKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<Loss, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Internal(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Internal(m) => m,
        }
    }
}

/// Computation errors are caused by the inputs; I/O on outputs is internal.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) => Failure::Internal(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

fn read_tensor(path: &Path) -> Result<DenseTensor, Failure> {
    DenseTensor::read_json(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn read_model(path: &Path) -> Result<KruskalModel, Failure> {
    KruskalModel::read_json(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_tensor(t: &DenseTensor, path: &Path) -> Result<(), Failure> {
    t.write_json(path)
        .map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn write_model(m: &KruskalModel, path: &Path) -> Result<(), Failure> {
    m.write_json(path)
        .map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))
}

fn internal(e: impl std::fmt::Display) -> Failure {
    Failure::Internal(e.to_string())
}

fn fmt_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        v.to_string()
    }
}

/// Parses `argv` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.to_string();
            let _ = if code == 0 {
                write!(out, "{text}")
            } else {
                let line = text.lines().next().unwrap_or("invalid arguments");
                writeln!(err, "{line}")
            };
            return code;
        }
    };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli.command, out)));
    match result {
        Ok(Ok(())) => 0,
        Ok(Err(f)) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
        Err(_) => {
            let _ = writeln!(err, "error: internal failure");
            2
        }
    }
}

fn execute(command: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match command {
        Command::Norms { input } => {
            let t = read_tensor(&input)?;
            writeln!(out, "E={}", t.norm(NormKind::E)).map_err(internal)?;
            writeln!(out, "F={}", t.norm(NormKind::F)).map_err(internal)?;
            writeln!(out, "G={}", t.norm(NormKind::G)).map_err(internal)?;
        }
        Command::Divergence { a, b, kind } => {
            let (a, b) = (read_tensor(&a)?, read_tensor(&b)?);
            let d = distance(&a, &b, kind)?;
            writeln!(out, "{}", fmt_value(d)).map_err(internal)?;
        }
        Command::Decompose(args) => decompose(args, out)?,
        Command::Pathology { which } => pathology(which, out)?,
        Command::Degeneracy(args) => degeneracy(args, out)?,
        Command::Normalize { model, out: path } => {
            let m = read_model(&model)?;
            write_model(&m.normalize()?, &path)?;
        }
    }
    Ok(())
}

fn decompose(args: DecomposeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let a = read_tensor(&args.input)?;
    let cfg = FitConfig {
        rank: args.rank,
        loss: args.loss,
        nonneg: args.nonneg,
        max_iters: args.max_iters,
        tol: args.tol,
        seed: args.seed,
        reg_rho: args.reg,
        trace_every: 1,
    };
    let res = fit(&a, &cfg)?;
    if let Some(path) = &args.trace {
        res.trace
            .write_csv_file(path)
            .map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = &args.out {
        write_model(&res.model, path)?;
    }
    let last = res.trace.last().expect("trace is never empty");
    writeln!(out, "objective={}", res.final_objective).map_err(internal)?;
    writeln!(out, "residual_E={}", last.residual_e).map_err(internal)?;
    writeln!(out, "residual_F={}", last.residual_f).map_err(internal)?;
    writeln!(out, "iters={}", last.iter).map_err(internal)?;
    writeln!(out, "converged={}", res.converged).map_err(internal)?;
    Ok(())
}

fn pathology(which: Pathology, out: &mut dyn Write) -> Result<(), Failure> {
    match which {
        Pathology::Bclr {
            epsilon,
            n,
            out: path,
            components,
        } => {
            let (t, comps) = bclr_a_eps(&BclrInstance::new(epsilon).with_n(n))?;
            write_tensor(&t, &path)?;
            if let Some(cpath) = components {
                write_model(&comps, &cpath)?;
            }
            writeln!(out, "max_component_F={}", comps.max_component_f()).map_err(internal)?;
        }
        Pathology::BclrLimit { n, out: path } => write_tensor(&bclr_limit(n)?, &path)?,
        Pathology::WSeq { n, out: path, limit } => {
            let seq = w_sequence(&[n])?;
            write_tensor(&seq.a_n[0], &path)?;
            if let Some(lpath) = limit {
                write_tensor(&seq.a, &lpath)?;
            }
        }
        Pathology::KlExample { n, out: path, target } => {
            let (a, x) = kl_counterexample(n)?;
            write_tensor(&x, &path)?;
            if let Some(tpath) = target {
                write_tensor(&a, &tpath)?;
            }
            let d = distance(&a, &x, DivergenceKind::Kl)?;
            writeln!(out, "kl={}", fmt_value(d)).map_err(internal)?;
        }
    }
    Ok(())
}

fn degeneracy(args: DegeneracyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let a = read_tensor(&args.input)?;
    if args.rank == 0 || args.seeds == 0 || args.iters == 0 {
        return Err(Failure::Input("rank, seeds and iters must be positive".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let cfg = ContrastConfig {
        max_iters: args.iters,
        ..ContrastConfig::default()
    };
    let summary = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(internal)?
            .install(|| run_contrast_experiment(&a, args.rank, &seeds, &cfg))?,
        None => run_contrast_experiment(&a, args.rank, &seeds, &cfg)?,
    };
    summary
        .write_csv_file(&args.out)
        .map_err(|e| Failure::Internal(format!("{}: {e}", args.out.display())))?;
    for family in [Family::Nonneg, Family::Unconstrained] {
        let agg = summary.aggregate(family);
        writeln!(
            out,
            "{family}: degenerate={} bounded={} inconclusive={} failed={} residual_E min={} median={} max={}",
            agg.degenerate,
            agg.bounded,
            agg.inconclusive,
            agg.failures,
            agg.min_residual_e,
            agg.median_residual_e,
            agg.max_residual_e
        )
        .map_err(internal)?;
    }
    Ok(())
}
