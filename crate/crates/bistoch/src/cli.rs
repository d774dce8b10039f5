//! The `bistoch` command line.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 numerical
//! failure, 4 argument error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bistoch_core::affinity::Provenance;
use bistoch_core::{
    diffusion_coordinates, extend_new_points, fit_affinity, gaussian_affinity, materialize_kernel,
    median_bandwidth, select_reference, sinkhorn_balance, uniform_measure, validate_assumptions,
    AffinityMatrix, Fit, Measure, ReferenceSet, Strategy, SymmetricKernel, ValidationReport,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::io::{self, fmt_f64, Format, IoError};
use crate::model::{load_model, save_model, EmbeddingDefaults};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: IoError },
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("argument error: {0}")]
    Argument(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::File { .. } | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Argument(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(IoError::Io(e))
    }
}

impl From<bistoch_core::Error> for CliError {
    fn from(e: bistoch_core::Error) -> Self {
        use bistoch_core::Error as E;
        let msg = e.to_string();
        match e.root() {
            E::Assumption { .. } => CliError::Validation(msg),
            E::Numerical(_) | E::DegenerateData | E::Underflow { .. } => CliError::Numerical(msg),
            E::InvalidArgument(_)
            | E::DimensionMismatch { .. }
            | E::TooLarge { .. }
            | E::ExternalAffinity
            | E::Stage { .. } => CliError::Argument(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bistoch",
    version,
    about = "Bi-stochastic kernels from reference-set affinities, with out-of-sample diffusion coordinates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that every point and every reference has positive affinity mass.
    Validate(ValidateArgs),
    /// Fit a model and write diffusion coordinates for the input points.
    Embed(EmbedArgs),
    /// Embed new points with a saved model.
    Extend(ExtendArgs),
    /// Dense diagnostics of the kernel (small inputs only).
    KernelStats(KernelStatsArgs),
    /// Compare the one-pass construction with Sinkhorn-Knopp balancing.
    CompareSinkhorn(CompareArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RefStrategy {
    All,
    Uniform,
    Fps,
}

impl From<RefStrategy> for Strategy {
    fn from(s: RefStrategy) -> Self {
        match s {
            RefStrategy::All => Strategy::All,
            RefStrategy::Uniform => Strategy::Uniform,
            RefStrategy::Fps => Strategy::Fps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Epsilon {
    Median,
    Fixed(f64),
}

fn parse_epsilon(s: &str) -> Result<Epsilon, String> {
    if s == "median" {
        return Ok(Epsilon::Median);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(Epsilon::Fixed(v)),
        _ => Err(format!("expected `median` or a positive number, got {s:?}")),
    }
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character, got {s:?}")),
    }
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a finite number >= 0, got {s:?}")),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a finite number > 0, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct FormatArgs {
    /// Field delimiter for every input and output file (`tab` for tabs).
    #[arg(long, value_parser = parse_delimiter, default_value = ",")]
    pub delimiter: u8,
    /// Skip the first line of point and measure files.
    #[arg(long)]
    pub header: bool,
}

impl FormatArgs {
    fn format(&self) -> Format {
        Format {
            delimiter: self.delimiter,
            header: self.header,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Point file, one point per row.
    #[arg(long, required_unless_present = "affinity")]
    pub points: Option<PathBuf>,
    #[command(flatten)]
    pub format: FormatArgs,
    /// Point masses, one per line. Uniform 1/m when omitted.
    #[arg(long)]
    pub measure: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RefStrategy::All)]
    pub ref_strategy: RefStrategy,
    /// Reference set size for `uniform` and `fps`.
    #[arg(long)]
    pub ref_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reference points from a file instead of selecting them from the input.
    #[arg(long, conflicts_with_all = ["ref_strategy", "ref_size"])]
    pub ref_points: Option<PathBuf>,
    /// Gaussian bandwidth in squared-distance units, or `median`.
    #[arg(long, value_parser = parse_epsilon, default_value = "median")]
    pub epsilon: Epsilon,
    /// Precomputed m x n affinity grid instead of points + Gaussian.
    #[arg(long, conflicts_with_all = ["points", "ref_points", "ref_strategy", "ref_size", "epsilon"])]
    pub affinity: Option<PathBuf>,
    /// Densities at or below this fail validation.
    #[arg(long, value_parser = parse_positive, default_value_t = bistoch_core::DEFAULT_DENSITY_TOL)]
    pub tol: f64,
    /// Densities below this produce a conditioning warning.
    #[arg(long, value_parser = parse_nonneg, default_value_t = 1e-12)]
    pub min_density: f64,
}

#[derive(Debug, Args)]
pub struct SpectralArgs {
    /// Keep eigenpairs with lambda > cutoff * lambda_max.
    #[arg(long, value_parser = parse_nonneg, default_value_t = bistoch_core::DEFAULT_CUTOFF)]
    pub cutoff: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub spectral: SpectralArgs,
    /// Embedding dimension K.
    #[arg(long)]
    pub components: usize,
    /// Diffusion time t.
    #[arg(long, value_parser = parse_nonneg, default_value_t = 1.0)]
    pub time: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write a `# t=... lambda=...` line and column names to the output.
    #[arg(long)]
    pub out_header: bool,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub points_new: PathBuf,
    #[command(flatten)]
    pub format: FormatArgs,
    /// Defaults to the value used by `embed`.
    #[arg(long)]
    pub components: Option<usize>,
    /// Defaults to the value used by `embed`.
    #[arg(long, value_parser = parse_nonneg)]
    pub time: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub out_header: bool,
}

#[derive(Debug, Args)]
pub struct DenseArgs {
    /// Refuse to materialize the m x m kernel above this size.
    #[arg(long, default_value_t = bistoch_core::DEFAULT_MAX_M)]
    pub max_m: usize,
    /// Materialize regardless of --max-m.
    #[arg(long)]
    pub force_dense: bool,
}

impl DenseArgs {
    fn limit(&self) -> usize {
        if self.force_dense {
            usize::MAX
        } else {
            self.max_m
        }
    }
}

#[derive(Debug, Args)]
pub struct KernelStatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub spectral: SpectralArgs,
    #[command(flatten)]
    pub dense: DenseArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub spectral: SpectralArgs,
    #[command(flatten)]
    pub dense: DenseArgs,
    /// Sinkhorn stopping tolerance on the max row/column residual.
    #[arg(long, value_parser = parse_positive, default_value_t = 1e-8)]
    pub sinkhorn_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::File {
        path: path.to_path_buf(),
        source: IoError::Io(e),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::File {
            path: path.to_path_buf(),
            source: IoError::Io(e),
        })
}

fn in_file<T>(path: &Path, r: Result<T, IoError>) -> Result<T, CliError> {
    r.map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// Affinity, reference set and measure assembled from the input flags.
struct Prepared {
    alpha: AffinityMatrix,
    reference: Option<ReferenceSet>,
    mu: Measure,
}

fn prepare(input: &InputArgs) -> Result<Prepared, CliError> {
    let fmt = input.format.format();
    let (alpha, reference) = if let Some(path) = &input.affinity {
        let alpha = in_file(path, io::load_affinity(open(path)?, fmt))?;
        (alpha, None)
    } else {
        let path = input.points.as_ref().expect("clap requires --points");
        let x = in_file(path, io::load_points(open(path)?, fmt))?;
        let y = match &input.ref_points {
            Some(rp) => ReferenceSet::new(in_file(rp, io::load_points(open(rp)?, fmt))?),
            None => {
                let strategy = Strategy::from(input.ref_strategy);
                let size = match (strategy, input.ref_size) {
                    (Strategy::All, _) => 0,
                    (_, Some(s)) => s,
                    (_, None) => {
                        return Err(CliError::Argument(
                            "--ref-size is required for uniform and fps reference selection".into(),
                        ))
                    }
                };
                select_reference(&x, strategy, size, input.seed)?
            }
        };
        let eps = match input.epsilon {
            Epsilon::Median => median_bandwidth(&x, &y)?,
            Epsilon::Fixed(e) => e,
        };
        (gaussian_affinity(&x, &y, eps)?, Some(y))
    };
    let mu = match &input.measure {
        Some(path) => in_file(path, io::load_measure(open(path)?, fmt))?,
        None => uniform_measure(alpha.m())?,
    };
    if mu.len() != alpha.m() {
        return Err(CliError::Argument(format!(
            "measure has {} weights but there are {} points",
            mu.len(),
            alpha.m()
        )));
    }
    Ok(Prepared {
        alpha,
        reference,
        mu,
    })
}

fn describe(out: &mut dyn Write, p: &Prepared) -> std::io::Result<()> {
    write!(out, "m={} n={}", p.alpha.m(), p.alpha.n())?;
    match p.alpha.provenance() {
        Provenance::Gaussian { epsilon } => writeln!(out, " affinity=gaussian epsilon={}", fmt_f64(*epsilon)),
        Provenance::External { digest } => writeln!(out, " affinity=external digest={digest}"),
    }
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn print_report(out: &mut dyn Write, r: &ValidationReport, min_density: f64) -> std::io::Result<()> {
    writeln!(out, "finite-affinity: {}", pass(r.finite_ok()))?;
    if !r.finite_ok() {
        writeln!(out, "  non-finite entries (row, column): {:?}", r.non_finite)?;
    }
    writeln!(
        out,
        "data-density (tol < Omega(x) < inf): {}  min Omega = {}",
        pass(r.data_density_ok()),
        fmt_f64(r.min_data_density)
    )?;
    if !r.data_density_ok() {
        writeln!(
            out,
            "  offending rows: {:?} (points too far from every reference; increase epsilon or enlarge the reference set)",
            r.bad_rows
        )?;
    }
    writeln!(
        out,
        "reference-density (tol < omega(y) < inf): {}  min omega = {}",
        pass(r.reference_density_ok()),
        fmt_f64(r.min_reference_density)
    )?;
    if !r.reference_density_ok() {
        writeln!(
            out,
            "  offending columns: {:?} (references with no affinity to the data; increase epsilon)",
            r.bad_columns
        )?;
    }
    if r.passed() && r.near_violation(min_density) {
        writeln!(
            out,
            "warning: a density is below --min-density {}; expect poor conditioning",
            fmt_f64(min_density)
        )?;
    }
    writeln!(out, "overall: {}", pass(r.passed()))
}

fn validate(args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let p = prepare(&args.input)?;
    describe(out, &p)?;
    let report = validate_assumptions(&p.alpha, &p.mu, args.input.tol)?;
    print_report(out, &report, args.input.min_density)?;
    if report.passed() {
        Ok(())
    } else {
        let e = report.first_violation().expect("failed report has a violation");
        Err(CliError::Validation(e.to_string()))
    }
}

fn fit_input(input: &InputArgs, spectral: &SpectralArgs, out: &mut dyn Write) -> Result<Fit, CliError> {
    let p = prepare(input)?;
    describe(out, &p)?;
    let fit = fit_affinity(p.alpha, p.reference, &p.mu, spectral.cutoff, input.tol)?;
    if fit.report.near_violation(input.min_density) {
        writeln!(
            out,
            "warning: min Omega = {}, min omega = {} below --min-density {}",
            fmt_f64(fit.report.min_data_density),
            fmt_f64(fit.report.min_reference_density),
            fmt_f64(input.min_density)
        )?;
    }
    if fit.model.lambda_max_warning() {
        writeln!(
            out,
            "warning: lambda_max = {} deviates from 1 by more than 1e-8",
            fmt_f64(fit.model.pairs().lambda_max())
        )?;
    }
    Ok(fit)
}

fn print_spectrum(out: &mut dyn Write, fit: &Fit) -> std::io::Result<()> {
    let lam = fit.model.eigenvalues();
    writeln!(out, "retained rank r = {} (cutoff {})", lam.len(), fmt_f64(fit.model.cutoff()))?;
    for (k, l) in lam.iter().enumerate().take(10) {
        writeln!(out, "  lambda_{} = {}", k + 1, fmt_f64(*l))?;
    }
    if lam.len() > 10 {
        writeln!(out, "  ... ({} more)", lam.len() - 10)?;
    }
    Ok(())
}

fn embed(args: &EmbedArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fit = fit_input(&args.input, &args.spectral, out)?;
    print_spectrum(out, &fit)?;
    let residual = bistoch_core::bistochastic_residual(&fit.beta, &fit.weights);
    writeln!(
        out,
        "bi-stochastic residual under Omega^2 mu: {}",
        fmt_f64(residual)
    )?;
    let emb = diffusion_coordinates(&fit.model, &fit.psi, args.time, args.components)?;
    let mut w = create(&args.out)?;
    io::write_embedding(&mut w, &emb, args.input.format.delimiter, args.out_header)?;
    w.flush()?;
    writeln!(out, "wrote {} x {} embedding to {}", emb.coordinates.rows(), emb.dim(), args.out.display())?;
    if let Some(dir) = &args.model_dir {
        let defaults = EmbeddingDefaults {
            components: args.components,
            time: args.time,
        };
        save_model(dir, &fit.model, Some(defaults)).map_err(|source| CliError::File {
            path: dir.clone(),
            source,
        })?;
        writeln!(out, "saved model to {}", dir.display())?;
    }
    Ok(())
}

fn extend(args: &ExtendArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (model, defaults) = load_model(&args.model_dir).map_err(|source| CliError::File {
        path: args.model_dir.clone(),
        source,
    })?;
    let components = args
        .components
        .or(defaults.map(|d| d.components))
        .ok_or_else(|| CliError::Argument("--components is required (the model records none)".into()))?;
    let time = args.time.or(defaults.map(|d| d.time)).unwrap_or(1.0);
    let x = in_file(&args.points_new, io::load_points(open(&args.points_new)?, args.format.format()))?;
    if let Some(d) = model.d() {
        if x.dim() != d {
            return Err(CliError::Argument(format!(
                "new points have dimension {}, model expects {d}",
                x.dim()
            )));
        }
    }
    let ext = extend_new_points(&model, &x, time, components)?;
    let mut w = create(&args.out)?;
    io::write_embedding(&mut w, &ext.embedding, args.format.delimiter, args.out_header)?;
    w.flush()?;
    writeln!(
        out,
        "wrote {} x {} embedding to {}",
        ext.embedding.coordinates.rows(),
        ext.embedding.dim(),
        args.out.display()
    )?;
    if !ext.rejected.is_empty() {
        writeln!(
            err,
            "{} point(s) too far from every reference (rows written as NaN): {:?}",
            ext.rejected.len(),
            ext.rejected
        )?;
        return Err(bistoch_core::Error::Underflow {
            points: ext.rejected,
        }
        .into());
    }
    Ok(())
}

fn kernel_stats(args: &KernelStatsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fit = fit_input(&args.input, &args.spectral, out)?;
    let p = materialize_kernel(&fit.beta, args.dense.limit())?;
    let sym = p.matrix().asymmetry();
    let psd = p.min_eigenvalue()?;
    let row = p.weighted_row_residual(&fit.weights);
    let dense = p.operator_eigenvalues(&fit.weights)?;
    let gram = &fit.model.pairs().spectrum;
    let shared = dense.len().min(gram.len());
    let mut mismatch = 0.0f64;
    for k in 0..shared {
        mismatch = mismatch.max((dense[k] - gram[k]).abs());
    }
    for l in dense.iter().skip(shared) {
        mismatch = mismatch.max(l.abs());
    }
    writeln!(out, "symmetry error max|p - p^T|: {}", fmt_f64(sym))?;
    writeln!(out, "min eigenvalue of p (PSD check): {}", fmt_f64(psd))?;
    writeln!(out, "weighted row-sum residual max|p w - 1|: {}", fmt_f64(row))?;
    writeln!(
        out,
        "spectrum match max|eig(p diag(w)) - eig(A)|: {}",
        fmt_f64(mismatch)
    )?;
    Ok(())
}

fn compare_sinkhorn(args: &CompareArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let fit = fit_input(&args.input, &args.spectral, out)?;
    let p = materialize_kernel(&fit.beta, args.dense.limit())?;
    writeln!(out, "[one-pass construction] target: bi-stochastic under the weighted measure w = Omega^2 mu")?;
    writeln!(out, "  iterations: 0")?;
    writeln!(
        out,
        "  residual max|sum_x' p(x,x') w(x') - 1|: {}",
        fmt_f64(p.weighted_row_residual(&fit.weights))
    )?;
    writeln!(
        out,
        "  factored residual: {}",
        fmt_f64(bistoch_core::bistochastic_residual(&fit.beta, &fit.weights))
    )?;
    let k = SymmetricKernel::new(p.matrix().clone()).map_err(|e| {
        CliError::Numerical(format!("kernel is not strictly positive, Sinkhorn baseline needs k > 0: {e}"))
    })?;
    let res = sinkhorn_balance(&k, args.sinkhorn_tol, args.max_iter)?;
    writeln!(out, "[Sinkhorn-Knopp on p] target: doubly stochastic under the counting measure")?;
    writeln!(
        out,
        "  counting-measure residual of p before balancing: {}",
        fmt_f64(bistoch_core::stochastic_residual(p.matrix()))
    )?;
    writeln!(out, "  converged: {}", res.converged)?;
    writeln!(out, "  iterations: {}", res.iterations)?;
    writeln!(out, "  residual max|row/col sum - 1|: {}", fmt_f64(res.residual))?;
    writeln!(out, "  trajectory:")?;
    for (i, r) in res.trajectory.iter().enumerate() {
        writeln!(out, "    {i} {}", fmt_f64(*r))?;
    }
    if !res.converged {
        return Err(CliError::Numerical(format!(
            "Sinkhorn did not reach {} within {} iterations",
            fmt_f64(args.sinkhorn_tol),
            args.max_iter
        )));
    }
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Validate(a) => validate(a, out),
        Command::Embed(a) => embed(a, out),
        Command::Extend(a) => extend(a, out, err),
        Command::KernelStats(a) => kernel_stats(a, out),
        Command::CompareSinkhorn(a) => compare_sinkhorn(a, out),
    }
}

/// Parses `argv` (including the program name), runs it, and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    4
                }
            };
        }
    };
    match execute(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
