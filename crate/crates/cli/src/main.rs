//! `hqc`: spectra, holonomies, oracle runs and gate synthesis from JSON model and loop files.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Overrides the directory that relative `--output` paths are written to.
const OUTPUT_DIR_VAR: &str = "HQC_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "hqc", version, about = "Holonomic quantum computation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Levels, degeneracies and gap of a model; with a loop, checks isospectrality along it.
    Spectrum(SpectrumArgs),
    /// Holonomy of one level around a loop.
    Holonomy(HolonomyArgs),
    /// Integrates the Schrödinger equation and compares with the geometric holonomy.
    Oracle(OracleArgs),
    /// Decomposes a special unitary into root gates, or counts positive roots.
    Gates(GatesArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodArg {
    Pexp,
    Projector,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConnectionArg {
    Closed,
    Fd,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output file; stdout when absent. Relative paths resolve against $HQC_OUTPUT_DIR when set.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct Tolerances {
    /// Eigenvalues closer than this form one level [default: 1e-8·max|E|].
    #[arg(long, value_parser = positive)]
    pub degeneracy_tol: Option<f64>,
    /// Relative threshold on |det(H⊥ − E)| below which a chart is abandoned.
    #[arg(long, value_parser = positive, default_value_t = hqc_core::frames::DEFAULT_CHART_THRESHOLD)]
    pub chart_threshold: f64,
}

impl Tolerances {
    pub fn frame_options(&self) -> hqc_core::frames::FrameOptions {
        hqc_core::frames::FrameOptions { chart_threshold: self.chart_threshold, degeneracy_tol: self.degeneracy_tol }
    }
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "loop")]
    pub loop_path: Option<PathBuf>,
    /// Loop samples M, overriding the loop file.
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub steps: Option<u64>,
    #[arg(long, value_parser = positive)]
    pub degeneracy_tol: Option<f64>,
    /// Largest admissible energy deviation along the loop.
    #[arg(long, value_parser = positive, default_value_t = 1e-10)]
    pub iso_tol: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct HolonomyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "loop")]
    pub loop_path: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub steps: Option<u64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Pexp)]
    pub method: MethodArg,
    /// Computes both methods and reports their difference.
    #[arg(long)]
    pub cross_check: bool,
    /// Reports the enclosed solid angle, reading the loop as (θ, φ) on the sphere.
    #[arg(long)]
    pub solid_angle: bool,
    /// Adds a step-halving report (M against M/2) to the output.
    #[arg(long, short)]
    pub verbose: bool,
    /// Connection used for `--format csv`.
    #[arg(long, value_enum, default_value_t = ConnectionArg::Closed)]
    pub connection: ConnectionArg,
    /// Finite-difference step for `--connection fd`.
    #[arg(long, value_parser = positive, default_value_t = hqc_core::connection::DEFAULT_H_FD)]
    pub h_fd: f64,
    #[command(flatten)]
    pub tol: Tolerances,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "loop")]
    pub loop_path: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// Loop samples M for the geometric reference.
    #[arg(long, value_parser = clap::value_parser!(u64).range(3..))]
    pub steps: Option<u64>,
    /// Loop duration T, overriding the loop file.
    #[arg(long, value_parser = positive)]
    pub duration: Option<f64>,
    /// Integrator steps [default: max(M, ⌈20·T·max|E|⌉)].
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub time_steps: Option<u64>,
    #[arg(long, value_parser = positive, default_value_t = hqc_core::oracle::DEFAULT_LEAKAGE_TOL)]
    pub leakage_tol: f64,
    /// Comma-separated increasing durations for a convergence sweep.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub sweep: Option<Vec<f64>>,
    /// Trace rows recorded along the evolution [default: 0, or 100 with `--format csv`].
    #[arg(long)]
    pub trace: Option<usize>,
    #[command(flatten)]
    pub tol: Tolerances,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Args, Debug)]
pub struct GatesArgs {
    /// Target unitary: a nested matrix, or an object with it under "U" or "matrix".
    #[arg(long, required_unless_present = "roots", conflicts_with = "roots")]
    pub target: Option<PathBuf>,
    /// Prints the number of positive roots of SU(n) instead.
    #[arg(long)]
    pub roots: Option<usize>,
    /// Divides the target by an n-th root of its determinant first.
    #[arg(long)]
    pub normalize: bool,
    /// Largest admissible reconstruction residual.
    #[arg(long, value_parser = positive, default_value_t = 1e-10)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        Ok(x) => Err(format!("must be positive and finite, got {x}")),
        Err(e) => Err(e.to_string()),
    }
}

/// A failed run: message for stderr, exit code, and optionally a report to write anyway.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
    pub report: Option<String>,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into(), report: None }
    }

    pub fn with_report(mut self, report: String) -> Self {
        self.report = Some(report);
        self
    }
}

/// Input files that cannot be read or parsed are usage errors.
pub const EXIT_INPUT: u8 = 2;

pub fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_INPUT, format!("cannot read {}: {e}", path.display())))
}

fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_VAR) {
        Some(dir) if path.is_relative() && !dir.is_empty() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn emit(out: &OutputArgs, text: &str) -> Result<(), Failure> {
    match &out.output {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(path) => {
            let path = resolve_output(path);
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot create {}: {e}", parent.display())))?;
            }
            fs::write(&path, text)
                .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot write {}: {e}", path.display())))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out, result) = match &cli.command {
        Command::Spectrum(args) => (&args.out, commands::spectrum(args)),
        Command::Holonomy(args) => (&args.out, commands::holonomy(args)),
        Command::Oracle(args) => (&args.out, commands::oracle(args)),
        Command::Gates(args) => (&args.out, commands::gates(args)),
    };
    let (report, failure) = match result {
        Ok(report) => (Some(report), None),
        Err(mut failure) => (failure.report.take(), Some(failure)),
    };
    if let Some(report) = report {
        if let Err(e) = emit(out, &report) {
            eprintln!("error: {}", e.message);
            return ExitCode::from(e.code);
        }
    }
    match failure {
        None => ExitCode::SUCCESS,
        Some(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
