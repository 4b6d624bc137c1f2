use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use psdc_core::gridsim::{Grid, Schedule};
use psdc_core::report::{run_experiment, write_atomic, ExperimentSpec, MatrixKind, SolverKind, VariantChoice};
use psdc_core::PsdcError;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatrixArg {
    Clement,
    Hermite,
    Toeplitz,
    Sht,
    File,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Psdc,
    DenseOracle,
    PsmmaOnly,
    RankTable,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Sequential,
    Concurrent,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Structured divide-and-conquer eigensolver and distributed-multiply experiments.
///
/// A config file holds `key = value` lines using the long flag names; flags
/// given on the command line take precedence.
#[derive(Debug, Parser)]
#[command(name = "psdc", version, args_override_self = true)]
struct Cli {
    /// Flat key-value file with default flag values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "toeplitz")]
    matrix: MatrixArg,
    /// Order parameter (clement builds order n+1).
    #[arg(long, default_value_t = 256)]
    n: usize,
    /// Spherical-harmonic order.
    #[arg(long, default_value_t = 0)]
    m: usize,
    /// Tridiagonal text file for `--matrix file`.
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "psdc")]
    solver: SolverArg,
    /// bcdd, bdd, wredist, nlowrank or all.
    #[arg(long, default_value = "wredist", value_parser = parse_variant)]
    variant: VariantChoice,
    /// Process grid as PxQ.
    #[arg(long, default_value = "1x1", value_parser = parse_grid)]
    grid: Grid,
    #[arg(long, default_value_t = 64)]
    nb: usize,
    /// Compression tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Smallest kept size routed through the structured multiply.
    #[arg(long)]
    k_threshold: Option<usize>,
    /// Leaf order solved densely.
    #[arg(long)]
    base_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "concurrent")]
    schedule: ScheduleArg,
    /// Comma-separated block sizes for the rank table.
    #[arg(long, default_value = "64,128,256", value_parser = parse_list)]
    nb_list: NbList,
    /// Report destination; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Report format; defaults to csv for `.csv` outputs, json otherwise.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Debug, Clone)]
struct NbList(Vec<usize>);

fn parse_variant(s: &str) -> Result<VariantChoice, String> {
    s.parse().map_err(|e: PsdcError| e.to_string())
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    s.parse().map_err(|e: PsdcError| e.to_string())
}

fn parse_list(s: &str) -> Result<NbList, String> {
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| format!("`{x}` is not a block size")))
        .collect::<Result<Vec<_>, _>>()
        .map(NbList)
}

/// `--config` value from the raw arguments, if any.
fn config_path(args: &[String]) -> Option<String> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

fn config_args(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| format!("config line {}: expected `key = value`", no + 1))?;
        let key = k.trim().replace('_', "-");
        if key == "config" {
            continue;
        }
        out.push(format!("--{key}"));
        out.push(v.trim().to_string());
    }
    Ok(out)
}

impl Cli {
    fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            matrix: match self.matrix {
                MatrixArg::Clement => MatrixKind::Clement,
                MatrixArg::Hermite => MatrixKind::Hermite,
                MatrixArg::Toeplitz => MatrixKind::Toeplitz,
                MatrixArg::Sht => MatrixKind::Sht,
                MatrixArg::File => MatrixKind::File,
            },
            n: self.n,
            m: self.m,
            path: self.path.clone(),
            solver: match self.solver {
                SolverArg::Psdc => SolverKind::Psdc,
                SolverArg::DenseOracle => SolverKind::DenseOracle,
                SolverArg::PsmmaOnly => SolverKind::PsmmaOnly,
                SolverArg::RankTable => SolverKind::RankTable,
            },
            variant: self.variant,
            grid: self.grid,
            nb: self.nb,
            tol: self.tol,
            k_threshold: self.k_threshold,
            base_size: self.base_size,
            seed: self.seed,
            schedule: match self.schedule {
                ScheduleArg::Sequential => Schedule::Sequential,
                ScheduleArg::Concurrent => Schedule::Concurrent,
            },
            nb_list: self.nb_list.0.clone(),
        }
    }
}

fn fail(e: PsdcError) -> ExitCode {
    eprintln!("psdc: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let mut args: Vec<String> = std::env::args().collect();
    if let Some(p) = config_path(&args) {
        let extra = std::fs::read_to_string(&p)
            .map_err(|e| format!("cannot read config `{p}`: {e}"))
            .and_then(|t| config_args(&t));
        match extra {
            Ok(extra) => {
                args.splice(1..1, extra);
            }
            Err(msg) => {
                eprintln!("psdc: {msg}");
                return ExitCode::from(2);
            }
        }
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let report = match run_experiment(&cli.spec()) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let csv = match cli.format {
        Some(FormatArg::Csv) => true,
        Some(FormatArg::Json) => false,
        None => cli.output.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "csv"),
    };
    let text = match if csv { report.to_csv() } else { report.to_json() } {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    match &cli.output {
        Some(p) => match write_atomic(p, &text) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        },
        None => {
            println!("{text}");
            ExitCode::SUCCESS
        }
    }
}
