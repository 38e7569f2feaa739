//! `utilscope` command-line tool.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "utilscope", version, about = "Roofline cost models, folding, Pareto frontiers and simulated NAS")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
enum Command {
    /// Per-layer FLOPs, bytes and intensity of a network, placed on a device roofline.
    Analyze(AnalyzeArgs),
    /// Device ridge point and attainable FLOPs/sec at given intensities.
    Roofline(RooflineArgs),
    /// Fold a network (batch / f, channels * sqrt(f)) and compare costs.
    Fold(FoldArgs),
    /// Aggregate intensity across batch sizes.
    Sweep(SweepArgs),
    /// Frontier membership for a measured model survey CSV.
    Pareto(ParetoArgs),
    /// Simulated architecture search over a tabular space.
    Nas(NasArgs),
    /// Hypervolume and gap between two frontier CSVs.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
struct Output {
    /// Write the report here instead of stdout (a `.manifest.json` sidecar is added).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    /// Network JSON.
    #[arg(long)]
    net: PathBuf,
    #[arg(long, default_value_t = 1)]
    batch: u64,
    /// Preset name, device JSON file, or name under $UTILSCOPE_DEVICE_DIR.
    #[arg(long, default_value = "v100-fp16")]
    device: String,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct RooflineArgs {
    #[arg(long, default_value = "v100-fp16")]
    device: String,
    /// Arithmetic intensities (FLOPs/byte) to place on the roofline.
    #[arg(long, value_delimiter = ',')]
    intensity: Vec<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct FoldArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    batch: u64,
    /// Folding factor.
    #[arg(long = "f")]
    factor: u32,
    /// Round scaled widths to a multiple of this (needed for non-square factors).
    #[arg(long)]
    round: Option<u32>,
    #[arg(long, default_value = "v100-fp16")]
    device: String,
    /// Also write the folded network JSON here.
    #[arg(long)]
    emit: Option<PathBuf>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct SweepArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64,128,256,512,1024")]
    batches: Vec<u64>,
    #[arg(long, default_value = "v100-fp16")]
    device: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct ParetoArgs {
    /// Survey CSV with header `name,accuracy,throughput,tflops_per_sec`.
    #[arg(long)]
    table: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    Random,
    Reinforce,
    FilterUtil,
    FilterFlops,
}

#[derive(Debug, Args, Serialize)]
struct NasArgs {
    /// `synthetic`, or a table CSV with header `arch,accuracy,throughput,flops_per_input`.
    #[arg(long, default_value = "synthetic")]
    space: String,
    #[arg(long, value_enum, default_value_t = Method::Random)]
    method: Method,
    /// Simulated time budget.
    #[arg(long, default_value_t = 110_000.0)]
    budget: f64,
    /// Throughput goal in the ranking reward.
    #[arg(long, default_value_t = 175_000.0)]
    goal: f64,
    /// Throughput exponent in the ranking reward.
    #[arg(long, default_value_t = 0.07)]
    w: f64,
    #[arg(long, default_value_t = 100.0)]
    t_acc: f64,
    #[arg(long, default_value_t = 1.0)]
    t_tput: f64,
    /// Charge accuracy and throughput evaluations back to back instead of overlapping.
    #[arg(long)]
    serial_evals: bool,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    decay: f64,
    /// Seeds the sampler and the synthetic space noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "v100-fp16")]
    device: String,
    /// Per-evaluation trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Final throughput-accuracy frontier CSV.
    #[arg(long)]
    frontier: Option<PathBuf>,
    /// Write the searched table CSV (useful for synthetic spaces).
    #[arg(long)]
    save_space: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    /// Frontier CSV being judged.
    #[arg(long)]
    a: PathBuf,
    /// Reference frontier CSV (denominator of the ratio).
    #[arg(long)]
    b: PathBuf,
    /// Hypervolume reference point `x,y`; defaults to the coordinate-wise minimum over both files.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    reference: Option<Vec<f64>>,
    #[command(flatten)]
    output: Output,
}

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl<E: Into<utilscope::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        Self { code: if e.is_io() { 2 } else { 1 }, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
