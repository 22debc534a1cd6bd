mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "curbramp", version, about = "Curb-ramp geometry, measurement and compliance from labeled point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine, measure and judge every input ramp.
    Process(BatchArgs),
    /// Run refinement and quality control only, and write the QC summary.
    QcReport(BatchArgs),
    /// Generate synthetic ramps with ground truth.
    Synth(SynthArgs),
    /// Rasterize a cloud into dilated top-down patches.
    Raster(RasterArgs),
    /// Compare automated measurements with manual field measurements.
    Compare(CompareArgs),
}

#[derive(Args)]
pub struct BatchArgs {
    /// Labeled point clouds (`x y z intensity label` per line).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// JSON pipeline configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Multiplier taking input units to feet (3.28084 for meters).
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Write per-stage refinement snapshots and reference points.
    #[arg(long)]
    pub debug_dump: bool,
    /// JSON standards table overriding the built-in thresholds.
    #[arg(long)]
    pub standards: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of ramps; without it a single ramp is generated from `--spec`.
    #[arg(short, long)]
    pub n: Option<usize>,
    /// JSON ramp spec (single ramp) or spec ranges (with `-n`).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop sensor noise, outliers and label noise.
    #[arg(long)]
    pub noise_free: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct RasterArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Canvas side in pixels.
    #[arg(long, default_value_t = 1280)]
    pub canvas: usize,
    /// Patch side in feet.
    #[arg(long, default_value_t = 40.0)]
    pub patch_ft: f64,
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// Side of the density tiles used to pick the dilation kernel, in pixels.
    #[arg(long, default_value_t = 64)]
    pub tile_px: usize,
    #[arg(long, default_value_t = 50)]
    pub kappa_max: usize,
    /// Write raw projections without dilation.
    #[arg(long)]
    pub no_dilate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct CompareArgs {
    /// Output directory of `process`, or its `measurements.csv`.
    #[arg(long)]
    pub auto: PathBuf,
    /// CSV of manual measurements: ramp id, then feature or sub-measurement columns.
    #[arg(long)]
    pub manual: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "5,10")]
    pub margin: Vec<u32>,
    #[arg(long)]
    pub standards: Option<PathBuf>,
    /// Write the full analysis as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Process(a) => commands::process(&a, true),
        Command::QcReport(a) => commands::process(&a, false),
        Command::Synth(a) => commands::synth(&a),
        Command::Raster(a) => commands::raster(&a),
        Command::Compare(a) => commands::compare(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
