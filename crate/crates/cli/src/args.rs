use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use multiphoton::montecarlo::DEFAULT_SEED;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "multiphoton",
    version,
    about = "Higher-order intensity interference of two classical sources"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Closed-form ICF along a phase scan
    Analytic(ScanArgs),
    /// Monte Carlo estimate of an ICF scan with error bars
    Mc(McArgs),
    /// Check the closed forms against the brute-force expansion
    Verify(VerifyArgs),
    /// Classical visibility limits for coherent and thermal sources
    Limits(LimitsArgs),
    /// Synthesize or process interference frame stacks
    #[command(subcommand)]
    Frames(FramesCommand),
}

#[derive(Subcommand, Debug)]
pub enum FramesCommand {
    /// Generate a stack of single-pulse frames
    Synth(SynthArgs),
    /// Correlation profiles of a stored stack
    Process(ProcessArgs),
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum KindArg {
    Coherent,
    Thermal,
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    SymmetricOpposite,
    SingleDetector,
    DoubleSpeed,
    Custom,
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Csv,
    Json,
    Pgm,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Source statistics
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Source model JSON file (kind, mean_intensity, moments, coherence_width)
    #[arg(long, conflicts_with = "kind")]
    pub model: Option<PathBuf>,
    /// Width of the Gaussian coherence envelope, in radians of phase
    #[arg(long)]
    pub coherence_width: Option<f64>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct OutputArgs {
    /// Output file (directory for `frames` subcommands)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output encoding; defaults to the output file extension, else csv
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Also write an SVG plot
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct ScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Number of detectors, 2 to 4
    #[arg(long)]
    pub order: Option<usize>,
    /// Scan trajectory; defaults to the canonical scheme of the order
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Fixed phase of the third detector for the single-detector scheme [default: π/2]
    #[arg(long)]
    pub phi23: Option<f64>,
    /// Per-detector phase velocities of a custom scheme
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub velocity: Option<Vec<f64>>,
    /// Per-detector phase offsets of a custom scheme
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offset: Option<Vec<f64>>,
    /// Points on the [0, 2π] scan grid
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    /// JSON file of default flag values, keyed by flag name
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct McArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scan: ScanArgs,
    /// Samples per scan point
    #[arg(long)]
    pub samples: Option<usize>,
    /// Batches for the standard error
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long, help = format!("Random seed [default: {DEFAULT_SEED}]"))]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct VerifyArgs {
    /// Orders to check [default: 2,3,4]
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Random models and phase sets per order
    #[arg(long)]
    pub trials: Option<usize>,
    /// Largest accepted deviation
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long, help = format!("Random seed [default: {DEFAULT_SEED}]"))]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct LimitsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Number of frames
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long, help = format!("Random seed [default: {DEFAULT_SEED}]"))]
    pub seed: Option<u64>,
    /// Optics JSON file; the flags below override its fields
    #[arg(long)]
    pub optics: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Fringe period in pixels
    #[arg(long)]
    pub period_px: Option<f64>,
    /// Fringe phase at the center column
    #[arg(long, allow_hyphen_values = true)]
    pub fringe_phase: Option<f64>,
    /// Disable shot noise, read noise and quantization
    #[arg(long)]
    pub noiseless: bool,
    /// Hold the relative source phase fixed
    #[arg(long, allow_hyphen_values = true, conflicts_with = "harmonic_amplitude")]
    pub theta: Option<f64>,
    /// Drive the relative phase harmonically with this amplitude
    #[arg(long)]
    pub harmonic_amplitude: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone, Default)]
#[serde(rename_all = "kebab-case")]
pub struct ProcessArgs {
    /// Stack manifest, or the directory holding manifest.json
    pub input: Option<PathBuf>,
    /// Region of interest x0,y0,width,height
    #[arg(long, value_delimiter = ',')]
    pub roi: Option<Vec<usize>>,
    /// Reference column within the ROI [default: ROI center]
    #[arg(long)]
    pub ref_col: Option<usize>,
    /// Fringe period in pixels [default: from the manifest, else fitted]
    #[arg(long)]
    pub period_px: Option<f64>,
    /// Batches for the standard errors
    #[arg(long)]
    pub batches: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}
