use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fusedet::eval::{ApMethod, Projection};
use fusedet::fusion::FusionMode;

#[derive(Debug, Parser)]
#[command(name = "fusedet", version, about = "Multi-channel image fusion object detector")]
pub struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// key=value settings layered over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Base settings before --config is applied.
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-size network and the long schedule.
    Full,
    /// Narrow network and short schedule for CPU runs.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Visible,
    Mwir,
    Motion,
    VisibleMwir,
    ThreeChannel,
    Decision,
}

impl From<ModeArg> for FusionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Visible => FusionMode::VisibleOnly,
            ModeArg::Mwir => FusionMode::MwirOnly,
            ModeArg::Motion => FusionMode::MotionOnly,
            ModeArg::VisibleMwir => FusionMode::VisibleMwir,
            ModeArg::ThreeChannel => FusionMode::ThreeChannel,
            ModeArg::Decision => FusionMode::DecisionLevel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApArg {
    AllPoints,
    ElevenPoint,
}

impl From<ApArg> for ApMethod {
    fn from(a: ApArg) -> Self {
        match a {
            ApArg::AllPoints => ApMethod::AllPoints,
            ApArg::ElevenPoint => ApMethod::ElevenPoint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionArg {
    Max,
    Mean,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Max => Projection::Max,
            ProjectionArg::Mean => Projection::Mean,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Write selective-search proposals for every image.
    Propose(ProposeArgs),
    /// Train a detector for one fusion mode.
    Train(TrainArgs),
    /// Run a trained detector over a split.
    Detect(DetectArgs),
    /// Score a detections CSV against ground truth.
    Evaluate(EvaluateArgs),
    /// Compare fusion modes on the test split.
    Benchmark(BenchmarkArgs),
    /// Save feature-map images of one layer.
    DumpFeatures(DumpArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Directory for every output of the run.
    #[arg(long, visible_alias = "out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Built-in profile name or a profile file.
    #[arg(long, default_value = "easy")]
    pub profile: String,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ProposeArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::ThreeChannel)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Also render proposals over each input.
    #[arg(long)]
    pub overlay: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Overrides the configured iteration count.
    #[arg(long)]
    pub iters: Option<u64>,
    /// Start from these weights instead of a random initialisation.
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// `PATH` for the selected mode, or `MODE=PATH`; repeatable.
    #[arg(long)]
    pub weights: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Also render detections and ground truth over each input.
    #[arg(long)]
    pub overlay: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Detections CSV (`image_id,x,y,w,h,score`).
    #[arg(long)]
    pub dets: PathBuf,
    /// Dataset root holding the ground truth.
    #[arg(long, visible_alias = "data")]
    pub gt: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Mode the detections came from, for labelling.
    #[arg(long, value_enum, default_value_t = ModeArg::ThreeChannel)]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t = ApArg::AllPoints)]
    pub ap: ApArg,
    /// PR-curve SVG path; relative paths land in the output directory.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Modes to compare (default: all six).
    #[arg(long = "mode", value_enum)]
    pub modes: Vec<ModeArg>,
    /// `MODE=PATH`, repeatable.
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Directory holding `<mode>.bin` files, used for modes without --weights.
    #[arg(long)]
    pub weights_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ApArg::AllPoints)]
    pub ap: ApArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[arg(long, default_value = "conv5")]
    pub layer: String,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Max)]
    pub projection: ProjectionArg,
    /// Number of test images to dump.
    #[arg(long, default_value_t = 4)]
    pub limit: usize,
    #[command(flatten)]
    pub out: OutArgs,
}
