//! The `qv` command line: synthetic data, feature extraction, training,
//! evaluation, wave-map rendering and experiment sweeps.

mod commands;
mod manifest;

pub use manifest::{unix_now, RunManifest};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Result;
use crate::features::FeatureKind;
use crate::models::{Arch, TokenMode};

#[derive(Debug, Parser)]
#[command(
    name = "qv",
    version,
    about = "Quantum-vision wave features and spoofing classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic bonafide/spoof corpus as WAV files plus protocols
    Synth(SynthArgs),
    /// Extract 32x32 features for every protocol entry into a QVFC cache
    Extract(ExtractArgs),
    /// Train a classifier on a feature cache
    Train(TrainArgs),
    /// Score a cache with a checkpoint and write an evaluation report
    Eval(EvalArgs),
    /// Render the basis wave maps of one clip as PGM images
    Waves(WavesArgs),
    /// Train and evaluate every arch x batch-size cell
    Sweep(SweepArgs),
    /// Re-run the command recorded in a manifest
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureArg {
    Stft,
    Mel,
    Mfcc,
}

impl From<FeatureArg> for FeatureKind {
    fn from(f: FeatureArg) -> Self {
        match f {
            FeatureArg::Stft => FeatureKind::Stft,
            FeatureArg::Mel => FeatureKind::Mel,
            FeatureArg::Mfcc => FeatureKind::Mfcc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenArg {
    Patch,
    Channel,
}

impl From<TokenArg> for TokenMode {
    fn from(t: TokenArg) -> Self {
        match t {
            TokenArg::Patch => TokenMode::Patch,
            TokenArg::Channel => TokenMode::Channel,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    /// Directory holding `<utterance_id>.wav`
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub protocol: PathBuf,
    #[arg(long, value_enum)]
    pub features: FeatureArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    #[arg(long)]
    pub force: bool,
}

/// Model shape knobs shared by `train` and `sweep`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Layers per QV branch (1 or 3)
    #[arg(long, default_value_t = 1)]
    pub qv_depth: usize,
    #[arg(long, default_value_t = 128)]
    pub qv_filters: usize,
    #[arg(long, value_enum, default_value_t = TokenArg::Patch)]
    pub token_mode: TokenArg,
    #[arg(long, default_value_t = 8)]
    pub vit_layers: usize,
    #[arg(long, default_value_t = 1024)]
    pub vit_embed_dim: usize,
    #[arg(long, default_value_t = 2048)]
    pub vit_mlp_dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub arch: Arch,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Weight the loss by inverse class frequency
    #[arg(long)]
    pub class_weighting: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub cache: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct WavesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = FeatureArg::Mel)]
    pub features: FeatureArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Render squared magnitudes instead of signed maps
    #[arg(long)]
    pub squared: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    /// Training cache
    #[arg(long)]
    pub cache: PathBuf,
    /// Held-out cache; the training cache is scored when absent
    #[arg(long)]
    pub eval_cache: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "cnn,qv-cnn,vit,qv-vit")]
    pub archs: Vec<Arch>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    pub batches: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    /// Feature name for the summary; read from the cache manifest when absent
    #[arg(long, value_enum)]
    pub features: Option<FeatureArg>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overwrite the outputs of the original run
    #[arg(long)]
    pub force: bool,
}

/// Runs a parsed command. `args` are the raw arguments after the program
/// name, recorded in manifests for replay.
pub fn run(cli: Cli, args: &[String]) -> Result<()> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a, args),
        Command::Extract(a) => commands::extract(&a, args),
        Command::Train(a) => commands::train(&a, args),
        Command::Eval(a) => commands::eval(&a, args),
        Command::Waves(a) => commands::waves(&a, args),
        Command::Sweep(a) => commands::sweep(&a, args),
        Command::Replay(a) => commands::replay(&a),
    }
}

/// Parses and runs `args` (without the program name).
pub fn run_args(args: &[String]) -> Result<()> {
    let argv = std::iter::once("qv".to_string()).chain(args.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| crate::error::Error::Config(e.to_string()))?;
    run(cli, args)
}
