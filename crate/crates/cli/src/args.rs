//! Command-line surface. Every flag can also be set through an
//! `RCDETECT_*` environment variable; flags override the JSON config.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rcdetect::dataset::{PreprocessMode, Split};
use rcdetect::model::{BackboneKind, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "rcdetect",
    version,
    about = "Detect manipulated faces in video with recurrent-convolutional models"
)]
pub struct Cli {
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic temporal-artifact benchmark.
    Synth(SynthArgs),
    /// Build and cache face tubelets for every window of a dataset.
    Preprocess(PreprocessArgs),
    /// Pretrain the backbone with a single-frame classifier.
    Pretrain(TrainArgs),
    /// Train backbone and recurrent head end to end.
    Train(TrainArgs),
    /// Score a split with a checkpoint and write a score file.
    Eval(EvalArgs),
    /// Draw ROC and precision-recall curves and the accuracy table from score files.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; flags override individual fields.
    #[arg(long, env = "RCDETECT_SYNTH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory; must be absent or empty.
    #[arg(long, env = "RCDETECT_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "RCDETECT_VIDEOS_PER_CLASS")]
    pub videos_per_class: Option<usize>,
    #[arg(long, env = "RCDETECT_FRAMES_PER_VIDEO")]
    pub frames_per_video: Option<usize>,
    #[arg(long, env = "RCDETECT_IMAGE_SIZE")]
    pub image_size: Option<usize>,
    /// Peak per-frame radius jitter of fake videos, pixels.
    #[arg(long, env = "RCDETECT_FLICKER_AMPLITUDE")]
    pub flicker_amplitude: Option<f64>,
    /// Texture phase advance of real videos, radians per frame.
    #[arg(long, env = "RCDETECT_DRIFT_RATE")]
    pub drift_rate: Option<f64>,
    #[arg(long, env = "RCDETECT_SEED")]
    pub seed: Option<u64>,
}

/// Dataset location and windowing.
#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Run configuration (JSON with dataset/model/train/eval sections).
    #[arg(long, env = "RCDETECT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Dataset root.
    #[arg(long, env = "RCDETECT_ROOT")]
    pub root: Option<PathBuf>,
    /// Tubelet cache directory [default: <root>/cache/<mode>].
    #[arg(long, env = "RCDETECT_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Face localisation mode.
    #[arg(long, env = "RCDETECT_MODE", value_parser = parse_mode)]
    pub mode: Option<PreprocessMode>,
    /// Frames per cached window.
    #[arg(long, env = "RCDETECT_WINDOW")]
    pub window: Option<usize>,
    /// Start offset between consecutive windows.
    #[arg(long, env = "RCDETECT_STRIDE")]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Run directory for config.json, log.jsonl and checkpoints/.
    #[arg(long, env = "RCDETECT_RUN_DIR")]
    pub run_dir: PathBuf,
    /// Pretrained checkpoint whose backbone initialises the model (train only).
    #[arg(long, env = "RCDETECT_PRETRAINED")]
    pub pretrained: Option<PathBuf>,
    #[arg(long, env = "RCDETECT_BACKBONE", value_parser = parse_backbone)]
    pub backbone: Option<BackboneKind>,
    #[arg(long, env = "RCDETECT_VARIANT", value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Frames per sample seen by the model.
    #[arg(long, env = "RCDETECT_FRAMES")]
    pub frames: Option<usize>,
    #[arg(long, env = "RCDETECT_HIDDEN_SIZE")]
    pub hidden_size: Option<usize>,
    #[arg(long, env = "RCDETECT_BIDIRECTIONAL")]
    pub bidirectional: Option<bool>,
    #[arg(long, visible_alias = "lr", env = "RCDETECT_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    /// Learning-rate multiplier for backbone parameters (train only).
    #[arg(long, env = "RCDETECT_BACKBONE_LR_SCALE")]
    pub backbone_lr_scale: Option<f64>,
    #[arg(long, env = "RCDETECT_BATCH_SIZE")]
    pub batch_size: Option<usize>,
    #[arg(long, env = "RCDETECT_EPOCHS")]
    pub epochs: Option<usize>,
    #[arg(long, env = "RCDETECT_TRAIN_SEED")]
    pub seed: Option<u64>,
    /// Epochs without validation improvement before stopping; 0 disables.
    #[arg(long, env = "RCDETECT_EARLY_STOP_PATIENCE")]
    pub early_stop_patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(long, env = "RCDETECT_CHECKPOINT")]
    pub checkpoint: PathBuf,
    /// Score file to write (JSON lines plus a .meta.json sidecar).
    #[arg(long, env = "RCDETECT_SCORES")]
    pub out: PathBuf,
    #[arg(long, env = "RCDETECT_SPLIT", value_parser = parse_split)]
    pub split: Option<Split>,
    /// Keep only fakes of this manipulation (reals are always kept).
    #[arg(long, env = "RCDETECT_MANIPULATION")]
    pub manipulation: Option<String>,
    /// Average window scores per video before writing.
    #[arg(long, env = "RCDETECT_VIDEO_LEVEL")]
    pub video_level: bool,
    #[arg(long, env = "RCDETECT_THRESHOLD")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Score files written by `eval`.
    #[arg(long, required = true, num_args = 1.., env = "RCDETECT_SCORE_FILES", value_delimiter = ',')]
    pub scores: Vec<PathBuf>,
    /// Output directory for SVGs and table.md.
    #[arg(long, env = "RCDETECT_PLOT_DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5, env = "RCDETECT_THRESHOLD")]
    pub threshold: f64,
}

fn parse_json_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<PreprocessMode, String> {
    s.parse().map_err(|e: rcdetect::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: rcdetect::Error| e.to_string())
}

fn parse_backbone(s: &str) -> Result<BackboneKind, String> {
    parse_json_enum(s)
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    parse_json_enum(s)
}
