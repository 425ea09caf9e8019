//! Argument definitions for the `mmvir` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::ConfigFlags;

#[derive(Parser)]
#[command(
    name = "mmvir",
    version,
    about = "Multi-modal, multi-grained video representation pipeline",
    propagate_version = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Detect clip boundaries in an embedding series and report the
    /// similarity distribution.
    Segment(SegmentArgs),
    /// Build the full representation document for one video.
    Build(BuildArgs),
    /// Build the timeline retrieval index over documents.
    Index(IndexArgs),
    /// Answer a batch of questions via retrieve-then-expand.
    Ask(AskArgs),
    /// Summarize whole videos from their timeline descriptions.
    Summarize(SummarizeArgs),
    /// Localize queries to clip intervals.
    Locate(LocateArgs),
    /// Score run results against gold files.
    Eval(EvalArgs),
    /// Similarity-signal distribution diagnostics.
    Stats(StatsArgs),
}

#[derive(Args)]
pub struct SegmentArgs {
    /// Embedding series file (text or MVES binary).
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Output boundaries file (canonical JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Write stage timings to this file.
    #[arg(long)]
    pub timing_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Directory the frame locators resolve against.
    #[arg(long)]
    pub frame_root: PathBuf,
    /// Output document file.
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from an existing checkpoint.
    #[arg(long)]
    pub resume: bool,
    /// Checkpoint path (defaults to the output path with extension `ckpt`).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub timing_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args)]
pub struct IndexArgs {
    /// Document files to index.
    #[arg(long, num_args = 1.., required = true)]
    pub docs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timing_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args)]
pub struct AskArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub docs: Vec<PathBuf>,
    /// Query batch file: one query per line (plain text or a JSON object
    /// with id, question, options).
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Retrieval depth(s); a comma list (e.g. 1,5,10,20) emits one result
    /// file per value.
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub timing_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args)]
pub struct SummarizeArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub docs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub timing_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args)]
pub struct LocateArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub timing_out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalTask {
    Qa,
    Summarization,
    Retrieval,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Which artifact type to score.
    #[arg(long, value_enum)]
    pub task: EvalTask,
    /// Run results file (output of ask / summarize / locate).
    #[arg(long)]
    pub results: PathBuf,
    /// Gold file, one JSON object per line.
    #[arg(long)]
    pub gold: PathBuf,
    /// K values for retrieval metrics (comma list).
    #[arg(long)]
    pub k: Option<String>,
    /// Overlap@K definition: gt_recall or iou.
    #[arg(long, default_value = "gt_recall")]
    pub overlap_mode: String,
    /// Optional stage-timing file to fold into the report.
    #[arg(long)]
    pub latency: Option<PathBuf>,
    /// Write the report as canonical JSON here as well.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigFlags,
}
