mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "textforge", version, about = "Forge, annotate, perturb and score tampered-text corpora")]
struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Forge a synthetic corpus of tampered and authentic text images.
    Forge(ForgeArgs),
    /// Print or render annotator and detector prompts.
    #[command(subcommand)]
    RenderPrompt(PromptCommand),
    /// Ask the annotator to describe every tampered record.
    Annotate(AnnotateArgs),
    /// Apply the OCR gate and build the annotated corpus.
    Filter(FilterArgs),
    /// Score detector explanations against an annotated manifest.
    Score(ScoreArgs),
    /// Write a distorted copy of a corpus.
    Perturb(PerturbArgs),
    /// Corpus statistics.
    Stats(StatsArgs),
    /// Box-level precision, recall and F1.
    DetectEval(DetectEvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    CopyMove,
    Splicing,
    Mixed,
}

#[derive(Debug, Args)]
struct ForgeArgs {
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    tampered: usize,
    #[arg(long, default_value_t = 10)]
    authentic: usize,
    #[arg(long, value_enum, default_value = "mixed")]
    method: MethodArg,
    /// Poisson-blend pasted regions.
    #[arg(long)]
    blend: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split ratios `train,test,cd`; all records go to train when omitted.
    #[arg(long)]
    split: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    FineTuned,
    ZeroShot,
}

#[derive(Debug, Subcommand)]
enum PromptCommand {
    /// The annotation query.
    Annotation {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The detector question, optionally preceded by a grounding line.
    Inference {
        #[arg(long, value_enum, default_value = "fine-tuned")]
        mode: ModeArg,
        #[arg(long = "box", requires = "size")]
        bbox: Option<String>,
        #[arg(long)]
        size: Option<String>,
    },
    /// The grounding line for one box.
    Grounding {
        /// `x_min,y_min,x_max,y_max` in pixels.
        #[arg(long = "box")]
        bbox: String,
        /// `WIDTHxHEIGHT`.
        #[arg(long)]
        size: String,
    },
    /// Render the fused-mask image for one image and mask.
    Fused {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `image_weight,mask_weight`.
        #[arg(long, default_value = "0.5,0.5")]
        weights: String,
    },
    /// Render fused masks, request hashes and grounding lines for a whole manifest.
    Batch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Exchanges JSONL.
    #[arg(long)]
    out: PathBuf,
    /// Answer from recorded fixtures in this directory instead of calling the endpoint.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    concurrency: Option<usize>,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    exchanges: PathBuf,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Predictions JSONL with `id` and `output_text`.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    vectors: Option<PathBuf>,
    #[arg(long)]
    stopwords: Option<PathBuf>,
    #[arg(long)]
    classify_max_edits: Option<usize>,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output corpus directory.
    #[arg(long)]
    out: PathBuf,
    /// `identity`, `jpeg:Q` or `resize:F`.
    #[arg(long)]
    distortion: String,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectEvalArgs {
    /// JSONL with `id` and `boxes`.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iou: Option<f64>,
}

/// How a subcommand finished when it did not hit a fatal error.
pub enum Outcome {
    Done,
    /// Some records failed; their ids are listed in the report.
    Partial(Vec<String>),
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Forge(a) => commands::forge(&config, a),
        Command::RenderPrompt(c) => commands::render_prompt(&config, c),
        Command::Annotate(a) => commands::annotate(config, a),
        Command::Filter(a) => commands::filter(&config, a),
        Command::Score(a) => commands::score(&config, a),
        Command::Perturb(a) => commands::perturb(a),
        Command::Stats(a) => commands::stats(a),
        Command::DetectEval(a) => commands::detect_eval(&config, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(ids)) => {
            eprintln!("{} record(s) failed: {}", ids.len(), ids.join(", "));
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
