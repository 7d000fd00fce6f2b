//! Batch command-line front end.

use asst::cli;
use asst::clip::TaskMode;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "asst",
    about = "Localize temporal clips in feature sequences by token queries",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-signal dataset.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Configuration file ([synth] section).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of videos.
        #[arg(long)]
        videos: Option<usize>,
        /// Override the task mode (classification|detection).
        #[arg(long)]
        mode: Option<TaskMode>,
        /// Overwrite a non-empty output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train a model on a dataset directory.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// classification|detection
        #[arg(long)]
        mode: TaskMode,
        /// Checkpoint/log output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Text embedding file (token followed by values per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Resume from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the configured step count.
        #[arg(long)]
        steps: Option<usize>,
        /// Worker threads (default: ASST_THREADS or all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Score a checkpoint or a prediction file against a dataset.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        /// Prediction file (skips model inference entirely).
        #[arg(long)]
        preds: Option<PathBuf>,
        /// Fuse prediction files: "file:weight,file:weight,...".
        #[arg(long)]
        fuse: Option<String>,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of rank1,rank5,miou,map.
        #[arg(long)]
        metrics: Option<String>,
        /// Comma-separated IoU thresholds for detection metrics.
        #[arg(long)]
        iou: Option<String>,
        /// NMS threshold (re-suppresses file predictions when given).
        #[arg(long)]
        nms: Option<f64>,
        /// Sliding-window stride as a fraction of the model window.
        #[arg(long)]
        stride: Option<f64>,
        /// Also write the report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run inference and write a prediction file.
    Infer {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        nms: Option<f64>,
        #[arg(long)]
        stride: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Verify every layer's gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value = "tiny")]
        scale: String,
    },
    /// Dump per-layer attention matrices for one video and query.
    InspectAttention {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Video id from the dataset annotations.
        #[arg(long)]
        video: String,
        /// Whitespace-separated query tokens (ids or words).
        #[arg(long)]
        query: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> asst::Result<()> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version are successful exits; argument problems are user
            // errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            std::process::exit(code);
        }
    };
    match cli.command {
        Command::Synth {
            out,
            spec,
            seed,
            videos,
            mode,
            force,
        } => cli::cmd_synth(&cli::SynthArgs {
            out,
            spec,
            seed,
            videos,
            mode,
            force,
        }),
        Command::Train {
            config,
            data,
            mode,
            out,
            seed,
            embeddings,
            resume,
            steps,
            threads,
        } => cli::cmd_train(&cli::TrainArgs {
            config,
            data,
            mode,
            out,
            seed,
            embeddings,
            resume,
            steps,
            threads,
        })
        .map(|outcome| {
            println!(
                "trained: final checkpoint {} (loss {:.4})",
                outcome.final_checkpoint.display(),
                outcome.last_stats.loss
            );
        }),
        Command::Eval {
            config,
            ckpt,
            preds,
            fuse,
            data,
            metrics,
            iou,
            nms,
            stride,
            out,
            threads,
        } => cli::cmd_eval(&cli::EvalArgs {
            config,
            ckpt,
            preds,
            fuse,
            data,
            metrics,
            iou,
            nms,
            stride,
            out,
            threads,
        })
        .map(|_| ()),
        Command::Infer {
            config,
            ckpt,
            data,
            out,
            nms,
            stride,
            threads,
        } => cli::cmd_infer(&cli::InferArgs {
            config,
            ckpt,
            data,
            out,
            nms,
            stride,
            threads,
        })
        .map(|_| ()),
        Command::Gradcheck { scale } => cli::cmd_gradcheck(&scale),
        Command::InspectAttention {
            ckpt,
            data,
            video,
            query,
            out,
        } => cli::cmd_inspect_attention(&cli::InspectArgs {
            ckpt,
            data,
            video,
            query,
            out,
        })
        .map(|_| ()),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
