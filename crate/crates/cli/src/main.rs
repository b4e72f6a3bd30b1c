use std::path::PathBuf;
use std::process::ExitCode;

use boxseq_cli::{cmd_ablate, cmd_eval, cmd_gen_data, cmd_plot, cmd_track, cmd_train, Context};
use clap::{Parser, Subcommand};

/// Sequence-to-sequence 3D single object tracking on point clouds.
#[derive(Parser, Debug)]
#[command(name = "boxseq", version, about)]
struct Cli {
    /// TOML run configuration. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Dotted config override, e.g. `model.n_frames=4`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic train, val and test tracklets.
    GenData,
    /// Train a model, writing best and last checkpoints and a loss log.
    Train {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Track every tracklet of a dataset with a checkpoint.
    Track {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Tracklet file. The configured test split when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score predictions and write the report and plots.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train and score the configured ablation variants.
    Ablate,
    /// Overlay curves and losses of finished runs.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn run(cli: Cli) -> boxseq::Result<()> {
    let ctx = Context::load(cli.config.as_deref(), &cli.overrides, cli.seed, &cli.out, cli.workers)?;
    match cli.command {
        Command::GenData => print!("{}", cmd_gen_data(&ctx)?),
        Command::Train { resume } => print!("{}", cmd_train(&ctx, resume.as_deref())?),
        Command::Track { checkpoint, data } => print!("{}", cmd_track(&ctx, &checkpoint, data.as_deref())?),
        Command::Eval { predictions, data } => {
            let r = cmd_eval(&ctx, &predictions, data.as_deref())?;
            println!("overall  success {:.2}  precision {:.2}", r.overall.success, r.overall.precision);
            for g in r.categories.iter().chain(&r.buckets) {
                println!("{:>8}  success {:.2}  precision {:.2}  ({} frames)", g.name, g.success, g.precision, g.frames);
            }
        }
        Command::Ablate => print!("{}", cmd_ablate(&ctx)?),
        Command::Plot { inputs } => {
            for p in cmd_plot(&ctx, &inputs)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
