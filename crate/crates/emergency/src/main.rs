use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emergency::harness::{
    self, cmd_calibrate, cmd_evaluate, cmd_replay, cmd_synth, cmd_train, cmd_tune_delay, default_plan, load_plan,
    HarnessError, ReplayOptions, RunConfig,
};
use emergency_core::classifiers::Family;
use emergency_core::data::TransportMode;
use emergency_core::metrics::render_table;

#[derive(Parser)]
#[command(name = "emergency", version, about = "Recall-optimized emergency detection on keypoint streams")]
struct Cli {
    /// Seed for splits, folds and training (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory holding manifest.json.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        /// Synth plan JSON; when absent one is built from the flags below.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode, default_value = "walking")]
        mode: TransportMode,
        #[arg(long, default_value_t = 60)]
        videos: usize,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, default_value_t = 2.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.05)]
        dropout: f64,
    },
    /// Split, grid-search and train a model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TransportMode>,
        #[arg(long, value_parser = parse_family)]
        family: Option<Family>,
        /// JSON array of hyperparameter specs.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Fit the decision threshold on the training split.
    Calibrate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Choose the delay length on the training split.
    TuneDelay {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
    },
    /// Evaluate on the held-out test split.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        delay: PathBuf,
    },
    /// Run one frame file through the streaming detector.
    Replay {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        delay: PathBuf,
        /// Frame file (one JSON record per line).
        #[arg(long)]
        stream: PathBuf,
        /// Process frames at their recorded timestamps.
        #[arg(long)]
        paced: bool,
        /// Directory of `<t>.dmap` depth maps.
        #[arg(long)]
        depth_dir: Option<PathBuf>,
    },
}

fn parse_mode(s: &str) -> Result<TransportMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase()))
        .map_err(|_| format!("unknown mode {s:?} (walking, wheelchair, combined)"))
}

fn parse_family(s: &str) -> Result<Family, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase().replace('-', "_")))
        .map_err(|_| format!("unknown family {s:?} (svm, random_forest, mlp)"))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    let with_data = |cfg: &mut RunConfig, data: DataArgs| {
        if data.data.is_some() {
            cfg.data = data.data;
        }
    };

    match cli.command {
        Command::Synth { plan, mode, videos, frames, noise, dropout } => {
            let plan = match plan {
                Some(path) => load_plan(&path)?,
                None => default_plan(mode, videos, frames, noise, dropout, cfg.seed),
            };
            let s = cmd_synth(&plan, &cfg.out)?;
            println!("wrote {} videos, {} frames to {}", s.videos, s.frames, cfg.out.display());
        }
        Command::Train { data, mode, family, grid, folds, test_fraction } => {
            with_data(&mut cfg, data);
            cfg.mode = mode.or(cfg.mode);
            cfg.family = family.or(cfg.family);
            cfg.grid = grid.or(cfg.grid);
            cfg.folds = folds.unwrap_or(cfg.folds);
            cfg.test_fraction = test_fraction.unwrap_or(cfg.test_fraction);
            let s = cmd_train(&cfg)?;
            println!(
                "best {} (cv recall {:.4}); {} train / {} test videos; model in {}",
                s.best.describe(),
                s.cv_recall,
                s.train_videos,
                s.test_videos,
                cfg.out.join(harness::MODEL_FILE).display()
            );
        }
        Command::Calibrate { data, model } => {
            with_data(&mut cfg, data);
            let c = cmd_calibrate(&cfg, &model)?;
            match c.threshold {
                Some(t) => println!("{:?} threshold {t}", c.mode),
                None => println!("{:?}: argmax", c.mode),
            }
        }
        Command::TuneDelay { data, model, calibration } => {
            with_data(&mut cfg, data);
            let d = cmd_tune_delay(&cfg, &model, &calibration)?;
            println!("delay {} ms (F1 {:.4})", d.delay_ms, d.f1);
        }
        Command::Evaluate { data, model, calibration, delay } => {
            with_data(&mut cfg, data);
            let r = cmd_evaluate(&cfg, &model, &calibration, &delay)?;
            print!("{}", render_table(std::slice::from_ref(&r.report)));
        }
        Command::Replay { model, calibration, delay, stream, paced, depth_dir } => {
            let s = cmd_replay(&cfg, &model, &calibration, &delay, &stream, &ReplayOptions { paced, depth_dir })?;
            println!(
                "{} frames, {} events, {:.1} frames/s, frame latency mean {:.0} us max {:.0} us",
                s.frames,
                s.events.len(),
                s.frames_per_second,
                s.mean_frame_latency_us,
                s.max_frame_latency_us
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
