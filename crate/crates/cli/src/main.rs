//! Command-line front end for the contour tracing pipeline.
//!
//! Verbosity is controlled by the `WTL_LOG` environment variable
//! (`error`, `warn`, `info`, `debug`, `trace`).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Ctx, PredictorSpec};
use config::RunConfig;
use linewalk::geometry::PixelCoord;
use linewalk::predictor::PredictorKind;
use linewalk::Error;

#[derive(Parser)]
#[command(
    name = "linewalk",
    version,
    about = "Swarm contour tracing: soft contour maps to closed 1-px binary object contours"
)]
struct Cli {
    /// Plain-text key=value config file (defaults <- file <- flags).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Global RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker thread cap (0 = default).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct PredictorArgs {
    /// Direction predictor backing the tracers.
    #[arg(long, value_parser = ["cnn", "oracle", "ridge"])]
    predictor: String,

    /// Weights bundle (required for --predictor cnn).
    #[arg(long)]
    weights: Option<PathBuf>,

    /// Ground-truth 1-px contour mask (required for --predictor oracle).
    #[arg(long)]
    gt_contour: Option<PathBuf>,
}

impl PredictorArgs {
    fn spec(&self) -> Result<PredictorSpec, Error> {
        let kind: PredictorKind = self.predictor.parse()?;
        if kind == PredictorKind::Cnn && self.weights.is_none() {
            return Err(Error::invalid("--predictor cnn requires --weights"));
        }
        if kind == PredictorKind::Oracle && self.gt_contour.is_none() {
            return Err(Error::invalid("--predictor oracle requires --gt-contour"));
        }
        Ok(PredictorSpec {
            kind,
            weights: self.weights.clone(),
            gt_contour: self.gt_contour.clone(),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenes (image, ground truth, soft contour map).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long)]
        count: Option<usize>,
        /// Scene size as HxW, e.g. 256x256.
        #[arg(long)]
        size: Option<String>,
        /// Softmap noise amplitude.
        #[arg(long)]
        noise: Option<f64>,
        /// Weak-response gaps per softmap.
        #[arg(long)]
        gaps: Option<usize>,
        /// Antenna protrusions per shape.
        #[arg(long)]
        antennas: Option<usize>,
    },
    /// Generate contour-following training labels from scene directories.
    GenLabels {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Labels per scene.
        #[arg(long)]
        per_image: Option<usize>,
    },
    /// Train the direction predictor from scratch on a label dataset.
    Train {
        /// Directory holding train.bin and val.bin.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Walk a single tracer and dump its path.
    Trace {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        softmap: PathBuf,
        /// Start pixel as ROW,COL.
        #[arg(long)]
        start: String,
        /// Start heading in degrees (0 = east, clockwise positive).
        #[arg(long)]
        angle: f64,
        #[arg(long)]
        steps: usize,
        /// Ring radius per step.
        #[arg(long, default_value_t = 1)]
        step_size: u8,
        #[command(flatten)]
        predictor: PredictorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full tracer swarm and sum all paths.
    Complete {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        softmap: PathBuf,
        #[command(flatten)]
        predictor: PredictorArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn an accumulation map into a closed 1-px binary contour.
    Binarize {
        /// Accumulation map (grayscale).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a segmentation mask against ground truth.
    Eval {
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Row label in the metrics table.
        #[arg(long, default_value = "image")]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// complete -> binarize -> mask (-> eval when ground truth is given).
    Pipeline {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        softmap: PathBuf,
        #[command(flatten)]
        predictor: PredictorArgs,
        /// Ground-truth segmentation mask to score against.
        #[arg(long)]
        gt_mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 3,
        Error::Format(_) => 4,
        Error::NoLine(_) => 5,
        Error::NoClosure(_) | Error::NotClosed(_) | Error::CutFailure(_) => 6,
        Error::InvalidGroundTruth(_) => 7,
        Error::NoSeeds(_) => 8,
        Error::InvalidArgument(_) => 2,
        Error::FillFailure(_) | Error::NumericFailure { .. } => 1,
    }
}

fn parse_pixel(text: &str) -> Result<PixelCoord, Error> {
    let (row, col) = text
        .split_once(',')
        .ok_or_else(|| Error::invalid(format!("expected ROW,COL, got {text}")))?;
    Ok(PixelCoord::new(
        row.trim()
            .parse()
            .map_err(|e| Error::invalid(format!("bad row: {e}")))?,
        col.trim()
            .parse()
            .map_err(|e| Error::invalid(format!("bad col: {e}")))?,
    ))
}

fn parse_size(text: &str) -> Result<(usize, usize), Error> {
    let (h, w) = text
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::invalid(format!("expected HxW, got {text}")))?;
    Ok((
        h.parse().map_err(|e| Error::invalid(format!("bad height: {e}")))?,
        w.parse().map_err(|e| Error::invalid(format!("bad width: {e}")))?,
    ))
}

fn run(cli: Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cfg.threads > 0 {
        let _ = linewalk::init_thread_pool(cfg.threads);
    }

    match cli.command {
        Command::Synth {
            out,
            count,
            size,
            noise,
            gaps,
            antennas,
        } => {
            if let Some(count) = count {
                cfg.scene_count = count;
            }
            if let Some(size) = size {
                let (h, w) = parse_size(&size)?;
                cfg.scene.height = h;
                cfg.scene.width = w;
            }
            if let Some(noise) = noise {
                cfg.scene.noise = noise;
            }
            if let Some(gaps) = gaps {
                cfg.scene.gap_count = gaps;
            }
            if let Some(antennas) = antennas {
                cfg.scene.antenna_count = antennas;
            }
            cfg.validate()?;
            commands::cmd_synth(&Ctx { cfg, out })
        }
        Command::GenLabels {
            scenes,
            out,
            per_image,
        } => {
            if let Some(per_image) = per_image {
                cfg.per_image = per_image;
            }
            cfg.validate()?;
            commands::cmd_gen_labels(&Ctx { cfg, out }, &scenes)
        }
        Command::Train { dataset, out } => commands::cmd_train(&Ctx { cfg, out }, &dataset),
        Command::Trace {
            image,
            softmap,
            start,
            angle,
            steps,
            step_size,
            predictor,
            out,
        } => {
            if !(1..=3).contains(&step_size) {
                return Err(Error::invalid("--step-size must be 1, 2 or 3"));
            }
            let start = parse_pixel(&start)?;
            let spec = predictor.spec()?;
            commands::cmd_trace(
                &Ctx { cfg, out },
                &image,
                &softmap,
                start,
                angle,
                steps,
                step_size,
                &spec,
            )
        }
        Command::Complete {
            image,
            softmap,
            predictor,
            out,
        } => {
            let spec = predictor.spec()?;
            commands::cmd_complete(&Ctx { cfg, out }, &image, &softmap, &spec)
        }
        Command::Binarize { input, out } => commands::cmd_binarize(&Ctx { cfg, out }, &input),
        Command::Eval {
            mask,
            gt,
            name,
            out,
        } => commands::cmd_eval(&Ctx { cfg, out }, &mask, &gt, &name),
        Command::Pipeline {
            image,
            softmap,
            predictor,
            gt_mask,
            out,
        } => {
            let spec = predictor.spec()?;
            commands::cmd_pipeline(&Ctx { cfg, out }, &image, &softmap, &spec, gt_mask.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("WTL_LOG"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
