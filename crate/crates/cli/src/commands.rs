//! One function per subcommand. Every command resolves its configuration,
//! writes its artifacts plus a machine-readable JSON report into the
//! output directory, and saves the resolved config for reproducibility.

use std::path::{Path, PathBuf};

use serde::Serialize;

use linewalk::binarize::{binarize_pipeline, BinarizeReport};
use linewalk::completion::{run_completion, CompletionReport, PassPredictors};
use linewalk::eval::{fill_closed_contour, metrics, report_table, MetricReport, TableRow};
use linewalk::geometry::PixelCoord;
use linewalk::io;
use linewalk::labels::{generate_dataset, load_records, save_records, trace_gt_chain};
use linewalk::net::{load_weights, save_weights, train as train_net};
use linewalk::predictor::{
    CnnPredictor, DirectionPredictor, OraclePredictor, PredictorKind, RidgePredictor,
};
use linewalk::synth::{gen_scene, load_scene, save_scene};
use linewalk::tracer::{walk, TracerState};
use linewalk::{stack_inputs, Error, InputStack, Raster2D, Result, RgbRaster};

use crate::config::RunConfig;

pub struct Ctx {
    pub cfg: RunConfig,
    pub out: PathBuf,
}

impl Ctx {
    fn prepare(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join("resolved.cfg");
        std::fs::write(&path, self.cfg.to_kv_string()).map_err(|e| Error::io(path, e))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        let path = self.out.join(name);
        let json = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Format(format!("{name}: {e}")))?;
        std::fs::write(&path, json).map_err(|e| Error::io(path, e))
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

/// How to build the direction predictor for a run.
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub weights: Option<PathBuf>,
    pub gt_contour: Option<PathBuf>,
}

enum BuiltPredictor {
    Cnn(CnnPredictor),
    Oracle {
        clockwise: OraclePredictor,
        anticlockwise: OraclePredictor,
    },
    Ridge(RidgePredictor),
}

impl BuiltPredictor {
    fn clockwise(&self) -> &dyn DirectionPredictor {
        match self {
            BuiltPredictor::Cnn(p) => p,
            BuiltPredictor::Oracle { clockwise, .. } => clockwise,
            BuiltPredictor::Ridge(p) => p,
        }
    }

    fn passes(&self) -> PassPredictors<'_> {
        match self {
            BuiltPredictor::Cnn(p) => PassPredictors::same(p),
            BuiltPredictor::Ridge(p) => PassPredictors::same(p),
            BuiltPredictor::Oracle {
                clockwise,
                anticlockwise,
            } => PassPredictors {
                clockwise,
                anticlockwise,
            },
        }
    }
}

impl PredictorSpec {
    fn build(&self, cfg: &RunConfig, stack_w: usize) -> Result<BuiltPredictor> {
        match self.kind {
            PredictorKind::Cnn => {
                let path = self.weights.as_ref().ok_or_else(|| {
                    Error::invalid("--predictor cnn requires --weights")
                })?;
                let weights = load_weights(path)?;
                Ok(BuiltPredictor::Cnn(CnnPredictor::new(
                    weights,
                    cfg.train.label_scale,
                )))
            }
            PredictorKind::Oracle => {
                let path = self.gt_contour.as_ref().ok_or_else(|| {
                    Error::invalid("--predictor oracle requires --gt-contour")
                })?;
                let mask = io::load_mask(path)?;
                let chain = trace_gt_chain(&mask)?;
                let mirrored = chain.mirror_cols(stack_w);
                Ok(BuiltPredictor::Oracle {
                    clockwise: OraclePredictor::new(chain),
                    anticlockwise: OraclePredictor::new(mirrored),
                })
            }
            PredictorKind::Ridge => Ok(BuiltPredictor::Ridge(RidgePredictor)),
        }
    }
}

fn load_stack(image: &Path, softmap: &Path) -> Result<(RgbRaster, Raster2D, InputStack)> {
    let image = io::load_rgb(image)?;
    let softmap = io::load_gray(softmap)?;
    let stack = stack_inputs(&image, &softmap)?;
    Ok((image, softmap, stack))
}

fn overlay(image: &RgbRaster, pixels: impl Iterator<Item = PixelCoord>) -> RgbRaster {
    let mut out = image.clone();
    for p in pixels {
        if p.in_bounds(out.h(), out.w()) {
            let (r, c) = (p.row as usize, p.col as usize);
            out.channels[0].set(r, c, 1.0);
            out.channels[1].set(r, c, 0.1);
            out.channels[2].set(r, c, 0.1);
        }
    }
    out
}

// --- synth ---------------------------------------------------------------

#[derive(Serialize)]
struct SynthReport {
    scenes: Vec<String>,
    seed: u64,
}

pub fn cmd_synth(ctx: &Ctx) -> Result<()> {
    ctx.prepare()?;
    let mut scenes = Vec::new();
    for i in 0..ctx.cfg.scene_count {
        let seed = ctx.cfg.seed.wrapping_add(i as u64);
        let scene = gen_scene(&ctx.cfg.scene, seed)?;
        let name = format!("scene_{i:03}");
        save_scene(&scene, ctx.out.join(&name))?;
        log::info!("wrote {name} (seed {seed})");
        scenes.push(name);
    }
    ctx.write_json(
        "synth_report.json",
        &SynthReport {
            scenes,
            seed: ctx.cfg.seed,
        },
    )
}

/// Scene subdirectories of a directory, sorted by name.
pub fn scene_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.join("params.json").exists())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::invalid(format!(
            "no scene directories under {}",
            dir.display()
        )));
    }
    Ok(dirs)
}

// --- gen-labels ----------------------------------------------------------

#[derive(Serialize)]
struct LabelsReport {
    scenes: usize,
    train_records: usize,
    val_records: usize,
    failures: Vec<linewalk::labels::SceneFailure>,
}

pub fn cmd_gen_labels(ctx: &Ctx, scenes: &Path) -> Result<()> {
    ctx.prepare()?;
    let mut loaded = Vec::new();
    for dir in scene_dirs(scenes)? {
        let scene = load_scene(&dir)?;
        let stack = stack_inputs(&scene.image, &scene.softmap)?;
        loaded.push((stack, scene.gt_contour.into_mask()));
    }
    let outcome = generate_dataset(&loaded, ctx.cfg.per_image, ctx.cfg.seed, ctx.cfg.jitter)?;
    save_records(&outcome.split.train, ctx.out.join("train.bin"))?;
    save_records(&outcome.split.val, ctx.out.join("val.bin"))?;
    ctx.write_json(
        "labels_report.json",
        &LabelsReport {
            scenes: loaded.len(),
            train_records: outcome.split.train.len(),
            val_records: outcome.split.val.len(),
            failures: outcome.failures,
        },
    )
}

// --- train ---------------------------------------------------------------

#[derive(Serialize)]
struct TrainReport {
    epochs: usize,
    best_epoch: usize,
    best_val_loss: f64,
}

pub fn cmd_train(ctx: &Ctx, dataset: &Path) -> Result<()> {
    ctx.prepare()?;
    let train_records = load_records(dataset.join("train.bin"))?;
    let val_records = load_records(dataset.join("val.bin"))?;
    let mut cfg = ctx.cfg.train.clone();
    cfg.seed = ctx.cfg.seed;
    let outcome = train_net(&train_records, &val_records, &cfg)?;
    save_weights(&outcome.weights, ctx.out.join("weights.bin"))?;
    ctx.write_text("loss_curve.csv", &outcome.curve_csv())?;
    let best = outcome
        .curve
        .iter()
        .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
        .expect("at least one epoch");
    ctx.write_json(
        "train_report.json",
        &TrainReport {
            epochs: outcome.curve.len(),
            best_epoch: best.epoch,
            best_val_loss: best.val_loss,
        },
    )
}

// --- trace ---------------------------------------------------------------

#[derive(Serialize)]
struct TraceReport {
    start: PixelCoord,
    start_angle_degrees: f64,
    requested_steps: usize,
    path_pixels: usize,
    left_image: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_trace(
    ctx: &Ctx,
    image: &Path,
    softmap: &Path,
    start: PixelCoord,
    angle_degrees: f64,
    steps: usize,
    step_size: u8,
    spec: &PredictorSpec,
) -> Result<()> {
    ctx.prepare()?;
    let (rgb, _, stack) = load_stack(image, softmap)?;
    let built = spec.build(&ctx.cfg, stack.w())?;
    let heading = linewalk::wrap_angle(angle_degrees)?;
    let state = TracerState { cp: start, heading };
    let trace = walk(&stack, state, steps, built.clockwise(), |_| step_size)?;

    let mut csv = String::from("row,col\n");
    for p in &trace.pixels {
        csv.push_str(&format!("{},{}\n", p.row, p.col));
    }
    ctx.write_text("path.csv", &csv)?;
    io::save_rgb(
        ctx.out.join("overlay.png"),
        &overlay(&rgb, trace.pixels.iter().copied()),
    )?;
    ctx.write_json(
        "trace_report.json",
        &TraceReport {
            start,
            start_angle_degrees: heading.degrees(),
            requested_steps: steps,
            path_pixels: trace.pixels.len(),
            left_image: trace.end == linewalk::tracer::TraceEnd::LeftImage,
        },
    )
}

// --- complete ------------------------------------------------------------

pub fn cmd_complete(ctx: &Ctx, image: &Path, softmap: &Path, spec: &PredictorSpec) -> Result<()> {
    ctx.prepare()?;
    let (_, _, stack) = load_stack(image, softmap)?;
    let built = spec.build(&ctx.cfg, stack.w())?;
    let mut completion_cfg = ctx.cfg.completion.clone();
    completion_cfg.rng_seed = ctx.cfg.seed;
    let started = std::time::Instant::now();
    let (map, report) = run_completion(&stack, &built.passes(), &completion_cfg)?;
    log::info!("completion took {:?}", started.elapsed());
    io::save_gray(ctx.out.join("accumulation.png"), &map.normalized())?;
    ctx.write_json("complete_report.json", &report)
}

// --- binarize ------------------------------------------------------------

pub fn cmd_binarize(ctx: &Ctx, input: &Path) -> Result<()> {
    ctx.prepare()?;
    let map = io::load_gray(input)?;
    let (contour, report) = binarize_pipeline(&map, &ctx.cfg.binarize)?;
    io::save_mask(ctx.out.join("contour.png"), contour.mask())?;
    ctx.write_json("binarize_report.json", &report)
}

// --- eval ----------------------------------------------------------------

pub fn cmd_eval(ctx: &Ctx, mask: &Path, gt: &Path, name: &str) -> Result<()> {
    ctx.prepare()?;
    let mask = io::load_mask(mask)?;
    let gt = io::load_mask(gt)?;
    let report = metrics(&mask, &gt)?;
    let table = report_table(vec![TableRow {
        name: name.to_string(),
        report,
    }])?;
    ctx.write_text("metrics.csv", &table.to_csv())?;
    print!("{}", table.to_text());
    Ok(())
}

// --- pipeline ------------------------------------------------------------

#[derive(Serialize)]
struct PipelineReport {
    completion: CompletionReport,
    binarize: BinarizeReport,
    metrics: Option<MetricReport>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_pipeline(
    ctx: &Ctx,
    image: &Path,
    softmap: &Path,
    spec: &PredictorSpec,
    gt_mask: Option<&Path>,
) -> Result<()> {
    ctx.prepare()?;
    let (rgb, _, stack) = load_stack(image, softmap)?;
    let built = spec.build(&ctx.cfg, stack.w())?;
    let mut completion_cfg = ctx.cfg.completion.clone();
    completion_cfg.rng_seed = ctx.cfg.seed;

    let started = std::time::Instant::now();
    let (map, completion_report) = run_completion(&stack, &built.passes(), &completion_cfg)?;
    log::info!("completion took {:?}", started.elapsed());
    let normalized = map.normalized();
    io::save_gray(ctx.out.join("accumulation.png"), &normalized)?;

    let (contour, binarize_report) = binarize_pipeline(&normalized, &ctx.cfg.binarize)?;
    io::save_mask(ctx.out.join("contour.png"), contour.mask())?;
    io::save_rgb(
        ctx.out.join("overlay.png"),
        &overlay(&rgb, contour.mask().iter_set()),
    )?;

    let mask = fill_closed_contour(&contour)?;
    io::save_mask(ctx.out.join("mask.png"), &mask)?;

    let metric_report = match gt_mask {
        Some(path) => {
            let gt = io::load_mask(path)?;
            let report = metrics(&mask, &gt)?;
            let table = report_table(vec![TableRow {
                name: "pipeline".to_string(),
                report,
            }])?;
            ctx.write_text("metrics.csv", &table.to_csv())?;
            Some(report)
        }
        None => None,
    };

    ctx.write_json(
        "pipeline_report.json",
        &PipelineReport {
            completion: completion_report,
            binarize: binarize_report,
            metrics: metric_report,
        },
    )
}
