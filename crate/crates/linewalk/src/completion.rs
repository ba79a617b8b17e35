//! Tracer-swarm contour completion: seed many tracers from the soft
//! contour map, advance them in synchronized batches with randomized step
//! sizes, cull tracers that stray or loop, run a second pass on the
//! mirrored image, and sum every walked path into one accumulation map.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{offset_to_angle, raster_line, Angle, PixelCoord};
use crate::morphology::{connected_components, thin, Connectivity};
use crate::predictor::DirectionPredictor;
use crate::raster::{extract_oriented_patch, InputStack, Raster2D};
use crate::tracer::{step, PassOrigin, PathTrace, TraceEnd, TracerState};

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionConfig {
    /// Softmap threshold for the seeding skeleton.
    pub seed_threshold: f32,
    /// Checkerboard cell side used to fragment the skeleton.
    pub checker_cell: usize,
    /// Probabilities of taking a 1-, 2- or 3-pixel step.
    pub step_probabilities: [f64; 3],
    /// A tracer dies when the 3x3 softmap maximum around it falls below this.
    pub bad_prob_threshold: f32,
    /// Most recent path pixels ignored by the self-crossing check.
    pub loop_grace: usize,
    /// Hard per-tracer step cap; `None` means `4 * (h + w)`.
    pub max_steps_per_tracer: Option<usize>,
    pub rng_seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            seed_threshold: 0.7,
            checker_cell: 8,
            step_probabilities: [0.87, 0.12, 0.01],
            bad_prob_threshold: 0.1,
            loop_grace: 5,
            max_steps_per_tracer: None,
            rng_seed: 0,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.step_probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "step probabilities must sum to 1, got {sum}"
            )));
        }
        if self.step_probabilities.iter().any(|&p| p < 0.0) {
            return Err(Error::invalid("step probabilities must be nonnegative"));
        }
        for (name, v) in [
            ("seed_threshold", self.seed_threshold),
            ("bad_prob_threshold", self.bad_prob_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1]")));
            }
        }
        if self.checker_cell == 0 {
            return Err(Error::invalid("checker_cell must be >= 1"));
        }
        Ok(())
    }

    pub fn max_steps(&self, h: usize, w: usize) -> usize {
        self.max_steps_per_tracer.unwrap_or(4 * (h + w))
    }
}

/// Find tracer start positions and headings: threshold high, skeletonize,
/// fragment with a checkerboard, and launch a tracer outward from each
/// fragment endpoint. Fragments shorter than 4 pixels are dropped.
pub fn seed_tracers(softmap: &Raster2D, cfg: &CompletionConfig) -> Vec<(PixelCoord, Angle)> {
    let binary = softmap.threshold(cfg.seed_threshold);
    let mut skeleton = thin(&binary);
    let cell = cfg.checker_cell;
    for r in 0..skeleton.h() {
        for c in 0..skeleton.w() {
            if skeleton.get(r, c) && (r / cell + c / cell) % 2 == 1 {
                skeleton.set(r, c, false);
            }
        }
    }

    let comps = connected_components(&skeleton, Connectivity::Eight);
    let sizes = comps.sizes();
    let mut fragment_pixels: Vec<Vec<PixelCoord>> = vec![Vec::new(); comps.count + 1];
    for p in skeleton.iter_set() {
        fragment_pixels[comps.label(p.row as usize, p.col as usize) as usize].push(p);
    }

    let mut seeds = Vec::new();
    for label in 1..=comps.count {
        if sizes[label] < 4 {
            continue;
        }
        let endpoints: Vec<PixelCoord> = fragment_pixels[label]
            .iter()
            .copied()
            .filter(|p| skeleton.neighbor_count(*p) == 1)
            .collect();
        for e in endpoints {
            // Walk three pixels inward; the seed heading points from that
            // pixel outward past the fragment end.
            let mut prev = e;
            let mut cur = e;
            let mut ok = true;
            for _ in 0..3 {
                let mut next = None;
                'scan: for dr in -1..=1 {
                    for dc in -1..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let q = cur.offset(dr, dc);
                        if q != prev && skeleton.get_coord(q) {
                            next = Some(q);
                            break 'scan;
                        }
                    }
                }
                match next {
                    Some(q) => {
                        prev = cur;
                        cur = q;
                    }
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                continue;
            }
            let heading = offset_to_angle(e.row - cur.row, e.col - cur.col)
                .expect("inward pixel differs from endpoint");
            seeds.push((e, heading));
        }
    }
    seeds
}

/// Draw a step size of 1, 2 or 3 with the configured probabilities.
pub fn sample_step(rng: &mut impl Rng, probabilities: &[f64; 3]) -> u8 {
    let u: f64 = rng.gen();
    if u < probabilities[0] {
        1
    } else if u < probabilities[0] + probabilities[1] {
        2
    } else {
        3
    }
}

/// True when the tracer has nothing contour-like nearby: outside the image
/// or all of the 3x3 softmap neighborhood below the threshold.
pub fn is_bad_location(softmap: &Raster2D, cp: PixelCoord, cfg: &CompletionConfig) -> bool {
    if !cp.in_bounds(softmap.h(), softmap.w()) {
        return true;
    }
    let mut best = 0.0f32;
    for dr in -1..=1 {
        for dc in -1..=1 {
            best = best.max(softmap.get_or_zero(cp.offset(dr, dc)));
        }
    }
    best < cfg.bad_prob_threshold
}

/// True when `cp_new` re-enters the tracer's own visited set, excluding
/// the most recent `loop_grace` path pixels (which are adjacent rasterized
/// step pixels, not genuine crossings).
pub fn is_looping(
    path: &[PixelCoord],
    visited: &HashSet<PixelCoord>,
    cp_new: PixelCoord,
    cfg: &CompletionConfig,
) -> bool {
    if !visited.contains(&cp_new) {
        return false;
    }
    let recent = &path[path.len().saturating_sub(cfg.loop_grace)..];
    !recent.contains(&cp_new)
}

struct TracerUnit {
    state: TracerState,
    path: Vec<PixelCoord>,
    visited: HashSet<PixelCoord>,
    rng: ChaCha8Rng,
    steps: usize,
    alive: bool,
    end: TraceEnd,
}

/// The live swarm plus the retained paths of deleted tracers.
pub struct TracerPool {
    units: Vec<TracerUnit>,
    culls: CullCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CullCounts {
    pub left_image: usize,
    pub low_probability: usize,
    pub looping: usize,
    pub max_steps: usize,
}

fn tracer_rng(seed: u64, pass_idx: u64, tracer_idx: usize) -> ChaCha8Rng {
    let mix = seed
        ^ pass_idx.wrapping_mul(0xd1b5_4a32_d192_ed03)
        ^ (tracer_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    ChaCha8Rng::seed_from_u64(mix)
}

impl TracerPool {
    pub fn from_seeds(seeds: &[(PixelCoord, Angle)], cfg: &CompletionConfig, pass_idx: u64) -> Self {
        let units = seeds
            .iter()
            .enumerate()
            .map(|(i, &(cp, heading))| TracerUnit {
                state: TracerState { cp, heading },
                path: vec![cp],
                visited: HashSet::from([cp]),
                rng: tracer_rng(cfg.rng_seed, pass_idx, i),
                steps: 0,
                alive: true,
                end: TraceEnd::Completed,
            })
            .collect();
        TracerPool {
            units,
            culls: CullCounts::default(),
        }
    }

    pub fn initial_count(&self) -> usize {
        self.units.len()
    }

    pub fn live_count(&self) -> usize {
        self.units.iter().filter(|u| u.alive).count()
    }

    pub fn culls(&self) -> CullCounts {
        self.culls
    }

    /// All paths (live and deleted tracers alike), tagged with a pass origin.
    pub fn into_paths(self, origin: PassOrigin) -> Vec<PathTrace> {
        self.units
            .into_iter()
            .map(|u| PathTrace {
                pixels: u.path,
                origin,
                end: u.end,
            })
            .collect()
    }
}

/// One synchronized swarm iteration: extract every live tracer's patch,
/// predict all direction changes in a single batch, then step and cull in
/// fixed tracer order.
pub fn advance_pool(
    pool: &mut TracerPool,
    stack: &InputStack,
    predictor: &dyn DirectionPredictor,
    cfg: &CompletionConfig,
) -> Result<()> {
    let max_steps = cfg.max_steps(stack.h(), stack.w());

    // Hard stop first, so the batch only holds tracers that will step.
    for u in pool.units.iter_mut().filter(|u| u.alive) {
        if u.steps >= max_steps {
            u.alive = false;
            pool.culls.max_steps += 1;
        }
    }

    let live: Vec<usize> = (0..pool.units.len())
        .filter(|&i| pool.units[i].alive)
        .collect();
    if live.is_empty() {
        return Err(Error::invalid("advance_pool needs at least one live tracer"));
    }

    let states: Vec<TracerState> = live.iter().map(|&i| pool.units[i].state).collect();
    let patches = states
        .par_iter()
        .map(|s| extract_oriented_patch(stack, s.cp, s.heading))
        .collect::<Result<Vec<_>>>()?;
    let angles = predictor.predict(&patches, &states)?;
    if angles.len() != live.len() {
        return Err(Error::invalid(format!(
            "predictor returned {} angles for {} tracers",
            angles.len(),
            live.len()
        )));
    }

    let softmap = stack.softmap();
    for (&idx, angle) in live.iter().zip(angles) {
        let u = &mut pool.units[idx];
        let size = sample_step(&mut u.rng, &cfg.step_probabilities);
        let next = step(u.state, angle, size);
        u.steps += 1;

        // Record the walked pixels, clipped at the image border so the
        // accumulation map accounts for every stored pixel.
        let mut left_image = false;
        for p in raster_line(u.state.cp, next.cp) {
            if !p.in_bounds(stack.h(), stack.w()) {
                left_image = true;
                break;
            }
            if p == next.cp {
                break;
            }
            u.path.push(p);
            u.visited.insert(p);
        }

        if left_image || !next.cp.in_bounds(stack.h(), stack.w()) {
            u.alive = false;
            u.end = TraceEnd::LeftImage;
            pool.culls.left_image += 1;
            u.state = next;
            continue;
        }

        let looping = is_looping(&u.path, &u.visited, next.cp, cfg);
        u.path.push(next.cp);
        u.visited.insert(next.cp);
        u.state = next;

        if is_bad_location(softmap, next.cp, cfg) {
            u.alive = false;
            pool.culls.low_probability += 1;
        } else if looping {
            u.alive = false;
            pool.culls.looping += 1;
        }
    }
    Ok(())
}

/// Grayscale sum of all tracer paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulationMap {
    h: usize,
    w: usize,
    counts: Vec<u32>,
}

impl AccumulationMap {
    pub fn new(h: usize, w: usize) -> Self {
        AccumulationMap {
            h,
            w,
            counts: vec![0; h * w],
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn count(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.w + col]
    }

    pub fn add_path(&mut self, path: &PathTrace) {
        for p in &path.pixels {
            assert!(p.in_bounds(self.h, self.w), "paths store in-bounds pixels");
            self.counts[p.row as usize * self.w + p.col as usize] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Counts divided by the maximum count; all zeros stay zero.
    pub fn normalized(&self) -> Raster2D {
        let max = self.max_count();
        let mut out = Raster2D::new(self.h, self.w);
        if max == 0 {
            return out;
        }
        for r in 0..self.h {
            for c in 0..self.w {
                out.set(r, c, self.count(r, c) as f32 / max as f32);
            }
        }
        out
    }
}

/// Predictors for the two traversal passes. The anticlockwise predictor
/// sees the mirrored stack, so scene-bound predictors (the oracle) must be
/// built from the mirrored ground truth; self-contained predictors can be
/// shared.
pub struct PassPredictors<'a> {
    pub clockwise: &'a dyn DirectionPredictor,
    pub anticlockwise: &'a dyn DirectionPredictor,
}

impl<'a> PassPredictors<'a> {
    pub fn same(p: &'a dyn DirectionPredictor) -> Self {
        PassPredictors {
            clockwise: p,
            anticlockwise: p,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PassReport {
    pub seeds: usize,
    pub culls: CullCounts,
    pub path_pixels: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompletionReport {
    pub clockwise: PassReport,
    pub anticlockwise: PassReport,
    pub max_count: u32,
}

/// Run one full pass of the swarm over a stack, in the stack's own frame.
fn run_oriented_pass(
    stack: &InputStack,
    predictor: &dyn DirectionPredictor,
    cfg: &CompletionConfig,
    pass_idx: u64,
) -> Result<(Vec<PathTrace>, PassReport)> {
    let seeds = seed_tracers(stack.softmap(), cfg);
    if seeds.is_empty() {
        return Err(Error::NoSeeds(
            "soft contour map has no seedable fragments at the seed threshold".into(),
        ));
    }
    let mut pool = TracerPool::from_seeds(&seeds, cfg, pass_idx);
    while pool.live_count() > 0 {
        advance_pool(&mut pool, stack, predictor, cfg)?;
    }
    let culls = pool.culls();
    let seeds_n = pool.initial_count();
    let paths = pool.into_paths(PassOrigin::Clockwise);
    let path_pixels = paths.iter().map(|p| p.pixels.len() as u64).sum();
    Ok((
        paths,
        PassReport {
            seeds: seeds_n,
            culls,
            path_pixels,
        },
    ))
}

fn mirror_path(path: PathTrace, w: usize) -> PathTrace {
    PathTrace {
        pixels: path
            .pixels
            .into_iter()
            .map(|p| PixelCoord::new(p.row, w as i32 - 1 - p.col))
            .collect(),
        origin: PassOrigin::AnticlockwiseFlipped,
        end: path.end,
    }
}

/// The anticlockwise pass: by definition, the clockwise machinery run on
/// the mirrored stack, with the resulting paths mirrored back.
pub fn run_anticlockwise_pass(
    stack: &InputStack,
    predictor: &dyn DirectionPredictor,
    cfg: &CompletionConfig,
) -> Result<(Vec<PathTrace>, PassReport)> {
    let mirrored = stack.mirror_cols();
    let (paths, report) = run_oriented_pass(&mirrored, predictor, cfg, 1)?;
    let w = stack.w();
    Ok((
        paths.into_iter().map(|p| mirror_path(p, w)).collect(),
        report,
    ))
}

/// Both traversal passes summed into the accumulation map.
pub fn run_completion(
    stack: &InputStack,
    predictors: &PassPredictors,
    cfg: &CompletionConfig,
) -> Result<(AccumulationMap, CompletionReport)> {
    cfg.validate()?;
    let (cw_paths, cw_report) = run_oriented_pass(stack, predictors.clockwise, cfg, 0)?;
    let (acw_paths, acw_report) = run_anticlockwise_pass(stack, predictors.anticlockwise, cfg)?;

    let mut map = AccumulationMap::new(stack.h(), stack.w());
    for path in cw_paths.iter().chain(&acw_paths) {
        map.add_path(path);
    }
    let report = CompletionReport {
        clockwise: cw_report,
        anticlockwise: acw_report,
        max_count: map.max_count(),
    };
    Ok((map, report))
}
