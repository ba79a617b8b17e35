//! Procedural test scenes: a shaded ship-like convex polygon with a flat
//! bottom edge (so the longest-line assumption of the binarization holds),
//! optional thin antenna protrusions, a filled ground-truth mask, its
//! 1-px closed boundary contour, and a simulated soft contour map with
//! configurable noise and weak-response gaps.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;
use crate::io;
use crate::labels::trace_gt_chain;
use crate::morphology::ClosedContour;
use crate::raster::{BinaryMask, Raster2D, RgbRaster};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    /// Random upper-hull sample points (shape complexity).
    pub complexity: usize,
    /// Amplitude of the uniform noise added to the softmap.
    pub noise: f64,
    /// Number of weak-response gaps burned into the softmap.
    pub gap_count: usize,
    /// Number of thin antenna protrusions on the shape's top.
    pub antenna_count: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            height: 256,
            width: 256,
            complexity: 10,
            noise: 0.05,
            gap_count: 2,
            antenna_count: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: RgbRaster,
    pub gt_mask: BinaryMask,
    pub gt_contour: ClosedContour,
    pub softmap: Raster2D,
    pub params: SceneParams,
    pub seed: u64,
}

fn convex_hull(mut points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    points.sort_by(|a, b| a.partial_cmp(b).unwrap());
    points.dedup();
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &points {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in points.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn fill_convex(hull: &[(f64, f64)], h: usize, w: usize) -> BinaryMask {
    // Hull vertices are counterclockwise in (x, y); a point is inside when
    // every edge cross product is nonnegative (boundary included).
    let mut mask = BinaryMask::new(h, w);
    let min_y = hull.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_y = hull.iter().map(|p| p.1).fold(0.0f64, f64::max);
    let min_x = hull.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = hull.iter().map(|p| p.0).fold(0.0f64, f64::max);
    for r in (min_y.floor().max(0.0) as usize)..=(max_y.ceil().min(h as f64 - 1.0) as usize) {
        for c in (min_x.floor().max(0.0) as usize)..=(max_x.ceil().min(w as f64 - 1.0) as usize) {
            let (px, py) = (c as f64, r as f64);
            let inside = (0..hull.len()).all(|i| {
                let a = hull[i];
                let b = hull[(i + 1) % hull.len()];
                (b.0 - a.0) * (py - a.1) - (b.1 - a.1) * (px - a.0) >= -1e-9
            });
            if inside {
                mask.set(r, c, true);
            }
        }
    }
    mask
}

/// Inner boundary: mask pixels with a 4-neighbor outside the mask.
pub fn mask_boundary(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.h(), mask.w());
    let mut out = BinaryMask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) {
                continue;
            }
            let p = PixelCoord::new(r as i32, c as i32);
            let edge = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dr, dc)| !mask.get_coord(p.offset(dr, dc)));
            if edge {
                out.set(r, c, true);
            }
        }
    }
    out
}

struct ShapeAttempt {
    mask: BinaryMask,
    contour: ClosedContour,
}

fn try_shape(params: &SceneParams, rng: &mut ChaCha8Rng) -> Option<ShapeAttempt> {
    let (h, w) = (params.height as f64, params.width as f64);
    let shape_w = w * rng.gen_range(0.45..0.65);
    let shape_h = h * rng.gen_range(0.30..0.45);
    let cx = w / 2.0 + w * rng.gen_range(-0.05..0.05);
    let y_b = (h * rng.gen_range(0.60..0.75)).round();
    let x_l = (cx - shape_w / 2.0).round();
    let x_r = (cx + shape_w / 2.0).round();
    let top_y = y_b - shape_h;
    // Antennas need headroom above the hull.
    let top_margin = if params.antenna_count > 0 { 28.0 } else { 10.0 };
    if x_l < 8.0 || x_r > w - 9.0 || y_b > h - 9.0 || top_y < top_margin {
        return None;
    }

    let mut points = vec![(x_l, y_b), (x_r, y_b)];
    // Steep chines just above the bottom corners keep the sides clean.
    points.push((x_l + shape_w * 0.05, y_b - shape_h * 0.35));
    points.push((x_r - shape_w * 0.05, y_b - shape_h * 0.35));
    for _ in 0..params.complexity {
        let x = rng.gen_range(x_l..x_r);
        let y = rng.gen_range(top_y..(y_b - shape_h * 0.35));
        points.push((x, y));
    }
    let hull = convex_hull(points);

    // Every non-bottom edge must stay clearly shorter than the bottom so
    // the longest straight line is always the flat bottom.
    let bottom_len = x_r - x_l;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        if a.1 == y_b && b.1 == y_b {
            continue;
        }
        let len = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        if len > 0.8 * bottom_len {
            return None;
        }
    }

    let mut mask = fill_convex(&hull, params.height, params.width);

    // Antennas: 3-px-wide strips rising from the hull top (wide enough to
    // have an interior column, so the boundary stays a simple cycle).
    let mut used_cols: Vec<(usize, usize)> = Vec::new();
    for _ in 0..params.antenna_count {
        let len = rng.gen_range(8..=16) as i32;
        let x0 = rng.gen_range((x_l as usize + 6)..(x_r as usize - 9));
        if used_cols.iter().any(|&(a, b)| x0 + 4 >= a && x0 <= b + 4) {
            continue;
        }
        let mut col_tops = Vec::new();
        for c in x0..x0 + 3 {
            let top = (0..params.height).find(|&r| mask.get(r, c));
            match top {
                Some(t) => col_tops.push(t),
                None => {
                    col_tops.clear();
                    break;
                }
            }
        }
        if col_tops.len() != 3 {
            continue;
        }
        let tip = *col_tops.iter().min().unwrap() as i32 - len;
        if tip < 8 {
            continue;
        }
        for (i, c) in (x0..x0 + 3).enumerate() {
            for r in tip..=(col_tops[i] as i32 + 1) {
                mask.set(r as usize, c, true);
            }
        }
        used_cols.push((x0, x0 + 2));
    }

    let contour = ClosedContour::from_mask(mask_boundary(&mask)).ok()?;
    Some(ShapeAttempt { mask, contour })
}

fn binomial_blur(raster: &Raster2D) -> Raster2D {
    // Separable 3x3 [1 2 1]/4 kernel, zero padded.
    let (h, w) = (raster.h(), raster.w());
    let mut tmp = Raster2D::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let get = |cc: i32| {
                if cc < 0 || cc >= w as i32 {
                    0.0
                } else {
                    raster.get(r, cc as usize)
                }
            };
            tmp.set(
                r,
                c,
                0.25 * get(c as i32 - 1) + 0.5 * get(c as i32) + 0.25 * get(c as i32 + 1),
            );
        }
    }
    let mut out = Raster2D::new(h, w);
    for r in 0..h {
        for c in 0..w {
            let get = |rr: i32| {
                if rr < 0 || rr >= h as i32 {
                    0.0
                } else {
                    tmp.get(rr as usize, c)
                }
            };
            out.set(
                r,
                c,
                0.25 * get(r as i32 - 1) + 0.5 * get(r as i32) + 0.25 * get(r as i32 + 1),
            );
        }
    }
    out
}

fn simulate_softmap(
    contour: &ClosedContour,
    params: &SceneParams,
    rng: &mut ChaCha8Rng,
) -> Result<Raster2D> {
    let mask = contour.mask();
    let (h, w) = (mask.h(), mask.w());

    // Ridge: contour dilated by one, blurred, peak scaled to 0.9.
    let mut band = Raster2D::new(h, w);
    for p in mask.iter_set() {
        for dr in -1..=1 {
            for dc in -1..=1 {
                let q = p.offset(dr, dc);
                if q.in_bounds(h, w) {
                    band.set(q.row as usize, q.col as usize, 1.0);
                }
            }
        }
    }
    let mut soft = binomial_blur(&band);
    let max = soft.max_value();
    if max > 0.0 {
        let scale = 0.9 / max;
        soft.data_mut().iter_mut().for_each(|v| *v *= scale);
    }

    // Weak-response gaps: short chain segments attenuated to 30%.
    if params.gap_count > 0 {
        let chain = trace_gt_chain(mask)?;
        let mut attenuate = BinaryMask::new(h, w);
        for _ in 0..params.gap_count {
            let start = rng.gen_range(0..chain.len());
            let len = rng.gen_range(3..=8usize);
            for k in 0..len {
                let p = chain.at(start + k);
                for dr in -2..=2 {
                    for dc in -2..=2 {
                        let q = p.offset(dr, dc);
                        if q.in_bounds(h, w) {
                            attenuate.set(q.row as usize, q.col as usize, true);
                        }
                    }
                }
            }
        }
        for r in 0..h {
            for c in 0..w {
                if attenuate.get(r, c) {
                    soft.set(r, c, soft.get(r, c) * 0.3);
                }
            }
        }
    }

    if params.noise > 0.0 {
        for r in 0..h {
            for c in 0..w {
                let n = rng.gen_range(0.0..params.noise) as f32;
                soft.set(r, c, (soft.get(r, c) + n).min(1.0));
            }
        }
    }
    Ok(soft)
}

fn render_image(mask: &BinaryMask, rng: &mut ChaCha8Rng) -> RgbRaster {
    let (h, w) = (mask.h(), mask.w());
    let mut img = RgbRaster::new(h, w);
    for r in 0..h {
        let t = r as f32 / h as f32;
        for c in 0..w {
            let n = rng.gen_range(-0.03..0.03f32);
            let (rr, gg, bb) = if mask.get(r, c) {
                let shade = 0.22 + 0.10 * (c as f32 / w as f32);
                (shade + n, shade + n, shade + 0.03 + n)
            } else {
                // Sky fading into sea.
                (
                    0.55 - 0.30 * t + n,
                    0.65 - 0.30 * t + n,
                    0.75 - 0.25 * t + n,
                )
            };
            img.channels[0].set(r, c, rr.clamp(0.0, 1.0));
            img.channels[1].set(r, c, gg.clamp(0.0, 1.0));
            img.channels[2].set(r, c, bb.clamp(0.0, 1.0));
        }
    }
    img
}

fn attempt_rng(seed: u64, attempt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ attempt.wrapping_mul(0xa076_1d64_78bd_642f))
}

/// Generate one scene, deterministically from the seed. Shape candidates
/// failing the validity checks (closed 1-px boundary, bottom edge strictly
/// the longest straight feature) are retried on derived substreams.
pub fn gen_scene(params: &SceneParams, seed: u64) -> Result<SyntheticScene> {
    if params.height < 64 || params.width < 64 {
        return Err(Error::invalid("scene must be at least 64x64"));
    }
    for attempt in 0..64u64 {
        let mut rng = attempt_rng(seed, attempt);
        let Some(shape) = try_shape(params, &mut rng) else {
            continue;
        };
        let softmap = simulate_softmap(&shape.contour, params, &mut rng)?;
        let image = render_image(&shape.mask, &mut rng);
        return Ok(SyntheticScene {
            image,
            gt_mask: shape.mask,
            gt_contour: shape.contour,
            softmap,
            params: params.clone(),
            seed,
        });
    }
    Err(Error::invalid(format!(
        "no valid scene found for seed {seed} after 64 attempts"
    )))
}

#[derive(Debug, Serialize, Deserialize)]
struct SceneFile {
    seed: u64,
    #[serde(flatten)]
    params: SceneParams,
}

/// Write a scene directory: image.png, contour.png, mask.png,
/// softmap.png, params.json.
pub fn save_scene(scene: &SyntheticScene, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::save_rgb(dir.join("image.png"), &scene.image)?;
    io::save_mask(dir.join("contour.png"), scene.gt_contour.mask())?;
    io::save_mask(dir.join("mask.png"), &scene.gt_mask)?;
    io::save_gray(dir.join("softmap.png"), &scene.softmap)?;
    let meta = SceneFile {
        seed: scene.seed,
        params: scene.params.clone(),
    };
    let path = dir.join("params.json");
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Format(format!("params.json: {e}")))?;
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))
}

pub struct LoadedScene {
    pub image: RgbRaster,
    pub gt_mask: BinaryMask,
    pub gt_contour: ClosedContour,
    pub softmap: Raster2D,
    pub params: SceneParams,
    pub seed: u64,
}

pub fn load_scene(dir: impl AsRef<Path>) -> Result<LoadedScene> {
    let dir = dir.as_ref();
    let image = io::load_rgb(dir.join("image.png"))?;
    let contour_mask = io::load_mask(dir.join("contour.png"))?;
    let gt_mask = io::load_mask(dir.join("mask.png"))?;
    let softmap = io::load_gray(dir.join("softmap.png"))?;
    let params_path = dir.join("params.json");
    let text = std::fs::read_to_string(&params_path).map_err(|e| Error::io(&params_path, e))?;
    let meta: SceneFile =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("params.json: {e}")))?;
    Ok(LoadedScene {
        image,
        gt_mask,
        gt_contour: ClosedContour::from_mask(contour_mask)?,
        softmap,
        params: meta.params,
        seed: meta.seed,
    })
}
