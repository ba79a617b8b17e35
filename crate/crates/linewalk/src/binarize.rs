//! Accumulation map to closed binary contour: find the longest straight
//! line (on ships, usually the waterline), cut the map open there, search
//! for the highest threshold that reconnects the two cut flanks, restore
//! the cut, then thin and clean to a single closed 1-px curve.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;
use crate::morphology::{clean, fill_small_holes, same_component, thin, ClosedContour};
use crate::raster::Raster2D;

#[derive(Debug, Clone, PartialEq)]
pub struct BinarizeConfig {
    /// Broad pre-binarization threshold for line detection and flank picking.
    pub th_low: f32,
    /// Threshold-search step.
    pub delta_th: f32,
    /// Largest gap (pixels) tolerated inside one extracted line segment.
    pub gap_tolerance: f64,
    /// Spur-peeling iteration cap for cleaning.
    pub prune_cap: usize,
    /// Enclosed background pockets up to this area are filled before
    /// thinning (pinholes become skeleton bubbles otherwise).
    pub fill_hole_area: usize,
    /// Vertical search range (rows) for the cut's flanking pixels.
    pub flank_rows: i32,
    /// Half-height of the cut column: rows within this distance of the
    /// detected line are zeroed. The cut must stay local to the line so it
    /// severs only the waterline, never contour parts crossing the same
    /// column higher up.
    pub cut_half_height: i32,
}

impl Default for BinarizeConfig {
    fn default() -> Self {
        BinarizeConfig {
            th_low: 0.2,
            delta_th: 1.0 / 255.0,
            gap_tolerance: 5.0,
            prune_cap: 50,
            fill_hole_area: 32,
            flank_rows: 10,
            cut_half_height: 10,
        }
    }
}

impl BinarizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.delta_th && self.delta_th < 1.0) {
            return Err(Error::invalid("delta_th must be in (0, 1)"));
        }
        if !(0.0 < self.th_low && self.th_low < 1.0) {
            return Err(Error::invalid("th_low must be in (0, 1)"));
        }
        Ok(())
    }
}

/// A detected straight line segment with its polar Hough cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSegment {
    pub start: PixelCoord,
    pub end: PixelCoord,
    /// Normal distance of the supporting line, in pixels.
    pub rho: f64,
    /// Normal angle of the supporting line, degrees in [0, 180).
    pub theta_degrees: f64,
    /// Euclidean distance between the endpoints.
    pub length: f64,
}

impl LineSegment {
    /// Row of the supporting segment at the given column, interpolated
    /// between the endpoints (clamped to the endpoint rows for vertical
    /// segments).
    pub fn row_at_col(&self, col: i32) -> f64 {
        let dc = (self.end.col - self.start.col) as f64;
        if dc.abs() < 1e-9 {
            return (self.start.row + self.end.row) as f64 / 2.0;
        }
        let t = ((col - self.start.col) as f64 / dc).clamp(0.0, 1.0);
        self.start.row as f64 + t * (self.end.row - self.start.row) as f64
    }
}

/// Detect the longest straight line in the broad binarization of the map.
///
/// Standard polar Hough voting (1 px rho cells, 1 degree theta cells);
/// from the peak cell's pixels, the longest run along the line with gaps
/// no larger than `gap_tolerance` becomes the segment.
pub fn hough_longest_line(map: &Raster2D, cfg: &BinarizeConfig) -> Result<LineSegment> {
    let binary = map.threshold(cfg.th_low);
    let points: Vec<PixelCoord> = binary.iter_set().collect();
    if points.is_empty() {
        return Err(Error::NoLine(format!(
            "no foreground at threshold {}",
            cfg.th_low
        )));
    }

    let h = map.h() as f64;
    let w = map.w() as f64;
    let rho_max = (h * h + w * w).sqrt().ceil() as i64;
    let n_theta = 180usize;
    let n_rho = (2 * rho_max + 1) as usize;
    // Precompute the trig table once; votes are (theta, rho) cells.
    let table: Vec<(f64, f64)> = (0..n_theta)
        .map(|t| {
            let rad = (t as f64).to_radians();
            (rad.cos(), rad.sin())
        })
        .collect();
    let mut accumulator = vec![0u32; n_theta * n_rho];
    for p in &points {
        for (t, (cos_t, sin_t)) in table.iter().enumerate() {
            let rho = p.col as f64 * cos_t + p.row as f64 * sin_t;
            let bin = (rho.round() as i64 + rho_max) as usize;
            accumulator[t * n_rho + bin] += 1;
        }
    }

    // Global peak; scan order (theta, then rho) breaks ties.
    let mut peak = (0usize, 0usize, 0u32);
    for t in 0..n_theta {
        for b in 0..n_rho {
            let v = accumulator[t * n_rho + b];
            if v > peak.2 {
                peak = (t, b, v);
            }
        }
    }
    let (t_peak, b_peak, _) = peak;
    let rho_peak = b_peak as i64 - rho_max;
    let (cos_t, sin_t) = table[t_peak];

    // Collect the pixels that voted into the peak cell, ordered along the
    // line direction.
    let mut on_line: Vec<(f64, PixelCoord)> = points
        .iter()
        .filter(|p| {
            let rho = p.col as f64 * cos_t + p.row as f64 * sin_t;
            rho.round() as i64 == rho_peak
        })
        .map(|p| {
            let along = -(p.col as f64) * sin_t + p.row as f64 * cos_t;
            (along, *p)
        })
        .collect();
    on_line.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    debug_assert!(!on_line.is_empty());

    // Longest run with bounded gaps.
    let mut best_range = (0usize, 0usize);
    let mut best_span = -1.0f64;
    let mut run_start = 0usize;
    for i in 1..=on_line.len() {
        let broken = i == on_line.len() || on_line[i].0 - on_line[i - 1].0 > cfg.gap_tolerance;
        if broken {
            let span = on_line[i - 1].0 - on_line[run_start].0;
            if span > best_span {
                best_span = span;
                best_range = (run_start, i - 1);
            }
            run_start = i;
        }
    }
    let start = on_line[best_range.0].1;
    let end = on_line[best_range.1].1;
    let length = (((end.row - start.row).pow(2) + (end.col - start.col).pow(2)) as f64).sqrt();
    Ok(LineSegment {
        start,
        end,
        rho: rho_peak as f64,
        theta_degrees: t_peak as f64,
        length,
    })
}

/// The removed piece of column and the pixels flanking it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutInfo {
    pub cut_col: usize,
    /// First zeroed row.
    pub cut_row_start: usize,
    /// Original values of the zeroed column rows, top to bottom.
    pub cutout: Vec<f32>,
    pub pixel1: PixelCoord,
    pub pixel2: PixelCoord,
}

/// Zero a short piece of the column at the segment midpoint (a 1-px-wide
/// cut local to the line), keeping the removed values in the cutout, and
/// pick one foreground pixel on each side of the cut near the line.
pub fn make_cut(
    map: &Raster2D,
    segment: &LineSegment,
    cfg: &BinarizeConfig,
) -> Result<(Raster2D, CutInfo)> {
    let mid = (segment.start.col + segment.end.col) as f64 / 2.0;
    let cut_col = mid.round() as i64;
    if cut_col < 1 || cut_col >= map.w() as i64 - 1 {
        return Err(Error::CutFailure(format!(
            "cut column {cut_col} leaves no flank inside the {}-wide image",
            map.w()
        )));
    }
    let cut_col = cut_col as usize;

    let broad = map.threshold(cfg.th_low);
    let flank = |col: usize| -> Result<PixelCoord> {
        let line_row = segment.row_at_col(col as i32);
        let mut best: Option<(f64, PixelCoord)> = None;
        for row in 0..map.h() {
            if !broad.get(row, col) {
                continue;
            }
            let d = (row as f64 - line_row).abs();
            if d <= cfg.flank_rows as f64 && best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                best = Some((d, PixelCoord::new(row as i32, col as i32)));
            }
        }
        best.map(|(_, p)| p).ok_or_else(|| {
            Error::CutFailure(format!(
                "no foreground within {} rows of the line in column {col}",
                cfg.flank_rows
            ))
        })
    };
    let pixel1 = flank(cut_col - 1)?;
    let pixel2 = flank(cut_col + 1)?;

    let line_row = segment.row_at_col(cut_col as i32).round() as i64;
    let row_start = (line_row - cfg.cut_half_height as i64).max(0) as usize;
    let row_end = (line_row + cfg.cut_half_height as i64).min(map.h() as i64 - 1) as usize;
    let mut open = map.clone();
    let mut cutout = Vec::with_capacity(row_end - row_start + 1);
    for row in row_start..=row_end {
        cutout.push(map.get(row, cut_col));
        open.set(row, cut_col, 0.0);
    }
    Ok((
        open,
        CutInfo {
            cut_col,
            cut_row_start: row_start,
            cutout,
            pixel1,
            pixel2,
        },
    ))
}

/// Write the cutout back; exact inverse of the cut.
pub fn restore_cut(open: &Raster2D, cut: &CutInfo) -> Raster2D {
    let mut out = open.clone();
    for (i, &v) in cut.cutout.iter().enumerate() {
        out.set(cut.cut_row_start + i, cut.cut_col, v);
    }
    out
}

/// Search downward from the map maximum for the first (highest) threshold
/// at which both flank pixels are foreground and 8-connected.
pub fn find_closing_threshold(
    open: &Raster2D,
    pixel1: PixelCoord,
    pixel2: PixelCoord,
    cfg: &BinarizeConfig,
) -> Result<(f32, usize)> {
    if pixel1 == pixel2 {
        return Err(Error::invalid("flank pixels must differ"));
    }
    let mut th = open.max_value();
    let mut iterations = 0usize;
    while th > 0.0 {
        let binary = open.threshold(th);
        if same_component(&binary, pixel1, pixel2) {
            return Ok((th, iterations));
        }
        th -= cfg.delta_th;
        iterations += 1;
    }
    Err(Error::NoClosure(format!(
        "flanks never reconnect above threshold 0 ({iterations} steps)"
    )))
}

#[derive(Debug, Clone, Serialize)]
pub struct BinarizeReport {
    pub segment: LineSegment,
    pub cut_col: usize,
    pub pixel1: PixelCoord,
    pub pixel2: PixelCoord,
    pub threshold: f32,
    pub search_iterations: usize,
}

/// The full binarization: longest line, cut, threshold search, restore,
/// threshold, thin, clean.
pub fn binarize_pipeline(
    map: &Raster2D,
    cfg: &BinarizeConfig,
) -> Result<(ClosedContour, BinarizeReport)> {
    cfg.validate()?;
    let segment = hough_longest_line(map, cfg)?;
    let (open, cut) = make_cut(map, &segment, cfg)?;
    let (threshold, search_iterations) =
        find_closing_threshold(&open, cut.pixel1, cut.pixel2, cfg)?;
    let closed_map = restore_cut(&open, &cut);
    let binary = fill_small_holes(&closed_map.threshold(threshold), cfg.fill_hole_area);
    let thinned = thin(&binary);
    let contour = clean(&thinned, cfg.prune_cap)?;
    Ok((
        contour,
        BinarizeReport {
            cut_col: cut.cut_col,
            pixel1: cut.pixel1,
            pixel2: cut.pixel2,
            threshold,
            search_iterations,
            segment,
        },
    ))
}
