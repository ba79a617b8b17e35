//! Raster grids and oriented patch extraction.
//!
//! All value rasters hold `f32` in `[0, 1]`; 8-bit inputs are divided by 255
//! on load. The network input is a 4-channel stack (R, G, B, soft contour
//! probability) and tracers look at it through rotated 13x13 patches.

use crate::error::{Error, Result};
use crate::geometry::{Angle, PixelCoord};

/// Patch side length expected by the direction predictor.
pub const PATCH_SIDE: usize = 13;
/// Channel count of the stacked input (RGB + soft contour map).
pub const STACK_CHANNELS: usize = 4;
/// Side of the generous first crop. Smallest odd size covering every
/// rotation of the 13x13 target plus one pixel of bilinear support.
pub const CROP_SIDE: usize = 21;

/// Single-channel raster of `f32` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster2D {
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Raster2D {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![0.0; h * w],
        }
    }

    pub fn from_vec(h: usize, w: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != h * w {
            return Err(Error::invalid(format!(
                "raster data length {} does not match {h}x{w}",
                data.len()
            )));
        }
        Ok(Self { h, w, data })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.w + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[row * self.w + col] = v;
    }

    /// Value at a possibly out-of-bounds coordinate, zero outside.
    #[inline]
    pub fn get_or_zero(&self, p: PixelCoord) -> f32 {
        if p.in_bounds(self.h, self.w) {
            self.get(p.row as usize, p.col as usize)
        } else {
            0.0
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn max_value(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    /// Left-right mirror (column `c` maps to `w - 1 - c`).
    pub fn mirror_cols(&self) -> Raster2D {
        let mut out = Raster2D::new(self.h, self.w);
        for r in 0..self.h {
            for c in 0..self.w {
                out.set(r, self.w - 1 - c, self.get(r, c));
            }
        }
        out
    }

    /// Threshold into a binary mask (`value >= th`).
    pub fn threshold(&self, th: f32) -> BinaryMask {
        let mut m = BinaryMask::new(self.h, self.w);
        for r in 0..self.h {
            for c in 0..self.w {
                if self.get(r, c) >= th {
                    m.set(r, c, true);
                }
            }
        }
        m
    }
}

/// Boolean raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    h: usize,
    w: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![false; h * w],
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.w + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: bool) {
        self.data[row * self.w + col] = v;
    }

    #[inline]
    pub fn get_coord(&self, p: PixelCoord) -> bool {
        p.in_bounds(self.h, self.w) && self.get(p.row as usize, p.col as usize)
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn iter_set(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        (0..self.h).flat_map(move |r| {
            (0..self.w).filter_map(move |c| {
                if self.get(r, c) {
                    Some(PixelCoord::new(r as i32, c as i32))
                } else {
                    None
                }
            })
        })
    }

    /// Number of set 8-neighbors of `p`.
    pub fn neighbor_count(&self, p: PixelCoord) -> usize {
        let mut n = 0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                if self.get_coord(p.offset(dr, dc)) {
                    n += 1;
                }
            }
        }
        n
    }
}

/// RGB raster: three `[0, 1]` channel planes of identical size.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbRaster {
    pub channels: [Raster2D; 3],
}

impl RgbRaster {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            channels: [Raster2D::new(h, w), Raster2D::new(h, w), Raster2D::new(h, w)],
        }
    }

    pub fn h(&self) -> usize {
        self.channels[0].h()
    }

    pub fn w(&self) -> usize {
        self.channels[0].w()
    }
}

/// The h x w x 4 input: RGB plus the soft contour map as channel 3.
#[derive(Debug, Clone, PartialEq)]
pub struct InputStack {
    channels: [Raster2D; STACK_CHANNELS],
}

impl InputStack {
    pub fn h(&self) -> usize {
        self.channels[0].h()
    }

    pub fn w(&self) -> usize {
        self.channels[0].w()
    }

    pub fn channel(&self, i: usize) -> &Raster2D {
        &self.channels[i]
    }

    /// The soft contour probability plane.
    pub fn softmap(&self) -> &Raster2D {
        &self.channels[3]
    }

    /// Left-right mirror of all four channels.
    pub fn mirror_cols(&self) -> InputStack {
        InputStack {
            channels: [
                self.channels[0].mirror_cols(),
                self.channels[1].mirror_cols(),
                self.channels[2].mirror_cols(),
                self.channels[3].mirror_cols(),
            ],
        }
    }
}

/// Concatenate an RGB image and its soft contour map into one 4-channel
/// stack. Both inputs must share the same dimensions.
pub fn stack_inputs(image: &RgbRaster, softmap: &Raster2D) -> Result<InputStack> {
    if image.h() != softmap.h() || image.w() != softmap.w() {
        return Err(Error::invalid(format!(
            "image {}x{} and softmap {}x{} differ in shape",
            image.h(),
            image.w(),
            softmap.h(),
            softmap.w()
        )));
    }
    Ok(InputStack {
        channels: [
            image.channels[0].clone(),
            image.channels[1].clone(),
            image.channels[2].clone(),
            softmap.clone(),
        ],
    })
}

/// A 13x13x4 view of the stack, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    data: Vec<f32>,
}

impl Patch {
    pub const LEN: usize = PATCH_SIDE * PATCH_SIDE * STACK_CHANNELS;

    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; Self::LEN],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::LEN {
            return Err(Error::invalid(format!(
                "patch needs {} values, got {}",
                Self::LEN,
                data.len()
            )));
        }
        Ok(Self { data })
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * PATCH_SIDE + row) * PATCH_SIDE + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, v: f32) {
        self.data[(channel * PATCH_SIDE + row) * PATCH_SIDE + col] = v;
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Extract the 13x13x4 patch centered at `cp`, rotated so that `heading`
/// maps to east.
///
/// Pipeline: crop a 21x21 window centered at `cp` (zero-padded outside the
/// image), rotate about the window center by `-heading` with bilinear
/// interpolation, crop the central 13x13. A heading of zero reduces to a
/// plain center crop with no interpolation error.
pub fn extract_oriented_patch(
    stack: &InputStack,
    cp: PixelCoord,
    heading: Angle,
) -> Result<Patch> {
    if !cp.in_bounds(stack.h(), stack.w()) {
        return Err(Error::invalid(format!(
            "center pixel ({}, {}) outside {}x{} image",
            cp.row,
            cp.col,
            stack.h(),
            stack.w()
        )));
    }

    let half_crop = (CROP_SIDE / 2) as i32;
    let half_patch = (PATCH_SIDE / 2) as i32;

    // Generous crop, zero-padded.
    let mut window = [[[0.0f32; CROP_SIDE]; CROP_SIDE]; STACK_CHANNELS];
    for (ch, plane) in window.iter_mut().enumerate() {
        let src = stack.channel(ch);
        for (wr, line) in plane.iter_mut().enumerate() {
            for (wc, cell) in line.iter_mut().enumerate() {
                let p = cp.offset(wr as i32 - half_crop, wc as i32 - half_crop);
                *cell = src.get_or_zero(p);
            }
        }
    }

    // Inverse mapping: a patch offset v comes from the window offset
    // rotated by +heading (clockwise-positive in y-down coordinates).
    let (sin_h, cos_h) = heading.radians().sin_cos();
    let sample = |plane: &[[f32; CROP_SIDE]; CROP_SIDE], y: f64, x: f64| -> f32 {
        // Bilinear sample in window-center coordinates, zero outside.
        let yw = y + half_crop as f64;
        let xw = x + half_crop as f64;
        let y0 = yw.floor();
        let x0 = xw.floor();
        let fy = (yw - y0) as f32;
        let fx = (xw - x0) as f32;
        let at = |r: i64, c: i64| -> f32 {
            if r < 0 || c < 0 || r >= CROP_SIDE as i64 || c >= CROP_SIDE as i64 {
                0.0
            } else {
                plane[r as usize][c as usize]
            }
        };
        let (r0, c0) = (y0 as i64, x0 as i64);
        let top = at(r0, c0) * (1.0 - fx) + at(r0, c0 + 1) * fx;
        let bot = at(r0 + 1, c0) * (1.0 - fx) + at(r0 + 1, c0 + 1) * fx;
        top * (1.0 - fy) + bot * fy
    };

    let mut patch = Patch::zeros();
    for ch in 0..STACK_CHANNELS {
        for pr in 0..PATCH_SIDE {
            for pc in 0..PATCH_SIDE {
                let vy = (pr as i32 - half_patch) as f64;
                let vx = (pc as i32 - half_patch) as f64;
                let sy = vx * sin_h + vy * cos_h;
                let sx = vx * cos_h - vy * sin_h;
                patch.set(ch, pr, pc, sample(&window[ch], sy, sx));
            }
        }
    }
    Ok(patch)
}
