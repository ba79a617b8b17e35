//! Raster file I/O: 8-bit grayscale and 24-bit RGB, PNG with PGM/PPM as a
//! fallback (format chosen by extension). 8-bit values map to `[0, 1]` by
//! dividing by 255.

use std::path::Path;

use image::{GrayImage, ImageFormat, RgbImage as ImgRgb};

use crate::error::{Error, Result};
use crate::raster::{BinaryMask, Raster2D, RgbRaster};

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    ImageFormat::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Load a grayscale raster, converting other color types if needed.
pub fn load_gray(path: impl AsRef<Path>) -> Result<Raster2D> {
    let img = open(path.as_ref())?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Raster2D::from_vec(h, w, data)
}

/// Load an RGB raster.
pub fn load_rgb(path: impl AsRef<Path>) -> Result<RgbRaster> {
    let img = open(path.as_ref())?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = RgbRaster::new(h, w);
    for (r, c, px) in img.enumerate_pixels().map(|(x, y, p)| (y as usize, x as usize, p)) {
        for ch in 0..3 {
            out.channels[ch].set(r, c, px[ch] as f32 / 255.0);
        }
    }
    Ok(out)
}

/// Load a binary mask: any pixel brighter than mid-gray counts as set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let gray = load_gray(path)?;
    Ok(gray.threshold(0.5))
}

fn save_image(path: &Path, img: image::DynamicImage) -> Result<()> {
    let fmt = format_for(path)?;
    img.save_with_format(path, fmt).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })
}

/// Save a grayscale raster, rounding values to 8 bits.
pub fn save_gray(path: impl AsRef<Path>, raster: &Raster2D) -> Result<()> {
    let mut img = GrayImage::new(raster.w() as u32, raster.h() as u32);
    for r in 0..raster.h() {
        for c in 0..raster.w() {
            let v = (raster.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(c as u32, r as u32, image::Luma([v]));
        }
    }
    save_image(path.as_ref(), img.into())
}

/// Save a binary mask as 0/255 grayscale.
pub fn save_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let mut img = GrayImage::new(mask.w() as u32, mask.h() as u32);
    for r in 0..mask.h() {
        for c in 0..mask.w() {
            let v = if mask.get(r, c) { 255 } else { 0 };
            img.put_pixel(c as u32, r as u32, image::Luma([v]));
        }
    }
    save_image(path.as_ref(), img.into())
}

/// Save a 24-bit RGB raster.
pub fn save_rgb(path: impl AsRef<Path>, raster: &RgbRaster) -> Result<()> {
    let mut img = ImgRgb::new(raster.w() as u32, raster.h() as u32);
    for r in 0..raster.h() {
        for c in 0..raster.w() {
            let px = [
                (raster.channels[0].get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8,
                (raster.channels[1].get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8,
                (raster.channels[2].get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            img.put_pixel(c as u32, r as u32, image::Rgb(px));
        }
    }
    save_image(path.as_ref(), img.into())
}
