//! Pixel coordinates, heading angles, and the discrete direction rings.
//!
//! Conventions used everywhere in this crate:
//!
//! - `row` grows downward, `col` grows rightward (display orientation).
//! - Angles are degrees in the half-open interval `(-180, 180]`.
//! - 0 deg points east (+col); positive angles rotate clockwise on screen,
//!   i.e. toward +row. So 90 deg is south and -90 deg is north.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Integer pixel position. May lie outside the image; use
/// [`PixelCoord::in_bounds`] to check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelCoord {
    pub row: i32,
    pub col: i32,
}

impl PixelCoord {
    pub fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn in_bounds(&self, h: usize, w: usize) -> bool {
        self.row >= 0 && self.col >= 0 && (self.row as usize) < h && (self.col as usize) < w
    }

    pub fn offset(&self, drow: i32, dcol: i32) -> Self {
        Self::new(self.row + drow, self.col + dcol)
    }

    /// Chebyshev (chessboard) distance to another pixel.
    pub fn chebyshev(&self, other: &PixelCoord) -> i32 {
        (self.row - other.row).abs().max((self.col - other.col).abs())
    }
}

/// Heading angle in degrees, always wrapped to `(-180, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angle {
    degrees: f64,
}

impl Angle {
    /// Wrap an arbitrary finite degree value into `(-180, 180]`.
    pub fn wrap(degrees: f64) -> Angle {
        let mut d = degrees % 360.0;
        if d <= -180.0 {
            d += 360.0;
        } else if d > 180.0 {
            d -= 360.0;
        }
        // The remainder above can leave -180.0 exactly (e.g. from -540).
        if d == -180.0 {
            d = 180.0;
        }
        // Normalize the signed zero so wrapped angles compare bitwise.
        if d == 0.0 {
            d = 0.0;
        }
        Angle { degrees: d }
    }

    pub fn degrees(&self) -> f64 {
        self.degrees
    }

    pub fn radians(&self) -> f64 {
        self.degrees.to_radians()
    }

    /// Wrapped sum of this angle and a degree delta.
    pub fn add_degrees(&self, delta: f64) -> Angle {
        Angle::wrap(self.degrees + delta)
    }

    /// Signed wrapped difference `self - other`, in `(-180, 180]`.
    pub fn diff(&self, other: Angle) -> f64 {
        Angle::wrap(self.degrees - other.degrees).degrees
    }
}

/// Wrap a degree value into `(-180, 180]`, rejecting non-finite input.
pub fn wrap_angle(degrees: f64) -> Result<Angle> {
    if !degrees.is_finite() {
        return Err(Error::invalid(format!("angle must be finite, got {degrees}")));
    }
    Ok(Angle::wrap(degrees))
}

/// All offsets on the Chebyshev ring of the given radius, i.e. every
/// `(drow, dcol)` with `max(|drow|, |dcol|) == step`. Yields 8, 16, 24
/// offsets for steps 1, 2, 3.
pub fn ring_offsets(step: u8) -> Vec<(i32, i32)> {
    assert!((1..=3).contains(&step), "step must be 1, 2 or 3");
    let s = step as i32;
    let mut out = Vec::with_capacity(8 * step as usize);
    for drow in -s..=s {
        for dcol in -s..=s {
            if drow.abs().max(dcol.abs()) == s {
                out.push((drow, dcol));
            }
        }
    }
    out
}

/// Direction angle of an offset, clockwise-positive with 0 deg = east.
pub fn offset_to_angle(drow: i32, dcol: i32) -> Result<Angle> {
    if drow == 0 && dcol == 0 {
        return Err(Error::invalid("zero offset has no direction"));
    }
    Ok(Angle::wrap((drow as f64).atan2(dcol as f64).to_degrees()))
}

/// The ring offset whose direction is angularly closest to `heading`.
///
/// Ties are broken toward the smaller (more counterclockwise) relative
/// angle so the mapping is deterministic.
pub fn angle_to_offset(heading: Angle, step: u8) -> (i32, i32) {
    let mut best: Option<((i32, i32), f64, f64)> = None;
    for (drow, dcol) in ring_offsets(step) {
        let a = offset_to_angle(drow, dcol).expect("ring offsets are nonzero");
        let signed = a.diff(heading);
        let abs = signed.abs();
        let better = match best {
            None => true,
            Some((_, best_abs, best_signed)) => {
                abs < best_abs - 1e-12
                    || ((abs - best_abs).abs() <= 1e-12 && signed < best_signed)
            }
        };
        if better {
            best = Some(((drow, dcol), abs, signed));
        }
    }
    best.expect("ring is never empty").0
}

/// 8-connected line rasterization from `a` to `b`, excluding `a` and
/// including `b`. Used to fill in the pixels skipped by 2- and 3-pixel
/// steps so stored paths stay 8-adjacent.
pub fn raster_line(a: PixelCoord, b: PixelCoord) -> Vec<PixelCoord> {
    let mut out = Vec::new();
    let (mut row, mut col) = (a.row, a.col);
    let drow = (b.row - a.row).signum();
    let dcol = (b.col - a.col).signum();
    let nrow = (b.row - a.row).abs();
    let ncol = (b.col - a.col).abs();
    // Walk the major axis, accumulating the minor axis error.
    let steps = nrow.max(ncol);
    let mut err = 0i32;
    for _ in 0..steps {
        if nrow >= ncol {
            row += drow;
            err += ncol;
            if 2 * err >= nrow {
                col += dcol;
                err -= nrow;
            }
        } else {
            col += dcol;
            err += nrow;
            if 2 * err >= ncol {
                row += drow;
                err -= ncol;
            }
        }
        out.push(PixelCoord::new(row, col));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_basic_cases() {
        assert_eq!(wrap_angle(190.0).unwrap().degrees(), -170.0);
        assert_eq!(wrap_angle(-180.0).unwrap().degrees(), 180.0);
        assert_eq!(wrap_angle(0.0).unwrap().degrees(), 0.0);
        assert_eq!(wrap_angle(180.0).unwrap().degrees(), 180.0);
        assert_eq!(wrap_angle(360.0).unwrap().degrees(), 0.0);
        assert_eq!(wrap_angle(-540.0).unwrap().degrees(), 180.0);
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn wrap_is_idempotent_and_periodic() {
        let mut a = -720.0;
        while a <= 720.0 {
            let w = Angle::wrap(a);
            assert_eq!(Angle::wrap(w.degrees()).degrees(), w.degrees(), "a={a}");
            // Shifting by a period is exact only up to float rounding.
            let shifted = Angle::wrap(a + 360.0).degrees();
            assert!((shifted - w.degrees()).abs() < 1e-9, "a={a}");
            let d = w.degrees();
            assert!(d > -180.0 && d <= 180.0, "a={a} wrapped to {d}");
            a += 7.3;
        }
    }

    #[test]
    fn ring_sizes_are_8_16_24() {
        assert_eq!(ring_offsets(1).len(), 8);
        assert_eq!(ring_offsets(2).len(), 16);
        assert_eq!(ring_offsets(3).len(), 24);
        for step in 1..=3u8 {
            for (dr, dc) in ring_offsets(step) {
                assert_eq!(dr.abs().max(dc.abs()), step as i32);
            }
        }
    }

    #[test]
    fn offset_angles_match_convention() {
        assert_eq!(offset_to_angle(0, 1).unwrap().degrees(), 0.0);
        assert_eq!(offset_to_angle(1, 1).unwrap().degrees(), 45.0);
        assert_eq!(offset_to_angle(-1, 0).unwrap().degrees(), -90.0);
        assert_eq!(offset_to_angle(0, -1).unwrap().degrees(), 180.0);
        assert!(offset_to_angle(0, 0).is_err());
    }

    #[test]
    fn angle_to_offset_examples() {
        assert_eq!(angle_to_offset(Angle::wrap(0.0), 1), (0, 1));
        assert_eq!(angle_to_offset(Angle::wrap(90.0), 1), (1, 0));
        // Brute force confirms (2, 2) is the radius-2 offset nearest 45 deg.
        assert_eq!(angle_to_offset(Angle::wrap(45.0), 2), (2, 2));
    }

    #[test]
    fn angle_to_offset_tie_breaks_counterclockwise() {
        // Exactly between east (0) and southeast (45): pick the smaller angle.
        assert_eq!(angle_to_offset(Angle::wrap(22.5), 1), (0, 1));
    }

    /// Brute-force minimality over the whole ring, for all integer headings.
    #[test]
    fn angle_to_offset_is_minimal_over_ring() {
        for step in 1..=3u8 {
            for deg in -180..=180 {
                let heading = Angle::wrap(deg as f64);
                let (dr, dc) = angle_to_offset(heading, step);
                let chosen = offset_to_angle(dr, dc).unwrap().diff(heading).abs();
                let best = ring_offsets(step)
                    .into_iter()
                    .map(|(r, c)| offset_to_angle(r, c).unwrap().diff(heading).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    (chosen - best).abs() < 1e-9,
                    "step {step} heading {deg}: chose {chosen}, best {best}"
                );
                if step == 1 {
                    // 8 directions 45 deg apart: never more than 22.5 off.
                    assert!(chosen <= 22.5 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn raster_line_is_8_connected_and_hits_target() {
        let cases = [
            ((0, 0), (0, 3)),
            ((0, 0), (2, 3)),
            ((5, 5), (2, 3)),
            ((0, 0), (-3, 1)),
            ((0, 0), (3, 3)),
            ((1, 1), (1, 1)),
        ];
        for ((ar, ac), (br, bc)) in cases {
            let a = PixelCoord::new(ar, ac);
            let b = PixelCoord::new(br, bc);
            let line = raster_line(a, b);
            if a == b {
                assert!(line.is_empty());
                continue;
            }
            assert_eq!(*line.last().unwrap(), b);
            let mut prev = a;
            for p in &line {
                assert_eq!(prev.chebyshev(p), 1, "{a:?} -> {b:?} at {p:?}");
                prev = *p;
            }
        }
    }
}
