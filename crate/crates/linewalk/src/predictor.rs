//! Direction predictors behind the tracer: the trained network, a
//! ground-truth oracle (test double sharing the label definition), and a
//! non-learned structure-tensor baseline.

use crate::error::Result;
use crate::geometry::{offset_to_angle, Angle};
use crate::labels::ContourChain;
use crate::net::{infer_raw, WeightsBundle};
use crate::raster::{Patch, PATCH_SIDE};
use crate::tracer::TracerState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictorKind {
    Cnn,
    Oracle,
    Ridge,
}

impl std::str::FromStr for PredictorKind {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(PredictorKind::Cnn),
            "oracle" => Ok(PredictorKind::Oracle),
            "ridge" => Ok(PredictorKind::Ridge),
            other => Err(crate::error::Error::invalid(format!(
                "unknown predictor kind: {other}"
            ))),
        }
    }
}

/// Batch direction prediction: given one patch and tracer state per live
/// tracer, return one relative direction change per tracer.
pub trait DirectionPredictor: Sync {
    fn kind(&self) -> PredictorKind;

    fn predict(&self, patches: &[Patch], states: &[TracerState]) -> Result<Vec<Angle>>;
}

/// The trained regression network. Raw outputs are rescaled by
/// `label_scale` degrees and wrapped.
pub struct CnnPredictor {
    weights: WeightsBundle,
    label_scale: f64,
}

impl CnnPredictor {
    pub fn new(weights: WeightsBundle, label_scale: f64) -> Self {
        CnnPredictor {
            weights,
            label_scale,
        }
    }

    pub fn weights(&self) -> &WeightsBundle {
        &self.weights
    }
}

impl DirectionPredictor for CnnPredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Cnn
    }

    fn predict(&self, patches: &[Patch], _states: &[TracerState]) -> Result<Vec<Angle>> {
        let raw = infer_raw(&self.weights, patches)?;
        Ok(raw
            .into_iter()
            .map(|v| Angle::wrap(v * self.label_scale))
            .collect())
    }
}

/// Ground-truth oracle: finds the chain pixel nearest the tracer, looks
/// three chain pixels ahead, and returns the direction from the tracer to
/// that lookahead pixel relative to the current heading.
///
/// For a tracer sitting on the chain this equals the label definition
/// (the chain's own 3-pixel lookahead direction). Off the chain it aims
/// back at the contour: a predictor that only ever reports the chain
/// tangent diverges under the 8-direction step quantization, because on a
/// generic slope every step rounds to the same ring offset and the
/// sideways error never corrects.
pub struct OraclePredictor {
    chain: ContourChain,
}

impl OraclePredictor {
    pub fn new(chain: ContourChain) -> Self {
        OraclePredictor { chain }
    }

    pub fn predict_one(&self, state: &TracerState) -> Angle {
        let i = self.chain.nearest_index(state.cp);
        let target = self.chain.at(i + crate::labels::LOOKAHEAD);
        let aim = if target == state.cp {
            // Degenerate only for very short chains.
            self.chain.lookahead_direction(i)
        } else {
            offset_to_angle(target.row - state.cp.row, target.col - state.cp.col)
                .expect("target differs from tracer position")
        };
        Angle::wrap(aim.diff(state.heading))
    }

    pub fn chain(&self) -> &ContourChain {
        &self.chain
    }
}

impl DirectionPredictor for OraclePredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Oracle
    }

    fn predict(&self, _patches: &[Patch], states: &[TracerState]) -> Result<Vec<Angle>> {
        Ok(states.iter().map(|s| self.predict_one(s)).collect())
    }
}

/// Structure-tensor baseline: the dominant ridge orientation of the
/// patch's soft-map channel, reported relative to the canonical east
/// heading (so values lie in (-90, 90]).
pub struct RidgePredictor;

impl RidgePredictor {
    pub fn predict_one(patch: &Patch) -> Angle {
        // Sobel gradients on the soft-map channel (the built-in smoothing
        // tames staircase aliasing of thin ridges), weighted toward the
        // patch center.
        let ch = 3;
        let c = (PATCH_SIDE / 2) as f64;
        let at = |r: usize, col: usize| patch.get(ch, r, col) as f64;
        let mut jxx = 0.0f64;
        let mut jxy = 0.0f64;
        let mut jyy = 0.0f64;
        for r in 1..PATCH_SIDE - 1 {
            for col in 1..PATCH_SIDE - 1 {
                let gx = (at(r - 1, col + 1) + 2.0 * at(r, col + 1) + at(r + 1, col + 1)
                    - at(r - 1, col - 1)
                    - 2.0 * at(r, col - 1)
                    - at(r + 1, col - 1))
                    / 8.0;
                let gy = (at(r + 1, col - 1) + 2.0 * at(r + 1, col) + at(r + 1, col + 1)
                    - at(r - 1, col - 1)
                    - 2.0 * at(r - 1, col)
                    - at(r - 1, col + 1))
                    / 8.0;
                let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                let w = (-d2 / (2.0 * 9.0)).exp();
                jxx += w * gx * gx;
                jxy += w * gx * gy;
                jyy += w * gy * gy;
            }
        }
        if jxx + jyy < 1e-12 {
            // Flat patch: no orientation information.
            return Angle::wrap(0.0);
        }
        // Dominant gradient direction (mod 180); the ridge runs
        // perpendicular to it.
        let phi = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
        let mut line = phi.to_degrees() + 90.0;
        // Report the representative closest to east.
        while line > 90.0 {
            line -= 180.0;
        }
        while line <= -90.0 {
            line += 180.0;
        }
        Angle::wrap(line)
    }
}

impl DirectionPredictor for RidgePredictor {
    fn kind(&self) -> PredictorKind {
        PredictorKind::Ridge
    }

    fn predict(&self, patches: &[Patch], _states: &[TracerState]) -> Result<Vec<Angle>> {
        Ok(patches.iter().map(Self::predict_one).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelCoord;
    use crate::labels::{make_label, trace_gt_chain, LOOKAHEAD};
    use crate::raster::{stack_inputs, BinaryMask, Raster2D, RgbRaster};

    fn ridge_patch(angle_deg: f64) -> Patch {
        // A straight bright ridge (Gaussian profile) through the patch
        // center at the given clockwise angle from east.
        let mut p = Patch::zeros();
        let (s, c) = angle_deg.to_radians().sin_cos();
        let mid = (PATCH_SIDE / 2) as f64;
        for r in 0..PATCH_SIDE {
            for col in 0..PATCH_SIDE {
                let y = r as f64 - mid;
                let x = col as f64 - mid;
                // Perpendicular distance to the line through the origin.
                let d = x * s - y * c;
                let v = (-d * d / (2.0 * 1.2 * 1.2)).exp();
                p.set(3, r, col, v as f32);
            }
        }
        p
    }

    #[test]
    fn ridge_reads_horizontal_line_as_zero() {
        let a = RidgePredictor::predict_one(&ridge_patch(0.0));
        assert!(a.degrees().abs() < 5.0, "got {}", a.degrees());
    }

    #[test]
    fn ridge_reads_30_degree_line() {
        let a = RidgePredictor::predict_one(&ridge_patch(30.0));
        assert!((a.degrees() - 30.0).abs() < 5.0, "got {}", a.degrees());
        let b = RidgePredictor::predict_one(&ridge_patch(-45.0));
        assert!((b.degrees() + 45.0).abs() < 5.0, "got {}", b.degrees());
    }

    #[test]
    fn ridge_returns_zero_on_flat_patch() {
        let a = RidgePredictor::predict_one(&Patch::zeros());
        assert_eq!(a.degrees(), 0.0);
    }

    fn square_ring_mask(h: usize, w: usize, top: i32, left: i32, side: i32) -> BinaryMask {
        let mut m = BinaryMask::new(h, w);
        for i in 0..side {
            m.set(top as usize, (left + i) as usize, true);
            m.set((top + side - 1) as usize, (left + i) as usize, true);
            m.set((top + i) as usize, left as usize, true);
            m.set((top + i) as usize, (left + side - 1) as usize, true);
        }
        m
    }

    #[test]
    fn oracle_on_straight_segment_with_aligned_heading_is_zero() {
        let m = square_ring_mask(30, 30, 5, 5, 16);
        let chain = trace_gt_chain(&m).unwrap();
        let oracle = OraclePredictor::new(chain);
        let state = TracerState {
            cp: PixelCoord::new(5, 12),
            heading: Angle::wrap(0.0),
        };
        assert_eq!(oracle.predict_one(&state).degrees(), 0.0);
    }

    #[test]
    fn oracle_compensates_heading_offset() {
        let m = square_ring_mask(30, 30, 5, 5, 16);
        let chain = trace_gt_chain(&m).unwrap();
        let oracle = OraclePredictor::new(chain);
        let state = TracerState {
            cp: PixelCoord::new(5, 12),
            heading: Angle::wrap(10.0),
        };
        assert_eq!(oracle.predict_one(&state).degrees(), -10.0);
    }

    #[test]
    fn oracle_turns_90_at_square_corner() {
        let m = square_ring_mask(30, 30, 5, 5, 16);
        let chain = trace_gt_chain(&m).unwrap();
        let oracle = OraclePredictor::new(chain.clone());
        // Eastbound on the top edge with the corner three pixels ahead.
        let state = TracerState {
            cp: PixelCoord::new(5, 20),
            heading: Angle::wrap(0.0),
        };
        let a = oracle.predict_one(&state);
        // Direction from the corner three ahead turns down the right edge.
        assert!(a.degrees() > 44.0 && a.degrees() <= 91.0, "got {}", a.degrees());
    }

    #[test]
    fn oracle_agrees_with_labels_at_label_sites() {
        let m = square_ring_mask(32, 32, 6, 6, 14);
        let chain = trace_gt_chain(&m).unwrap();
        let stack =
            stack_inputs(&RgbRaster::new(32, 32), &Raster2D::new(32, 32)).unwrap();
        let oracle = OraclePredictor::new(chain.clone());
        for i in 0..chain.len() {
            let rec = make_label(&chain, &stack, i, 0).unwrap();
            let state = TracerState {
                cp: chain.at(i + LOOKAHEAD),
                heading: chain.lookahead_direction(i),
            };
            let predicted = oracle.predict_one(&state);
            // Records store the label in f32; compare at that precision.
            assert!(
                (predicted.degrees() - rec.alpha_label_degrees as f64).abs() < 1e-3,
                "index {i}: {} vs {}",
                predicted.degrees(),
                rec.alpha_label_degrees
            );
        }
    }
}
