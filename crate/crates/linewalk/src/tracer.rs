//! A single contour tracer: crop and rotate its view, ask the predictor
//! for a direction change, take a discrete ring step, repeat.

use crate::error::Result;
use crate::geometry::{angle_to_offset, offset_to_angle, raster_line, Angle, PixelCoord};
use crate::predictor::DirectionPredictor;
use crate::raster::{extract_oriented_patch, InputStack};

/// A tracer's moving view: center pixel and travel heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracerState {
    pub cp: PixelCoord,
    pub heading: Angle,
}

/// Which traversal pass a path came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassOrigin {
    Clockwise,
    AnticlockwiseFlipped,
}

/// How a walk ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEnd {
    Completed,
    LeftImage,
}

/// The ordered pixels a tracer visited, including the intermediate pixels
/// of 2- and 3-pixel steps, so consecutive entries are 8-adjacent.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub pixels: Vec<PixelCoord>,
    pub origin: PassOrigin,
    pub end: TraceEnd,
}

/// One discrete step: add the predicted change to the heading, snap to the
/// requested ring, and re-derive the heading from the offset actually
/// taken.
pub fn step(state: TracerState, alpha: Angle, step_size: u8) -> TracerState {
    let candidate = state.heading.add_degrees(alpha.degrees());
    let (drow, dcol) = angle_to_offset(candidate, step_size);
    TracerState {
        cp: state.cp.offset(drow, dcol),
        heading: offset_to_angle(drow, dcol).expect("ring offsets are nonzero"),
    }
}

/// Walk up to `steps` iterations from `start`, querying the predictor each
/// time. Stops early (recorded in the trace) when the tracer leaves the
/// image. `step_size_for` supplies the ring radius per iteration.
pub fn walk(
    stack: &InputStack,
    start: TracerState,
    steps: usize,
    predictor: &dyn DirectionPredictor,
    mut step_size_for: impl FnMut(usize) -> u8,
) -> Result<PathTrace> {
    let mut state = start;
    let mut pixels = vec![start.cp];
    let mut end = TraceEnd::Completed;
    for i in 0..steps {
        if !state.cp.in_bounds(stack.h(), stack.w()) {
            end = TraceEnd::LeftImage;
            break;
        }
        let patch = extract_oriented_patch(stack, state.cp, state.heading)?;
        let alpha = predictor.predict(&[patch], &[state])?[0];
        let next = step(state, alpha, step_size_for(i));
        pixels.extend(raster_line(state.cp, next.cp));
        state = next;
    }
    if end == TraceEnd::Completed && !state.cp.in_bounds(stack.h(), stack.w()) {
        end = TraceEnd::LeftImage;
    }
    Ok(PathTrace {
        pixels,
        origin: PassOrigin::Clockwise,
        end,
    })
}
