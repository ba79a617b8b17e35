//! Swarm contour tracing for object contour completion.
//!
//! Input: an RGB image plus a soft object-contour probability map. A swarm
//! of learned tracers walks along the probable contour; their summed paths
//! form a grayscale accumulation map which is then opened at its longest
//! straight line, re-closed at the highest possible threshold, thinned and
//! cleaned into a single closed, 1-pixel-wide binary object contour. From
//! that contour a segmentation mask is cut out and scored.
//!
//! Pipeline stages (each with a CLI subcommand in `linewalk-cli`):
//!
//! 1. **synth** – procedural scene generator (image, ground truth, softmap).
//! 2. **gen-labels** – contour-following training labels from ground truth.
//! 3. **train** – from-scratch regression CNN (direction predictor).
//! 4. **trace** – a single tracer walk.
//! 5. **complete** – the full tracer swarm, both traversal passes.
//! 6. **binarize** – accumulation map to closed 1-px binary contour.
//! 7. **eval** – precision / recall / IoU of the cut-out mask.

pub mod binarize;
pub mod completion;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod labels;
pub mod morphology;
pub mod net;
pub mod predictor;
pub mod raster;
pub mod synth;
pub mod tracer;

pub use error::{Error, Result};
pub use geometry::{angle_to_offset, offset_to_angle, ring_offsets, wrap_angle, Angle, PixelCoord};
pub use raster::{extract_oriented_patch, stack_inputs, BinaryMask, InputStack, Patch, Raster2D, RgbRaster};

/// Cap the global worker pool. Call once, before any parallel work.
/// Returns an error if the pool was already initialized.
pub fn init_thread_pool(threads: usize) -> std::result::Result<(), rayon::ThreadPoolBuildError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
}
