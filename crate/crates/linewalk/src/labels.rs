//! Training-label generation: trace a ground-truth contour into a cyclic
//! clockwise chain, then sample 3-pixel-lookahead direction-change labels
//! with their oriented patches.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{angle_to_offset, offset_to_angle, Angle, PixelCoord};
use crate::morphology::trace_closed_curve;
use crate::raster::{extract_oriented_patch, BinaryMask, InputStack, Patch};

/// How many chain pixels ahead both the heading and the label look.
pub const LOOKAHEAD: usize = 3;

/// Cyclic clockwise ordering of a closed 1-px contour's pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContourChain {
    pixels: Vec<PixelCoord>,
}

impl ContourChain {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[PixelCoord] {
        &self.pixels
    }

    /// Pixel at a cyclic index.
    pub fn at(&self, i: usize) -> PixelCoord {
        self.pixels[i % self.pixels.len()]
    }

    /// Direction from chain index `i` to `i + LOOKAHEAD` (cyclic).
    pub fn lookahead_direction(&self, i: usize) -> Angle {
        let from = self.at(i);
        let to = self.at(i + LOOKAHEAD);
        offset_to_angle(to.row - from.row, to.col - from.col)
            .expect("distinct chain pixels 3 steps apart")
    }

    /// Index of the chain pixel nearest to `p` (squared Euclidean,
    /// lowest index on ties).
    pub fn nearest_index(&self, p: PixelCoord) -> usize {
        let mut best = (i64::MAX, 0usize);
        for (i, q) in self.pixels.iter().enumerate() {
            let dr = (q.row - p.row) as i64;
            let dc = (q.col - p.col) as i64;
            let d = dr * dr + dc * dc;
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Chebyshev distance from `p` to the nearest chain pixel.
    pub fn chebyshev_distance(&self, p: PixelCoord) -> i32 {
        self.pixels
            .iter()
            .map(|q| q.chebyshev(&p))
            .min()
            .expect("chain is nonempty")
    }

    /// The chain of the left-right mirrored scene, re-normalized to
    /// clockwise orientation (mirroring flips the traversal sense).
    pub fn mirror_cols(&self, w: usize) -> ContourChain {
        let mut pixels: Vec<PixelCoord> = self
            .pixels
            .iter()
            .map(|p| PixelCoord::new(p.row, w as i32 - 1 - p.col))
            .collect();
        pixels.reverse();
        let mut chain = ContourChain { pixels };
        if chain.signed_area() < 0.0 {
            chain.pixels.reverse();
        }
        chain
    }

    /// Signed polygon area in display coordinates (x = col, y = row);
    /// positive means clockwise on screen.
    pub fn signed_area(&self) -> f64 {
        let mut sum = 0.0f64;
        for i in 0..self.pixels.len() {
            let a = self.pixels[i];
            let b = self.pixels[(i + 1) % self.pixels.len()];
            sum += a.col as f64 * b.row as f64 - b.col as f64 * a.row as f64;
        }
        sum / 2.0
    }
}

/// Order the pixels of a closed 1-px 8-connected curve into a cyclic chain,
/// normalized to clockwise orientation via the signed-area test.
pub fn trace_gt_chain(gt_contour: &BinaryMask) -> Result<ContourChain> {
    let pixels = trace_closed_curve(gt_contour).map_err(Error::InvalidGroundTruth)?;
    let mut chain = ContourChain { pixels };
    if chain.signed_area() < 0.0 {
        chain.pixels.reverse();
    }
    Ok(chain)
}

/// One training sample: an oriented patch and the upcoming direction
/// change along the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub patch: Patch,
    pub alpha_label_degrees: f32,
    pub image_id: u32,
    pub chain_index: u32,
}

/// Build the label for chain index `i`: follow three pixels to fix the
/// heading, capture the oriented patch at the reached pixel, follow three
/// more to read off the direction change.
pub fn make_label(
    chain: &ContourChain,
    stack: &InputStack,
    i: usize,
    image_id: u32,
) -> Result<LabelRecord> {
    if chain.len() < 2 * LOOKAHEAD + 1 {
        return Err(Error::invalid(format!(
            "chain of {} pixels is too short for labeling",
            chain.len()
        )));
    }
    let alpha0 = chain.lookahead_direction(i);
    let cp = chain.at(i + LOOKAHEAD);
    let patch = extract_oriented_patch(stack, cp, alpha0)?;
    let alpha_next = chain.lookahead_direction(i + LOOKAHEAD);
    let alpha_label = Angle::wrap(alpha_next.diff(alpha0));
    Ok(LabelRecord {
        patch,
        alpha_label_degrees: alpha_label.degrees() as f32,
        image_id,
        chain_index: i as u32,
    })
}

/// 90/10 record split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabelRecord>,
    pub val: Vec<LabelRecord>,
    pub seed: u64,
}

/// Per-scene failure note from dataset generation.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SceneFailure {
    pub image_id: u32,
    pub reason: String,
}

#[derive(Debug)]
pub struct DatasetOutcome {
    pub split: DatasetSplit,
    pub failures: Vec<SceneFailure>,
}

/// Probability that a record's center pixel is displaced one pixel
/// perpendicular to the heading, with the patch recaptured there and the
/// label recomputed to aim from the displaced pixel at the lookahead
/// chain pixel. The displaced samples teach the predictor to steer back
/// onto the contour; a predictor that only reports the tangent locks into
/// one quantized step direction on generic slopes and drifts away.
const JITTER_PROB: f64 = 0.5;

fn scene_rng(seed: u64, image_id: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (image_id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Generate `per_image` records per scene at uniformly random chain
/// indices (with replacement) and split 90/10 per scene. Scenes with an
/// invalid ground truth are skipped and reported.
pub fn generate_dataset(
    scenes: &[(InputStack, BinaryMask)],
    per_image: usize,
    seed: u64,
    jitter: bool,
) -> Result<DatasetOutcome> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut failures = Vec::new();
    for (id, (stack, gt)) in scenes.iter().enumerate() {
        let image_id = id as u32;
        let chain = match trace_gt_chain(gt) {
            Ok(c) => c,
            Err(e) => {
                failures.push(SceneFailure {
                    image_id,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let mut rng = scene_rng(seed, image_id);
        let mut records = Vec::with_capacity(per_image);
        for _ in 0..per_image {
            let i = rng.gen_range(0..chain.len());
            let mut record = make_label(&chain, stack, i, image_id)?;
            if jitter && rng.gen_bool(JITTER_PROB) {
                let alpha0 = chain.lookahead_direction(i);
                let side = if rng.gen_bool(0.5) { 90.0 } else { -90.0 };
                let (dr, dc) = angle_to_offset(alpha0.add_degrees(side), 1);
                let displaced = chain.at(i + LOOKAHEAD).offset(dr, dc);
                if displaced.in_bounds(stack.h(), stack.w()) {
                    record.patch = extract_oriented_patch(stack, displaced, alpha0)?;
                    let target = chain.at(i + 2 * LOOKAHEAD);
                    if target != displaced {
                        let aim = offset_to_angle(
                            target.row - displaced.row,
                            target.col - displaced.col,
                        )
                        .expect("distinct pixels");
                        record.alpha_label_degrees = Angle::wrap(aim.diff(alpha0)).degrees() as f32;
                    }
                }
            }
            records.push(record);
        }
        // Exact 90/10 split per scene, order shuffled by the scene stream.
        let mut order: Vec<usize> = (0..records.len()).collect();
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let n_val = records.len() / 10;
        let mut records: Vec<Option<LabelRecord>> = records.into_iter().map(Some).collect();
        for (k, &idx) in order.iter().enumerate() {
            let rec = records[idx].take().expect("each index visited once");
            if k < n_val {
                val.push(rec);
            } else {
                train.push(rec);
            }
        }
    }
    if train.is_empty() && val.is_empty() {
        return Err(Error::invalid("no scene produced any label records"));
    }
    Ok(DatasetOutcome {
        split: DatasetSplit { train, val, seed },
        failures,
    })
}

// ---------------------------------------------------------------------------
// Dataset file format: header (magic, version, count, patch shape), then per
// record 13x13x4 LE f32, label f32 (degrees), image id u32, chain index u32.
// ---------------------------------------------------------------------------

const DATASET_MAGIC: &[u8; 8] = b"LWLABELS";
const DATASET_VERSION: u32 = 1;

pub fn save_records(records: &[LabelRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(DATASET_MAGIC).map_err(io_err)?;
    w.write_all(&DATASET_VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(records.len() as u64).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(crate::raster::PATCH_SIDE as u32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(crate::raster::STACK_CHANNELS as u32).to_le_bytes())
        .map_err(io_err)?;
    for rec in records {
        for v in rec.patch.data() {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
        w.write_all(&rec.alpha_label_degrees.to_le_bytes())
            .map_err(io_err)?;
        w.write_all(&rec.image_id.to_le_bytes()).map_err(io_err)?;
        w.write_all(&rec.chain_index.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_records(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let truncated = || Error::Format(format!("truncated dataset file {}", path.display()));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != DATASET_MAGIC {
        return Err(Error::Format("bad magic, not a dataset file".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| truncated())?;
    let version = u32::from_le_bytes(u32buf);
    if version != DATASET_VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version}"
        )));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf).map_err(|_| truncated())?;
    let count = u64::from_le_bytes(u64buf) as usize;
    r.read_exact(&mut u32buf).map_err(|_| truncated())?;
    let side = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf).map_err(|_| truncated())?;
    let channels = u32::from_le_bytes(u32buf) as usize;
    if side != crate::raster::PATCH_SIDE || channels != crate::raster::STACK_CHANNELS {
        return Err(Error::Format(format!(
            "dataset patch shape {side}x{side}x{channels} unsupported"
        )));
    }

    let mut records = Vec::with_capacity(count);
    let mut payload = vec![0u8; Patch::LEN * 4];
    for _ in 0..count {
        r.read_exact(&mut payload).map_err(|_| truncated())?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        r.read_exact(&mut u32buf).map_err(|_| truncated())?;
        let alpha_label_degrees = f32::from_le_bytes(u32buf);
        r.read_exact(&mut u32buf).map_err(|_| truncated())?;
        let image_id = u32::from_le_bytes(u32buf);
        r.read_exact(&mut u32buf).map_err(|_| truncated())?;
        let chain_index = u32::from_le_bytes(u32buf);
        records.push(LabelRecord {
            patch: Patch::from_vec(data)?,
            alpha_label_degrees,
            image_id,
            chain_index,
        });
    }
    Ok(records)
}
