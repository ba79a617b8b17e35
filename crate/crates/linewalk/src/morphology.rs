//! Binary-mask morphology: Zhang-Suen thinning, connected components,
//! endpoint peeling, and the closed-contour validity check shared by the
//! binarization and evaluation stages.

use crate::error::{Error, Result};
use crate::geometry::PixelCoord;
use crate::raster::BinaryMask;

/// A mask verified to be a single closed 8-connected 1-px-wide curve:
/// no endpoint pixels (fewer than two neighbors), exactly one connected
/// component, and one simple cycle passing through every pixel exactly
/// once (so no branches). At axis-aligned corners a curve pixel can see a
/// third, diagonally redundant neighbor; the cycle test is what separates
/// those harmless chords from genuine branch structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedContour {
    mask: BinaryMask,
}

impl ClosedContour {
    /// Validate the closure invariants and wrap the mask.
    pub fn from_mask(mask: BinaryMask) -> Result<ClosedContour> {
        trace_closed_curve(&mask).map_err(Error::NotClosed)?;
        Ok(ClosedContour { mask })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }

    pub fn into_mask(self) -> BinaryMask {
        self.mask
    }
}

// Clockwise Moore neighborhood in display coordinates, starting east.
const MOORE: [(i32, i32); 8] = [
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
];

/// Order the pixels of a closed 1-px curve into one cyclic sequence of
/// 8-adjacent pixels, each visited exactly once, by tracing the boundary
/// of the region the curve encloses. Returns the failure reason when the
/// mask is not such a curve (endpoints, branches, multiple components,
/// width over one pixel).
pub fn trace_closed_curve(mask: &BinaryMask) -> std::result::Result<Vec<PixelCoord>, String> {
    let total = mask.count();
    if total == 0 {
        return Err("mask is empty".into());
    }
    for p in mask.iter_set() {
        let n = mask.neighbor_count(p);
        if n < 2 {
            return Err(format!(
                "endpoint pixel at ({}, {}) has {n} neighbors",
                p.row, p.col
            ));
        }
    }
    let comps = connected_components(mask, Connectivity::Eight);
    if comps.count != 1 {
        return Err(format!("{} connected components, expected 1", comps.count));
    }

    // Region enclosed by the curve: flood the outside 4-connected from the
    // image border; region = everything not reached.
    let (h, w) = (mask.h(), mask.w());
    let mut outside = vec![false; h * w];
    let mut queue = std::collections::VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            let border = r == 0 || c == 0 || r == h - 1 || c == w - 1;
            if border && !mask.get(r, c) {
                outside[r * w + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r as i32 + dr, c as i32 + dc);
            if nr < 0 || nc < 0 || nr >= h as i32 || nc >= w as i32 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if !mask.get(nr, nc) && !outside[nr * w + nc] {
                outside[nr * w + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    let is_outside = |p: PixelCoord| -> bool {
        !p.in_bounds(h, w) || outside[p.row as usize * w + p.col as usize]
    };
    let in_region = |p: PixelCoord| -> bool { p.in_bounds(h, w) && !is_outside(p) };

    // A 1-px curve faces the outside everywhere.
    for p in mask.iter_set() {
        let faces_out = [(-1, 0), (1, 0), (0, -1), (0, 1)]
            .iter()
            .any(|&(dr, dc)| is_outside(p.offset(dr, dc)));
        if !faces_out {
            return Err(format!(
                "pixel ({}, {}) does not face the background; curve is wider than 1 px",
                p.row, p.col
            ));
        }
    }

    // Moore-neighbor boundary trace with Jacob's stopping criterion.
    let start = mask.iter_set().next().expect("nonempty");
    let start_backtrack = start.offset(0, -1); // topmost-leftmost: west is outside
    let mut current = start;
    let mut backtrack = start_backtrack;
    let mut sequence = vec![start];
    let cap = 4 * total + 8;
    for _ in 0..cap {
        let b_dir = MOORE
            .iter()
            .position(|&(dr, dc)| current.offset(dr, dc) == backtrack)
            .expect("backtrack is a Moore neighbor");
        let mut advanced = false;
        for k in 1..=8 {
            let dir = (b_dir + k) % 8;
            let q = current.offset(MOORE[dir].0, MOORE[dir].1);
            if in_region(q) {
                current = q;
                advanced = true;
                break;
            }
            backtrack = q;
        }
        if !advanced {
            return Err("curve has an isolated pixel".into());
        }
        if current == start && backtrack == start_backtrack {
            // Closed the loop entering the same way it began.
            break;
        }
        sequence.push(current);
    }

    if sequence.len() != total {
        return Err(format!(
            "boundary trace covers {} of {total} pixels; curve has branch structure",
            sequence.len()
        ));
    }
    let mut seen = std::collections::HashSet::with_capacity(total);
    for p in &sequence {
        if !mask.get_coord(*p) {
            return Err(format!(
                "trace left the curve at ({}, {}); curve is wider than 1 px",
                p.row, p.col
            ));
        }
        if !seen.insert(*p) {
            return Err(format!(
                "pixel ({}, {}) visited twice; curve has branch structure",
                p.row, p.col
            ));
        }
    }
    Ok(sequence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Connected-component labeling of the foreground. Labels start at 1;
/// background pixels get 0.
pub struct Components {
    pub labels: Vec<u32>,
    pub count: usize,
    w: usize,
}

impl Components {
    pub fn label(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.w + col]
    }

    /// Pixel count per label (index 0 unused).
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count + 1];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

/// Label foreground components with BFS; deterministic scan order.
pub fn connected_components(mask: &BinaryMask, conn: Connectivity) -> Components {
    let (h, w) = (mask.h(), mask.w());
    let mut labels = vec![0u32; h * w];
    let mut count = 0u32;
    let mut queue = std::collections::VecDeque::new();
    let neighbors: &[(i32, i32)] = match conn {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ],
    };
    for r in 0..h {
        for c in 0..w {
            if !mask.get(r, c) || labels[r * w + c] != 0 {
                continue;
            }
            count += 1;
            labels[r * w + c] = count;
            queue.push_back((r, c));
            while let Some((qr, qc)) = queue.pop_front() {
                for &(dr, dc) in neighbors {
                    let nr = qr as i32 + dr;
                    let nc = qc as i32 + dc;
                    if nr < 0 || nc < 0 || nr >= h as i32 || nc >= w as i32 {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if mask.get(nr, nc) && labels[nr * w + nc] == 0 {
                        labels[nr * w + nc] = count;
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
    }
    Components {
        labels,
        count: count as usize,
        w,
    }
}

/// Fill enclosed background pockets of at most `max_area` pixels
/// (4-connected, not touching the image border). Near-threshold speckle
/// leaves pinholes in a binarized band; thinning preserves every hole as a
/// tiny bubble of parallel 1-px routes, so the pinholes have to go first.
pub fn fill_small_holes(mask: &BinaryMask, max_area: usize) -> BinaryMask {
    let (h, w) = (mask.h(), mask.w());
    let mut inverted = BinaryMask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            inverted.set(r, c, !mask.get(r, c));
        }
    }
    let comps = connected_components(&inverted, Connectivity::Four);
    let sizes = comps.sizes();
    let mut touches_border = vec![false; comps.count + 1];
    for r in 0..h {
        for c in 0..w {
            if (r == 0 || c == 0 || r == h - 1 || c == w - 1) && !mask.get(r, c) {
                touches_border[comps.label(r, c) as usize] = true;
            }
        }
    }
    let mut out = mask.clone();
    for r in 0..h {
        for c in 0..w {
            if out.get(r, c) {
                continue;
            }
            let label = comps.label(r, c) as usize;
            if !touches_border[label] && sizes[label] <= max_area {
                out.set(r, c, true);
            }
        }
    }
    out
}

/// True when `a` and `b` are foreground pixels of the same 8-connected
/// component.
pub fn same_component(mask: &BinaryMask, a: PixelCoord, b: PixelCoord) -> bool {
    if !mask.get_coord(a) || !mask.get_coord(b) {
        return false;
    }
    let comps = connected_components(mask, Connectivity::Eight);
    comps.label(a.row as usize, a.col as usize) == comps.label(b.row as usize, b.col as usize)
}

// Zhang-Suen neighbor order P2..P9: N, NE, E, SE, S, SW, W, NW.
const ZS_NEIGHBORS: [(i32, i32); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

fn zs_neighbor_values(mask: &BinaryMask, p: PixelCoord) -> [bool; 8] {
    let mut v = [false; 8];
    for (i, (dr, dc)) in ZS_NEIGHBORS.iter().enumerate() {
        v[i] = mask.get_coord(p.offset(*dr, *dc));
    }
    v
}

fn zs_transitions(v: &[bool; 8]) -> usize {
    (0..8).filter(|&i| !v[i] && v[(i + 1) % 8]).count()
}

/// Morphological skeleton via the Zhang-Suen two-subiteration thinning
/// rule. Deletion-only, so the output is a subset of the input.
pub fn thin(mask: &BinaryMask) -> BinaryMask {
    let mut out = mask.clone();
    loop {
        let mut deleted = false;
        for pass in 0..2 {
            let mut to_delete = Vec::new();
            for p in out.iter_set() {
                let v = zs_neighbor_values(&out, p);
                let b: usize = v.iter().filter(|&&x| x).count();
                if !(2..=6).contains(&b) || zs_transitions(&v) != 1 {
                    continue;
                }
                // Pass 0 checks P2*P4*P6 and P4*P6*P8; pass 1 checks
                // P2*P4*P8 and P2*P6*P8 (indices 0,2,4,6 = N,E,S,W).
                let ok = if pass == 0 {
                    (!v[0] || !v[2] || !v[4]) && (!v[2] || !v[4] || !v[6])
                } else {
                    (!v[0] || !v[2] || !v[6]) && (!v[0] || !v[4] || !v[6])
                };
                if ok {
                    to_delete.push(p);
                }
            }
            for p in &to_delete {
                out.set(p.row as usize, p.col as usize, false);
            }
            deleted |= !to_delete.is_empty();
        }
        if !deleted {
            return out;
        }
    }
}

/// Skeleton pixels with exactly one foreground 8-neighbor.
pub fn endpoints(mask: &BinaryMask) -> Vec<PixelCoord> {
    mask.iter_set()
        .filter(|p| mask.neighbor_count(*p) == 1)
        .collect()
}

/// Line-end pixels: all foreground neighbors sit in one contiguous arc of
/// the 8-neighborhood (crossing number 1). This catches the last pixel of
/// a spur, which can touch two or three curve pixels and still be a dead
/// end, while genuine curve pixels always have two separated arms.
fn line_endpoints(mask: &BinaryMask) -> Vec<PixelCoord> {
    mask.iter_set()
        .filter(|p| {
            let v = zs_neighbor_values(mask, *p);
            v.iter().any(|&x| x) && zs_transitions(&v) == 1
        })
        .collect()
}

/// True when the foreground neighbors of `p` form exactly one 8-connected
/// cluster inside the 3x3 neighborhood. Deleting such a pixel cannot break
/// local connectivity; pixels whose neighbors split into two arms are
/// essential curve pixels.
fn neighbors_form_one_cluster(mask: &BinaryMask, p: PixelCoord) -> bool {
    let cells: Vec<(i32, i32)> = ZS_NEIGHBORS
        .iter()
        .copied()
        .filter(|&(dr, dc)| mask.get_coord(p.offset(dr, dc)))
        .collect();
    if cells.is_empty() {
        return false;
    }
    let mut visited = vec![false; cells.len()];
    let mut stack = vec![0usize];
    visited[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..cells.len() {
            if !visited[j]
                && (cells[i].0 - cells[j].0).abs() <= 1
                && (cells[i].1 - cells[j].1).abs() <= 1
            {
                visited[j] = true;
                stack.push(j);
            }
        }
    }
    visited.iter().all(|&v| v)
}

/// Background pixels 4-reachable from the image border.
fn outside_flood(mask: &BinaryMask) -> Vec<bool> {
    let (h, w) = (mask.h(), mask.w());
    let mut outside = vec![false; h * w];
    let mut queue = std::collections::VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            let border = r == 0 || c == 0 || r == h - 1 || c == w - 1;
            if border && !mask.get(r, c) {
                outside[r * w + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
            let (nr, nc) = (r as i32 + dr, c as i32 + dc);
            if nr < 0 || nc < 0 || nr >= h as i32 || nc >= w as i32 {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            if !mask.get(nr, nc) && !outside[nr * w + nc] {
                outside[nr * w + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    outside
}

/// Peel line-end pixels and thinning residue until nothing changes or the
/// iteration cap is hit, keep the largest remaining component, and verify
/// the closed-contour invariants.
///
/// Three deletion rules per iteration, all of which leave a genuine closed
/// curve untouched:
/// - line ends (all at once; a cycle has none),
/// - thick staircase residue, one pixel at a time in scan order: three or
///   more neighbors forming a single cluster plus a 4-adjacent background
///   cell make a pixel redundant for the cycle,
/// - inner strands: pixels with no 4-neighbor on the outside background.
///   Thinning a porous band leaves braided parallel routes; only the
///   outermost route bounds the enclosed region, and every pixel of a
///   1-px closed curve faces the outside.
pub fn clean(mask: &BinaryMask, prune_cap: usize) -> Result<ClosedContour> {
    let mut out = mask.clone();
    for _ in 0..prune_cap {
        let mut changed = false;
        // Spurs first, to exhaustion: a half-peeled spur would make the
        // pixel it hangs from look like removable residue.
        for _ in 0..prune_cap {
            let tips = line_endpoints(&out);
            if tips.is_empty() {
                break;
            }
            changed = true;
            for p in tips {
                out.set(p.row as usize, p.col as usize, false);
            }
        }
        let candidates: Vec<PixelCoord> = out.iter_set().collect();
        for p in candidates {
            if !out.get_coord(p) || out.neighbor_count(p) < 3 {
                continue;
            }
            let open_side = [(-1, 0), (1, 0), (0, -1), (0, 1)]
                .iter()
                .any(|&(dr, dc)| !out.get_coord(p.offset(dr, dc)));
            if open_side && neighbors_form_one_cluster(&out, p) {
                out.set(p.row as usize, p.col as usize, false);
                changed = true;
            }
        }
        let outside = outside_flood(&out);
        let w = out.w();
        for p in out.iter_set().collect::<Vec<_>>() {
            let faces_outside = [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)].iter().any(|&(dr, dc)| {
                let q = p.offset(dr, dc);
                !q.in_bounds(out.h(), out.w()) || outside[q.row as usize * w + q.col as usize]
            });
            if !faces_outside {
                out.set(p.row as usize, p.col as usize, false);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let comps = connected_components(&out, Connectivity::Eight);
    if comps.count == 0 {
        return Err(Error::NotClosed("nothing left after spur pruning".into()));
    }
    if comps.count > 1 {
        let sizes = comps.sizes();
        let keep = (1..=comps.count)
            .max_by_key(|&l| (sizes[l], std::cmp::Reverse(l)))
            .unwrap() as u32;
        for r in 0..out.h() {
            for c in 0..out.w() {
                if out.get(r, c) && comps.label(r, c) != keep {
                    out.set(r, c, false);
                }
            }
        }
    }
    ClosedContour::from_mask(out)
}
