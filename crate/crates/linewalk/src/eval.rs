//! Segmentation-mask extraction from closed contours and the precision /
//! recall / IoU scoring of the result.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphology::ClosedContour;
use crate::raster::BinaryMask;

/// Cut the enclosed segmentation mask out of a closed contour: flood-fill
/// the background 4-connected from the image border; everything not
/// reached, plus the contour itself, is the mask. The 4-connected fill
/// cannot leak through an 8-connected closed curve.
pub fn fill_closed_contour(contour: &ClosedContour) -> Result<BinaryMask> {
    let mask = contour.mask();
    let (h, w) = (mask.h(), mask.w());
    let mut outside = vec![false; h * w];
    let mut queue = std::collections::VecDeque::new();
    for r in 0..h {
        for c in 0..w {
            let border = r == 0 || c == 0 || r == h - 1 || c == w - 1;
            if border && !mask.get(r, c) && !outside[r * w + c] {
                outside[r * w + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    if queue.is_empty() {
        return Err(Error::FillFailure(
            "contour occupies the whole image border; no background seed".into(),
        ));
    }
    while let Some((r, c)) = queue.pop_front() {
        let neighbors = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in neighbors {
            if nr < h && nc < w && !mask.get(nr, nc) && !outside[nr * w + nc] {
                outside[nr * w + nc] = true;
                queue.push_back((nr, nc));
            }
        }
    }
    let mut out = BinaryMask::new(h, w);
    for r in 0..h {
        for c in 0..w {
            if !outside[r * w + c] {
                out.set(r, c, true);
            }
        }
    }
    Ok(out)
}

/// Precision, recall and IoU as fractions in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricReport {
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    /// Set when the prediction was empty and precision defaulted to 0.
    pub empty_mask: bool,
}

/// Compare a predicted mask against ground truth.
pub fn metrics(mask: &BinaryMask, gt: &BinaryMask) -> Result<MetricReport> {
    if mask.h() != gt.h() || mask.w() != gt.w() {
        return Err(Error::invalid(format!(
            "mask {}x{} and ground truth {}x{} differ in shape",
            mask.h(),
            mask.w(),
            gt.h(),
            gt.w()
        )));
    }
    let gt_count = gt.count();
    if gt_count == 0 {
        return Err(Error::invalid("ground-truth mask is empty"));
    }
    let mut intersection = 0usize;
    let mut mask_count = 0usize;
    for r in 0..mask.h() {
        for c in 0..mask.w() {
            let m = mask.get(r, c);
            if m {
                mask_count += 1;
                if gt.get(r, c) {
                    intersection += 1;
                }
            }
        }
    }
    let union = mask_count + gt_count - intersection;
    let empty_mask = mask_count == 0;
    Ok(MetricReport {
        precision: if empty_mask {
            0.0
        } else {
            intersection as f64 / mask_count as f64
        },
        recall: intersection as f64 / gt_count as f64,
        iou: intersection as f64 / union as f64,
        empty_mask,
    })
}

/// One scored image for table rendering.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub name: String,
    pub report: MetricReport,
}

/// Rows sorted by descending IoU plus an unweighted mean column, rendered
/// as aligned text and CSV. Percentages with two decimals.
pub struct MetricsTable {
    pub rows: Vec<TableRow>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_iou: f64,
}

pub fn report_table(mut rows: Vec<TableRow>) -> Result<MetricsTable> {
    if rows.is_empty() {
        return Err(Error::invalid("metrics table needs at least one row"));
    }
    rows.sort_by(|a, b| b.report.iou.partial_cmp(&a.report.iou).unwrap());
    let n = rows.len() as f64;
    let mean_precision = rows.iter().map(|r| r.report.precision).sum::<f64>() / n;
    let mean_recall = rows.iter().map(|r| r.report.recall).sum::<f64>() / n;
    let mean_iou = rows.iter().map(|r| r.report.iou).sum::<f64>() / n;
    Ok(MetricsTable {
        rows,
        mean_precision,
        mean_recall,
        mean_iou,
    })
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,precision,recall,iou\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{:.2},{:.2},{:.2}\n",
                row.name,
                row.report.precision * 100.0,
                row.report.recall * 100.0,
                row.report.iou * 100.0
            ));
        }
        out.push_str(&format!(
            "mean,{:.2},{:.2},{:.2}\n",
            self.mean_precision * 100.0,
            self.mean_recall * 100.0,
            self.mean_iou * 100.0
        ));
        out
    }

    pub fn to_text(&self) -> String {
        let name_width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .chain(std::iter::once(4))
            .max()
            .unwrap();
        let mut out = format!(
            "{:<name_width$}  {:>7}  {:>7}  {:>7}\n",
            "image", "P", "R", "IoU"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<name_width$}  {:>7.2}  {:>7.2}  {:>7.2}\n",
                row.name,
                row.report.precision * 100.0,
                row.report.recall * 100.0,
                row.report.iou * 100.0
            ));
        }
        out.push_str(&format!(
            "{:<name_width$}  {:>7.2}  {:>7.2}  {:>7.2}\n",
            "mean", self.mean_precision * 100.0, self.mean_recall * 100.0, self.mean_iou * 100.0
        ));
        out
    }
}
