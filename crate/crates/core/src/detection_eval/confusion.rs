use std::collections::BTreeMap;

use serde::Serialize;

use super::{detection_order, iou, Detection, GroundTruth};
use crate::error::{Error, Result};

/// Rows are ground-truth classes, columns predicted classes; `fn_counts`
/// holds ground truth that no detection claimed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub fn_counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: &[String]) -> Self {
        let k = classes.len();
        ConfusionMatrix {
            classes: classes.to_vec(),
            counts: vec![vec![0; k]; k],
            fn_counts: vec![0; k],
        }
    }

    /// Ground-truth instances of class `k` (row sum plus FN).
    pub fn gt_total(&self, k: usize) -> u64 {
        self.counts[k].iter().sum::<u64>() + self.fn_counts[k]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gt\\pred");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",FN\n");
        for (k, name) in self.classes.iter().enumerate() {
            out.push_str(name);
            for v in &self.counts[k] {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", self.fn_counts[k]));
        }
        out
    }
}

/// Builds the matrix from detections scoring at least `score_thresh`.
///
/// Within each image, ground truth is visited in input order and claims the
/// highest-ranked unclaimed detection (any class) with IoU `>= iou_thresh`.
/// Unclaimed detections are background false positives and do not appear.
/// Difficult ground truth is counted like any other.
pub fn confusion_matrix(
    dets: &[Detection],
    gts: &[GroundTruth],
    classes: &[String],
    iou_thresh: f64,
    score_thresh: f64,
) -> Result<ConfusionMatrix> {
    if !(0.0..=1.0).contains(&score_thresh) {
        return Err(Error::param(format!("score threshold must be in [0, 1], got {score_thresh}")));
    }
    let k = classes.len();
    if let Some(d) = dets.iter().find(|d| d.class_id >= k) {
        return Err(Error::param(format!("detection class {} outside the class table", d.class_id)));
    }
    if let Some(g) = gts.iter().find(|g| g.class_id >= k) {
        return Err(Error::param(format!("ground-truth class {} outside the class table", g.class_id)));
    }
    let mut per_image: BTreeMap<&str, (Vec<&GroundTruth>, Vec<&Detection>)> = BTreeMap::new();
    for g in gts {
        per_image.entry(&g.image_id).or_default().0.push(g);
    }
    for d in dets.iter().filter(|d| d.score >= score_thresh) {
        per_image.entry(&d.image_id).or_default().1.push(d);
    }
    let mut m = ConfusionMatrix::zeros(classes);
    for (img_gts, img_dets) in per_image.values_mut() {
        img_dets.sort_by(|a, b| detection_order(a, b));
        let mut taken = vec![false; img_dets.len()];
        for g in img_gts.iter() {
            let hit = img_dets
                .iter()
                .enumerate()
                .find(|(j, d)| !taken[*j] && iou(&g.bbox, &d.bbox) >= iou_thresh);
            match hit {
                Some((j, d)) => {
                    taken[j] = true;
                    m.counts[g.class_id][d.class_id] += 1;
                }
                None => m.fn_counts[g.class_id] += 1,
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffMark {
    Improved,
    Regressed,
    Unchanged,
}

/// `a - b` over the counts and the FN column (`K x (K + 1)`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionDiff {
    pub classes: Vec<String>,
    pub values: Vec<Vec<i64>>,
}

impl ConfusionDiff {
    /// Diagonal increases and FN decreases are improvements, the opposite
    /// changes regressions; off-diagonal cells are left unmarked.
    pub fn mark(&self, row: usize, col: usize) -> DiffMark {
        let v = self.values[row][col];
        let k = self.classes.len();
        let better = if col == row {
            v > 0
        } else if col == k {
            v < 0
        } else {
            return DiffMark::Unchanged;
        };
        match (v, better) {
            (0, _) => DiffMark::Unchanged,
            (_, true) => DiffMark::Improved,
            (_, false) => DiffMark::Regressed,
        }
    }

    pub fn to_csv(&self) -> String {
        self.render(|v, _| v.to_string())
    }

    /// Same layout as [`to_csv`](Self::to_csv) with improvements wrapped in
    /// `*..*` and regressions in `!..!`.
    pub fn to_marked_csv(&self) -> String {
        self.render(|v, mark| match mark {
            DiffMark::Improved => format!("*{v}*"),
            DiffMark::Regressed => format!("!{v}!"),
            DiffMark::Unchanged => v.to_string(),
        })
    }

    fn render(&self, cell: impl Fn(i64, DiffMark) -> String) -> String {
        let mut out = String::from("gt\\pred");
        for c in &self.classes {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",FN\n");
        for (r, name) in self.classes.iter().enumerate() {
            out.push_str(name);
            for (c, &v) in self.values[r].iter().enumerate() {
                out.push(',');
                out.push_str(&cell(v, self.mark(r, c)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_diff(a: &ConfusionMatrix, b: &ConfusionMatrix) -> Result<ConfusionDiff> {
    if a.classes != b.classes {
        return Err(Error::param("confusion matrices have different class lists"));
    }
    let values = (0..a.classes.len())
        .map(|r| {
            let mut row: Vec<i64> = a.counts[r]
                .iter()
                .zip(&b.counts[r])
                .map(|(&x, &y)| x as i64 - y as i64)
                .collect();
            row.push(a.fn_counts[r] as i64 - b.fn_counts[r] as i64);
            row
        })
        .collect();
    Ok(ConfusionDiff {
        classes: a.classes.clone(),
        values,
    })
}
