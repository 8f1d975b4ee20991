use std::collections::BTreeMap;

use serde::Serialize;

use super::{detection_order, iou, Detection, GroundTruth};

/// `0.50, 0.55, .., 0.95`.
pub const COCO_IOU_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

const SMALL_MAX: f64 = 32.0 * 32.0;
const MEDIUM_MAX: f64 = 96.0 * 96.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CocoParams {
    /// Detections kept per image and class, highest scores first.
    pub max_dets: usize,
}

impl Default for CocoParams {
    fn default() -> Self {
        CocoParams { max_dets: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CocoSummary {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_medium: Option<f64>,
    pub ap_large: Option<f64>,
}

impl CocoSummary {
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let rows = [
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("APS", self.ap_small),
            ("APM", self.ap_medium),
            ("APL", self.ap_large),
        ];
        let mut out = String::from("metric,value\n");
        for (name, v) in rows {
            out.push_str(&format!("{name},{}\n", fmt(v)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Area {
    All,
    Small,
    Medium,
    Large,
}

impl Area {
    fn contains(self, a: f64) -> bool {
        match self {
            Area::All => true,
            Area::Small => a < SMALL_MAX,
            Area::Medium => (SMALL_MAX..=MEDIUM_MAX).contains(&a),
            Area::Large => a > MEDIUM_MAX,
        }
    }
}

/// COCO-style AP: each threshold in [`COCO_IOU_THRESHOLDS`], 101 recall
/// points, averaged over classes with at least one non-ignored ground truth.
///
/// Difficult ground truth acts like a crowd-free ignore region: a detection
/// matched to it is neither a true nor a false positive. In the size buckets,
/// ground truth outside the bucket is ignored and unmatched detections
/// outside the bucket are discarded.
pub fn coco_ap(dets: &[Detection], gts: &[GroundTruth], num_classes: usize, params: &CocoParams) -> CocoSummary {
    let grid = |area: Area| precision_grid(dets, gts, num_classes, area, params);
    let all = grid(Area::All);
    let mean_over = |g: &Vec<Vec<Option<f64>>>, thresholds: &[usize]| -> Option<f64> {
        let vals: Vec<f64> = thresholds
            .iter()
            .flat_map(|&t| g[t].iter().filter_map(|v| *v))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let every: Vec<usize> = (0..COCO_IOU_THRESHOLDS.len()).collect();
    CocoSummary {
        ap: mean_over(&all, &every),
        ap50: mean_over(&all, &[0]),
        ap75: mean_over(&all, &[5]),
        ap_small: mean_over(&grid(Area::Small), &every),
        ap_medium: mean_over(&grid(Area::Medium), &every),
        ap_large: mean_over(&grid(Area::Large), &every),
    }
}

/// `[threshold][class]` 101-point AP, `None` for classes without positives.
fn precision_grid(
    dets: &[Detection],
    gts: &[GroundTruth],
    num_classes: usize,
    area: Area,
    params: &CocoParams,
) -> Vec<Vec<Option<f64>>> {
    let mut grid = vec![vec![None; num_classes]; COCO_IOU_THRESHOLDS.len()];
    for k in 0..num_classes {
        let mut images: BTreeMap<&str, (Vec<&GroundTruth>, Vec<&Detection>)> = BTreeMap::new();
        for g in gts.iter().filter(|g| g.class_id == k) {
            images.entry(&g.image_id).or_default().0.push(g);
        }
        for d in dets.iter().filter(|d| d.class_id == k) {
            images.entry(&d.image_id).or_default().1.push(d);
        }
        for (t, &thr) in COCO_IOU_THRESHOLDS.iter().enumerate() {
            let mut scored: Vec<(&Detection, bool)> = Vec::new();
            let mut npos = 0usize;
            for (img_gts, img_dets) in images.values() {
                let (res, n) = evaluate_image(img_gts, img_dets, thr, area, params.max_dets);
                scored.extend(res);
                npos += n;
            }
            if npos == 0 {
                continue;
            }
            scored.sort_by(|a, b| detection_order(a.0, b.0));
            let (mut tp, mut fp) = (0usize, 0usize);
            let mut recall = Vec::with_capacity(scored.len());
            let mut precision = Vec::with_capacity(scored.len());
            for (_, is_tp) in &scored {
                if *is_tp {
                    tp += 1;
                } else {
                    fp += 1;
                }
                recall.push(tp as f64 / npos as f64);
                precision.push(tp as f64 / (tp + fp) as f64);
            }
            grid[t][k] = Some(interpolate_101(&recall, &mut precision));
        }
    }
    grid
}

/// Greedy matching inside one image for one class and threshold. Returns
/// the non-ignored detections with their TP flag and the positive count.
fn evaluate_image<'a>(
    gts: &[&GroundTruth],
    dets: &[&'a Detection],
    thr: f64,
    area: Area,
    max_dets: usize,
) -> (Vec<(&'a Detection, bool)>, usize) {
    // non-ignored ground truth first, stable otherwise
    let mut gt: Vec<(&GroundTruth, bool)> = gts
        .iter()
        .map(|g| (*g, g.difficult || !area.contains(g.bbox.area())))
        .collect();
    gt.sort_by_key(|(_, ignore)| *ignore);
    let npos = gt.iter().filter(|(_, ig)| !ig).count();

    let mut order: Vec<&Detection> = dets.to_vec();
    order.sort_by(|a, b| detection_order(a, b));
    order.truncate(max_dets);

    let mut gt_taken = vec![false; gt.len()];
    let mut out = Vec::with_capacity(order.len());
    for d in order {
        let mut best_iou = thr.min(1.0 - 1e-10);
        let mut m: Option<usize> = None;
        for (j, (g, ignore)) in gt.iter().enumerate() {
            if gt_taken[j] {
                continue;
            }
            // a regular match is never traded for an ignored one
            if let Some(mj) = m {
                if !gt[mj].1 && *ignore {
                    break;
                }
            }
            let o = iou(&d.bbox, &g.bbox);
            if o < best_iou {
                continue;
            }
            best_iou = o;
            m = Some(j);
        }
        match m {
            Some(j) => {
                gt_taken[j] = true;
                if !gt[j].1 {
                    out.push((d, true));
                }
            }
            None => {
                if area.contains(d.bbox.area()) {
                    out.push((d, false));
                }
            }
        }
    }
    (out, npos)
}

/// Precision made monotone from the right, sampled at recall
/// `0, 0.01, .., 1` (first point whose recall reaches the level; 0 past the
/// end of the curve), then averaged.
pub(crate) fn interpolate_101(recall: &[f64], precision: &mut [f64]) -> f64 {
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        let idx = recall.partition_point(|&x| x < level);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / 101.0
}
