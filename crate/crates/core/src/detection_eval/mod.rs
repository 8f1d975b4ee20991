//! Box overlap, non-maximum suppression, VOC / COCO average precision and
//! confusion-matrix comparison of detector outputs.

mod coco;
mod confusion;
mod io;
mod voc;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

pub use coco::{coco_ap, CocoParams, CocoSummary, COCO_IOU_THRESHOLDS};
pub use confusion::{confusion_diff, confusion_matrix, ConfusionDiff, ConfusionMatrix, DiffMark};
pub use io::{parse_class_table, parse_detections, parse_ground_truth, ClassTable};
pub use voc::{mean_ap, voc_ap, voc_ap_with, MeanAp, VocParams};

use crate::error::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x2 <= x1 || y2 <= y1 {
            return Err(Error::param(format!(
                "degenerate box ({x1}, {y1}, {x2}, {y2}); need x2 > x1 and y2 > y1"
            )));
        }
        Ok(BBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    fn cmp_coords(&self, other: &BBox) -> Ordering {
        self.x1
            .total_cmp(&other.x1)
            .then(self.y1.total_cmp(&other.y1))
            .then(self.x2.total_cmp(&other.x2))
            .then(self.y2.total_cmp(&other.y2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BBox,
    #[serde(default)]
    pub difficult: bool,
}

/// Score descending, then `x1, y1, x2, y2` ascending, then image id.
pub fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.bbox.cmp_coords(&b.bbox))
        .then_with(|| a.image_id.cmp(&b.image_id))
}

/// Intersection over union; 0 for disjoint or touching boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS over one image and class: visits boxes in
/// [`detection_order`], drops any box whose IoU with an already kept box is
/// `>= iou_thresh`, and stops after `top_k` boxes are kept.
pub fn nms(dets: &[Detection], iou_thresh: f64, top_k: usize) -> Vec<Detection> {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| detection_order(a, b));
    let mut kept: Vec<Detection> = Vec::new();
    for d in order {
        if kept.len() >= top_k {
            break;
        }
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) < iou_thresh) {
            kept.push(d.clone());
        }
    }
    kept
}

/// Parameter checks shared by the CLI and library callers.
pub fn check_iou_thresh(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("IoU threshold must be in (0, 1), got {t}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(score: f64, bbox: BBox) -> Detection {
        Detection {
            image_id: "img".into(),
            class_id: 0,
            score,
            bbox,
        }
    }

    #[test]
    fn iou_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(20.0, 20.0, 30.0, 30.0)), 0.0);
        assert_eq!(iou(&a, &b(10.0, 0.0, 20.0, 10.0)), 0.0);
        assert!((iou(&a, &b(5.0, 0.0, 15.0, 10.0)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_boxes_rejected() {
        assert!(BBox::new(1.0, 0.0, 1.0, 5.0).is_err());
        assert!(BBox::new(0.0, 0.0, f64::NAN, 5.0).is_err());
    }

    #[test]
    fn nms_examples() {
        let a = b(0.0, 0.0, 10.0, 10.0);
        assert_eq!(nms(&[det(0.3, a)], 0.5, 300), vec![det(0.3, a)]);
        let kept = nms(&[det(0.8, a), det(0.9, a)], 0.5, 300);
        assert_eq!(kept, vec![det(0.9, a)]);
        // exactly at the threshold suppresses
        let half = b(5.0, 0.0, 15.0, 10.0);
        assert_eq!(nms(&[det(0.9, a), det(0.8, half)], 1.0 / 3.0, 300).len(), 1);
        let far = b(50.0, 50.0, 60.0, 60.0);
        assert_eq!(nms(&[det(0.9, a), det(0.8, far)], 0.5, 1), vec![det(0.9, a)]);
    }

    #[test]
    fn nms_tie_break_is_by_coordinates() {
        let a = b(2.0, 0.0, 12.0, 10.0);
        let c = b(1.0, 0.0, 11.0, 10.0);
        let kept = nms(&[det(0.5, a), det(0.5, c)], 0.5, 10);
        assert_eq!(kept, vec![det(0.5, c)]);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0.0f64..90.0, 0.0f64..90.0, 1.0f64..40.0, 1.0f64..40.0)
            .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }

        #[test]
        fn nms_kept_pairs_below_threshold(
            boxes in proptest::collection::vec((arb_box(), 0.0f64..1.0), 1..40),
            thresh in 0.1f64..0.9,
        ) {
            let dets: Vec<Detection> = boxes.into_iter().map(|(bb, s)| det(s, bb)).collect();
            let kept = nms(&dets, thresh, 300);
            for i in 0..kept.len() {
                for j in i + 1..kept.len() {
                    prop_assert!(iou(&kept[i].bbox, &kept[j].bbox) < thresh);
                    prop_assert!(detection_order(&kept[i], &kept[j]) == Ordering::Less);
                }
            }
        }
    }
}
