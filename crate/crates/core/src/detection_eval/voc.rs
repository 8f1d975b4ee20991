use std::collections::HashMap;

use serde::Serialize;

use super::{detection_order, iou, Detection, GroundTruth};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocParams {
    pub iou_thresh: f64,
    /// Difficult ground truth neither counts as a positive nor penalises the
    /// detection matched to it.
    pub ignore_difficult: bool,
}

impl Default for VocParams {
    fn default() -> Self {
        VocParams {
            iou_thresh: 0.5,
            ignore_difficult: true,
        }
    }
}

/// 11-point interpolated AP for `class_id` with difficult boxes ignored.
///
/// `None` when the class has no (non-ignored) ground truth.
pub fn voc_ap(dets: &[Detection], gts: &[GroundTruth], class_id: usize, iou_thresh: f64) -> Option<f64> {
    let params = VocParams {
        iou_thresh,
        ..VocParams::default()
    };
    voc_ap_with(dets, gts, class_id, &params)
}

pub fn voc_ap_with(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_id: usize,
    params: &VocParams,
) -> Option<f64> {
    let mut by_image: HashMap<&str, Vec<&GroundTruth>> = HashMap::new();
    let mut npos = 0usize;
    for g in gts.iter().filter(|g| g.class_id == class_id) {
        by_image.entry(g.image_id.as_str()).or_default().push(g);
        if !(params.ignore_difficult && g.difficult) {
            npos += 1;
        }
    }
    if npos == 0 {
        return None;
    }
    let mut matched: HashMap<&str, Vec<bool>> = by_image
        .iter()
        .map(|(k, v)| (*k, vec![false; v.len()]))
        .collect();

    let mut order: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class_id).collect();
    order.sort_by(|a, b| detection_order(a, b));

    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = Vec::with_capacity(order.len());
    for d in order {
        let cands = by_image.get(d.image_id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let mut best = (f64::NEG_INFINITY, None);
        for (j, g) in cands.iter().enumerate() {
            let o = iou(&d.bbox, &g.bbox);
            if o > best.0 {
                best = (o, Some(j));
            }
        }
        match best {
            (o, Some(j)) if o >= params.iou_thresh => {
                if params.ignore_difficult && cands[j].difficult {
                    continue;
                }
                let m = &mut matched.get_mut(d.image_id.as_str()).unwrap()[j];
                if *m {
                    fp += 1;
                } else {
                    *m = true;
                    tp += 1;
                }
            }
            _ => fp += 1,
        }
        curve.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
    }
    Some(eleven_point(&curve))
}

/// Mean over recall levels `0, 0.1, .., 1` of the best precision at recall at
/// least that level.
pub(crate) fn eleven_point(curve: &[(f64, f64)]) -> f64 {
    let mut sum = 0.0;
    for t in 0..=10 {
        let r = t as f64 / 10.0;
        let p = curve
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / 11.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanAp {
    pub per_class: Vec<(String, Option<f64>)>,
    /// Unweighted mean over classes with a defined AP.
    pub map: Option<f64>,
}

impl MeanAp {
    /// `class,ap` rows with 4 decimals, undefined APs as `n/a`, then `mAP`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = String::from("class,ap\n");
        for (name, ap) in &self.per_class {
            out.push_str(&format!("{name},{}\n", fmt(*ap)));
        }
        out.push_str(&format!("mAP,{}\n", fmt(self.map)));
        out
    }
}

pub fn mean_ap(dets: &[Detection], gts: &[GroundTruth], classes: &[String], params: &VocParams) -> MeanAp {
    let per_class: Vec<(String, Option<f64>)> = classes
        .iter()
        .enumerate()
        .map(|(k, name)| (name.clone(), voc_ap_with(dets, gts, k, params)))
        .collect();
    let defined: Vec<f64> = per_class.iter().filter_map(|(_, ap)| *ap).collect();
    let map = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    MeanAp { per_class, map }
}
