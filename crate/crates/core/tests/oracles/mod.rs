//! Independent reference implementations and random instance generators
//! shared by the evaluation tests and the acceptance suite.
#![allow(dead_code)]

use depthkit::detection_eval::{detection_order, iou, BBox, Detection, GroundTruth};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub struct Instance {
    pub num_classes: usize,
    pub gts: Vec<GroundTruth>,
    pub dets: Vec<Detection>,
}

fn grid_box(rng: &mut StdRng) -> BBox {
    let x = rng.gen_range(0..60) as f64;
    let y = rng.gen_range(0..60) as f64;
    let w = rng.gen_range(2..30) as f64;
    let h = rng.gen_range(2..30) as f64;
    BBox::new(x, y, x + w, y + h).unwrap()
}

fn jitter(rng: &mut StdRng, b: &BBox) -> BBox {
    let mut d = || rng.gen_range(-3..=3) as f64;
    let (x1, y1) = (b.x1 + d(), b.y1 + d());
    let (x2, y2) = (b.x2 + d(), b.y2 + d());
    BBox::new(x1.min(x2 - 1.0), y1.min(y2 - 1.0), x2, y2).unwrap()
}

/// At most 50 detections, at most 5 classes, integer coordinates and
/// scores on a 0.05 grid so that ties occur.
pub fn random_instance(seed: u64, with_difficult: bool) -> Instance {
    let mut rng = StdRng::seed_from_u64(seed);
    let num_classes = rng.gen_range(1..=5);
    let images = rng.gen_range(1..=4);
    let mut gts = Vec::new();
    for img in 0..images {
        for _ in 0..rng.gen_range(0..=8) {
            gts.push(GroundTruth {
                image_id: format!("img{img}"),
                class_id: rng.gen_range(0..num_classes),
                bbox: grid_box(&mut rng),
                difficult: with_difficult && rng.gen_bool(0.15),
            });
        }
    }
    let n_dets = rng.gen_range(0..=50);
    let mut dets = Vec::with_capacity(n_dets);
    for _ in 0..n_dets {
        let score = rng.gen_range(1..=20) as f64 * 0.05;
        let d = if !gts.is_empty() && rng.gen_bool(0.6) {
            let g = &gts[rng.gen_range(0..gts.len())];
            let class_id = if rng.gen_bool(0.8) { g.class_id } else { rng.gen_range(0..num_classes) };
            Detection {
                image_id: g.image_id.clone(),
                class_id,
                score,
                bbox: jitter(&mut rng, &g.bbox),
            }
        } else {
            Detection {
                image_id: format!("img{}", rng.gen_range(0..images)),
                class_id: rng.gen_range(0..num_classes),
                score,
                bbox: grid_box(&mut rng),
            }
        };
        dets.push(d);
    }
    Instance { num_classes, gts, dets }
}

/// Full IoU matrix, then elimination in score order.
pub fn nms_oracle(dets: &[Detection], thresh: f64, top_k: usize) -> Vec<Detection> {
    let mut sorted: Vec<Detection> = dets.to_vec();
    sorted.sort_by(detection_order);
    let n = sorted.len();
    let m: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| iou(&sorted[i].bbox, &sorted[j].bbox)).collect())
        .collect();
    let mut alive = vec![true; n];
    let mut kept = Vec::new();
    for i in 0..n {
        if !alive[i] {
            continue;
        }
        kept.push(sorted[i].clone());
        for j in i + 1..n {
            if m[i][j] >= thresh {
                alive[j] = false;
            }
        }
    }
    kept.truncate(top_k);
    kept
}

/// VOC matching replayed from scratch for every prefix of the ranking.
pub fn voc_oracle(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_id: usize,
    thresh: f64,
    ignore_difficult: bool,
) -> Option<f64> {
    let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).collect();
    let npos = g.iter().filter(|g| !(ignore_difficult && g.difficult)).count();
    if npos == 0 {
        return None;
    }
    let mut d: Vec<&Detection> = dets.iter().filter(|d| d.class_id == class_id).collect();
    d.sort_by(|a, b| detection_order(a, b));
    let mut points = Vec::new();
    for n in 1..=d.len() {
        let mut taken = vec![false; g.len()];
        let (mut tp, mut fp) = (0usize, 0usize);
        for det in &d[..n] {
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in g.iter().enumerate() {
                if gt.image_id != det.image_id {
                    continue;
                }
                let o = iou(&det.bbox, &gt.bbox);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            match best {
                Some((j, o)) if o >= thresh => {
                    if ignore_difficult && g[j].difficult {
                        continue;
                    }
                    if taken[j] {
                        fp += 1;
                    } else {
                        taken[j] = true;
                        tp += 1;
                    }
                }
                _ => fp += 1,
            }
        }
        if tp + fp > 0 {
            points.push((tp as f64 / npos as f64, tp as f64 / (tp + fp) as f64));
        }
    }
    let mut ap = 0.0;
    for t in 0..=10 {
        let r = t as f64 / 10.0;
        ap += points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max) / 11.0;
    }
    Some(ap)
}

/// 101-point AP at one threshold for one class, no ignore regions.
pub fn coco_threshold_oracle(
    dets: &[Detection],
    gts: &[GroundTruth],
    class_id: usize,
    thresh: f64,
    max_dets: usize,
) -> Option<f64> {
    let g: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).collect();
    if g.is_empty() {
        return None;
    }
    let mut images: Vec<&str> = g.iter().map(|x| x.image_id.as_str()).collect();
    images.extend(dets.iter().filter(|d| d.class_id == class_id).map(|d| d.image_id.as_str()));
    images.sort();
    images.dedup();
    let mut flagged: Vec<(&Detection, bool)> = Vec::new();
    for img in images {
        let ig: Vec<&&GroundTruth> = g.iter().filter(|x| x.image_id == img).collect();
        let mut id: Vec<&Detection> = dets
            .iter()
            .filter(|d| d.class_id == class_id && d.image_id == img)
            .collect();
        id.sort_by(|a, b| detection_order(a, b));
        id.truncate(max_dets);
        let mut taken = vec![false; ig.len()];
        for d in id {
            // best unmatched ground truth, later entries win ties
            let mut best: Option<(usize, f64)> = None;
            for (j, gt) in ig.iter().enumerate() {
                let o = iou(&d.bbox, &gt.bbox);
                if !taken[j] && o >= thresh && best.is_none_or(|(_, b)| o >= b) {
                    best = Some((j, o));
                }
            }
            if let Some((j, _)) = best {
                taken[j] = true;
            }
            flagged.push((d, best.is_some()));
        }
    }
    flagged.sort_by(|a, b| detection_order(a.0, b.0));
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, hit) in &flagged {
        if *hit {
            tp += 1;
        } else {
            fp += 1;
        }
        pts.push((tp as f64 / g.len() as f64, tp as f64 / (tp + fp) as f64));
    }
    let mut ap = 0.0;
    for r in 0..=100 {
        let level = r as f64 / 100.0;
        ap += pts.iter().filter(|p| p.0 >= level).map(|p| p.1).fold(0.0, f64::max);
    }
    Some(ap / 101.0)
}

/// Mean of [`coco_threshold_oracle`] over the given thresholds and classes.
pub fn coco_oracle(
    dets: &[Detection],
    gts: &[GroundTruth],
    num_classes: usize,
    thresholds: &[f64],
    max_dets: usize,
) -> Option<f64> {
    let vals: Vec<f64> = thresholds
        .iter()
        .flat_map(|&t| (0..num_classes).filter_map(move |k| coco_threshold_oracle(dets, gts, k, t, max_dets)))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Depth maps with one ground-truth box each whose depth is `k / area`
/// with bounded per-pixel noise, on a background at `far` with a few holes.
pub fn inverse_population(
    seed: u64,
    n: usize,
) -> (std::collections::BTreeMap<String, depthkit::depth_encoding::DepthMap>, Vec<GroundTruth>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let (w, h, far, k) = (64usize, 64usize, 9.0, 2000.0);
    let mut depths = std::collections::BTreeMap::new();
    let mut gts = Vec::new();
    for i in 0..n {
        let side = rng.gen_range(6..=48usize);
        let (x0, y0) = (rng.gen_range(0..=w - side), rng.gen_range(0..=h - side));
        let base = k / (side * side) as f64;
        let mut v = vec![far; w * h];
        for y in 0..h {
            for x in 0..w {
                let inside = (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y);
                if inside {
                    v[y * w + x] = base * (1.0 + rng.gen_range(-0.1..0.1));
                } else if rng.gen_bool(0.02) {
                    v[y * w + x] = 0.0;
                }
            }
        }
        let id = format!("scene{i:03}");
        depths.insert(id.clone(), depthkit::depth_encoding::DepthMap::from_meters(w, h, v).unwrap());
        gts.push(GroundTruth {
            image_id: id,
            class_id: 0,
            bbox: BBox::new(x0 as f64, y0 as f64, (x0 + side) as f64, (y0 + side) as f64).unwrap(),
            difficult: false,
        });
    }
    (depths, gts)
}

/// Single-pass textbook formula.
pub fn pearson_direct(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// Per-sample linear search for `edges[i] <= v < edges[i + 1]`, the last bin
/// closed on the right; a zero-width axis is one bin.
pub fn heatmap_oracle(points: &[(f64, f64)], bins_x: usize, bins_y: usize) -> (usize, usize, Vec<u64>) {
    fn axis(vals: Vec<f64>, bins: usize) -> (usize, Vec<usize>) {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            return (1, vec![0; vals.len()]);
        }
        let edge = |i: usize| if i == bins { hi } else { lo + (hi - lo) * i as f64 / bins as f64 };
        let idx = vals
            .iter()
            .map(|&v| {
                (0..bins)
                    .find(|&i| edge(i) <= v && (v < edge(i + 1) || i == bins - 1))
                    .unwrap()
            })
            .collect();
        (bins, idx)
    }
    let (nx, ix) = axis(points.iter().map(|p| p.0).collect(), bins_x);
    let (ny, iy) = axis(points.iter().map(|p| p.1).collect(), bins_y);
    let mut cells = vec![0u64; nx * ny];
    for (a, b) in ix.iter().zip(&iy) {
        cells[b * nx + a] += 1;
    }
    (nx, ny, cells)
}
