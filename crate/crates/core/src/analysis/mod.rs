//! Average depth inside ground-truth boxes against box area, binned into
//! per-class heatmaps, with a pattern-similarity score between heatmaps.

mod heatmap;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use heatmap::{build_heatmap, heatmap_similarity, parse_heatmap_csv, Heatmap2D, DEFAULT_BINS};

use crate::depth_encoding::Channels;
use crate::detection_eval::{BBox, GroundTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSizeSample {
    pub image_id: String,
    pub class_id: usize,
    /// Box area in pixels².
    pub area: f64,
    /// Mean of the valid values inside the box, in the units of the input.
    pub mean_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    /// Ground-truth file order.
    pub samples: Vec<DepthSizeSample>,
    /// Boxes of the class with no valid pixel inside.
    pub skipped: usize,
}

impl SampleSet {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }
}

/// Pixel `(x, y)` belongs to a box when its centre `(x + 0.5, y + 0.5)` lies in
/// `[x1, x2) x [y1, y2)`. Channel 0 of the image is averaged.
pub fn box_mean<D: Channels + ?Sized>(img: &D, b: &BBox) -> Option<f64> {
    let (w, h) = (img.width(), img.height());
    let span = |lo: f64, hi: f64, n: usize| {
        let first = (lo - 0.5).ceil().max(0.0);
        let end = (hi - 0.5).ceil().clamp(0.0, n as f64);
        (first as usize, end as usize)
    };
    let (x0, x1) = span(b.x1, b.x2, w);
    let (y0, y1) = span(b.y1, b.y2, h);
    let (values, valid) = (img.channel(0), img.valid());
    let (mut sum, mut n) = (0.0, 0usize);
    for y in y0..y1 {
        for x in x0..x1 {
            let i = y * w + x;
            if valid[i] {
                sum += values[i];
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// One sample per ground-truth box of `class_id`, boxes without valid
/// pixels counted in [`SampleSet::skipped`].
pub fn collect_samples<D: Channels + Sync>(
    depths: &BTreeMap<String, D>,
    gts: &[GroundTruth],
    class_id: usize,
) -> Result<SampleSet> {
    let boxes: Vec<&GroundTruth> = gts.iter().filter(|g| g.class_id == class_id).collect();
    if let Some(g) = boxes.iter().find(|g| !depths.contains_key(&g.image_id)) {
        return Err(Error::Input(format!("no depth input for image '{}'", g.image_id)));
    }
    let means: Vec<Option<f64>> = boxes
        .par_iter()
        .map(|g| box_mean(&depths[&g.image_id], &g.bbox))
        .collect();
    let mut set = SampleSet::default();
    for (g, mean) in boxes.iter().zip(means) {
        match mean {
            Some(mean_depth) => set.samples.push(DepthSizeSample {
                image_id: g.image_id.clone(),
                class_id,
                area: g.bbox.area(),
                mean_depth,
            }),
            None => set.skipped += 1,
        }
    }
    Ok(set)
}

/// Sample correlation coefficient; `None` for fewer than two points or a
/// constant coordinate.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation of `(area, mean_depth)`.
pub fn area_depth_correlation(samples: &[DepthSizeSample]) -> Option<f64> {
    let xs: Vec<f64> = samples.iter().map(|s| s.area).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.mean_depth).collect();
    pearson(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_encoding::DepthMap;

    fn gt(img: &str, x1: f64, y1: f64, x2: f64, y2: f64) -> GroundTruth {
        GroundTruth {
            image_id: img.into(),
            class_id: 0,
            bbox: BBox::new(x1, y1, x2, y2).unwrap(),
            difficult: false,
        }
    }

    fn maps(entries: Vec<(&str, DepthMap)>) -> BTreeMap<String, DepthMap> {
        entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn constant_and_unit_boxes() {
        let d = maps(vec![("a", DepthMap::from_meters(8, 6, vec![2.25; 48]).unwrap())]);
        let s = collect_samples(&d, &[gt("a", 1.0, 1.0, 7.0, 4.0)], 0).unwrap();
        assert_eq!(s.samples[0].mean_depth, 2.25);
        assert_eq!(s.samples[0].area, 18.0);

        let mut v = vec![1.0; 16];
        v[2 * 4 + 1] = 3.5;
        let d = maps(vec![("a", DepthMap::from_meters(4, 4, v).unwrap())]);
        let s = collect_samples(&d, &[gt("a", 1.0, 2.0, 2.0, 3.0)], 0).unwrap();
        assert_eq!((s.samples[0].area, s.samples[0].mean_depth), (1.0, 3.5));
    }

    #[test]
    fn ramp_box_mean_is_arithmetic_mean() {
        // v(x, y) = 1 + x + 20 y; over x in 3..13, y in 5..15 the mean is
        // 1 + 7.5 + 20 * 9.5
        let (w, h) = (20, 20);
        let v: Vec<f64> = (0..w * h).map(|i| 1.0 + (i % w) as f64 + 20.0 * (i / w) as f64).collect();
        let d = maps(vec![("r", DepthMap::from_meters(w, h, v).unwrap())]);
        let s = collect_samples(&d, &[gt("r", 3.0, 5.0, 13.0, 15.0)], 0).unwrap();
        assert!((s.samples[0].mean_depth - 198.5).abs() < 1e-12);
    }

    #[test]
    fn invalid_pixels_and_skips() {
        let mut v = vec![4.0; 25];
        for y in 0..2 {
            for x in 0..2 {
                v[y * 5 + x] = 0.0;
            }
        }
        v[2] = 1.0;
        let d = maps(vec![("a", DepthMap::from_meters(5, 5, v).unwrap())]);
        let gts = [gt("a", 0.0, 0.0, 2.0, 2.0), gt("a", 0.0, 0.0, 3.0, 1.0), gt("a", 9.0, 9.0, 12.0, 12.0)];
        let s = collect_samples(&d, &gts, 0).unwrap();
        assert_eq!(s.skipped, 2);
        assert_eq!(s.samples.len(), 1);
        assert_eq!(s.samples[0].mean_depth, 1.0);
    }

    #[test]
    fn missing_image_names_it() {
        let d = maps(vec![("a", DepthMap::from_meters(2, 2, vec![1.0; 4]).unwrap())]);
        match collect_samples(&d, &[gt("zz", 0.0, 0.0, 1.0, 1.0)], 0) {
            Err(Error::Input(m)) => assert!(m.contains("zz")),
            other => panic!("{other:?}"),
        }
        // other classes do not need depth
        let mut g = gt("zz", 0.0, 0.0, 1.0, 1.0);
        g.class_id = 1;
        assert!(collect_samples(&d, &[g], 0).unwrap().samples.is_empty());
    }

    #[test]
    fn pearson_examples() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]), Some(1.0));
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(pearson(&[1.0, 1.0], &[3.0, 2.0]), None);
        // direct formula on a small hand example
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!((r - 5.5 / (5.0f64 * 8.75).sqrt()).abs() < 1e-12);
    }
}
