use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use depthkit::detection_eval::{
    coco_ap, confusion_diff, confusion_matrix, detection_order, mean_ap, nms, parse_class_table, parse_detections,
    parse_ground_truth, ClassTable, CocoParams, Detection, GroundTruth, VocParams,
};

use crate::files::{read_text, stem, unit_interval_closed, unit_interval_open, CliError, OutDir, WithPath};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    /// Per-class 11-point AP and mAP.
    Voc,
    /// AP over IoU 0.50:0.95, AP50, AP75 and the size buckets.
    Coco,
    /// Ground-truth class x predicted class counts plus FN.
    Confusion,
    /// Confusion matrix of --dets minus that of --dets-b.
    Confdiff,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// JSON array of class names; JSONL records may use names or indices.
    #[arg(long)]
    pub classes: PathBuf,
    /// Ground truth JSONL.
    #[arg(long)]
    pub gt: PathBuf,
    /// Detections JSONL.
    #[arg(long)]
    pub dets: PathBuf,
    /// Second detections JSONL, subtracted from --dets (confdiff).
    #[arg(long, required_if_eq("metric", "confdiff"))]
    pub dets_b: Option<PathBuf>,
    /// IoU needed for a match (voc, confusion, confdiff).
    #[arg(long, value_parser = unit_interval_open, default_value_t = 0.5)]
    pub iou: f64,
    /// Detections scoring below this are dropped (confusion, confdiff).
    #[arg(long, value_parser = unit_interval_closed, default_value_t = 0.5)]
    pub score_thresh: f64,
    /// Apply per-image, per-class NMS at this IoU before scoring.
    #[arg(long, value_parser = unit_interval_open)]
    pub nms: Option<f64>,
    /// Detections kept per image, highest scores first (test-time setting
    /// of the reference detector: 300).
    #[arg(long, default_value_t = 300)]
    pub top_k: usize,
    /// Count difficult ground truth as ordinary positives (voc).
    #[arg(long)]
    pub no_difficult: bool,
    /// Write `<dets stem>.<metric>.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_dets(path: &Path, classes: &ClassTable, args: &EvalArgs) -> Result<Vec<Detection>, CliError> {
    let dets = parse_detections(&read_text(path)?, classes).at(path)?;
    Ok(filter(dets, args))
}

/// Optional NMS per image and class, then `top_k` per image.
fn filter(dets: Vec<Detection>, args: &EvalArgs) -> Vec<Detection> {
    let mut groups: BTreeMap<(String, usize), Vec<Detection>> = BTreeMap::new();
    for d in dets {
        groups.entry((d.image_id.clone(), d.class_id)).or_default().push(d);
    }
    let mut per_image: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for ((img, _), g) in groups {
        let kept = match args.nms {
            Some(t) => nms(&g, t, usize::MAX),
            None => g,
        };
        per_image.entry(img).or_default().extend(kept);
    }
    let mut out = Vec::new();
    for (_, mut v) in per_image {
        v.sort_by(detection_order);
        v.truncate(args.top_k);
        out.extend(v);
    }
    out
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    if args.top_k == 0 {
        return Err(CliError::Usage("--top-k must be at least 1".into()));
    }
    let classes = parse_class_table(&read_text(&args.classes)?).at(&args.classes)?;
    let gts: Vec<GroundTruth> = parse_ground_truth(&read_text(&args.gt)?, &classes).at(&args.gt)?;
    let dets = load_dets(&args.dets, &classes, args)?;
    let names = &classes.names;

    let (suffix, csv) = match args.metric {
        Metric::Voc => {
            let params = VocParams {
                iou_thresh: args.iou,
                ignore_difficult: !args.no_difficult,
            };
            ("voc.csv".to_string(), mean_ap(&dets, &gts, names, &params).to_csv())
        }
        Metric::Coco => {
            let s = coco_ap(&dets, &gts, names.len(), &CocoParams::default());
            ("coco.csv".to_string(), s.to_csv())
        }
        Metric::Confusion => {
            let m = confusion_matrix(&dets, &gts, names, args.iou, args.score_thresh)?;
            ("confusion.csv".to_string(), m.to_csv())
        }
        Metric::Confdiff => {
            let path_b = args.dets_b.as_ref().expect("clap requires --dets-b");
            let dets_b = load_dets(path_b, &classes, args)?;
            let a = confusion_matrix(&dets, &gts, names, args.iou, args.score_thresh)?;
            let b = confusion_matrix(&dets_b, &gts, names, args.iou, args.score_thresh)?;
            let d = confusion_diff(&a, &b)?;
            if let Some(dir) = &args.out {
                let out = OutDir::create(dir)?;
                let base = format!("{}_vs_{}", stem(&args.dets), stem(path_b));
                out.write(&format!("{base}.confdiff.marked.csv"), d.to_marked_csv().as_bytes())?;
            }
            (format!("vs_{}.confdiff.csv", stem(path_b)), d.to_csv())
        }
    };
    if let Some(dir) = &args.out {
        let out = OutDir::create(dir)?;
        let name = match args.metric {
            Metric::Confdiff => format!("{}_{suffix}", stem(&args.dets)),
            _ => format!("{}.{suffix}", stem(&args.dets)),
        };
        out.write(&name, csv.as_bytes())?;
    }
    print!("{csv}");
    Ok(())
}
