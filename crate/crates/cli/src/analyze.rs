use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use depthkit::analysis::{
    area_depth_correlation, build_heatmap, collect_samples, heatmap_similarity, parse_heatmap_csv, DEFAULT_BINS,
};
use depthkit::depth_encoding::{ChannelImage, DepthMap};
use depthkit::detection_eval::{parse_class_table, parse_ground_truth};
use depthkit::netpbm::{decode, Netpbm};
use depthkit::Error;
use rayon::prelude::*;

use crate::files::{read_bytes, read_text, sanitize, CliError, OutDir, WithPath};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Ground truth JSONL.
    #[arg(long, required_unless_present = "compare")]
    pub gt: Option<PathBuf>,
    /// JSON array of class names.
    #[arg(long, required_unless_present = "compare")]
    pub classes: Option<PathBuf>,
    /// Directory holding `<image_id>.pfm` or `<image_id>.pgm` (16-bit depth in
    /// millimetres, or an 8-bit encoding with 0 = missing).
    #[arg(long, required_unless_present = "compare")]
    pub depth_dir: Option<PathBuf>,
    /// Restrict to these class names (repeatable; default: every class with ground truth).
    #[arg(long = "class")]
    pub only: Vec<String>,
    /// Box-area bins.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins_x: usize,
    /// Mean-depth bins.
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins_y: usize,
    /// Write `<class>.heatmap.csv`, `<class>.heatmap.pgm` and `<class>.samples.jsonl` here.
    #[arg(long, required_unless_present = "compare")]
    pub out: Option<PathBuf>,
    /// Print the similarity of two heatmap CSVs instead.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with_all = ["gt", "classes", "depth_dir", "out"])]
    pub compare: Option<Vec<PathBuf>>,
}

fn to_channels(img: &Netpbm) -> Result<ChannelImage, Error> {
    match img {
        Netpbm::Pgm { maxval, raster } if *maxval <= 255 => Ok(ChannelImage {
            width: raster.width,
            height: raster.height,
            channels: vec![raster.data.iter().map(|&v| f64::from(v)).collect()],
            valid: raster.data.iter().map(|&v| v > 0).collect(),
        }),
        _ => {
            let d = DepthMap::from_netpbm(img)?;
            Ok(ChannelImage {
                width: d.width(),
                height: d.height(),
                channels: vec![d.values().to_vec()],
                valid: d.valid().to_vec(),
            })
        }
    }
}

fn load_depth(dir: &Path, id: &str) -> Result<ChannelImage, CliError> {
    let path = ["pfm", "pgm"]
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            CliError::Lib(Error::Input(format!(
                "no depth file for image '{id}' in {} (expected {id}.pfm or {id}.pgm)",
                dir.display()
            )))
        })?;
    let img = decode(&read_bytes(&path)?).at(&path)?;
    to_channels(&img).at(&path)
}

fn compare(a: &Path, b: &Path) -> Result<(), CliError> {
    let ha = parse_heatmap_csv(&read_text(a)?).at(a)?;
    let hb = parse_heatmap_csv(&read_text(b)?).at(b)?;
    let s = heatmap_similarity(&ha, &hb)?;
    println!("similarity={s:.6} (artifact-defined score: cosine of L1-normalized heatmap cells)");
    Ok(())
}

pub fn run(args: &AnalyzeArgs) -> Result<(), CliError> {
    if let Some(pair) = &args.compare {
        return compare(&pair[0], &pair[1]);
    }
    if args.bins_x == 0 || args.bins_y == 0 {
        return Err(CliError::Usage("--bins-x and --bins-y must be at least 1".into()));
    }
    let (gt_path, class_path) = (args.gt.as_ref().unwrap(), args.classes.as_ref().unwrap());
    let dir = args.depth_dir.as_ref().unwrap();
    let classes = parse_class_table(&read_text(class_path)?).at(class_path)?;
    let gts = parse_ground_truth(&read_text(gt_path)?, &classes).at(gt_path)?;

    let mut wanted: BTreeSet<usize> = BTreeSet::new();
    for name in &args.only {
        let k = classes
            .lookup(name)
            .ok_or_else(|| CliError::Usage(format!("--class {name:?} is not in {}", class_path.display())))?;
        wanted.insert(k);
    }
    let selected: Vec<usize> = (0..classes.len())
        .filter(|k| wanted.is_empty() || wanted.contains(k))
        .filter(|k| gts.iter().any(|g| g.class_id == *k))
        .collect();

    let ids: BTreeSet<&str> = gts
        .iter()
        .filter(|g| selected.contains(&g.class_id))
        .map(|g| g.image_id.as_str())
        .collect();
    let loaded: Vec<(String, ChannelImage)> = ids
        .par_iter()
        .map(|id| load_depth(dir, id).map(|img| (id.to_string(), img)))
        .collect::<Result<_, _>>()?;
    let depths: BTreeMap<String, ChannelImage> = loaded.into_iter().collect();

    let out = OutDir::create(args.out.as_ref().unwrap())?;
    for k in selected {
        let name = &classes.names[k];
        let file = sanitize(name);
        let set = collect_samples(&depths, &gts, k)?;
        out.write(&format!("{file}.samples.jsonl"), set.to_jsonl().as_bytes())?;
        let r = area_depth_correlation(&set.samples).map_or("n/a".into(), |r| format!("{r:.4}"));
        if set.samples.is_empty() {
            println!("{name}: samples=0 skipped={} pearson_area_depth=n/a heatmap=none", set.skipped);
            continue;
        }
        let h = build_heatmap(&set.samples, args.bins_x, args.bins_y)?;
        out.write(&format!("{file}.heatmap.csv"), h.to_csv().as_bytes())?;
        out.write(&format!("{file}.heatmap.pgm"), &h.to_pgm())?;
        println!(
            "{name}: samples={} skipped={} pearson_area_depth={r} heatmap={}x{}",
            set.samples.len(),
            set.skipped,
            h.bins_x,
            h.bins_y
        );
    }
    Ok(())
}
