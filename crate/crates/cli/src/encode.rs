use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use depthkit::depth_encoding::{
    compute_channel_stats, grayscale_encode, hdha_pipeline, jet_encode, minmax_to_u8, normalize_encoding,
    quantize_u8, CameraIntrinsics, ChannelImage, ChannelStats, Channels, DepthMap, GravityEstimate,
    GrayscaleDepth, HdhaConfig, HdhaImage, DEFAULT_K_NEIGHBORS,
};
use depthkit::netpbm::{decode, encode_pfm, encode_pgm8, encode_ppm8};
use depthkit::Error;
use rayon::prelude::*;
use serde_json::json;

use crate::files::{read_bytes, read_text, stem, CliError, OutDir, WithPath};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Linear 8-bit grayscale over [dmin, dmax].
    Gray,
    /// Grayscale level looked up in the 256-entry jet colormap.
    Jet,
    /// Horizontal disparity, height above ground, angle with gravity.
    Hdha,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Gray => "gray",
            Mode::Jet => "jet",
            Mode::Hdha => "hdha",
        }
    }
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    /// Depth maps: PFM in metres or 16-bit PGM in millimetres (0 = missing).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output directory; files are named `<stem>.<mode>.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Gray)]
    pub mode: Mode,
    /// Depth mapped to 0, metres (default: per-image minimum valid depth).
    #[arg(long, requires = "dmax")]
    pub dmin: Option<f64>,
    /// Depth mapped to 255, metres (default: per-image maximum valid depth).
    #[arg(long, requires = "dmin")]
    pub dmax: Option<f64>,
    /// Camera intrinsics JSON `{fx, fy, cx, cy, baseline}`; required for hdha.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
    /// Valid neighbours used to fit each surface normal (hdha).
    #[arg(long, default_value_t = DEFAULT_K_NEIGHBORS)]
    pub k_neighbors: usize,
    /// Apply per-channel mean/std from this JSON file; the z-scores are
    /// written as `<stem>.<mode>.norm.pfm` and the 8-bit image maps
    /// mean -/+ 3 std to 0/255.
    #[arg(long, conflicts_with = "compute_stats")]
    pub stats: Option<PathBuf>,
    /// Compute per-channel mean/std over all inputs and write `stats.json`.
    #[arg(long)]
    pub compute_stats: bool,
    /// Shorter image side of the detector input (test-time scaling of the
    /// reference detector). Recorded in the metadata only: depth is never
    /// resampled.
    #[arg(long, default_value_t = 600)]
    pub image_scale: usize,
}

enum Encoded {
    Gray(GrayscaleDepth, (f64, f64)),
    Jet(GrayscaleDepth, (f64, f64)),
    Hdha(HdhaImage, GravityEstimate),
}

impl Encoded {
    fn channels(&self) -> &dyn Channels {
        match self {
            Encoded::Gray(g, _) | Encoded::Jet(g, _) => g,
            Encoded::Hdha(h, _) => h,
        }
    }
}

struct Item {
    input: PathBuf,
    stem: String,
    depth: DepthMap,
    encoded: Encoded,
}

fn load_intrinsics(args: &EncodeArgs) -> Result<Option<CameraIntrinsics>, CliError> {
    if args.mode != Mode::Hdha {
        return Ok(None);
    }
    let path = args.intrinsics.as_ref().ok_or_else(|| {
        CliError::Usage("hdha mode needs a camera intrinsics file: pass --intrinsics <intrinsics.json>".into())
    })?;
    if !path.is_file() {
        return Err(CliError::Usage(format!("intrinsics file {} does not exist", path.display())));
    }
    let text = read_text(path)?;
    let cam: CameraIntrinsics = serde_json::from_str(&text)
        .map_err(|e| Error::Line {
            line: e.line(),
            msg: format!("intrinsics must be {{fx, fy, cx, cy, baseline}}: {e}"),
        })
        .at(path)?;
    cam.validate().at(path)?;
    Ok(Some(cam))
}

fn load_stats(path: &Path) -> Result<ChannelStats, CliError> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Line {
            line: e.line(),
            msg: format!("stats must be {{mean: [..], std: [..]}}: {e}"),
        })
        .at(path)
}

fn encode_one(input: &Path, args: &EncodeArgs, cam: Option<&CameraIntrinsics>) -> Result<Item, CliError> {
    let bytes = read_bytes(input)?;
    let img = decode(&bytes).at(input)?;
    let depth = DepthMap::from_netpbm(&img).at(input)?;
    let range = || -> Result<(f64, f64), CliError> {
        match (args.dmin, args.dmax) {
            (Some(lo), Some(hi)) => Ok((lo, hi)),
            _ => match depth.min_max() {
                Some((lo, hi)) if hi > lo => Ok((lo, hi)),
                _ => Err(CliError::File {
                    path: input.to_path_buf(),
                    source: Error::Parameter(
                        "depth range is empty (no valid pixels or constant depth); pass --dmin and --dmax".into(),
                    ),
                }),
            },
        }
    };
    let encoded = match args.mode {
        Mode::Gray | Mode::Jet => {
            let (lo, hi) = range()?;
            let g = grayscale_encode(&depth, lo, hi)?;
            if args.mode == Mode::Gray {
                Encoded::Gray(g, (lo, hi))
            } else {
                Encoded::Jet(g, (lo, hi))
            }
        }
        Mode::Hdha => {
            let config = HdhaConfig {
                k_neighbors: args.k_neighbors,
                ..HdhaConfig::default()
            };
            let (h, g) = hdha_pipeline(&depth, cam.expect("intrinsics loaded for hdha"), &config).at(input)?;
            Encoded::Hdha(h, g)
        }
    };
    Ok(Item {
        input: input.to_path_buf(),
        stem: stem(input),
        depth,
        encoded,
    })
}

/// z-scores to 8 bits, `mean - 3 std -> 0`, `mean + 3 std -> 255`.
fn sigma_to_u8(img: &ChannelImage) -> Vec<u8> {
    let n = img.width * img.height;
    let nc = img.channels.len();
    let mut out = vec![0u8; n * nc];
    for (c, ch) in img.channels.iter().enumerate() {
        for i in (0..n).filter(|&i| img.valid[i]) {
            out[i * nc + c] = quantize_u8(127.5 + 42.5 * ch[i]);
        }
    }
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.4}"))
}

fn write_outputs(item: &Item, args: &EncodeArgs, stats: Option<&ChannelStats>, out: &OutDir) -> Result<String, CliError> {
    let mode = args.mode.as_str();
    let (w, h) = (item.depth.width(), item.depth.height());
    let normalized = match stats {
        Some(s) => Some(normalize_encoding(item.encoded.channels(), s).at(&item.input)?),
        None => None,
    };
    if let Some(z) = &normalized {
        out.write(&format!("{}.{mode}.norm.pfm", item.stem), &encode_pfm(w, h, z.channels.len(), &z.interleaved_f32()))?;
    }
    let mut meta = json!({
        "input": item.input.file_name().map(|s| s.to_string_lossy().into_owned()),
        "mode": mode,
        "width": w,
        "height": h,
        "valid_fraction": item.depth.valid_fraction(),
        "depth_min": item.depth.min_max().map(|r| r.0),
        "depth_max": item.depth.min_max().map(|r| r.1),
        "image_scale": args.image_scale,
        "resampled": false,
        "stats": stats,
    });
    let extra;
    match &item.encoded {
        Encoded::Gray(g, (lo, hi)) | Encoded::Jet(g, (lo, hi)) => {
            meta["dmin"] = json!(lo);
            meta["dmax"] = json!(hi);
            extra = format!(" dmin={lo:.4} dmax={hi:.4}");
            if args.mode == Mode::Gray {
                let px = normalized.as_ref().map_or_else(|| g.quantized.clone(), sigma_to_u8);
                out.write(&format!("{}.gray.pgm", item.stem), &encode_pgm8(w, h, &px))?;
            } else {
                out.write(&format!("{}.jet.ppm", item.stem), &encode_ppm8(w, h, &jet_encode(g).interleaved()))?;
            }
        }
        Encoded::Hdha(img, grav) => {
            let d = grav.direction;
            meta["gravity"] = json!({
                "direction": d,
                "iterations": grav.iterations_run,
                "converged": grav.converged,
                "parallel": grav.parallel_count,
                "orthogonal": grav.orthogonal_count,
            });
            extra = format!(
                " gravity=({:.4},{:.4},{:.4}) iterations={}",
                d[0], d[1], d[2], grav.iterations_run
            );
            let raw = ChannelImage {
                width: w,
                height: h,
                channels: vec![img.hd.clone(), img.h.clone(), img.a.clone()],
                valid: img.valid.clone(),
            };
            out.write(&format!("{}.hdha.pfm", item.stem), &encode_pfm(w, h, 3, &raw.interleaved_f32()))?;
            let px = normalized.as_ref().map_or_else(|| minmax_to_u8(img), sigma_to_u8);
            out.write(&format!("{}.hdha.ppm", item.stem), &encode_ppm8(w, h, &px))?;
        }
    }
    let text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Internal(e.to_string()))?;
    out.write(&format!("{}.{mode}.json", item.stem), format!("{text}\n").as_bytes())?;
    let (lo, hi) = item.depth.min_max().unzip();
    Ok(format!(
        "{}: {w}x{h} valid={:.4} min={} max={}{extra}",
        item.input.display(),
        item.depth.valid_fraction(),
        fmt_opt(lo),
        fmt_opt(hi)
    ))
}

pub fn run(args: &EncodeArgs) -> Result<(), CliError> {
    if let (Some(lo), Some(hi)) = (args.dmin, args.dmax) {
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(CliError::Usage(format!("--dmax must exceed --dmin (got {lo} and {hi})")));
        }
    }
    if args.mode == Mode::Jet && (args.stats.is_some() || args.compute_stats) {
        return Err(CliError::Usage("channel statistics apply to gray and hdha, not jet".into()));
    }
    if args.mode == Mode::Hdha && args.k_neighbors < 3 {
        return Err(CliError::Usage("--k-neighbors must be at least 3".into()));
    }
    let mut inputs = args.inputs.clone();
    inputs.sort_by_key(|p| (p.file_name().map(|s| s.to_os_string()), p.clone()));
    let mut seen = BTreeSet::new();
    for p in &inputs {
        if !seen.insert(stem(p)) {
            return Err(CliError::Usage(format!("two inputs share the output stem {:?}", stem(p))));
        }
    }
    let cam = load_intrinsics(args)?;
    let stats = args.stats.as_deref().map(load_stats).transpose()?;
    let out = OutDir::create(&args.out)?;

    let items: Vec<Item> = inputs
        .par_iter()
        .map(|p| encode_one(p, args, cam.as_ref()))
        .collect::<Result<_, _>>()?;
    let lines: Vec<String> = items
        .par_iter()
        .map(|item| write_outputs(item, args, stats.as_ref(), &out))
        .collect::<Result<_, _>>()?;
    for l in &lines {
        println!("{l}");
    }
    if args.compute_stats {
        let refs: Vec<&dyn Channels> = items.iter().map(|i| i.encoded.channels()).collect();
        let s = compute_channel_stats(&refs)?;
        let text = serde_json::to_string_pretty(&s).map_err(|e| CliError::Internal(e.to_string()))?;
        let p = out.write("stats.json", format!("{text}\n").as_bytes())?;
        println!("stats: {} ({} channels)", p.display(), s.num_channels());
    }
    Ok(())
}
