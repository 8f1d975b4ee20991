use std::path::PathBuf;

use clap::{Args, ValueEnum};
use depthkit::architecture::{
    build_architecture_with, count_parameters, execute_forward, export_graph, propagate_shapes, toy_inputs,
    Backbone, GraphConfig, TensorShape, Variant,
};
use depthkit::Error;

use crate::files::{parse_hw, read_text, CliError, OutDir, WithPath};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Report {
    /// Per-node parameter CSV with a TOTAL footer.
    Params,
    /// Tensor shape CSV.
    Shapes,
    /// Graphviz DOT with shapes.
    Dot,
}

fn variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn backbone(s: &str) -> Result<Backbone, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct ArchArgs {
    /// baseline, raw-EC, raw-MC, raw-LC, proc-EC, proc-MC, proc-LC,
    /// hdha-split or prior-late.
    #[arg(long, value_parser = variant, default_value = "baseline", conflicts_with = "config")]
    pub variant: Variant,
    /// vgg16 or resnet101.
    #[arg(long, value_parser = backbone, default_value = "vgg16", conflicts_with = "config")]
    pub backbone: Backbone,
    /// Classes including background (21 for the VOC label set).
    #[arg(long, default_value_t = 21, conflicts_with = "config")]
    pub classes: usize,
    /// RoIs per image kept after proposal NMS (test-time setting of the
    /// reference detector: top 300 boxes).
    #[arg(long, default_value_t = 300, conflicts_with = "config")]
    pub rois: usize,
    /// Network input size (shorter side scaled to 600 by the reference detector).
    #[arg(long, value_parser = parse_hw, default_value = "600x800", conflicts_with = "config")]
    pub input_hw: (usize, usize),
    /// Channels of each depth input (default: 1 for raw depth and hdha-split, 3 otherwise).
    #[arg(long, conflicts_with = "config")]
    pub depth_channels: Option<usize>,
    /// Graph config JSON `{variant, backbone, num_classes, num_rois, input_hw, depth_channels}`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Table to print on stdout.
    #[arg(long, value_enum)]
    pub report: Option<Report>,
    /// Write `<variant>_<backbone>.{dot,shapes.csv,params.csv}` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run the seeded numeric forward pass on toy inputs and print output shapes.
    #[arg(long)]
    pub forward: bool,
    /// Seed of the weight and toy-input streams.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Toy input size for --forward.
    #[arg(long, value_parser = parse_hw, default_value = "64x64")]
    pub toy_hw: (usize, usize),
    /// RoIs fed to --forward.
    #[arg(long, default_value_t = 4)]
    pub toy_rois: usize,
}

fn config(args: &ArchArgs) -> Result<GraphConfig, CliError> {
    match &args.config {
        Some(path) => {
            let text = read_text(path)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Parameter(format!("graph config: {e}")))
                .at(path)
        }
        None => Ok(GraphConfig {
            variant: args.variant,
            backbone: args.backbone,
            num_classes: args.classes,
            num_rois: args.rois,
            input_hw: [args.input_hw.0, args.input_hw.1],
            depth_channels: args.depth_channels,
        }),
    }
}

/// Order-fixed f64 sum, printed as a fingerprint of a tensor.
fn checksum(data: &[f32]) -> f64 {
    data.iter().map(|&v| f64::from(v)).sum()
}

pub fn run(args: &ArchArgs) -> Result<(), CliError> {
    let cfg = config(args)?;
    if cfg.num_rois == 0 || args.toy_rois == 0 {
        return Err(CliError::Usage("RoI counts must be at least 1".into()));
    }
    let graph = build_architecture_with(cfg.variant, cfg.backbone, cfg.num_classes, cfg.depth_channels)?;
    let [h, w] = cfg.input_hw;
    let shapes = propagate_shapes(&graph, &TensorShape::new([3, h, w]), cfg.num_rois)?;
    let params = count_parameters(&graph, &shapes)?;
    let dot = export_graph(&graph, Some(&shapes));
    let shapes_csv = shapes.to_csv(&graph);
    let params_csv = params.to_csv();

    if let Some(dir) = &args.out {
        let out = OutDir::create(dir)?;
        let base = format!("{}_{}", cfg.variant.as_str(), cfg.backbone.as_str());
        out.write(&format!("{base}.dot"), dot.as_bytes())?;
        out.write(&format!("{base}.shapes.csv"), shapes_csv.as_bytes())?;
        out.write(&format!("{base}.params.csv"), params_csv.as_bytes())?;
    }
    match args.report {
        Some(Report::Params) => print!("{params_csv}"),
        Some(Report::Shapes) => print!("{shapes_csv}"),
        Some(Report::Dot) => print!("{dot}"),
        None => println!(
            "{}/{}: {} nodes, trainable={} fixed={} total={}",
            cfg.variant.as_str(),
            cfg.backbone.as_str(),
            graph.nodes.len(),
            params.trainable,
            params.fixed,
            params.total
        ),
    }
    if args.forward {
        let inputs = toy_inputs(&graph, args.toy_hw, args.toy_rois, args.seed);
        let fwd = execute_forward(&graph, &inputs, args.seed)?;
        for (name, t) in &fwd.outputs {
            println!("forward {name} {} checksum={:.6e}", t.shape, checksum(&t.data));
        }
    }
    Ok(())
}
