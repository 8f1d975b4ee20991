//! Two-stage detector variants as explicit layer graphs.
//!
//! Each variant of RGB-D fusion (early, middle-late, late concatenation of raw
//! or backbone-processed depth, plus per-channel HDHA streams) is built as an
//! [`ArchGraph`]. Graphs support shape propagation, parameter accounting,
//! DOT export and a seeded numeric forward pass.

mod build;
mod dot;
mod exec;
pub mod lcg;
mod params;
mod shapes;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use build::{build_architecture, build_architecture_with, GraphBuilder};
pub use dot::export_graph;
pub use exec::{execute_forward, toy_inputs, ForwardOutput, Tensor};
pub use params::{count_parameters, ParamReport, ParamRow};
pub use shapes::{propagate_shapes, ShapeTable};

use crate::error::{Error, Result};

/// Tensor extents.
///
/// Image-level feature maps are `[C, H, W]`; per-RoI maps are `[N, C, H, W]`;
/// per-RoI vectors are `[N, F]`; an image-level vector is `[F]`. Ranks 2 and 4
/// therefore carry a leading RoI axis and use axis 1 as the channel axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TensorShape(pub Vec<usize>);

impl TensorShape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        TensorShape(dims.into())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_batched(&self) -> bool {
        matches!(self.rank(), 2 | 4)
    }

    pub fn channel_axis(&self) -> usize {
        usize::from(self.is_batched())
    }

    pub fn channels(&self) -> usize {
        self.0[self.channel_axis()]
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

impl FromStr for TensorShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(['x', 'X', '×'])
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::param(format!("invalid shape {s:?}")))?;
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::param(format!("invalid shape {s:?}")));
        }
        Ok(TensorShape(dims))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerKind {
    Conv2d,
    Relu,
    MaxPool,
    Fc,
    BilinearResize,
    ChannelConcat,
    BatchRepeatConcat,
    Flatten,
    RoiAlign,
    RpnHead,
    DetHead,
    BatchNorm,
    ResidualAdd,
    GlobalAvgPool,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool => "maxpool",
            LayerKind::Fc => "fc",
            LayerKind::BilinearResize => "bilinear_resize",
            LayerKind::ChannelConcat => "channel_concat",
            LayerKind::BatchRepeatConcat => "batch_repeat_concat",
            LayerKind::Flatten => "flatten",
            LayerKind::RoiAlign => "roi_align",
            LayerKind::RpnHead => "rpn_head",
            LayerKind::DetHead => "det_head",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::ResidualAdd => "residual_add",
            LayerKind::GlobalAvgPool => "global_avg_pool",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A layer with its hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerOp {
    Conv2d {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Fc {
        out_features: usize,
    },
    /// Resize the spatial extent to `size`, or to the spatial extent of the
    /// second input when `size` is `None`.
    BilinearResize {
        size: Option<(usize, usize)>,
    },
    ChannelConcat,
    /// Port 0 is per-RoI `[N, C0, ..]`, port 1 image-level `[C1, ..]`; port 1
    /// is repeated `N` times and appended along the channel axis.
    BatchRepeatConcat,
    Flatten,
    /// Port 0 features `[C, H, W]`, port 1 boxes `[N, 4]` in input pixels.
    RoiAlign {
        output: usize,
        spatial_scale: f64,
    },
    /// 3x3 conv to `mid_channels` + ReLU, then sibling 1x1 convs producing
    /// `2 * anchors` objectness and `4 * anchors` box channels.
    RpnHead {
        mid_channels: usize,
        anchors: usize,
    },
    /// Sibling fc layers: class scores (softmax) and `4 * num_classes` deltas.
    DetHead {
        num_classes: usize,
    },
    /// Affine batch norm with frozen running statistics (mean 0, var 1).
    BatchNorm,
    ResidualAdd,
    GlobalAvgPool,
}

impl LayerOp {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerOp::Conv2d { .. } => LayerKind::Conv2d,
            LayerOp::Relu => LayerKind::Relu,
            LayerOp::MaxPool { .. } => LayerKind::MaxPool,
            LayerOp::Fc { .. } => LayerKind::Fc,
            LayerOp::BilinearResize { .. } => LayerKind::BilinearResize,
            LayerOp::ChannelConcat => LayerKind::ChannelConcat,
            LayerOp::BatchRepeatConcat => LayerKind::BatchRepeatConcat,
            LayerOp::Flatten => LayerKind::Flatten,
            LayerOp::RoiAlign { .. } => LayerKind::RoiAlign,
            LayerOp::RpnHead { .. } => LayerKind::RpnHead,
            LayerOp::DetHead { .. } => LayerKind::DetHead,
            LayerOp::BatchNorm => LayerKind::BatchNorm,
            LayerOp::ResidualAdd => LayerKind::ResidualAdd,
            LayerOp::GlobalAvgPool => LayerKind::GlobalAvgPool,
        }
    }

    /// Hyperparameters as `key=value` pairs, empty for parameter-free ops.
    pub fn hyperparams(&self) -> String {
        match self {
            LayerOp::Conv2d {
                out_channels,
                kernel,
                stride,
                pad,
                bias,
            } => format!("k={kernel} s={stride} p={pad} out={out_channels} bias={bias}"),
            LayerOp::MaxPool { kernel, stride, pad } => format!("k={kernel} s={stride} p={pad}"),
            LayerOp::Fc { out_features } => format!("out={out_features}"),
            LayerOp::BilinearResize { size: Some((h, w)) } => format!("size={h}x{w}"),
            LayerOp::BilinearResize { size: None } => "size=like(port1)".to_string(),
            LayerOp::RoiAlign {
                output,
                spatial_scale,
            } => format!("out={output}x{output} scale=1/{}", (1.0 / spatial_scale).round()),
            LayerOp::RpnHead {
                mid_channels,
                anchors,
            } => format!("mid={mid_channels} anchors={anchors}"),
            LayerOp::DetHead { num_classes } => format!("classes={num_classes}"),
            _ => String::new(),
        }
    }

    /// Number of input ports the op consumes.
    pub fn arity(&self) -> std::ops::RangeInclusive<usize> {
        match self {
            LayerOp::ChannelConcat => 2..=usize::MAX,
            LayerOp::BatchRepeatConcat | LayerOp::RoiAlign { .. } | LayerOp::ResidualAdd => 2..=2,
            LayerOp::BilinearResize { size: None } => 2..=2,
            _ => 1..=1,
        }
    }

    pub fn num_outputs(&self) -> usize {
        match self {
            LayerOp::RpnHead { .. } | LayerOp::DetHead { .. } => 2,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::param(format!("{}: {what}", self.kind())));
        match *self {
            LayerOp::Conv2d {
                out_channels,
                kernel,
                stride,
                ..
            } => {
                if kernel == 0 || stride == 0 || out_channels == 0 {
                    return bad("kernel, stride and out_channels must be >= 1");
                }
            }
            LayerOp::MaxPool { kernel, stride, .. } => {
                if kernel == 0 || stride == 0 {
                    return bad("kernel and stride must be >= 1");
                }
            }
            LayerOp::Fc { out_features: 0 } => return bad("out_features must be >= 1"),
            LayerOp::BilinearResize { size: Some((h, w)) } if h == 0 || w == 0 => {
                return bad("size must be non-zero")
            }
            LayerOp::RoiAlign {
                output,
                spatial_scale,
            } => {
                if output == 0 || !(spatial_scale > 0.0) {
                    return bad("output and spatial_scale must be positive");
                }
            }
            LayerOp::RpnHead {
                mid_channels,
                anchors,
            } if mid_channels == 0 || anchors == 0 => return bad("mid_channels and anchors must be >= 1"),
            LayerOp::DetHead { num_classes } if num_classes < 2 => {
                return bad("num_classes must be >= 2 (including background)")
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub op: LayerOp,
    pub trainable: bool,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        self.op.kind()
    }
}

/// Where a node input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Input(usize),
    Node { node: usize, port: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub spec: LayerSpec,
    pub inputs: Vec<Source>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Rgb,
    Depth { channels: usize },
    Rois,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub name: String,
    pub kind: InputKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "raw-EC")]
    RawEc,
    #[serde(rename = "raw-MC")]
    RawMc,
    #[serde(rename = "raw-LC")]
    RawLc,
    #[serde(rename = "proc-EC")]
    ProcEc,
    #[serde(rename = "proc-MC")]
    ProcMc,
    #[serde(rename = "proc-LC")]
    ProcLc,
    #[serde(rename = "hdha-split")]
    HdhaSplit,
    #[serde(rename = "prior-late")]
    PriorLate,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Baseline,
        Variant::RawEc,
        Variant::RawMc,
        Variant::RawLc,
        Variant::ProcEc,
        Variant::ProcMc,
        Variant::ProcLc,
        Variant::HdhaSplit,
        Variant::PriorLate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::RawEc => "raw-EC",
            Variant::RawMc => "raw-MC",
            Variant::RawLc => "raw-LC",
            Variant::ProcEc => "proc-EC",
            Variant::ProcMc => "proc-MC",
            Variant::ProcLc => "proc-LC",
            Variant::HdhaSplit => "hdha-split",
            Variant::PriorLate => "prior-late",
        }
    }

    pub fn is_raw(self) -> bool {
        matches!(self, Variant::RawEc | Variant::RawMc | Variant::RawLc)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = Variant::ALL.iter().map(|v| v.as_str()).collect();
                Error::param(format!("unknown variant {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Vgg16,
    Resnet101,
}

impl Backbone {
    pub fn as_str(self) -> &'static str {
        match self {
            Backbone::Vgg16 => "vgg16",
            Backbone::Resnet101 => "resnet101",
        }
    }

    /// Channels of the stride-16 feature map feeding the RPN.
    pub fn out_channels(self) -> usize {
        match self {
            Backbone::Vgg16 => 512,
            Backbone::Resnet101 => 1024,
        }
    }

    /// Width of the per-RoI feature vector entering the detection head.
    pub fn roi_feature_width(self) -> usize {
        match self {
            Backbone::Vgg16 => 4096,
            Backbone::Resnet101 => 2048,
        }
    }

    pub fn feature_stride(self) -> usize {
        16
    }

    /// Layers whose weights are frozen during fine-tuning.
    pub fn frozen_description(self) -> &'static str {
        match self {
            Backbone::Vgg16 => "conv1_1..conv2_2 (everything before conv3)",
            Backbone::Resnet101 => "stem conv + layer1, and every batch-norm layer",
        }
    }
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "vgg16" => Ok(Backbone::Vgg16),
            "resnet101" => Ok(Backbone::Resnet101),
            _ => Err(Error::param(format!(
                "unknown backbone {s:?} (expected vgg16 or resnet101)"
            ))),
        }
    }
}

/// A detector variant as a DAG of layers.
///
/// Nodes are stored in construction order; every node's inputs refer to graph
/// inputs or to earlier nodes' output ports.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArchGraph {
    pub variant: Option<Variant>,
    pub backbone: Option<Backbone>,
    pub inputs: Vec<GraphInput>,
    pub nodes: Vec<Node>,
    /// Named graph outputs.
    pub outputs: Vec<(String, Source)>,
    /// Named internal tensors of interest (e.g. `head_input`, `fused`).
    pub taps: Vec<(String, Source)>,
}

impl ArchGraph {
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.spec.name == name)
    }

    pub fn count_kind(&self, kind: LayerKind) -> usize {
        self.nodes.iter().filter(|n| n.spec.kind() == kind).count()
    }

    pub fn tap(&self, name: &str) -> Option<Source> {
        self.taps.iter().find(|(n, _)| n == name).map(|(_, s)| *s)
    }

    pub fn describe_source(&self, src: Source) -> String {
        match src {
            Source::Input(i) => format!("input '{}'", self.inputs[i].name),
            Source::Node { node, port } => format!("'{}' port {port}", self.nodes[node].spec.name),
        }
    }

    /// Kahn topological order with smallest-index tie-break; errors on cycles,
    /// dangling references or arity violations.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            node.spec.op.validate()?;
            if !node.spec.op.arity().contains(&node.inputs.len()) {
                return Err(Error::structural(format!(
                    "node '{}' ({}) has {} inputs",
                    node.spec.name,
                    node.spec.kind(),
                    node.inputs.len()
                )));
            }
            for src in &node.inputs {
                match *src {
                    Source::Input(k) if k >= self.inputs.len() => {
                        return Err(Error::structural(format!(
                            "node '{}' reads missing graph input {k}",
                            node.spec.name
                        )))
                    }
                    Source::Input(_) => {}
                    Source::Node { node: p, port } => {
                        if p >= n || port >= self.nodes[p].spec.op.num_outputs() {
                            return Err(Error::structural(format!(
                                "node '{}' reads missing node output {p}:{port}",
                                node.spec.name
                            )));
                        }
                        indegree[i] += 1;
                        consumers[p].push(i);
                    }
                }
            }
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &c in &consumers[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if order.len() != n {
            return Err(Error::structural("graph contains a cycle"));
        }
        Ok(order)
    }

    /// Structural checks: acyclic, arities, exactly one detection head.
    pub fn validate(&self) -> Result<()> {
        self.topo_order()?;
        let heads = self.count_kind(LayerKind::DetHead);
        if heads != 1 {
            return Err(Error::structural(format!(
                "expected exactly one det_head, found {heads}"
            )));
        }
        Ok(())
    }
}

/// JSON graph configuration accepted by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub variant: Variant,
    pub backbone: Backbone,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_rois")]
    pub num_rois: usize,
    #[serde(default = "default_input_hw")]
    pub input_hw: [usize; 2],
    #[serde(default)]
    pub depth_channels: Option<usize>,
}

fn default_classes() -> usize {
    21
}

fn default_rois() -> usize {
    300
}

fn default_input_hw() -> [usize; 2] {
    [600, 800]
}
