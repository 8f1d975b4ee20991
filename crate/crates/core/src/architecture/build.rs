use super::{
    ArchGraph, Backbone, GraphInput, InputKind, LayerOp, LayerSpec, Node, Source, Variant,
};
use crate::error::{Error, Result};

const RPN_MID_CHANNELS: usize = 512;
const RPN_ANCHORS: usize = 9;
const ROI_OUTPUT: usize = 7;
const RAW_LC_SIDE: usize = 64;

/// Incremental construction of an [`ArchGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: ArchGraph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, name: &str, kind: InputKind) -> Source {
        self.graph.inputs.push(GraphInput {
            name: name.to_string(),
            kind,
        });
        Source::Input(self.graph.inputs.len() - 1)
    }

    /// Appends a node and returns its port 0.
    pub fn add(&mut self, name: &str, op: LayerOp, trainable: bool, inputs: &[Source]) -> Source {
        self.graph.nodes.push(Node {
            spec: LayerSpec {
                name: name.to_string(),
                op,
                trainable,
            },
            inputs: inputs.to_vec(),
        });
        Source::Node {
            node: self.graph.nodes.len() - 1,
            port: 0,
        }
    }

    pub fn output(&mut self, name: &str, src: Source) {
        self.graph.outputs.push((name.to_string(), src));
    }

    pub fn tap(&mut self, name: &str, src: Source) {
        self.graph.taps.push((name.to_string(), src));
    }

    pub fn finish(self) -> ArchGraph {
        self.graph
    }

    fn conv(
        &mut self,
        name: &str,
        x: Source,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        trainable: bool,
    ) -> Source {
        let op = LayerOp::Conv2d {
            out_channels,
            kernel,
            stride,
            pad: kernel / 2,
            bias,
        };
        self.add(name, op, trainable, &[x])
    }

    fn relu(&mut self, name: &str, x: Source) -> Source {
        self.add(name, LayerOp::Relu, true, &[x])
    }

    fn bn(&mut self, name: &str, x: Source) -> Source {
        self.add(name, LayerOp::BatchNorm, false, &[x])
    }

    /// Stride-16 trunk: VGG16 through conv5_3, ResNet-101 through layer3.
    fn backbone(&mut self, backbone: Backbone, prefix: &str, x: Source) -> Source {
        match backbone {
            Backbone::Vgg16 => self.vgg16_trunk(prefix, x),
            Backbone::Resnet101 => self.resnet101_trunk(prefix, x),
        }
    }

    fn vgg16_trunk(&mut self, prefix: &str, mut x: Source) -> Source {
        const STAGES: [(usize, usize); 5] = [(64, 2), (128, 2), (256, 3), (512, 3), (512, 3)];
        for (s, &(width, convs)) in STAGES.iter().enumerate() {
            let stage = s + 1;
            for c in 1..=convs {
                x = self.conv(
                    &format!("{prefix}conv{stage}_{c}"),
                    x,
                    width,
                    3,
                    1,
                    true,
                    stage >= 3,
                );
                x = self.relu(&format!("{prefix}relu{stage}_{c}"), x);
            }
            if stage < 5 {
                let op = LayerOp::MaxPool {
                    kernel: 2,
                    stride: 2,
                    pad: 0,
                };
                x = self.add(&format!("{prefix}pool{stage}"), op, true, &[x]);
            }
        }
        x
    }

    fn resnet101_trunk(&mut self, prefix: &str, x: Source) -> Source {
        let mut x = self.conv(&format!("{prefix}conv1"), x, 64, 7, 2, false, false);
        x = self.bn(&format!("{prefix}bn1"), x);
        x = self.relu(&format!("{prefix}relu"), x);
        let pool = LayerOp::MaxPool {
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        x = self.add(&format!("{prefix}maxpool"), pool, true, &[x]);
        x = self.res_layer(&format!("{prefix}layer1"), x, 64, 3, 1, false);
        x = self.res_layer(&format!("{prefix}layer2"), x, 128, 4, 2, true);
        self.res_layer(&format!("{prefix}layer3"), x, 256, 23, 2, true)
    }

    fn res_layer(
        &mut self,
        prefix: &str,
        mut x: Source,
        width: usize,
        blocks: usize,
        stride: usize,
        trainable: bool,
    ) -> Source {
        for b in 0..blocks {
            let s = if b == 0 { stride } else { 1 };
            x = self.bottleneck(&format!("{prefix}.{b}"), x, width, s, b == 0, trainable);
        }
        x
    }

    fn bottleneck(
        &mut self,
        prefix: &str,
        x: Source,
        width: usize,
        stride: usize,
        downsample: bool,
        trainable: bool,
    ) -> Source {
        let mut y = self.conv(&format!("{prefix}.conv1"), x, width, 1, 1, false, trainable);
        y = self.bn(&format!("{prefix}.bn1"), y);
        y = self.relu(&format!("{prefix}.relu1"), y);
        y = self.conv(&format!("{prefix}.conv2"), y, width, 3, stride, false, trainable);
        y = self.bn(&format!("{prefix}.bn2"), y);
        y = self.relu(&format!("{prefix}.relu2"), y);
        y = self.conv(&format!("{prefix}.conv3"), y, 4 * width, 1, 1, false, trainable);
        y = self.bn(&format!("{prefix}.bn3"), y);
        let shortcut = if downsample {
            let d = self.conv(
                &format!("{prefix}.downsample.0"),
                x,
                4 * width,
                1,
                stride,
                false,
                trainable,
            );
            self.bn(&format!("{prefix}.downsample.1"), d)
        } else {
            x
        };
        let sum = self.add(&format!("{prefix}.add"), LayerOp::ResidualAdd, true, &[y, shortcut]);
        self.relu(&format!("{prefix}.relu3"), sum)
    }

    fn rpn(&mut self, name: &str, features: Source) {
        let op = LayerOp::RpnHead {
            mid_channels: RPN_MID_CHANNELS,
            anchors: RPN_ANCHORS,
        };
        let rpn = self.add(name, op, true, &[features]);
        let Source::Node { node, .. } = rpn else { unreachable!() };
        self.output(&format!("{name}.objectness"), rpn);
        self.output(&format!("{name}.deltas"), Source::Node { node, port: 1 });
    }

    fn roi_align(&mut self, name: &str, features: Source, rois: Source) -> Source {
        let op = LayerOp::RoiAlign {
            output: ROI_OUTPUT,
            spatial_scale: 1.0 / 16.0,
        };
        self.add(name, op, true, &[features, rois])
    }

    /// Per-RoI feature extractor: fc6/fc7 for VGG16, layer4 + pooling for
    /// ResNet-101.
    fn roi_extractor(&mut self, backbone: Backbone, prefix: &str, x: Source) -> Source {
        match backbone {
            Backbone::Vgg16 => {
                let mut x = self.add(&format!("{prefix}flatten"), LayerOp::Flatten, true, &[x]);
                for fc in ["fc6", "fc7"] {
                    let op = LayerOp::Fc { out_features: 4096 };
                    x = self.add(&format!("{prefix}{fc}"), op, true, &[x]);
                    x = self.relu(&format!("{prefix}relu_{fc}"), x);
                }
                x
            }
            Backbone::Resnet101 => {
                let x = self.res_layer(&format!("{prefix}layer4"), x, 512, 3, 2, true);
                self.add(&format!("{prefix}pool"), LayerOp::GlobalAvgPool, true, &[x])
            }
        }
    }

    fn det_head(&mut self, x: Source, num_classes: usize) {
        self.tap("head_input", x);
        let head = self.add("det_head", LayerOp::DetHead { num_classes }, true, &[x]);
        let Source::Node { node, .. } = head else { unreachable!() };
        self.output("cls_scores", head);
        self.output("bbox_deltas", Source::Node { node, port: 1 });
    }

    fn reduce(&mut self, x: Source, channels: usize) -> Source {
        let r = self.conv("fuse.reduce", x, channels, 1, 1, true, true);
        self.tap("reduced", r);
        r
    }

    fn fuse(&mut self, op: LayerOp, inputs: &[Source]) -> Source {
        let f = self.add("fuse.concat", op, true, inputs);
        self.tap("fused", f);
        f
    }
}

/// Builds `variant` with the default depth channel count (1 for raw depth and
/// the per-channel HDHA streams, 3 for an encoded depth image).
pub fn build_architecture(variant: Variant, backbone: Backbone, num_classes: usize) -> Result<ArchGraph> {
    build_architecture_with(variant, backbone, num_classes, None)
}

pub fn build_architecture_with(
    variant: Variant,
    backbone: Backbone,
    num_classes: usize,
    depth_channels: Option<usize>,
) -> Result<ArchGraph> {
    if num_classes < 2 {
        return Err(Error::param("num_classes must be >= 2 (including background)"));
    }
    let default_channels = if variant.is_raw() || variant == Variant::HdhaSplit { 1 } else { 3 };
    let dc = depth_channels.unwrap_or(default_channels);
    if dc == 0 {
        return Err(Error::param("depth_channels must be >= 1"));
    }
    let c = backbone.out_channels();
    let mut b = GraphBuilder::new();
    let rgb = b.input("rgb", InputKind::Rgb);

    match variant {
        Variant::Baseline => {
            let rois = b.input("rois", InputKind::Rois);
            let f = b.backbone(backbone, "rgb.", rgb);
            b.rpn("rpn", f);
            let r = b.roi_align("roi_align", f, rois);
            let e = b.roi_extractor(backbone, "rcnn.", r);
            b.det_head(e, num_classes);
        }
        Variant::ProcEc | Variant::RawEc => {
            let depth = b.input("depth", InputKind::Depth { channels: dc });
            let rois = b.input("rois", InputKind::Rois);
            let f_rgb = b.backbone(backbone, "rgb.", rgb);
            let f_depth = if variant == Variant::ProcEc {
                b.backbone(backbone, "depth.", depth)
            } else {
                let resize = LayerOp::BilinearResize { size: None };
                let r = b.add("depth.resize", resize, true, &[depth, f_rgb]);
                b.conv("depth.match", r, c, 1, 1, true, true)
            };
            let fused = b.fuse(LayerOp::ChannelConcat, &[f_rgb, f_depth]);
            let f = b.reduce(fused, c);
            b.rpn("rpn", f);
            let r = b.roi_align("roi_align", f, rois);
            let e = b.roi_extractor(backbone, "rcnn.", r);
            b.det_head(e, num_classes);
        }
        Variant::ProcMc => {
            let depth = b.input("depth", InputKind::Depth { channels: dc });
            let rois = b.input("rois", InputKind::Rois);
            let f_rgb = b.backbone(backbone, "rgb.", rgb);
            let f_depth = b.backbone(backbone, "depth.", depth);
            b.rpn("rgb.rpn", f_rgb);
            b.rpn("depth.rpn", f_depth);
            let r_rgb = b.roi_align("rgb.roi_align", f_rgb, rois);
            let r_depth = b.roi_align("depth.roi_align", f_depth, rois);
            let fused = b.fuse(LayerOp::ChannelConcat, &[r_rgb, r_depth]);
            let r = b.reduce(fused, c);
            let e = b.roi_extractor(backbone, "rcnn.", r);
            b.det_head(e, num_classes);
        }
        Variant::RawMc => {
            let depth = b.input("depth", InputKind::Depth { channels: dc });
            let rois = b.input("rois", InputKind::Rois);
            let f_rgb = b.backbone(backbone, "rgb.", rgb);
            b.rpn("rpn", f_rgb);
            let r_rgb = b.roi_align("roi_align", f_rgb, rois);
            let resize = LayerOp::BilinearResize {
                size: Some((ROI_OUTPUT, ROI_OUTPUT)),
            };
            let d = b.add("depth.resize", resize, true, &[depth]);
            let d = b.conv("depth.match", d, c, 1, 1, true, true);
            let fused = b.fuse(LayerOp::BatchRepeatConcat, &[r_rgb, d]);
            let r = b.reduce(fused, c);
            let e = b.roi_extractor(backbone, "rcnn.", r);
            b.det_head(e, num_classes);
        }
        Variant::ProcLc | Variant::PriorLate => {
            let depth = b.input("depth", InputKind::Depth { channels: dc });
            let rois = b.input("rois", InputKind::Rois);
            let mut streams = Vec::new();
            for (prefix, x) in [("rgb.", rgb), ("depth.", depth)] {
                let f = b.backbone(backbone, prefix, x);
                b.rpn(&format!("{prefix}rpn"), f);
                let r = b.roi_align(&format!("{prefix}roi_align"), f, rois);
                streams.push(b.roi_extractor(backbone, &format!("{prefix}rcnn."), r));
            }
            let fused = b.fuse(LayerOp::ChannelConcat, &streams);
            b.det_head(fused, num_classes);
        }
        Variant::RawLc => {
            let depth = b.input("depth", InputKind::Depth { channels: dc });
            let rois = b.input("rois", InputKind::Rois);
            let f = b.backbone(backbone, "rgb.", rgb);
            b.rpn("rpn", f);
            let r = b.roi_align("roi_align", f, rois);
            let e = b.roi_extractor(backbone, "rcnn.", r);
            let resize = LayerOp::BilinearResize {
                size: Some((RAW_LC_SIDE, RAW_LC_SIDE)),
            };
            let d = b.add("depth.resize", resize, true, &[depth]);
            let d = b.add("depth.flatten", LayerOp::Flatten, true, &[d]);
            let fused = b.fuse(LayerOp::BatchRepeatConcat, &[e, d]);
            b.det_head(fused, num_classes);
        }
        Variant::HdhaSplit => {
            let mut feats = vec![b.backbone(backbone, "rgb.", rgb)];
            let names = ["depth_hd", "depth_h", "depth_a"];
            let inputs: Vec<Source> = names
                .iter()
                .map(|n| b.input(n, InputKind::Depth { channels: dc }))
                .collect();
            let rois = b.input("rois", InputKind::Rois);
            for (name, x) in names.iter().zip(inputs) {
                feats.push(b.backbone(backbone, &format!("{}.", &name[6..]), x));
            }
            let fused = b.fuse(LayerOp::ChannelConcat, &feats);
            let f = b.reduce(fused, c);
            b.rpn("rpn", f);
            let r = b.roi_align("roi_align", f, rois);
            let e = b.roi_extractor(backbone, "rcnn.", r);
            b.det_head(e, num_classes);
        }
    }

    let mut graph = b.finish();
    graph.variant = Some(variant);
    graph.backbone = Some(backbone);
    graph.validate()?;
    Ok(graph)
}
