use super::{ArchGraph, InputKind, LayerKind, LayerOp, Source, TensorShape};
use crate::error::{Error, Result};

/// Resolved shapes for every graph input and node output port.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeTable {
    pub inputs: Vec<TensorShape>,
    pub nodes: Vec<Vec<TensorShape>>,
    pub num_rois: usize,
}

impl ShapeTable {
    pub fn of(&self, src: Source) -> &TensorShape {
        match src {
            Source::Input(i) => &self.inputs[i],
            Source::Node { node, port } => &self.nodes[node][port],
        }
    }

    /// Shape by tap, output, input or node name.
    pub fn named(&self, graph: &ArchGraph, name: &str) -> Option<&TensorShape> {
        if let Some((_, src)) = graph
            .taps
            .iter()
            .chain(&graph.outputs)
            .find(|(n, _)| n == name)
        {
            return Some(self.of(*src));
        }
        if let Some(i) = graph.inputs.iter().position(|inp| inp.name == name) {
            return Some(&self.inputs[i]);
        }
        graph.node_index(name).map(|i| &self.nodes[i][0])
    }

    /// `tensor,shape` rows: inputs, every node port, then named taps and
    /// outputs.
    pub fn to_csv(&self, graph: &ArchGraph) -> String {
        let mut out = String::from("tensor,shape\n");
        for (inp, shape) in graph.inputs.iter().zip(&self.inputs) {
            out.push_str(&format!("{},{shape}\n", inp.name));
        }
        for (node, shapes) in graph.nodes.iter().zip(&self.nodes) {
            for (port, shape) in shapes.iter().enumerate() {
                if port == 0 {
                    out.push_str(&format!("{},{shape}\n", node.spec.name));
                } else {
                    out.push_str(&format!("{}:{port},{shape}\n", node.spec.name));
                }
            }
        }
        for (name, src) in graph.taps.iter().chain(&graph.outputs) {
            out.push_str(&format!("{name},{}\n", self.of(*src)));
        }
        out
    }
}

/// Resolves every tensor shape from the RGB input extent `[3, H, W]`.
///
/// Depth inputs share `H x W` with the RGB image; the RoI input is
/// `[num_rois, 4]`.
pub fn propagate_shapes(graph: &ArchGraph, input: &TensorShape, num_rois: usize) -> Result<ShapeTable> {
    let d = input.dims();
    if d.len() != 3 || d[0] != 3 || d[1] == 0 || d[2] == 0 {
        return Err(Error::param(format!("RGB input must be 3xHxW, got {input}")));
    }
    if num_rois == 0 {
        return Err(Error::param("num_rois must be >= 1"));
    }
    let (h, w) = (d[1], d[2]);
    let inputs = graph
        .inputs
        .iter()
        .map(|inp| match inp.kind {
            InputKind::Rgb => TensorShape::new([3, h, w]),
            InputKind::Depth { channels } => TensorShape::new([channels, h, w]),
            InputKind::Rois => TensorShape::new([num_rois, 4]),
        })
        .collect();
    propagate_from_inputs(graph, inputs, num_rois)
}

/// Shape propagation from explicit input shapes.
pub(crate) fn propagate_from_inputs(
    graph: &ArchGraph,
    inputs: Vec<TensorShape>,
    num_rois: usize,
) -> Result<ShapeTable> {
    if inputs.len() != graph.inputs.len() {
        return Err(Error::structural(format!(
            "graph has {} inputs, {} shapes supplied",
            graph.inputs.len(),
            inputs.len()
        )));
    }
    let order = graph.topo_order()?;
    let mut table = ShapeTable {
        inputs,
        nodes: vec![Vec::new(); graph.nodes.len()],
        num_rois,
    };
    for i in order {
        let node = &graph.nodes[i];
        let ins: Vec<&TensorShape> = node.inputs.iter().map(|s| table.of(*s)).collect();
        let shapes = infer(graph, i, &ins)?;
        table.nodes[i] = shapes;
    }
    Ok(table)
}

fn spatial_out(n: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (n + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

/// Output shapes of node `i` given its input shapes.
pub(crate) fn infer(graph: &ArchGraph, i: usize, ins: &[&TensorShape]) -> Result<Vec<TensorShape>> {
    let node = &graph.nodes[i];
    let name = &node.spec.name;
    let kind = node.spec.kind();
    let fail = |msg: String| Error::structural(format!("{kind} '{name}': {msg}"));
    let edge = |port: usize| {
        format!(
            "edge {} -> '{name}' port {port}",
            graph.describe_source(node.inputs[port])
        )
    };
    let need_map = |port: usize| -> Result<()> {
        match ins[port].rank() {
            3 | 4 => Ok(()),
            _ => Err(fail(format!(
                "{} carries {}, expected a feature map",
                edge(port),
                ins[port]
            ))),
        }
    };
    let x = ins[0];
    let out = match node.spec.op {
        LayerOp::Conv2d {
            out_channels,
            kernel,
            stride,
            pad,
            ..
        } => {
            need_map(0)?;
            vec![pooled(x, kernel, stride, pad, Some(out_channels)).ok_or_else(|| {
                fail(format!("kernel {kernel} larger than padded input {x}"))
            })?]
        }
        LayerOp::MaxPool { kernel, stride, pad } => {
            need_map(0)?;
            vec![pooled(x, kernel, stride, pad, None).ok_or_else(|| {
                fail(format!("kernel {kernel} larger than padded input {x}"))
            })?]
        }
        LayerOp::Relu => vec![x.clone()],
        LayerOp::BatchNorm => {
            need_map(0)?;
            vec![x.clone()]
        }
        LayerOp::Fc { out_features } => match x.dims() {
            [_] => vec![TensorShape::new([out_features])],
            [n, _] => vec![TensorShape::new([*n, out_features])],
            _ => return Err(fail(format!("{} carries {x}, expected a vector", edge(0)))),
        },
        LayerOp::BilinearResize { size } => {
            need_map(0)?;
            let (oh, ow) = match size {
                Some(hw) => hw,
                None => {
                    need_map(1)?;
                    let r = ins[1].dims();
                    (r[r.len() - 2], r[r.len() - 1])
                }
            };
            let mut dims = x.dims().to_vec();
            let r = dims.len();
            dims[r - 2] = oh;
            dims[r - 1] = ow;
            vec![TensorShape(dims)]
        }
        LayerOp::ChannelConcat => {
            let axis = x.channel_axis();
            let mut dims = x.dims().to_vec();
            for (port, s) in ins.iter().enumerate().skip(1) {
                let compatible = s.rank() == x.rank()
                    && s
                        .dims()
                        .iter()
                        .zip(x.dims())
                        .enumerate()
                        .all(|(a, (p, q))| a == axis || p == q);
                if !compatible {
                    return Err(fail(format!(
                        "{} carries {s}, incompatible with port 0 shape {x}",
                        edge(port)
                    )));
                }
                dims[axis] += s.dims()[axis];
            }
            vec![TensorShape(dims)]
        }
        LayerOp::BatchRepeatConcat => {
            let (b, u) = (x, ins[1]);
            if !b.is_batched() || u.rank() + 1 != b.rank() || b.dims()[2..] != u.dims()[1..] {
                return Err(fail(format!(
                    "{} carries {u}, cannot repeat onto per-RoI {b} from {}",
                    edge(1),
                    edge(0)
                )));
            }
            let mut dims = b.dims().to_vec();
            dims[1] += u.dims()[0];
            vec![TensorShape(dims)]
        }
        LayerOp::Flatten => match x.dims() {
            [n, rest @ ..] if x.rank() == 4 => vec![TensorShape::new([*n, rest.iter().product()])],
            _ if x.rank() == 3 => vec![TensorShape::new([x.numel()])],
            _ => vec![x.clone()],
        },
        LayerOp::RoiAlign { output, .. } => {
            if x.rank() != 3 {
                return Err(fail(format!("{} carries {x}, expected CxHxW", edge(0))));
            }
            let rois = ins[1];
            if rois.rank() != 2 || rois.dims()[1] != 4 {
                return Err(fail(format!("{} carries {rois}, expected Nx4 boxes", edge(1))));
            }
            vec![TensorShape::new([rois.dims()[0], x.dims()[0], output, output])]
        }
        LayerOp::RpnHead { anchors, .. } => {
            if x.rank() != 3 {
                return Err(fail(format!("{} carries {x}, expected CxHxW", edge(0))));
            }
            let (h, w) = (x.dims()[1], x.dims()[2]);
            vec![
                TensorShape::new([2 * anchors, h, w]),
                TensorShape::new([4 * anchors, h, w]),
            ]
        }
        LayerOp::DetHead { num_classes } => {
            if x.rank() != 2 {
                return Err(fail(format!("{} carries {x}, expected NxF", edge(0))));
            }
            let n = x.dims()[0];
            vec![
                TensorShape::new([n, num_classes]),
                TensorShape::new([n, 4 * num_classes]),
            ]
        }
        LayerOp::ResidualAdd => {
            if ins[1] != x {
                return Err(fail(format!(
                    "{} carries {}, expected {x}",
                    edge(1),
                    ins[1]
                )));
            }
            vec![x.clone()]
        }
        LayerOp::GlobalAvgPool => {
            need_map(0)?;
            let d = x.dims();
            if x.rank() == 4 {
                vec![TensorShape::new([d[0], d[1]])]
            } else {
                vec![TensorShape::new([d[0]])]
            }
        }
    };
    debug_assert_eq!(out.len(), node.spec.op.num_outputs());
    debug_assert!(kind != LayerKind::DetHead || out.len() == 2);
    Ok(out)
}

fn pooled(
    x: &TensorShape,
    kernel: usize,
    stride: usize,
    pad: usize,
    channels: Option<usize>,
) -> Option<TensorShape> {
    let mut dims = x.dims().to_vec();
    let r = dims.len();
    dims[r - 2] = spatial_out(dims[r - 2], kernel, stride, pad)?;
    dims[r - 1] = spatial_out(dims[r - 1], kernel, stride, pad)?;
    if let Some(c) = channels {
        dims[x.channel_axis()] = c;
    }
    Some(TensorShape(dims))
}
