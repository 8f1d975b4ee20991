use serde::Serialize;

use super::{ArchGraph, LayerKind, LayerOp, ShapeTable, TensorShape};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamRow {
    pub node: String,
    pub kind: LayerKind,
    pub trainable: u64,
    pub fixed: u64,
    /// Part of `fixed` coming from frozen weight layers.
    pub fixed_frozen: u64,
    /// Part of `fixed` coming from batch-norm affine parameters.
    pub fixed_bn: u64,
}

impl ParamRow {
    pub fn total(&self) -> u64 {
        self.trainable + self.fixed
    }
}

impl Serialize for LayerKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamReport {
    /// Nodes that carry parameters, in graph order.
    pub rows: Vec<ParamRow>,
    pub trainable: u64,
    pub fixed: u64,
    pub total: u64,
    pub fixed_frozen: u64,
    pub fixed_bn: u64,
}

impl ParamReport {
    /// Trainable parameters of nodes whose name starts with `prefix`.
    pub fn trainable_with_prefix(&self, prefix: &str) -> u64 {
        self.rows
            .iter()
            .filter(|r| r.node.starts_with(prefix))
            .map(|r| r.trainable)
            .sum()
    }

    pub fn row(&self, node: &str) -> Option<&ParamRow> {
        self.rows.iter().find(|r| r.node == node)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("node,kind,trainable,fixed,total,fixed_frozen,fixed_bn\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.node,
                r.kind,
                r.trainable,
                r.fixed,
                r.total(),
                r.fixed_frozen,
                r.fixed_bn
            ));
        }
        out.push_str(&format!(
            "TOTAL,,{},{},{},{},{}\n",
            self.trainable, self.fixed, self.total, self.fixed_frozen, self.fixed_bn
        ));
        out
    }
}

/// Parameter count of one node from its first input shape.
pub(crate) fn node_params(op: &LayerOp, input: &TensorShape) -> u64 {
    let c_in = || input.channels() as u64;
    match *op {
        LayerOp::Conv2d {
            out_channels,
            kernel,
            bias,
            ..
        } => {
            let co = out_channels as u64;
            (kernel * kernel) as u64 * c_in() * co + if bias { co } else { 0 }
        }
        LayerOp::Fc { out_features } => {
            let f_in = *input.dims().last().unwrap_or(&0) as u64;
            let f_out = out_features as u64;
            f_in * f_out + f_out
        }
        LayerOp::BatchNorm => 2 * c_in(),
        LayerOp::RpnHead {
            mid_channels,
            anchors,
        } => {
            let (m, a) = (mid_channels as u64, anchors as u64);
            9 * c_in() * m + m + (m * 2 * a + 2 * a) + (m * 4 * a + 4 * a)
        }
        LayerOp::DetHead { num_classes } => {
            let f = *input.dims().last().unwrap_or(&0) as u64;
            let k = num_classes as u64;
            (f * k + k) + (f * 4 * k + 4 * k)
        }
        _ => 0,
    }
}

/// Trainable / fixed split per node.
///
/// Weight layers flagged non-trainable count as fixed ("frozen"); batch-norm
/// affine parameters are always fixed. Running statistics are buffers and
/// are not counted.
pub fn count_parameters(graph: &ArchGraph, shapes: &ShapeTable) -> Result<ParamReport> {
    if shapes.nodes.len() != graph.nodes.len()
        || shapes.inputs.len() != graph.inputs.len()
        || shapes.nodes.iter().zip(&graph.nodes).any(|(s, n)| s.len() != n.spec.op.num_outputs())
    {
        return Err(Error::State(
            "shape table does not match the graph; run shape propagation first".into(),
        ));
    }
    let mut rows = Vec::new();
    for node in &graph.nodes {
        let input = shapes.of(node.inputs[0]);
        let n = node_params(&node.spec.op, input);
        if n == 0 {
            continue;
        }
        let (mut row_t, mut frozen, mut bn) = (0, 0, 0);
        if node.spec.kind() == LayerKind::BatchNorm {
            bn = n;
        } else if node.spec.trainable {
            row_t = n;
        } else {
            frozen = n;
        }
        rows.push(ParamRow {
            node: node.spec.name.clone(),
            kind: node.spec.kind(),
            trainable: row_t,
            fixed: frozen + bn,
            fixed_frozen: frozen,
            fixed_bn: bn,
        });
    }
    let trainable = rows.iter().map(|r| r.trainable).sum();
    let fixed_frozen = rows.iter().map(|r| r.fixed_frozen).sum();
    let fixed_bn = rows.iter().map(|r| r.fixed_bn).sum();
    let fixed = fixed_frozen + fixed_bn;
    Ok(ParamReport {
        rows,
        trainable,
        fixed,
        total: trainable + fixed,
        fixed_frozen,
        fixed_bn,
    })
}
