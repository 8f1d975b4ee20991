use std::collections::BTreeMap;

use rayon::prelude::*;

use super::lcg::Lcg;
use super::params::node_params;
use super::shapes::propagate_from_inputs;
use super::{ArchGraph, InputKind, LayerOp, ShapeTable, Source, TensorShape};
use crate::error::{Error, Result};

const BN_EPS: f32 = 1e-5;
const CO_BLOCK: usize = 16;
const Q_TILE: usize = 256;

/// Dense row-major `f32` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: TensorShape,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Result<Self> {
        if shape.numel() != data.len() {
            return Err(Error::structural(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let data = vec![0.0; shape.numel()];
        Tensor { shape, data }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Graph outputs and named taps.
    pub outputs: BTreeMap<String, Tensor>,
    pub shapes: ShapeTable,
}

/// Deterministic toy inputs: images with values in `[0, 1)` drawn from a
/// stream seeded by `seed`, and `num_rois` boxes covering a quarter of the
/// image each, spread on a fixed lattice.
pub fn toy_inputs(graph: &ArchGraph, hw: (usize, usize), num_rois: usize, seed: u64) -> BTreeMap<String, Tensor> {
    let (h, w) = hw;
    let mut lcg = Lcg::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = BTreeMap::new();
    for inp in &graph.inputs {
        let t = match inp.kind {
            InputKind::Rgb | InputKind::Depth { .. } => {
                let c = if let InputKind::Depth { channels } = inp.kind { channels } else { 3 };
                let data = (0..c * h * w).map(|_| lcg.next_weight() * 5.0 + 0.5).collect();
                Tensor {
                    shape: TensorShape::new([c, h, w]),
                    data,
                }
            }
            InputKind::Rois => {
                let (bw, bh) = ((w / 2).max(1), (h / 2).max(1));
                let mut data = Vec::with_capacity(num_rois * 4);
                for i in 0..num_rois {
                    let x1 = ((i * 7) % (w - bw + 1)) as f32;
                    let y1 = ((i * 5) % (h - bh + 1)) as f32;
                    data.extend([x1, y1, x1 + bw as f32, y1 + bh as f32]);
                }
                Tensor {
                    shape: TensorShape::new([num_rois, 4]),
                    data,
                }
            }
        };
        out.insert(inp.name.clone(), t);
    }
    out
}

/// Seeded numeric forward pass.
///
/// Every parameter of every node (frozen or not, batch-norm affine included)
/// is drawn from one [`Lcg`] stream in node-id order; within a node, conv
/// weights are laid out `[co][ci][kh][kw]` followed by the bias, fc weights
/// `[out][in]` followed by the bias, batch norm `gamma` then `beta` (running
/// mean 0, variance 1). RPN heads hold their 3x3, objectness and box convs in
/// that order; detection heads their class then box fc layers. Class scores
/// are softmax-normalised.
pub fn execute_forward(
    graph: &ArchGraph,
    inputs: &BTreeMap<String, Tensor>,
    seed: u64,
) -> Result<ForwardOutput> {
    let mut given = Vec::with_capacity(graph.inputs.len());
    for inp in &graph.inputs {
        let t = inputs
            .get(&inp.name)
            .ok_or_else(|| Error::structural(format!("missing input tensor '{}'", inp.name)))?;
        if t.shape.numel() != t.data.len() {
            return Err(Error::structural(format!("input '{}' data does not fill its shape", inp.name)));
        }
        given.push(t);
    }
    let image_hw = given
        .iter()
        .zip(&graph.inputs)
        .find(|(_, i)| i.kind != InputKind::Rois)
        .map(|(t, _)| t.shape.dims().get(1..3).map(|s| s.to_vec()).unwrap_or_default());
    let mut num_rois = 1;
    for (t, inp) in given.iter().zip(&graph.inputs) {
        let d = t.shape.dims();
        let ok = match inp.kind {
            InputKind::Rgb => d.len() == 3 && d[0] == 3,
            InputKind::Depth { channels } => d.len() == 3 && d[0] == channels,
            InputKind::Rois => {
                num_rois = d.first().copied().unwrap_or(0);
                d.len() == 2 && d[1] == 4 && d[0] > 0
            }
        };
        let same_hw = inp.kind == InputKind::Rois || image_hw.as_deref() == d.get(1..);
        if !ok || !same_hw {
            return Err(Error::structural(format!(
                "input '{}' has shape {}, incompatible with the graph entry",
                inp.name, t.shape
            )));
        }
    }
    let shapes = propagate_from_inputs(
        graph,
        given.iter().map(|t| t.shape.clone()).collect(),
        num_rois,
    )?;

    let mut offsets = Vec::with_capacity(graph.nodes.len());
    let mut acc = 0u64;
    for node in &graph.nodes {
        offsets.push(acc);
        acc += node_params(&node.spec.op, shapes.of(node.inputs[0]));
    }

    // consumers still pending per produced tensor
    let mut pending: BTreeMap<Source, usize> = BTreeMap::new();
    for node in &graph.nodes {
        for s in &node.inputs {
            *pending.entry(*s).or_default() += 1;
        }
    }

    let mut values: Vec<Option<Vec<Tensor>>> = vec![None; graph.nodes.len()];
    let mut named = BTreeMap::new();
    for i in graph.topo_order()? {
        let node = &graph.nodes[i];
        let ins: Vec<&Tensor> = node
            .inputs
            .iter()
            .map(|s| match *s {
                Source::Input(k) => given[k],
                Source::Node { node, port } => &values[node].as_ref().expect("topological order")[port],
            })
            .collect();
        let stream = Lcg::at(seed, offsets[i]);
        let outs = run_node(&node.spec.op, &ins, seed, offsets[i], stream)?;
        for (port, (t, want)) in outs.iter().zip(&shapes.nodes[i]).enumerate() {
            if &t.shape != want {
                return Err(Error::structural(format!(
                    "'{}' port {port} produced {} where {want} was inferred",
                    node.spec.name, t.shape
                )));
            }
        }
        values[i] = Some(outs);
        for (name, s) in graph.outputs.iter().chain(&graph.taps) {
            if let Source::Node { node, port } = *s {
                if node == i {
                    named.insert(name.clone(), values[i].as_ref().unwrap()[port].clone());
                }
            }
        }
        for s in &node.inputs {
            if let Source::Node { node: p, .. } = *s {
                if let Some(c) = pending.get_mut(s) {
                    *c -= 1;
                }
                let live = (0..graph.nodes[p].spec.op.num_outputs()).any(|port| {
                    pending.get(&Source::Node { node: p, port }).copied().unwrap_or(0) > 0
                });
                if !live {
                    values[p] = None;
                }
            }
        }
    }
    for (name, s) in graph.outputs.iter().chain(&graph.taps) {
        if let Source::Input(k) = *s {
            named.insert(name.clone(), given[k].clone());
        }
    }
    Ok(ForwardOutput {
        outputs: named,
        shapes,
    })
}

fn run_node(op: &LayerOp, ins: &[&Tensor], seed: u64, offset: u64, mut stream: Lcg) -> Result<Vec<Tensor>> {
    let x = ins[0];
    Ok(match *op {
        LayerOp::Conv2d {
            out_channels,
            kernel,
            stride,
            pad,
            bias,
        } => vec![conv2d(x, out_channels, kernel, stride, pad, bias, seed, offset)],
        LayerOp::Relu => vec![relu(x.clone())],
        LayerOp::MaxPool { kernel, stride, pad } => vec![maxpool(x, kernel, stride, pad)],
        LayerOp::Fc { out_features } => vec![fc(x, out_features, seed, offset)],
        LayerOp::BilinearResize { size } => {
            let (oh, ow) = size.unwrap_or_else(|| {
                let d = ins[1].shape.dims();
                (d[d.len() - 2], d[d.len() - 1])
            });
            vec![bilinear_resize(x, oh, ow)]
        }
        LayerOp::ChannelConcat => vec![channel_concat(ins)],
        LayerOp::BatchRepeatConcat => vec![batch_repeat_concat(x, ins[1])],
        LayerOp::Flatten => {
            let d = x.shape.dims();
            let shape = match d.len() {
                4 => TensorShape::new([d[0], d[1] * d[2] * d[3]]),
                3 => TensorShape::new([x.shape.numel()]),
                _ => x.shape.clone(),
            };
            vec![Tensor {
                shape,
                data: x.data.clone(),
            }]
        }
        LayerOp::RoiAlign {
            output,
            spatial_scale,
        } => vec![roi_align(x, ins[1], output, spatial_scale)],
        LayerOp::RpnHead {
            mid_channels,
            anchors,
        } => {
            let c = x.shape.channels() as u64;
            let m = mid_channels as u64;
            let a = anchors as u64;
            let mid = relu(conv2d(x, mid_channels, 3, 1, 1, true, seed, offset));
            let off_cls = offset + 9 * c * m + m;
            let off_box = off_cls + m * 2 * a + 2 * a;
            vec![
                conv2d(&mid, 2 * anchors, 1, 1, 0, true, seed, off_cls),
                conv2d(&mid, 4 * anchors, 1, 1, 0, true, seed, off_box),
            ]
        }
        LayerOp::DetHead { num_classes } => {
            let f = *x.shape.dims().last().unwrap() as u64;
            let k = num_classes as u64;
            let mut cls = fc(x, num_classes, seed, offset);
            softmax_rows(&mut cls);
            let boxes = fc(x, 4 * num_classes, seed, offset + f * k + k);
            vec![cls, boxes]
        }
        LayerOp::BatchNorm => {
            let c = x.shape.channels();
            let mut gamma = vec![0.0; c];
            let mut beta = vec![0.0; c];
            stream.fill(&mut gamma);
            stream.fill(&mut beta);
            vec![batch_norm(x, &gamma, &beta)]
        }
        LayerOp::ResidualAdd => {
            let mut out = x.clone();
            for (o, v) in out.data.iter_mut().zip(&ins[1].data) {
                *o += v;
            }
            vec![out]
        }
        LayerOp::GlobalAvgPool => vec![global_avg_pool(x)],
    })
}

/// `(batch, channels, height, width)` of a feature map, batch 1 if unbatched.
fn map_dims(t: &Tensor) -> (usize, usize, usize, usize) {
    match *t.shape.dims() {
        [c, h, w] => (1, c, h, w),
        [n, c, h, w] => (n, c, h, w),
        _ => unreachable!("shape checked by propagation"),
    }
}

fn map_shape(template: &Tensor, n: usize, c: usize, h: usize, w: usize) -> TensorShape {
    if template.shape.rank() == 4 {
        TensorShape::new([n, c, h, w])
    } else {
        TensorShape::new([c, h, w])
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d(
    x: &Tensor,
    cout: usize,
    k: usize,
    s: usize,
    p: usize,
    bias: bool,
    seed: u64,
    offset: u64,
) -> Tensor {
    let (n, cin, h, w) = map_dims(x);
    let ho = (h + 2 * p - k) / s + 1;
    let wo = (w + 2 * p - k) / s + 1;
    let kk = cin * k * k;
    let plane = ho * wo;
    let q = n * plane;

    let direct = k == 1 && s == 1 && p == 0 && n == 1;
    let col_buf;
    let col: &[f32] = if direct {
        &x.data
    } else {
        let mut buf = vec![0.0f32; kk * q];
        for b in 0..n {
            for ci in 0..cin {
                let src = &x.data[(b * cin + ci) * h * w..][..h * w];
                for kh in 0..k {
                    for kw in 0..k {
                        let row = (ci * k + kh) * k + kw;
                        let dst = &mut buf[row * q + b * plane..][..plane];
                        for oy in 0..ho {
                            let iy = (oy * s + kh) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src_row = &src[iy as usize * w..][..w];
                            for ox in 0..wo {
                                let ix = (ox * s + kw) as isize - p as isize;
                                if ix >= 0 && ix < w as isize {
                                    dst[oy * wo + ox] = src_row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        col_buf = buf;
        &col_buf
    };

    let mut out = vec![0.0f32; cout * q];
    out.par_chunks_mut(CO_BLOCK * q)
        .enumerate()
        .for_each(|(blk, chunk)| {
            let co0 = blk * CO_BLOCK;
            let rows = chunk.len() / q;
            let mut wts = vec![0.0f32; rows * kk];
            for r in 0..rows {
                Lcg::at(seed, offset + ((co0 + r) * kk) as u64).fill(&mut wts[r * kk..][..kk]);
            }
            let mut biases = vec![0.0f32; rows];
            if bias {
                Lcg::at(seed, offset + (cout * kk + co0) as u64).fill(&mut biases);
            }
            let mut acc = [0.0f32; Q_TILE];
            for q0 in (0..q).step_by(Q_TILE) {
                let tl = Q_TILE.min(q - q0);
                for r in 0..rows {
                    let acc = &mut acc[..tl];
                    acc.fill(0.0);
                    let wr = &wts[r * kk..][..kk];
                    for (j, &wk) in wr.iter().enumerate() {
                        let src = &col[j * q + q0..][..tl];
                        for (a, &v) in acc.iter_mut().zip(src) {
                            *a += wk * v;
                        }
                    }
                    let b = biases[r];
                    for (o, &a) in chunk[r * q + q0..][..tl].iter_mut().zip(acc.iter()) {
                        *o = a + b;
                    }
                }
            }
        });

    let data = if n == 1 {
        out
    } else {
        let mut re = vec![0.0f32; cout * q];
        for co in 0..cout {
            for b in 0..n {
                re[(b * cout + co) * plane..][..plane]
                    .copy_from_slice(&out[co * q + b * plane..][..plane]);
            }
        }
        re
    };
    Tensor {
        shape: map_shape(x, n, cout, ho, wo),
        data,
    }
}

/// Eight-lane dot product with a fixed reduction tree.
fn dot8(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    for (l, (x, y)) in ca.remainder().iter().zip(cb.remainder()).enumerate() {
        lanes[l] += x * y;
    }
    ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]))
}

fn fc(x: &Tensor, out_features: usize, seed: u64, offset: u64) -> Tensor {
    let (n, f_in, shape) = match *x.shape.dims() {
        [f] => (1, f, TensorShape::new([out_features])),
        [n, f] => (n, f, TensorShape::new([n, out_features])),
        _ => unreachable!("shape checked by propagation"),
    };
    let mut cols = vec![0.0f32; out_features * n];
    cols.par_chunks_mut(n).enumerate().for_each_init(
        || vec![0.0f32; f_in],
        |row, (o, col)| {
            Lcg::at(seed, offset + (o * f_in) as u64).fill(row);
            let b = Lcg::at(seed, offset + (out_features * f_in + o) as u64).next_weight();
            for (r, c) in col.iter_mut().enumerate() {
                *c = dot8(row, &x.data[r * f_in..][..f_in]) + b;
            }
        },
    );
    let mut data = vec![0.0f32; n * out_features];
    for o in 0..out_features {
        for r in 0..n {
            data[r * out_features + o] = cols[o * n + r];
        }
    }
    Tensor { shape, data }
}

fn relu(mut x: Tensor) -> Tensor {
    for v in &mut x.data {
        *v = v.max(0.0);
    }
    x
}

fn maxpool(x: &Tensor, k: usize, s: usize, p: usize) -> Tensor {
    let (n, c, h, w) = map_dims(x);
    let ho = (h + 2 * p - k) / s + 1;
    let wo = (w + 2 * p - k) / s + 1;
    let mut data = Vec::with_capacity(n * c * ho * wo);
    for plane in x.data.chunks_exact(h * w) {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..k {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix >= 0 && ix < w as isize {
                            m = m.max(plane[iy as usize * w + ix as usize]);
                        }
                    }
                }
                data.push(m);
            }
        }
    }
    Tensor {
        shape: map_shape(x, n, c, ho, wo),
        data,
    }
}

/// Half-pixel-centred sampling position and weights along one axis.
fn resize_axis(out: usize, inp: usize) -> Vec<(usize, usize, f32)> {
    let scale = inp as f64 / out as f64;
    (0..out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(inp - 1);
            let i1 = (i0 + 1).min(inp - 1);
            (i0, i1, (src - i0 as f64) as f32)
        })
        .collect()
}

fn bilinear_resize(x: &Tensor, oh: usize, ow: usize) -> Tensor {
    let (n, c, h, w) = map_dims(x);
    let ys = resize_axis(oh, h);
    let xs = resize_axis(ow, w);
    let mut data = Vec::with_capacity(n * c * oh * ow);
    for plane in x.data.chunks_exact(h * w) {
        for &(y0, y1, ly) in &ys {
            for &(x0, x1, lx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - lx) + plane[y0 * w + x1] * lx;
                let bot = plane[y1 * w + x0] * (1.0 - lx) + plane[y1 * w + x1] * lx;
                data.push(top * (1.0 - ly) + bot * ly);
            }
        }
    }
    Tensor {
        shape: map_shape(x, n, c, oh, ow),
        data,
    }
}

fn channel_concat(ins: &[&Tensor]) -> Tensor {
    let first = ins[0];
    let batched = first.shape.is_batched();
    let axis = first.shape.channel_axis();
    let mut dims = first.shape.dims().to_vec();
    dims[axis] = ins.iter().map(|t| t.shape.dims()[axis]).sum();
    let shape = TensorShape(dims);
    let mut data = Vec::with_capacity(shape.numel());
    if batched {
        let n = first.shape.dims()[0];
        for b in 0..n {
            for t in ins {
                let per = t.data.len() / n;
                data.extend_from_slice(&t.data[b * per..][..per]);
            }
        }
    } else {
        for t in ins {
            data.extend_from_slice(&t.data);
        }
    }
    Tensor { shape, data }
}

fn batch_repeat_concat(per_roi: &Tensor, shared: &Tensor) -> Tensor {
    let n = per_roi.shape.dims()[0];
    let mut dims = per_roi.shape.dims().to_vec();
    dims[1] += shared.shape.dims()[0];
    let per = per_roi.data.len() / n;
    let mut data = Vec::with_capacity(n * (per + shared.data.len()));
    for b in 0..n {
        data.extend_from_slice(&per_roi.data[b * per..][..per]);
        data.extend_from_slice(&shared.data);
    }
    Tensor {
        shape: TensorShape(dims),
        data,
    }
}

fn bilinear_at(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    if y < -1.0 || y > h as f64 || x < -1.0 || x > w as f64 {
        return 0.0;
    }
    let (y, x) = (y.max(0.0), x.max(0.0));
    let (mut y0, mut x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1, ly, lx);
    if y0 >= h - 1 {
        y0 = h - 1;
        y1 = h - 1;
        ly = 0.0;
    } else {
        y1 = y0 + 1;
        ly = (y - y0 as f64) as f32;
    }
    if x0 >= w - 1 {
        x0 = w - 1;
        x1 = w - 1;
        lx = 0.0;
    } else {
        x1 = x0 + 1;
        lx = (x - x0 as f64) as f32;
    }
    let (hy, hx) = (1.0 - ly, 1.0 - lx);
    hy * hx * plane[y0 * w + x0] + hy * lx * plane[y0 * w + x1] + ly * hx * plane[y1 * w + x0]
        + ly * lx * plane[y1 * w + x1]
}

/// One bilinear sample at the centre of each output cell; boxes are
/// `x1, y1, x2, y2` in input pixels, scaled by `spatial_scale`.
fn roi_align(features: &Tensor, rois: &Tensor, out: usize, spatial_scale: f64) -> Tensor {
    let (_, c, h, w) = map_dims(features);
    let n = rois.shape.dims()[0];
    let mut data = Vec::with_capacity(n * c * out * out);
    for r in rois.data.chunks_exact(4) {
        let [x1, y1, x2, y2] = [r[0], r[1], r[2], r[3]].map(|v| v as f64 * spatial_scale);
        let bin_w = (x2 - x1).max(1.0) / out as f64;
        let bin_h = (y2 - y1).max(1.0) / out as f64;
        for plane in features.data.chunks_exact(h * w) {
            for i in 0..out {
                let y = y1 + (i as f64 + 0.5) * bin_h;
                for j in 0..out {
                    let xx = x1 + (j as f64 + 0.5) * bin_w;
                    data.push(bilinear_at(plane, h, w, y, xx));
                }
            }
        }
    }
    Tensor {
        shape: TensorShape::new([n, c, out, out]),
        data,
    }
}

fn batch_norm(x: &Tensor, gamma: &[f32], beta: &[f32]) -> Tensor {
    let (_, c, h, w) = map_dims(x);
    let inv = 1.0 / (1.0 + BN_EPS).sqrt();
    let mut out = x.clone();
    for (idx, plane) in out.data.chunks_exact_mut(h * w).enumerate() {
        let ch = idx % c;
        let (g, b) = (gamma[ch] * inv, beta[ch]);
        for v in plane {
            *v = *v * g + b;
        }
    }
    out
}

fn global_avg_pool(x: &Tensor) -> Tensor {
    let (n, c, h, w) = map_dims(x);
    let data = x
        .data
        .chunks_exact(h * w)
        .map(|p| p.iter().sum::<f32>() / (h * w) as f32)
        .collect();
    let shape = if x.shape.rank() == 4 {
        TensorShape::new([n, c])
    } else {
        TensorShape::new([c])
    };
    Tensor { shape, data }
}

fn softmax_rows(t: &mut Tensor) {
    let k = *t.shape.dims().last().unwrap();
    for row in t.data.chunks_exact_mut(k) {
        let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architecture::{build_architecture, Backbone, GraphBuilder, Variant};

    fn single(op: LayerOp, shape: TensorShape) -> (ArchGraph, BTreeMap<String, Tensor>) {
        let mut b = GraphBuilder::new();
        let x = b.input("depth", InputKind::Depth { channels: shape.dims()[0] });
        let y = b.add("node", op, true, &[x]);
        b.output("y", y);
        let g = b.finish();
        let n = shape.numel();
        let data = (0..n).map(|i| i as f32 + 1.0).collect();
        let mut inputs = BTreeMap::new();
        inputs.insert("depth".to_string(), Tensor::new(shape, data).unwrap());
        (g, inputs)
    }

    #[test]
    fn one_by_one_conv_by_hand() {
        let op = LayerOp::Conv2d {
            out_channels: 2,
            kernel: 1,
            stride: 1,
            pad: 0,
            bias: true,
        };
        let (g, inputs) = single(op, TensorShape::new([1, 2, 2]));
        let out = execute_forward(&g, &inputs, 11).unwrap();
        let y = &out.outputs["y"];
        // independent generator: w0, w1, b0, b1 are draws 0..4
        let mut s = 11u64;
        let mut draw = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let u = (s >> 11) as f64 / 9007199254740992.0;
            (0.2 * u - 0.1) as f32
        };
        let (w0, w1, b0, b1) = (draw(), draw(), draw(), draw());
        let x = [1.0f32, 2.0, 3.0, 4.0];
        let mut expect = Vec::new();
        for (w, b) in [(w0, b0), (w1, b1)] {
            expect.extend(x.iter().map(|v| w * v + b));
        }
        assert_eq!(y.shape.dims(), &[2, 2, 2]);
        assert_eq!(y.data, expect);
    }

    #[test]
    fn padded_conv_matches_naive() {
        let op = LayerOp::Conv2d {
            out_channels: 3,
            kernel: 3,
            stride: 2,
            pad: 1,
            bias: false,
        };
        let (g, inputs) = single(op, TensorShape::new([2, 5, 4]));
        let y = execute_forward(&g, &inputs, 3).unwrap().outputs["y"].clone();
        assert_eq!(y.shape.dims(), &[3, 3, 2]);
        let x = &inputs["depth"].data;
        for co in 0..3 {
            let mut wts = vec![0.0f32; 18];
            Lcg::at(3, co as u64 * 18).fill(&mut wts);
            for oy in 0..3 {
                for ox in 0..2 {
                    let mut acc = 0.0f32;
                    for ci in 0..2 {
                        for kh in 0..3 {
                            for kw in 0..3 {
                                let iy = (oy * 2 + kh) as isize - 1;
                                let ix = (ox * 2 + kw) as isize - 1;
                                let v = if (0..5).contains(&iy) && (0..4).contains(&ix) {
                                    x[ci * 20 + iy as usize * 4 + ix as usize]
                                } else {
                                    0.0
                                };
                                acc += wts[(ci * 3 + kh) * 3 + kw] * v;
                            }
                        }
                    }
                    let got = y.data[co * 6 + oy * 2 + ox];
                    assert!((got - acc).abs() <= 1e-5 * acc.abs().max(1.0), "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn resize_identity_and_constant() {
        let (g, inputs) = single(LayerOp::BilinearResize { size: Some((5, 4)) }, TensorShape::new([1, 5, 4]));
        let y = &execute_forward(&g, &inputs, 0).unwrap().outputs["y"];
        assert_eq!(y.data, inputs["depth"].data);
        let resized = bilinear_resize(&Tensor::new(TensorShape::new([1, 3, 3]), vec![2.5; 9]).unwrap(), 7, 7);
        assert!(resized.data.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn roi_align_constant_map() {
        let f = Tensor::new(TensorShape::new([2, 4, 4]), vec![1.5; 32]).unwrap();
        let rois = Tensor::new(TensorShape::new([1, 4]), vec![0.0, 0.0, 64.0, 64.0]).unwrap();
        let out = roi_align(&f, &rois, 7, 1.0 / 16.0);
        assert_eq!(out.shape.dims(), &[1, 2, 7, 7]);
        assert!(out.data.iter().all(|&v| (v - 1.5).abs() < 1e-6));
    }

    #[test]
    fn zero_input_bias_free_is_zero() {
        let mut b = GraphBuilder::new();
        let x = b.input("rgb", InputKind::Rgb);
        let conv = |out_channels| LayerOp::Conv2d {
            out_channels,
            kernel: 3,
            stride: 1,
            pad: 1,
            bias: false,
        };
        let y = b.add("c1", conv(8), true, &[x]);
        let y = b.add("r1", LayerOp::Relu, true, &[y]);
        let y = b.add("c2", conv(4), true, &[y]);
        b.output("y", y);
        let g = b.finish();
        let mut inputs = BTreeMap::new();
        inputs.insert("rgb".into(), Tensor::zeros(TensorShape::new([3, 6, 6])));
        let y = &execute_forward(&g, &inputs, 5).unwrap().outputs["y"];
        assert!(y.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dot8_matches_sequential_on_exact_values() {
        let a: Vec<f32> = (0..37).map(|i| i as f32).collect();
        let b: Vec<f32> = (0..37).map(|i| (i % 3) as f32).collect();
        let want: f32 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot8(&a, &b), want);
    }

    #[test]
    fn input_shape_mismatch_is_structural() {
        let g = build_architecture(Variant::ProcEc, Backbone::Vgg16, 21).unwrap();
        let mut inputs = toy_inputs(&g, (64, 64), 2, 1);
        inputs.insert("depth".into(), Tensor::zeros(TensorShape::new([3, 32, 64])));
        assert!(matches!(execute_forward(&g, &inputs, 1), Err(Error::Structural(_))));
        inputs.remove("depth");
        assert!(matches!(execute_forward(&g, &inputs, 1), Err(Error::Structural(_))));
    }

    #[test]
    fn vgg_raw_lc_forward() {
        let g = build_architecture(Variant::RawLc, Backbone::Vgg16, 5).unwrap();
        let inputs = toy_inputs(&g, (64, 64), 3, 2);
        let out = execute_forward(&g, &inputs, 2).unwrap();
        assert_eq!(out.outputs["head_input"].shape.dims(), &[3, 8192]);
        let cls = &out.outputs["cls_scores"];
        assert_eq!(cls.shape.dims(), &[3, 5]);
        for row in cls.data.chunks(5) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
        assert_eq!(out.outputs["bbox_deltas"].shape.dims(), &[3, 20]);
        assert_eq!(out.outputs["rpn.objectness"].shape.dims(), &[18, 4, 4]);
    }
}
