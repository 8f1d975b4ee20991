use std::fmt::Write;

use super::{ArchGraph, ShapeTable, Source};

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn source_id(src: Source) -> String {
    match src {
        Source::Input(i) => format!("in{i}"),
        Source::Node { node, .. } => format!("n{node}"),
    }
}

/// DOT digraph. Node labels are `name`, `kind hyperparams`, `trainable=..`
/// and the resolved output shape(s) (`?` without a shape table); edges are
/// labelled `out_port->in_port`.
pub fn export_graph(graph: &ArchGraph, shapes: Option<&ShapeTable>) -> String {
    let title = match (graph.variant, graph.backbone) {
        (Some(v), Some(b)) => format!("{v}/{b}"),
        _ => "graph".to_string(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(&title));
    out.push_str("  rankdir=TB;\n  node [shape=box, fontname=\"monospace\"];\n");
    for (i, inp) in graph.inputs.iter().enumerate() {
        let shape = shapes.map_or("?".to_string(), |t| t.inputs[i].to_string());
        let _ = writeln!(
            out,
            "  in{i} [shape=ellipse, label=\"{}\\ninput\\n{shape}\"];",
            escape(&inp.name)
        );
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        let spec = &node.spec;
        let hp = spec.op.hyperparams();
        let kind_line = if hp.is_empty() {
            spec.kind().to_string()
        } else {
            format!("{} {hp}", spec.kind())
        };
        let shape = shapes.map_or("?".to_string(), |t| {
            t.nodes[i].iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" | ")
        });
        let _ = writeln!(
            out,
            "  n{i} [label=\"{}\\n{}\\ntrainable={}\\n{shape}\"];",
            escape(&spec.name),
            escape(&kind_line),
            spec.trainable
        );
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        for (port, src) in node.inputs.iter().enumerate() {
            let from_port = match src {
                Source::Node { port, .. } => *port,
                Source::Input(_) => 0,
            };
            let _ = writeln!(
                out,
                "  {} -> n{i} [label=\"{from_port}->{port}\"];",
                source_id(*src)
            );
        }
    }
    for (k, (name, src)) in graph.outputs.iter().enumerate() {
        let _ = writeln!(out, "  out{k} [shape=ellipse, label=\"{}\"];", escape(name));
        let _ = writeln!(out, "  {} -> out{k};", source_id(*src));
    }
    out.push_str("}\n");
    out
}
