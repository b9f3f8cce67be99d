//! Graph and provenance dumps.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use tgl_core::graph::{provenance_edges, SessionGraph};

use crate::error::{io_err, Result};

pub const GRAPH_FORMAT: &str = "tgl-graph";
pub const GRAPH_VERSION: u32 = 1;

/// One line of a graph JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphLine {
    pub format: String,
    pub version: u32,
    pub graph: SessionGraph,
}

pub fn write_graphs(path: &Path, graphs: &[SessionGraph]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for g in graphs {
        let line = GraphLine { format: GRAPH_FORMAT.into(), version: GRAPH_VERSION, graph: g.clone() };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn label_cell(l: tgl_core::session::Label) -> String {
    l.target().map(|v| format!("{v}")).unwrap_or_default()
}

/// Writes `nodes.csv` and `edges.csv` into `dir`. Edges carry the semantic
/// relation names rather than the runtime channels.
pub fn write_provenance(dir: &Path, graphs: &[SessionGraph]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut nodes = csv::Writer::from_path(dir.join("nodes.csv"))?;
    nodes.write_record([
        "sample_id",
        "node_id",
        "node_type",
        "label",
        "dt_seconds",
        "event_index",
        "trigger_label",
        "routing_label",
    ])?;
    let mut edges = csv::Writer::from_path(dir.join("edges.csv"))?;
    edges.write_record(["sample_id", "src", "dst", "relation"])?;
    for g in graphs {
        for n in &g.nodes {
            nodes.write_record([
                g.sample_id.as_str(),
                &n.node_id,
                n.node_type.as_str(),
                n.label(),
                &format!("{}", n.dt_seconds),
                &n.event_index.map(|i| i.to_string()).unwrap_or_default(),
                &label_cell(n.trigger_label),
                &label_cell(n.routing_label),
            ])?;
        }
        for e in provenance_edges(g) {
            edges.write_record([g.sample_id.as_str(), &e.src, &e.dst, &e.relation])?;
        }
    }
    nodes.flush().map_err(io_err(dir))?;
    edges.flush().map_err(io_err(dir))?;
    Ok(())
}
