//! Index-form graph input for the network.

use alloc::vec;
use alloc::vec::Vec;

use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::graph::{Edge, NodeType, SessionGraph};
use crate::session::Label;

/// Node features and typed edges in the layout the network consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct NetInput {
    pub text_dim: usize,
    /// `n × text_dim` frozen text embeddings.
    pub text: Vec<f32>,
    pub types: Vec<NodeType>,
    pub dt_seconds: Vec<f64>,
    pub edges: Vec<Edge>,
}

/// Per-node supervision aligned with a [`NetInput`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Targets {
    pub trigger: Vec<Label>,
    pub routing: Vec<Label>,
}

impl Targets {
    pub fn from_graph(g: &SessionGraph) -> Targets {
        Targets {
            trigger: g.nodes.iter().map(|n| if n.node_type.is_entity() { Label::Unlabeled } else { n.trigger_label }).collect(),
            routing: g.nodes.iter().map(|n| if n.node_type.is_entity() { n.routing_label } else { Label::Unlabeled }).collect(),
        }
    }

    pub fn append(&mut self, other: &Targets) {
        self.trigger.extend_from_slice(&other.trigger);
        self.routing.extend_from_slice(&other.routing);
    }

    pub fn has_labels(&self) -> bool {
        self.trigger.iter().chain(&self.routing).any(|l| l.is_labeled())
    }
}

impl NetInput {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn from_graph<E: TextEmbedder + ?Sized>(g: &SessionGraph, embedder: &E) -> Result<NetInput> {
        let dim = embedder.dim();
        let mut text = vec![0.0f32; g.nodes.len() * dim];
        for (node, row) in g.nodes.iter().zip(text.chunks_exact_mut(dim)) {
            embedder.embed_into(&node.surface_text, row)?;
        }
        Ok(NetInput::from_parts(g, dim, text))
    }

    /// Builds the input from precomputed text rows.
    pub fn from_parts(g: &SessionGraph, text_dim: usize, text: Vec<f32>) -> NetInput {
        assert_eq!(text.len(), g.nodes.len() * text_dim);
        NetInput {
            text_dim,
            text,
            types: g.nodes.iter().map(|n| n.node_type).collect(),
            dt_seconds: g.nodes.iter().map(|n| if n.node_type.is_entity() { 0.0 } else { n.dt_seconds }).collect(),
            edges: g.edges.clone(),
        }
    }

    /// Disjoint union; node indices of later parts are shifted.
    pub fn union(parts: &[&NetInput]) -> NetInput {
        let text_dim = parts.first().map_or(0, |p| p.text_dim);
        let mut out = NetInput {
            text_dim,
            text: Vec::new(),
            types: Vec::new(),
            dt_seconds: Vec::new(),
            edges: Vec::new(),
        };
        for p in parts {
            assert_eq!(p.text_dim, text_dim);
            let base = out.len();
            out.text.extend_from_slice(&p.text);
            out.types.extend_from_slice(&p.types);
            out.dt_seconds.extend_from_slice(&p.dt_seconds);
            out.edges.extend(p.edges.iter().map(|e| Edge { src: e.src + base, dst: e.dst + base, channel: e.channel }));
        }
        out
    }

    pub fn event_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.types[i].is_entity()).collect()
    }

    pub fn entity_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.types[i].is_entity()).collect()
    }

    /// Incoming-edge lists per destination, preserving edge-list order.
    pub(crate) fn incoming(&self) -> Result<Incoming> {
        let n = self.len();
        let mut counts = vec![0usize; n + 1];
        for e in &self.edges {
            counts[e.dst + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0usize; self.edges.len()];
        for (k, e) in self.edges.iter().enumerate() {
            order[fill[e.dst]] = k;
            fill[e.dst] += 1;
        }
        if let Some(i) = (0..n).find(|&i| counts[i] == counts[i + 1]) {
            return Err(Error::NoIncomingEdge(i));
        }
        Ok(Incoming { ptr: counts, edges: order })
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Incoming {
    pub ptr: Vec<usize>,
    pub edges: Vec<usize>,
}

impl Incoming {
    #[inline]
    pub fn of(&self, i: usize) -> &[usize] {
        &self.edges[self.ptr[i]..self.ptr[i + 1]]
    }
}
