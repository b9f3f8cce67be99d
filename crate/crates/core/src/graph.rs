//! Per-session heterogeneous temporal graphs.
//!
//! The runtime graph carries only the five edge channels the network reads.
//! Semantic relations (`next_event`, `primary_entity`, `next_interaction`)
//! are available separately through [`provenance_edges`].

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_entities, select_anchor, Entity};
use crate::hash::sha1_hex;
use crate::session::{derive_routing_labels, derive_trigger_label, GoldClassTag, Label, SessionRecord};

/// Events kept per session graph.
pub const MAX_EVENTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Event,
    File,
    FileExt,
    FileTopic,
    App,
    Query,
    QueryLang,
    Url,
    UrlDomain,
    Artifact,
}

impl NodeType {
    pub const ALL: [NodeType; 10] = [
        NodeType::Event,
        NodeType::File,
        NodeType::FileExt,
        NodeType::FileTopic,
        NodeType::App,
        NodeType::Query,
        NodeType::QueryLang,
        NodeType::Url,
        NodeType::UrlDomain,
        NodeType::Artifact,
    ];

    /// Stable row in the type-embedding table.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Event => "event",
            NodeType::File => "file",
            NodeType::FileExt => "file_ext",
            NodeType::FileTopic => "file_topic",
            NodeType::App => "app",
            NodeType::Query => "query",
            NodeType::QueryLang => "query_lang",
            NodeType::Url => "url",
            NodeType::UrlDomain => "url_domain",
            NodeType::Artifact => "artifact",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        NodeType::ALL.iter().copied().find(|t| t.as_str() == s)
    }

    pub fn is_entity(self) -> bool {
        self != NodeType::Event
    }

    /// Coarse class nodes derived from another entity.
    pub fn is_type_node(self) -> bool {
        matches!(
            self,
            NodeType::FileExt | NodeType::FileTopic | NodeType::QueryLang | NodeType::UrlDomain
        )
    }

    /// Small recurring vocabularies whose embeddings may be cached across events.
    pub fn is_cacheable(self) -> bool {
        matches!(
            self,
            NodeType::App | NodeType::FileExt | NodeType::FileTopic | NodeType::QueryLang | NodeType::UrlDomain
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeChannel {
    HasEntity,
    BelongsTo,
    TemporalFwd,
    TemporalBwd,
    SelfLoop,
}

impl EdgeChannel {
    pub const ALL: [EdgeChannel; 5] = [
        EdgeChannel::HasEntity,
        EdgeChannel::BelongsTo,
        EdgeChannel::TemporalFwd,
        EdgeChannel::TemporalBwd,
        EdgeChannel::SelfLoop,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EdgeChannel::HasEntity => "has_entity",
            EdgeChannel::BelongsTo => "belongs_to",
            EdgeChannel::TemporalFwd => "temporal_fwd",
            EdgeChannel::TemporalBwd => "temporal_bwd",
            EdgeChannel::SelfLoop => "self_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_id: String,
    pub node_type: NodeType,
    /// Text handed to the embedder (event string, entity label, or `type:label`).
    pub surface_text: String,
    pub dt_seconds: f64,
    /// Position among the graph's events; `None` for entities.
    pub event_index: Option<usize>,
    /// Event that first introduced this node.
    pub first_event: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_event_id: Option<String>,
    #[serde(default)]
    pub trigger_label: Label,
    #[serde(default)]
    pub routing_label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<GoldClassTag>,
}

impl GraphNode {
    /// Entity label as extracted; type nodes drop their `type:` text prefix.
    pub fn label(&self) -> &str {
        if self.node_type.is_type_node() {
            if let Some(rest) = self.surface_text.strip_prefix(self.node_type.as_str()) {
                return rest.strip_prefix(':').unwrap_or(rest);
            }
        }
        &self.surface_text
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub channel: EdgeChannel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionGraph {
    pub sample_id: String,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    /// Anchor entity node id per event index.
    pub anchors: Vec<Option<String>>,
}

/// Which events survive the 64-event cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapPolicy {
    /// Keep the first events (stable labels for training).
    KeepFirst,
    /// Keep the most recent events (rolling serving window).
    KeepLast,
}

pub fn event_node_id(sample_id: &str, event_id: &str) -> String {
    let mut key = String::with_capacity(sample_id.len() + event_id.len() + 2);
    key.push_str(sample_id);
    key.push_str("::");
    key.push_str(event_id);
    let mut id = String::from("event:");
    id.push_str(&sha1_hex(key.as_bytes()));
    id
}

impl SessionGraph {
    pub fn event_count(&self) -> usize {
        self.anchors.len()
    }

    /// Node positions of the events, in event order.
    pub fn event_nodes(&self) -> Vec<usize> {
        let mut out = alloc::vec![usize::MAX; self.event_count()];
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(t) = n.event_index {
                out[t] = i;
            }
        }
        out
    }

    pub fn entity_nodes(&self) -> impl Iterator<Item = (usize, &GraphNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.node_type.is_entity())
    }

    pub fn count_channel(&self, ch: EdgeChannel) -> usize {
        self.edges.iter().filter(|e| e.channel == ch).count()
    }

    pub fn node_index(&self, node_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.node_id == node_id)
    }

    /// Attaches routing labels computed from the session's proposed tasks.
    pub fn apply_routing_labels(&mut self, session: &SessionRecord) {
        let labels = derive_routing_labels(session, self);
        for n in self.nodes.iter_mut().filter(|n| n.node_type.is_entity()) {
            n.routing_label = labels.get(&n.node_id).copied().unwrap_or(Label::Unlabeled);
        }
    }

    /// Strictly causal view at event `t`: events `<= t`, the entities they
    /// introduced, and no backward temporal edges.
    pub fn causal_prefix(&self, t: usize) -> Result<SessionGraph> {
        if t >= self.event_count() {
            return Err(Error::EventOutOfRange { index: t, len: self.event_count() });
        }
        let mut remap = alloc::vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.first_event <= t {
                remap[i] = nodes.len();
                nodes.push(n.clone());
            }
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| e.channel != EdgeChannel::TemporalBwd)
            .filter(|e| remap[e.src] != usize::MAX && remap[e.dst] != usize::MAX)
            .map(|e| Edge { src: remap[e.src], dst: remap[e.dst], channel: e.channel })
            .collect();
        Ok(SessionGraph {
            sample_id: self.sample_id.clone(),
            nodes,
            edges,
            anchors: self.anchors[..=t].to_vec(),
        })
    }

    /// Graph with backward temporal edges removed (the causal view at the last event).
    pub fn without_backward_edges(&self) -> SessionGraph {
        let mut g = self.clone();
        g.edges.retain(|e| e.channel != EdgeChannel::TemporalBwd);
        g
    }
}

struct Builder {
    sample_id: String,
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    anchors: Vec<Option<String>>,
    index: BTreeMap<String, usize>,
}

impl Builder {
    fn entity(&mut self, e: &Entity, event: usize) -> usize {
        let id = e.node_id();
        if let Some(&i) = self.index.get(&id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(GraphNode {
            node_id: id.clone(),
            node_type: e.kind,
            surface_text: e.surface_text(),
            dt_seconds: 0.0,
            event_index: None,
            first_event: event,
            source_event_id: None,
            trigger_label: Label::Unlabeled,
            routing_label: Label::Unlabeled,
            gold: None,
        });
        self.edges.push(Edge { src: i, dst: i, channel: EdgeChannel::SelfLoop });
        self.index.insert(id, i);
        i
    }
}

/// Builds the runtime graph for a session, capped at [`MAX_EVENTS`] events.
/// Trigger labels and gold tags are attached to event nodes; routing labels
/// are attached to entity nodes.
pub fn build_session_graph(session: &SessionRecord, policy: CapPolicy) -> SessionGraph {
    let events = match policy {
        CapPolicy::KeepFirst => &session.events[..session.events.len().min(MAX_EVENTS)],
        CapPolicy::KeepLast => &session.events[session.events.len().saturating_sub(MAX_EVENTS)..],
    };
    let mut b = Builder {
        sample_id: session.sample_id.clone(),
        nodes: Vec::new(),
        edges: Vec::new(),
        anchors: Vec::with_capacity(events.len()),
        index: BTreeMap::new(),
    };
    let mut prev_event: Option<usize> = None;
    let mut prev_ts: Option<i64> = None;
    for (t, ev) in events.iter().enumerate() {
        let entities = extract_entities(&ev.text);
        let dt = prev_ts.map_or(0.0, |p| (ev.timestamp - p).max(0) as f64);
        let idx = b.nodes.len();
        let node_id = event_node_id(&session.sample_id, &ev.event_id);
        b.nodes.push(GraphNode {
            node_id: node_id.clone(),
            node_type: NodeType::Event,
            surface_text: ev.text.clone(),
            dt_seconds: dt,
            event_index: Some(t),
            first_event: t,
            source_event_id: Some(ev.event_id.clone()),
            trigger_label: derive_trigger_label(ev),
            routing_label: Label::Unlabeled,
            gold: ev.gold,
        });
        b.edges.push(Edge { src: idx, dst: idx, channel: EdgeChannel::SelfLoop });
        b.index.insert(node_id, idx);
        if let Some(p) = prev_event {
            b.edges.push(Edge { src: p, dst: idx, channel: EdgeChannel::TemporalFwd });
            b.edges.push(Edge { src: idx, dst: p, channel: EdgeChannel::TemporalBwd });
        }
        let mut linked: Vec<usize> = Vec::new();
        for e in &entities {
            let ei = b.entity(e, t);
            if !linked.contains(&ei) {
                linked.push(ei);
                b.edges.push(Edge { src: idx, dst: ei, channel: EdgeChannel::HasEntity });
                b.edges.push(Edge { src: ei, dst: idx, channel: EdgeChannel::BelongsTo });
            }
        }
        b.anchors.push(select_anchor(&entities));
        prev_event = Some(idx);
        prev_ts = Some(ev.timestamp);
    }
    let mut g = SessionGraph {
        sample_id: b.sample_id,
        nodes: b.nodes,
        edges: b.edges,
        anchors: b.anchors,
    };
    let kept = SessionRecord {
        sample_id: session.sample_id.clone(),
        events: events.to_vec(),
    };
    g.apply_routing_labels(&kept);
    g
}

/// Human-readable provenance edge with a semantic relation name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEdge {
    pub src: String,
    pub dst: String,
    pub relation: String,
}

/// Semantic per-event writes: `self`, `next_event`, `has_entity`,
/// `primary_entity` and `next_interaction`.
pub fn provenance_edges(graph: &SessionGraph) -> Vec<ProvenanceEdge> {
    let mut out = Vec::new();
    let events = graph.event_nodes();
    let edge = |s: &str, d: &str, r: &str| ProvenanceEdge { src: s.to_string(), dst: d.to_string(), relation: r.to_string() };
    let mut prev_anchor: Option<&str> = None;
    for (t, &ni) in events.iter().enumerate() {
        let id = graph.nodes[ni].node_id.as_str();
        out.push(edge(id, id, "self"));
        if t > 0 {
            out.push(edge(&graph.nodes[events[t - 1]].node_id, id, "next_event"));
        }
        for e in graph.edges.iter().filter(|e| e.src == ni && e.channel == EdgeChannel::HasEntity) {
            out.push(edge(id, &graph.nodes[e.dst].node_id, "has_entity"));
        }
        let anchor = graph.anchors[t].as_deref();
        if let Some(a) = anchor {
            out.push(edge(id, a, "primary_entity"));
            if let Some(p) = prev_anchor {
                if p != a {
                    out.push(edge(p, a, "next_interaction"));
                }
            }
        }
        if anchor.is_some() {
            prev_anchor = anchor;
        } else {
            prev_anchor = None;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::EventRecord;
    use alloc::format;

    fn session(texts: &[&str]) -> SessionRecord {
        SessionRecord {
            sample_id: "s1".into(),
            events: texts
                .iter()
                .enumerate()
                .map(|(i, t)| EventRecord::new(format!("e{i}"), 100 + 10 * i as i64, *t))
                .collect(),
        }
    }

    #[test]
    fn two_events_one_entity_each() {
        let s = session(&["The user read the article 'Why Go'.", "The user closed the tab 'Weekly plan'."]);
        let g = build_session_graph(&s, CapPolicy::KeepFirst);
        assert_eq!(g.entity_nodes().count(), 2);
        assert_eq!(g.count_channel(EdgeChannel::SelfLoop), 4);
        assert_eq!(g.count_channel(EdgeChannel::TemporalFwd), 1);
        assert_eq!(g.count_channel(EdgeChannel::TemporalBwd), 1);
        assert_eq!(g.count_channel(EdgeChannel::HasEntity), 2);
        assert_eq!(g.count_channel(EdgeChannel::BelongsTo), 2);
        assert_eq!(g.edges.len(), 10);
    }

    #[test]
    fn single_event_has_no_temporal_edges() {
        let g = build_session_graph(&session(&["The user opened 'a.py' in VSCode."]), CapPolicy::KeepFirst);
        assert_eq!(g.count_channel(EdgeChannel::TemporalFwd), 0);
        assert_eq!(g.count_channel(EdgeChannel::TemporalBwd), 0);
        assert_eq!(g.nodes[0].dt_seconds, 0.0);
    }

    #[test]
    fn cap_policies() {
        let texts: Vec<String> = (0..70).map(|i| format!("The user opened 'f{i}.py' in VSCode.")).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let s = session(&refs);
        let first = build_session_graph(&s, CapPolicy::KeepFirst);
        assert_eq!(first.event_count(), 64);
        assert_eq!(first.nodes[0].source_event_id.as_deref(), Some("e0"));
        let last = build_session_graph(&s, CapPolicy::KeepLast);
        assert_eq!(last.event_count(), 64);
        assert_eq!(last.nodes[0].source_event_id.as_deref(), Some("e6"));
        assert_eq!(last.nodes[0].dt_seconds, 0.0);
    }

    #[test]
    fn prefix_drops_future_and_backward() {
        let s = session(&[
            "The user opened 'a.py' in VSCode.",
            "The user edited 'a.py' in VSCode.",
            "The user ran 'a.py' in Terminal.",
            "The user opened 'b.md' in VSCode.",
        ]);
        let g = build_session_graph(&s, CapPolicy::KeepFirst);
        let p = g.causal_prefix(2).unwrap();
        let b_id = crate::extract::entity_node_id(NodeType::File, "b.md");
        assert!(g.node_index(&b_id).is_some());
        assert!(p.node_index(&b_id).is_none());
        assert_eq!(p.count_channel(EdgeChannel::TemporalBwd), 0);
        assert_eq!(p.count_channel(EdgeChannel::TemporalFwd), 2);
        let last = g.causal_prefix(3).unwrap();
        assert_eq!(last.nodes, g.nodes);
        assert_eq!(last.edges, g.without_backward_edges().edges);
        let first = g.causal_prefix(0).unwrap();
        assert_eq!(first.event_count(), 1);
        assert_eq!(first.count_channel(EdgeChannel::TemporalFwd), 0);
        assert!(matches!(g.causal_prefix(4), Err(Error::EventOutOfRange { .. })));
    }

    #[test]
    fn provenance_next_interaction_only_on_anchor_change() {
        let s = session(&[
            "The user opened 'a.py' in VSCode.",
            "The user edited 'a.py' in VSCode.",
            "The user ran 'a.py' in Terminal.",
        ]);
        let g = build_session_graph(&s, CapPolicy::KeepFirst);
        let prov = provenance_edges(&g);
        assert_eq!(prov.iter().filter(|e| e.relation == "next_interaction").count(), 1);
        assert_eq!(prov.iter().filter(|e| e.relation == "primary_entity").count(), 3);
        assert_eq!(prov.iter().filter(|e| e.relation == "next_event").count(), 2);
    }

    #[test]
    fn routing_labels_from_proposed_task() {
        let mut s = session(&["The user opened 'email_filter.py' in Visual Studio Code.", "The user saved 'notes.md' in VSCode."]);
        s.events[1].proposed_task = Some("Add a regex check to 'email_filter.py'.".into());
        let g = build_session_graph(&s, CapPolicy::KeepFirst);
        let target = crate::extract::entity_node_id(NodeType::File, "email_filter.py");
        for (_, n) in g.entity_nodes() {
            let expect = if n.node_id == target { Label::Positive } else { Label::Negative };
            assert_eq!(n.routing_label, expect, "{}", n.surface_text);
        }

        let mut s2 = s.clone();
        s2.events[1].proposed_task = Some("Refactor 'absent.py'.".into());
        let g2 = build_session_graph(&s2, CapPolicy::KeepFirst);
        assert!(g2.entity_nodes().all(|(_, n)| n.routing_label == Label::Unlabeled));

        let mut s3 = s;
        s3.events[1].proposed_task = None;
        let g3 = build_session_graph(&s3, CapPolicy::KeepFirst);
        assert!(g3.entity_nodes().all(|(_, n)| n.routing_label == Label::Unlabeled));
    }
}
