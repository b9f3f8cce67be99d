//! Strictly causal streaming inference over a rolling event window.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::extract::{extract_entities, Entity};
use crate::graph::{build_session_graph, CapPolicy, NodeType, SessionGraph, MAX_EVENTS};
use crate::hash::sha1_bytes;
use crate::model::forward::{SITE_ROUTING_HEAD, SITE_TRIGGER_HEAD};
use crate::model::{Architecture, Layout, Mode, NetInput, Network};
use crate::scalar::sigmoid;
use crate::session::{is_metadata_event, EventRecord, SessionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServeConfig {
    pub threshold: f64,
    pub top_k: usize,
    pub window: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig { threshold: 0.5, top_k: 20, window: MAX_EVENTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedEntity {
    pub node: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerHandoff {
    pub event_id: String,
    /// `false` means downstream is not called; scores are still reported.
    pub fire: bool,
    pub p_trig: f64,
    pub routing: Vec<RoutedEntity>,
}

/// Cross-session embedding cache restricted to small-vocabulary node types.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    entries: BTreeMap<[u8; 20], Vec<f32>>,
    pub hits: u64,
    pub misses: u64,
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Hit fraction over all lookups; 0 before the first lookup.
    pub fn hit_rate(&self) -> f64 {
        let total = self.hits + self.misses;
        if total == 0 {
            0.0
        } else {
            self.hits as f64 / total as f64
        }
    }

    /// Cached embedding of an entity, computing and storing it on a miss.
    pub fn fetch<E: TextEmbedder + ?Sized>(&mut self, entity: &Entity, embedder: &E) -> Result<Vec<f32>> {
        if !entity.kind.is_cacheable() {
            return Err(Error::NotCacheable(entity.kind));
        }
        let text = entity.surface_text();
        let key = sha1_bytes(text.as_bytes());
        if let Some(v) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(v.clone());
        }
        self.misses += 1;
        let v = embedder.embed(&text)?;
        self.entries.insert(key, v.clone());
        Ok(v)
    }
}

/// Precomputes embeddings for a deployment vocabulary. Counters start at 0.
pub fn warm_cache<E: TextEmbedder + ?Sized>(vocabulary: &[(NodeType, String)], embedder: &E) -> Result<EmbeddingCache> {
    let mut cache = EmbeddingCache::new();
    for (kind, label) in vocabulary {
        cache.fetch(&Entity::new(*kind, label.clone()), embedder)?;
    }
    cache.hits = 0;
    cache.misses = 0;
    Ok(cache)
}

/// Monotonic time source for the component breakdown.
pub trait Clock {
    fn now_ns(&self) -> u64;
}

/// Clock that never advances.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ns(&self) -> u64 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ServeTimings {
    /// Graph update, text embeddings and input projection.
    pub embed_ns: u64,
    pub message_passing_ns: u64,
    pub heads_ns: u64,
}

/// Single-writer state of one streamed session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub sample_id: String,
    window: VecDeque<EventRecord>,
    last_ts: Option<i64>,
    text_memo: BTreeMap<String, Vec<f32>>,
    row_memo: BTreeMap<(String, u64), Vec<f32>>,
}

impl SessionState {
    pub fn new(sample_id: impl Into<String>) -> Self {
        SessionState {
            sample_id: sample_id.into(),
            window: VecDeque::new(),
            last_ts: None,
            text_memo: BTreeMap::new(),
            row_memo: BTreeMap::new(),
        }
    }

    pub fn events(&self) -> impl Iterator<Item = &EventRecord> {
        self.window.iter()
    }

    /// Current causal graph: the window without backward temporal edges.
    pub fn graph(&self) -> SessionGraph {
        let session = SessionRecord { sample_id: self.sample_id.clone(), events: self.window.iter().cloned().collect() };
        build_session_graph(&session, CapPolicy::KeepLast).without_backward_edges()
    }
}

/// A checkpoint bound to an embedder for streaming use.
pub struct Server<'a, E: TextEmbedder + ?Sized> {
    pub arch: &'a Architecture,
    pub layout: &'a Layout,
    pub params: &'a [f32],
    pub embedder: &'a E,
    pub config: ServeConfig,
}

impl<'a, E: TextEmbedder + ?Sized> Server<'a, E> {
    pub fn new(arch: &'a Architecture, layout: &'a Layout, params: &'a [f32], embedder: &'a E, config: ServeConfig) -> Self {
        Server { arch, layout, params, embedder, config }
    }

    /// Appends one event and scores the resulting prefix. Metadata-only
    /// events are ignored (`Ok(None)`); an event older than its predecessor
    /// is rejected and leaves the state untouched.
    pub fn serve_event(
        &self,
        state: &mut SessionState,
        event: EventRecord,
        mut cache: Option<&mut EmbeddingCache>,
        clock: &dyn Clock,
    ) -> Result<Option<(TriggerHandoff, ServeTimings)>> {
        if is_metadata_event(&event.text) {
            return Ok(None);
        }
        if event.text.trim().is_empty() {
            return Err(Error::EmptyEventText { sample_id: state.sample_id.clone(), event_id: event.event_id });
        }
        if state.last_ts.is_some_and(|ts| event.timestamp < ts) {
            return Err(Error::OutOfOrderEvent { sample_id: state.sample_id.clone(), event_id: event.event_id });
        }
        if self.embedder.dim() != self.arch.text_dim {
            return Err(Error::EmbeddingDim { expected: self.arch.text_dim, got: self.embedder.dim() });
        }
        let t0 = clock.now_ns();
        state.last_ts = Some(event.timestamp);
        let event_id = event.event_id.clone();
        let text = event.text.clone();
        state.window.push_back(event);
        while state.window.len() > self.config.window.max(1) {
            state.window.pop_front();
        }
        let graph = state.graph();

        if let Some(cache) = cache.as_deref_mut() {
            for ent in extract_entities(&text).into_iter().filter(|e| e.kind.is_cacheable()) {
                let v = cache.fetch(&ent, self.embedder)?;
                state.text_memo.insert(ent.node_id(), v);
            }
        }
        let dim = self.arch.text_dim;
        let mut text_rows = vec![0.0f32; graph.nodes.len() * dim];
        for (node, row) in graph.nodes.iter().zip(text_rows.chunks_exact_mut(dim)) {
            match state.text_memo.get(&node.node_id) {
                Some(v) => row.copy_from_slice(v),
                None => {
                    self.embedder.embed_into(&node.surface_text, row)?;
                    state.text_memo.insert(node.node_id.clone(), row.to_vec());
                }
            }
        }
        let input = NetInput::from_parts(&graph, dim, text_rows);

        let net = Network::new(self.arch, self.layout, self.params);
        let d = self.arch.hidden_dim;
        let keys: Vec<(String, u64)> =
            graph.nodes.iter().zip(&input.dt_seconds).map(|(n, dt)| (n.node_id.clone(), dt.to_bits())).collect();
        let missing: Vec<usize> = (0..keys.len()).filter(|&i| !state.row_memo.contains_key(&keys[i])).collect();
        if !missing.is_empty() {
            let sub = NetInput {
                text_dim: dim,
                text: missing.iter().flat_map(|&i| input.text[i * dim..(i + 1) * dim].iter().copied()).collect(),
                types: missing.iter().map(|&i| input.types[i]).collect(),
                dt_seconds: missing.iter().map(|&i| input.dt_seconds[i]).collect(),
                edges: Vec::new(),
            };
            let (rows, _) = net.featurize(&sub);
            for (r, &i) in missing.iter().enumerate() {
                state.row_memo.insert(keys[i].clone(), rows[r * d..(r + 1) * d].to_vec());
            }
        }
        let mut layer0 = Vec::with_capacity(keys.len() * d);
        for k in &keys {
            layer0.extend_from_slice(&state.row_memo[k]);
        }
        let live: BTreeSet<&String> = graph.nodes.iter().map(|n| &n.node_id).collect();
        state.text_memo.retain(|k, _| live.contains(k));
        let live_rows: BTreeSet<&(String, u64)> = keys.iter().collect();
        state.row_memo.retain(|k, _| live_rows.contains(k));
        let t1 = clock.now_ns();

        let (states, _, _) = net.backbone_from_layer0(&input, layer0, Mode::Eval)?;
        let t2 = clock.now_ns();

        let newest = *graph.event_nodes().last().expect("window holds the new event");
        let entity_rows = input.entity_rows();
        let (tl, _) = net.head_forward(self.layout.trigger_head, &states, &[newest], SITE_TRIGGER_HEAD, Mode::Eval);
        let (rl, _) = net.head_forward(self.layout.routing_head, &states, &entity_rows, SITE_ROUTING_HEAD, Mode::Eval);
        let p_trig = sigmoid(tl[0] as f64);
        let mut routed: Vec<(f64, &str, &str)> = entity_rows
            .iter()
            .zip(&rl)
            .map(|(&i, &l)| (sigmoid(l as f64), graph.nodes[i].node_id.as_str(), graph.nodes[i].label()))
            .collect();
        routed.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        routed.truncate(self.config.top_k);
        let handoff = TriggerHandoff {
            event_id,
            fire: p_trig >= self.config.threshold,
            p_trig,
            routing: routed.into_iter().map(|(score, _, node)| RoutedEntity { node: node.into(), score }).collect(),
        };
        let t3 = clock.now_ns();
        let timings = ServeTimings {
            embed_ns: t1.saturating_sub(t0),
            message_passing_ns: t2.saturating_sub(t1),
            heads_ns: t3.saturating_sub(t2),
        };
        Ok(Some((handoff, timings)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use crate::model::HeadRows;
    use crate::synth::{generate_synthetic, SyntheticProfile};
    use alloc::format;
    use alloc::string::ToString;

    fn small() -> (Architecture, Layout, Vec<f32>, HashEmbedder) {
        let arch = Architecture {
            text_dim: 16,
            type_dim: 4,
            dt_dim: 4,
            hidden_dim: 16,
            heads: 2,
            edge_dim: 4,
            head_hidden: 8,
            ..Architecture::default()
        };
        let layout = Layout::new(&arch);
        let params = layout.init(3);
        (arch, layout, params, HashEmbedder::with_dim(16))
    }

    fn stream(seed: u64, n: usize) -> Vec<SessionRecord> {
        let p = SyntheticProfile { min_events: 5, max_events: 14, ..SyntheticProfile::default() };
        generate_synthetic(seed, n, &p).unwrap()
    }

    #[test]
    fn streaming_matches_batch_prefix_forward() {
        let (arch, layout, params, emb) = small();
        let server = Server::new(&arch, &layout, &params, &emb, ServeConfig::default());
        let net = Network::new(&arch, &layout, &params);
        for s in stream(1, 6) {
            let g = build_session_graph(&s, CapPolicy::KeepLast);
            let mut state = SessionState::new(s.sample_id.clone());
            for (t, ev) in s.events.iter().enumerate() {
                let (h, _) = server.serve_event(&mut state, ev.clone(), None, &NoClock).unwrap().unwrap();
                let p = g.causal_prefix(t).unwrap();
                let input = NetInput::from_graph(&p, &emb).unwrap();
                let rows = HeadRows { trigger: vec![p.event_nodes()[t]], routing: input.entity_rows() };
                let (out, _) = net.forward(&input, rows, Mode::Eval).unwrap();
                assert!((h.p_trig - sigmoid(out.trigger_logits[0] as f64)).abs() < 1e-6);
                let mut scores: Vec<f64> = out.routing_logits.iter().map(|&l| sigmoid(l as f64)).collect();
                scores.sort_by(|a, b| b.total_cmp(a));
                for (r, s) in h.routing.iter().zip(&scores) {
                    assert!((r.score - s).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn cache_is_transparent_and_counts_hits() {
        let (arch, layout, params, emb) = small();
        let server = Server::new(&arch, &layout, &params, &emb, ServeConfig::default());
        let mut cache = EmbeddingCache::new();
        for s in stream(2, 4) {
            let mut a = SessionState::new(s.sample_id.clone());
            let mut b = SessionState::new(s.sample_id.clone());
            for ev in &s.events {
                let x = server.serve_event(&mut a, ev.clone(), None, &NoClock).unwrap().unwrap().0;
                let y = server.serve_event(&mut b, ev.clone(), Some(&mut cache), &NoClock).unwrap().unwrap().0;
                assert_eq!(x, y);
            }
        }
        assert!(cache.hits > 0 && cache.misses > 0);

        let mut cache = EmbeddingCache::new();
        let mut st = SessionState::new("s");
        let first = EventRecord::new("a", 0, "The user opened 'a.py' in VS Code.");
        let second = EventRecord::new("b", 5, "The user switched to Visual Studio Code.");
        server.serve_event(&mut st, first, Some(&mut cache), &NoClock).unwrap();
        let hits = cache.hits;
        server.serve_event(&mut st, second, Some(&mut cache), &NoClock).unwrap();
        assert_eq!(cache.hits, hits + 1);
    }

    #[test]
    fn non_cacheable_types_are_refused() {
        let emb = HashEmbedder::with_dim(16);
        let mut cache = EmbeddingCache::new();
        assert!(cache.fetch(&Entity::new(NodeType::File, "a.py"), &emb).is_err());
        assert!(warm_cache(&[(NodeType::Url, "https://go.dev".to_string())], &emb).is_err());
        let warm = warm_cache(&[(NodeType::App, "vscode".to_string()), (NodeType::FileExt, "py".to_string())], &emb).unwrap();
        assert_eq!((warm.len(), warm.hits, warm.misses), (2, 0, 0));
    }

    #[test]
    fn threshold_tie_fires() {
        let (arch, layout, mut params, emb) = small();
        for id in [layout.trigger_head.hidden.weight, layout.trigger_head.out.weight, layout.trigger_head.out.bias] {
            layout.slice_mut(&mut params, id).iter_mut().for_each(|v| *v = 0.0);
        }
        let server = Server::new(&arch, &layout, &params, &emb, ServeConfig::default());
        let mut st = SessionState::new("s");
        let (h, _) = server
            .serve_event(&mut st, EventRecord::new("a", 0, "The user opened 'a.py' in VS Code."), None, &NoClock)
            .unwrap()
            .unwrap();
        assert_eq!(h.p_trig, 0.5);
        assert!(h.fire);
    }

    #[test]
    fn routing_list_is_capped_and_ordered() {
        let (arch, layout, params, emb) = small();
        let server = Server::new(&arch, &layout, &params, &emb, ServeConfig::default());
        let mut st = SessionState::new("s");
        let mut last = None;
        // 25 artifacts, one per event
        for i in 0..25 {
            let ev = EventRecord::new(format!("e{i}"), i, format!("The user read the article 'topic number {i}'."));
            last = server.serve_event(&mut st, ev, None, &NoClock).unwrap();
        }
        let (h, _) = last.unwrap();
        assert_eq!(h.routing.len(), 20);
        assert!(h.routing.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn out_of_order_event_is_rejected_without_side_effects() {
        let (arch, layout, params, emb) = small();
        let server = Server::new(&arch, &layout, &params, &emb, ServeConfig::default());
        let mut st = SessionState::new("s");
        server.serve_event(&mut st, EventRecord::new("a", 10, "The user opened 'a.py' in VS Code."), None, &NoClock).unwrap();
        let before = st.clone();
        let err = server.serve_event(&mut st, EventRecord::new("b", 9, "The user opened 'b.py' in VS Code."), None, &NoClock);
        assert!(matches!(err, Err(Error::OutOfOrderEvent { .. })));
        assert_eq!(st, before);
        let meta = EventRecord::new("m", 11, "# Assistant Available Operations: none");
        assert!(server.serve_event(&mut st, meta, None, &NoClock).unwrap().is_none());
    }

    #[test]
    fn window_keeps_last_events() {
        let (arch, layout, params, emb) = small();
        let cfg = ServeConfig { window: 3, ..ServeConfig::default() };
        let server = Server::new(&arch, &layout, &params, &emb, cfg);
        let mut st = SessionState::new("s");
        for i in 0..5 {
            let ev = EventRecord::new(format!("e{i}"), i, format!("The user opened 'f{i}.py' in VS Code."));
            server.serve_event(&mut st, ev, None, &NoClock).unwrap();
        }
        let ids: Vec<&str> = st.events().map(|e| e.event_id.as_str()).collect();
        assert_eq!(ids, ["e2", "e3", "e4"]);
    }
}
