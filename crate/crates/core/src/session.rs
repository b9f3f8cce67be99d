//! Ingested activity records and the supervision derived from them.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::extract_entities;
use crate::graph::SessionGraph;

/// Three-valued supervision; `Unlabeled` never enters a loss or a metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub enum Label {
    Negative,
    Positive,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    pub fn is_labeled(self) -> bool {
        self != Label::Unlabeled
    }

    /// 1.0 / 0.0 for labeled values.
    pub fn target(self) -> Option<f64> {
        match self {
            Label::Negative => Some(0.0),
            Label::Positive => Some(1.0),
            Label::Unlabeled => None,
        }
    }
}

pub type TriggerLabel = Label;
pub type RoutingLabel = Label;

/// Gold class of a test event. `MustSkip` events are also part of the
/// can-skip population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldClassTag {
    MustFire,
    CanSkip,
    MustSkip,
}

impl GoldClassTag {
    pub fn is_can_skip(self) -> bool {
        matches!(self, GoldClassTag::CanSkip | GoldClassTag::MustSkip)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub event_id: String,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    pub text: String,
    #[serde(default)]
    pub proposed_task: Option<String>,
    #[serde(default)]
    pub accepted: bool,
    #[serde(default)]
    pub gold: Option<GoldClassTag>,
}

impl EventRecord {
    pub fn new(event_id: impl Into<String>, timestamp: i64, text: impl Into<String>) -> Self {
        EventRecord {
            event_id: event_id.into(),
            timestamp,
            text: text.into(),
            proposed_task: None,
            accepted: false,
            gold: None,
        }
    }

    /// The proposed task if it is non-null and non-empty.
    pub fn task(&self) -> Option<&str> {
        self.proposed_task.as_deref().filter(|t| !t.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub sample_id: String,
    pub events: Vec<EventRecord>,
}

pub const ACCEPTANCE_MARKER: &str = "Is Accepted: True";

/// Logger bookkeeping lines that carry no user activity.
pub fn is_metadata_event(text: &str) -> bool {
    text.starts_with("# Assistant Available Operations") || text.contains("Operation(name=")
}

impl SessionRecord {
    /// Drops metadata-only events and checks ordering and text invariants.
    /// Returns `Ok(None)` when nothing but metadata was present.
    pub fn sanitize(mut self) -> Result<Option<SessionRecord>> {
        self.events.retain(|e| !is_metadata_event(&e.text));
        if self.events.is_empty() {
            return Ok(None);
        }
        self.validate()?;
        Ok(Some(self))
    }

    pub fn validate(&self) -> Result<()> {
        if self.events.is_empty() {
            return Err(Error::EmptySession(self.sample_id.clone()));
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.text.trim().is_empty() {
                return Err(Error::EmptyEventText {
                    sample_id: self.sample_id.clone(),
                    event_id: e.event_id.clone(),
                });
            }
            if i > 0 && e.timestamp < self.events[i - 1].timestamp {
                return Err(Error::NonMonotoneTimestamps {
                    sample_id: self.sample_id.clone(),
                    event_id: e.event_id.clone(),
                });
            }
        }
        Ok(())
    }
}

/// 1 iff a non-empty task was proposed, or the acceptance marker appears in the text.
pub fn derive_trigger_label(event: &EventRecord) -> TriggerLabel {
    Label::from_bool(event.task().is_some() || event.text.contains(ACCEPTANCE_MARKER))
}

/// Session-scoped routing labels, keyed by entity node id.
///
/// Every proposed task in the graph's events is run through the extractor;
/// matched entity nodes are positive. If at least one fire event matched, the
/// remaining entity nodes are negative; otherwise every entity is unlabeled.
pub fn derive_routing_labels(session: &SessionRecord, graph: &SessionGraph) -> BTreeMap<String, RoutingLabel> {
    let entity_ids: BTreeSet<&str> = graph
        .nodes
        .iter()
        .filter(|n| n.node_type.is_entity())
        .map(|n| n.node_id.as_str())
        .collect();

    let kept: BTreeSet<&str> = graph
        .nodes
        .iter()
        .filter(|n| !n.node_type.is_entity())
        .filter_map(|n| n.source_event_id.as_deref())
        .collect();

    let mut positives: BTreeSet<String> = BTreeSet::new();
    for event in session.events.iter().filter(|e| kept.contains(e.event_id.as_str())) {
        let Some(task) = event.task() else { continue };
        for ent in extract_entities(task) {
            if !ent.kind.is_type_node() {
                let id = ent.node_id();
                if entity_ids.contains(id.as_str()) {
                    positives.insert(id);
                }
            }
        }
    }

    let supervised = !positives.is_empty();
    entity_ids
        .into_iter()
        .map(|id| {
            let label = if !supervised {
                Label::Unlabeled
            } else if positives.contains(id) {
                Label::Positive
            } else {
                Label::Negative
            };
            (id.to_string(), label)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationReport {
    /// Test events whose exact text also occurs somewhere in train.
    pub collisions: usize,
    pub distinct_colliding_texts: usize,
    pub test_events: usize,
}

impl IsolationReport {
    pub fn is_isolated(&self) -> bool {
        self.collisions == 0
    }
}

pub fn verify_split_isolation(train: &[SessionRecord], test: &[SessionRecord]) -> IsolationReport {
    let train_texts: BTreeSet<&str> = train
        .iter()
        .flat_map(|s| s.events.iter().map(|e| e.text.as_str()))
        .collect();
    let mut collisions = 0;
    let mut distinct = BTreeSet::new();
    let mut test_events = 0;
    for e in test.iter().flat_map(|s| s.events.iter()) {
        test_events += 1;
        if train_texts.contains(e.text.as_str()) {
            collisions += 1;
            distinct.insert(e.text.as_str());
        }
    }
    IsolationReport {
        collisions,
        distinct_colliding_texts: distinct.len(),
        test_events,
    }
}
