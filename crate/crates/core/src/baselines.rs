//! Single-event trigger baselines: a verb lookup table and a 65-feature
//! logistic regression. Both see only the event itself and the gap to the
//! previous event.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{canonical_apps, extract_entities};
use crate::graph::NodeType;
use crate::scalar::sigmoid;
use crate::session::{derive_trigger_label, EventRecord, Label, SessionRecord};

const PREFIX: &str = "The user ";

/// First word after `"The user "`, lowercased, trailing punctuation removed.
pub fn event_verb(text: &str) -> Option<String> {
    let rest = text.strip_prefix(PREFIX)?;
    let word = rest.split_whitespace().next()?;
    let word = word.trim_end_matches(|c: char| !c.is_alphanumeric());
    if word.is_empty() {
        None
    } else {
        Some(word.to_lowercase())
    }
}

fn labeled_events(sessions: &[SessionRecord]) -> impl Iterator<Item = (&EventRecord, Option<&EventRecord>, bool)> {
    sessions.iter().flat_map(|s| {
        s.events.iter().enumerate().filter_map(move |(i, ev)| {
            let prev = if i == 0 { None } else { Some(&s.events[i - 1]) };
            match derive_trigger_label(ev) {
                Label::Positive => Some((ev, prev, true)),
                Label::Negative => Some((ev, prev, false)),
                Label::Unlabeled => None,
            }
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTrigger {
    pub rates: BTreeMap<String, f64>,
    pub global_rate: f64,
    /// Training events whose text did not match the template.
    pub parse_misses: u64,
}

impl RuleTrigger {
    pub fn fit(sessions: &[SessionRecord]) -> Result<RuleTrigger> {
        let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        let (mut pos, mut total, mut misses) = (0u64, 0u64, 0u64);
        for (ev, _, y) in labeled_events(sessions) {
            total += 1;
            pos += y as u64;
            match event_verb(&ev.text) {
                Some(v) => {
                    let c = counts.entry(v).or_insert((0, 0));
                    c.0 += y as u64;
                    c.1 += 1;
                }
                None => misses += 1,
            }
        }
        if total == 0 {
            return Err(Error::NoLabels);
        }
        Ok(RuleTrigger {
            rates: counts.into_iter().map(|(v, (p, n))| (v, p as f64 / n as f64)).collect(),
            global_rate: pos as f64 / total as f64,
            parse_misses: misses,
        })
    }

    /// Score and whether the verb parse failed.
    pub fn score_text(&self, text: &str) -> (f64, bool) {
        match event_verb(text) {
            Some(v) => (self.rates.get(&v).copied().unwrap_or(self.global_rate), false),
            None => (self.global_rate, true),
        }
    }
}

pub const VERB_SLOTS: usize = 48;
pub const APP_SLOTS: usize = 8;
pub const FEATURE_DIM: usize = VERB_SLOTS + 1 + APP_SLOTS + 1 + 6 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    pub steps: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { steps: 2000, lr: 0.1, l2: 1e-4 }
    }
}

/// Frozen 65-slot layout: 48 verbs + other, 8 canonical apps + none,
/// entity counts (file, app, query, url, artifact, type nodes), ln(1 + gap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularTrigger {
    pub verbs: Vec<String>,
    pub apps: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LrConfig,
}

impl TabularTrigger {
    pub fn zeroed(verbs: Vec<String>) -> TabularTrigger {
        TabularTrigger {
            verbs,
            apps: canonical_apps().into_iter().take(APP_SLOTS).map(String::from).collect(),
            weights: vec![0.0; FEATURE_DIM],
            bias: 0.0,
            config: LrConfig::default(),
        }
    }

    pub fn features(&self, event: &EventRecord, prev: Option<&EventRecord>) -> Vec<f64> {
        let mut x = vec![0.0; FEATURE_DIM];
        let verb_slot = event_verb(&event.text)
            .and_then(|v| self.verbs.iter().position(|k| *k == v))
            .unwrap_or(VERB_SLOTS);
        x[verb_slot] = 1.0;
        let ents = extract_entities(&event.text);
        let app_base = VERB_SLOTS + 1;
        let app_slot = ents
            .iter()
            .find(|e| e.kind == NodeType::App)
            .and_then(|e| self.apps.iter().position(|a| *a == e.label))
            .unwrap_or(APP_SLOTS);
        x[app_base + app_slot] = 1.0;
        let count_base = app_base + APP_SLOTS + 1;
        for e in &ents {
            let slot = match e.kind {
                NodeType::File => 0,
                NodeType::App => 1,
                NodeType::Query => 2,
                NodeType::Url => 3,
                NodeType::Artifact => 4,
                _ => 5,
            };
            x[count_base + slot] += 1.0;
        }
        let gap = prev.map_or(0, |p| (event.timestamp - p.timestamp).max(0));
        x[FEATURE_DIM - 1] = libm::log1p(gap as f64);
        x
    }

    pub fn score_features(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn score(&self, event: &EventRecord, prev: Option<&EventRecord>) -> f64 {
        self.score_features(&self.features(event, prev))
    }

    /// Full-batch gradient descent on mean BCE plus `l2 / 2 · |w|²` (bias unpenalised).
    pub fn fit(sessions: &[SessionRecord], config: LrConfig) -> Result<TabularTrigger> {
        let mut freq: BTreeMap<String, u64> = BTreeMap::new();
        for (ev, _, _) in labeled_events(sessions) {
            if let Some(v) = event_verb(&ev.text) {
                *freq.entry(v).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let verbs = ranked.into_iter().take(VERB_SLOTS).map(|(v, _)| v).collect();
        let mut model = TabularTrigger { config, ..TabularTrigger::zeroed(verbs) };
        let data: Vec<(Vec<f64>, f64)> = labeled_events(sessions)
            .map(|(ev, prev, y)| (model.features(ev, prev), if y { 1.0 } else { 0.0 }))
            .collect();
        if data.is_empty() {
            return Err(Error::NoLabels);
        }
        model.fit_features(&data);
        Ok(model)
    }

    pub fn fit_features(&mut self, data: &[(Vec<f64>, f64)]) {
        let n = data.len() as f64;
        let mut gw = vec![0.0; FEATURE_DIM];
        for _ in 0..self.config.steps {
            gw.iter_mut().for_each(|g| *g = 0.0);
            let mut gb = 0.0;
            for (x, y) in data {
                let r = self.score_features(x) - y;
                gb += r;
                for (g, xi) in gw.iter_mut().zip(x) {
                    *g += r * xi;
                }
            }
            for (w, g) in self.weights.iter_mut().zip(&gw) {
                *w -= self.config.lr * (g / n + self.config.l2 * *w);
            }
            self.bias -= self.config.lr * gb / n;
        }
    }
}
