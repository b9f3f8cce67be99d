//! Causal trigger evaluation and the metrics report.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{LrConfig, RuleTrigger, TabularTrigger};
use crate::embed::TextEmbedder;
use crate::error::Result;
use crate::graph::{build_session_graph, CapPolicy};
use crate::metrics::{auc_pairs, brier_pairs, ece_pairs, score_histogram, trigger_std, PositiveDef, ScoredEvent};
use crate::model::{HeadRows, Mode, NetInput, Network};
use crate::scalar::sigmoid;
use crate::serve::{NoClock, Server, SessionState};
use crate::session::{derive_trigger_label, Label, SessionRecord};

pub const ECE_BINS: usize = 20;
/// Sessions are dealt into this many shards (by index) for the threshold spread.
pub const STD_SHARDS: usize = 5;

/// Anything that scores each event of a session using only events up to it.
pub trait TriggerScorer {
    fn name(&self) -> String;

    fn score_session(&self, session: &SessionRecord) -> Result<Vec<f64>>;

    /// Routing scores and labels over the session's entities, if the scorer routes.
    fn score_routing(&self, _session: &SessionRecord) -> Result<Option<Vec<(f64, Label)>>> {
        Ok(None)
    }
}

impl TriggerScorer for RuleTrigger {
    fn name(&self) -> String {
        "rule".into()
    }

    fn score_session(&self, session: &SessionRecord) -> Result<Vec<f64>> {
        Ok(session.events.iter().map(|e| self.score_text(&e.text).0).collect())
    }
}

impl TriggerScorer for TabularTrigger {
    fn name(&self) -> String {
        "lr".into()
    }

    fn score_session(&self, session: &SessionRecord) -> Result<Vec<f64>> {
        Ok(session
            .events
            .iter()
            .enumerate()
            .map(|(i, e)| self.score(e, if i == 0 { None } else { Some(&session.events[i - 1]) }))
            .collect())
    }
}

/// The graph trigger, streamed one event at a time.
pub struct GraphTrigger<'a, E: TextEmbedder + ?Sized> {
    pub server: Server<'a, E>,
}

impl<'a, E: TextEmbedder + ?Sized> TriggerScorer for GraphTrigger<'a, E> {
    fn name(&self) -> String {
        "graph".into()
    }

    fn score_session(&self, session: &SessionRecord) -> Result<Vec<f64>> {
        let mut state = SessionState::new(session.sample_id.clone());
        let mut out = Vec::with_capacity(session.events.len());
        for ev in &session.events {
            if let Some((h, _)) = self.server.serve_event(&mut state, ev.clone(), None, &NoClock)? {
                out.push(h.p_trig);
            }
        }
        Ok(out)
    }

    /// Entity scores on the causal graph at the session's last event.
    fn score_routing(&self, session: &SessionRecord) -> Result<Option<Vec<(f64, Label)>>> {
        let s = &self.server;
        let g = build_session_graph(session, CapPolicy::KeepLast).without_backward_edges();
        let input = NetInput::from_graph(&g, s.embedder)?;
        let net = Network::new(s.arch, s.layout, s.params);
        let rows = HeadRows { trigger: Vec::new(), routing: input.entity_rows() };
        let (out, _) = net.forward(&input, rows, Mode::Eval)?;
        Ok(Some(
            out.routing_rows
                .iter()
                .zip(&out.routing_logits)
                .map(|(&i, &l)| (sigmoid(l as f64), g.nodes[i].routing_label))
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub brier: Option<f64>,
    pub ece: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub events: usize,
    pub passes_per_event: usize,
    pub discarded_per_event: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub embed_ms: f64,
    pub message_passing_ms: f64,
    pub heads_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scorer: String,
    pub sessions: usize,
    pub events: usize,
    pub auc_m_fire: Option<f64>,
    pub auc_c_skip: Option<f64>,
    pub auc_m_skip: Option<f64>,
    /// Calibrated against the m-fire reading.
    pub brier: Option<f64>,
    pub ece: Option<f64>,
    pub calibration_c_skip: Calibration,
    pub calibration_m_skip: Calibration,
    pub trigger_std: Option<f64>,
    pub oracle_thresholds: Vec<f64>,
    pub histogram: Vec<f64>,
    pub extremes: f64,
    pub routing_auc: Option<f64>,
    pub latency: Option<LatencyStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_config: Option<LrConfig>,
}

fn pairs(scored: &[ScoredEvent], def: PositiveDef) -> Vec<(f64, bool)> {
    scored.iter().filter_map(|e| def.classify(e).map(|y| (e.score, y))).collect()
}

pub fn evaluate_trigger<T: TriggerScorer + ?Sized>(scorer: &T, sessions: &[SessionRecord]) -> Result<MetricsReport> {
    let mut scored = Vec::new();
    let mut shards: Vec<(Vec<f64>, Vec<bool>)> = (0..STD_SHARDS).map(|_| (Vec::new(), Vec::new())).collect();
    let mut routing = Vec::new();
    let mut any_routing = false;
    for (si, s) in sessions.iter().enumerate() {
        let scores = scorer.score_session(s)?;
        for (ev, &score) in s.events.iter().zip(&scores) {
            let e = ScoredEvent { event_id: ev.event_id.clone(), score, label: derive_trigger_label(ev), gold: ev.gold };
            if let Some(y) = PositiveDef::MFire.classify(&e) {
                let shard = &mut shards[si % STD_SHARDS];
                shard.0.push(score);
                shard.1.push(y);
            }
            scored.push(e);
        }
        if let Some(r) = scorer.score_routing(s)? {
            any_routing = true;
            routing.extend(r.into_iter().filter_map(|(p, l)| match l {
                Label::Positive => Some((p, true)),
                Label::Negative => Some((p, false)),
                Label::Unlabeled => None,
            }));
        }
    }
    let m = pairs(&scored, PositiveDef::MFire);
    let c = pairs(&scored, PositiveDef::CSkip);
    let k = pairs(&scored, PositiveDef::MSkip);
    shards.retain(|s| !s.0.is_empty());
    let std = if shards.len() >= 2 { Some(trigger_std(&shards)?) } else { None };
    let all_scores: Vec<f64> = scored.iter().map(|e| e.score).collect();
    let hist = score_histogram(&all_scores);
    Ok(MetricsReport {
        scorer: scorer.name(),
        sessions: sessions.len(),
        events: scored.len(),
        auc_m_fire: auc_pairs(&m),
        auc_c_skip: auc_pairs(&c),
        auc_m_skip: auc_pairs(&k),
        brier: brier_pairs(&m),
        ece: ece_pairs(&m, ECE_BINS),
        calibration_c_skip: Calibration { brier: brier_pairs(&c), ece: ece_pairs(&c, ECE_BINS) },
        calibration_m_skip: Calibration { brier: brier_pairs(&k), ece: ece_pairs(&k, ECE_BINS) },
        trigger_std: std.as_ref().map(|s| s.std),
        oracle_thresholds: std.map(|s| s.thresholds.iter().map(|t| t.threshold).collect()).unwrap_or_default(),
        histogram: hist.fractions,
        extremes: hist.extremes,
        routing_auc: if any_routing { auc_pairs(&routing) } else { None },
        latency: None,
        lr_config: None,
    })
}

/// Fits both baselines on `train` and evaluates them on `test`.
pub fn evaluate_baselines(train: &[SessionRecord], test: &[SessionRecord]) -> Result<(MetricsReport, MetricsReport)> {
    let rule = RuleTrigger::fit(train)?;
    let lr = TabularTrigger::fit(train, LrConfig::default())?;
    let r = evaluate_trigger(&rule, test)?;
    let mut l = evaluate_trigger(&lr, test)?;
    l.lr_config = Some(lr.config);
    Ok((r, l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SyntheticProfile};

    #[test]
    fn rule_report_is_complete() {
        let data = generate_synthetic(4, 40, &SyntheticProfile::default()).unwrap();
        let (train, test) = data.split_at(30);
        let rule = RuleTrigger::fit(train).unwrap();
        let r = evaluate_trigger(&rule, test).unwrap();
        let a = r.auc_m_fire.unwrap();
        assert!(a > 0.0 && a < 1.0);
        assert!(r.auc_c_skip.is_some() && r.auc_m_skip.is_some());
        assert!(r.brier.is_some() && r.ece.is_some() && r.trigger_std.is_some());
        assert_eq!(r.histogram.len(), 20);
        assert_eq!(r.oracle_thresholds.len(), STD_SHARDS);
        assert!(r.routing_auc.is_none());
    }
}
