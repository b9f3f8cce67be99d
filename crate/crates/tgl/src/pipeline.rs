//! The steps behind each subcommand, callable without a process boundary.

use serde::{Deserialize, Serialize};
use tgl_core::baselines::{LrConfig, RuleTrigger, TabularTrigger};
use tgl_core::eval::{evaluate_trigger, GraphTrigger, MetricsReport};
use tgl_core::model::{Architecture, Layout};
use tgl_core::serve::{EmbeddingCache, ServeConfig, Server};
use tgl_core::session::{verify_split_isolation, IsolationReport, SessionRecord};
use tgl_core::train::{prepare_examples, shuffle_labels, train, StepLog, TrainConfig};

use crate::checkpoint::Checkpoint;
use crate::embedder::Embedder;
use crate::error::Result;

/// Contents of a `train --config` file. Missing sections take defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub architecture: Architecture,
    /// Permute labels before training (negative control).
    pub shuffle_labels: bool,
}

pub fn train_checkpoint(
    sessions: &[SessionRecord],
    cfg: &RunConfig,
    embedder: &Embedder,
    on_step: impl FnMut(&StepLog),
) -> Result<Checkpoint> {
    let mut examples = prepare_examples(sessions, embedder)?;
    if cfg.shuffle_labels {
        shuffle_labels(&mut examples, cfg.train.seed ^ 0x5eed);
    }
    let model = train(&examples, &cfg.architecture, &cfg.train, on_step)?;
    Ok(Checkpoint::from_trained(model, embedder.spec()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Rule,
    Lr,
}

impl Baseline {
    pub fn parse(s: &str) -> Option<Baseline> {
        match s.trim() {
            "rule" => Some(Baseline::Rule),
            "lr" => Some(Baseline::Lr),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reports: Vec<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isolation: Option<IsolationReport>,
}

impl EvalReport {
    pub fn get(&self, scorer: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.scorer == scorer)
    }
}

pub struct EvalRequest<'a> {
    pub checkpoint: &'a Checkpoint,
    pub embedder: &'a Embedder,
    pub test: &'a [SessionRecord],
    pub train: Option<&'a [SessionRecord]>,
    pub baselines: &'a [Baseline],
    /// Sessions timed for the graph report's latency block; 0 keeps the
    /// report free of wall-clock numbers.
    pub latency_sessions: usize,
}

pub fn evaluate(req: &EvalRequest<'_>) -> Result<EvalReport> {
    let ck = req.checkpoint;
    let layout = Layout::new(&ck.arch);
    let server = Server::new(&ck.arch, &layout, &ck.params, req.embedder, ServeConfig::default());
    let scorer = GraphTrigger { server };
    let mut graph = evaluate_trigger(&scorer, req.test)?;
    if req.latency_sessions > 0 {
        let n = req.latency_sessions.min(req.test.len());
        let mut cache = EmbeddingCache::new();
        graph.latency = Some(crate::bench::bench_latency(&scorer.server, &req.test[..n], Some(&mut cache))?);
    }
    let mut reports = vec![graph];
    if let Some(train) = req.train {
        for b in req.baselines {
            reports.push(match b {
                Baseline::Rule => evaluate_trigger(&RuleTrigger::fit(train)?, req.test)?,
                Baseline::Lr => {
                    let lr = TabularTrigger::fit(train, LrConfig::default())?;
                    let mut r = evaluate_trigger(&lr, req.test)?;
                    r.lr_config = Some(lr.config);
                    r
                }
            });
        }
    }
    Ok(EvalReport { reports, isolation: req.train.map(|t| verify_split_isolation(t, req.test)) })
}
