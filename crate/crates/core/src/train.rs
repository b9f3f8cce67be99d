//! Joint training over disjoint-union session batches.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::TextEmbedder;
use crate::error::{Error, Result};
use crate::graph::{build_session_graph, CapPolicy, SessionGraph};
use crate::model::{loss_and_gradients, Architecture, Layout, LossConfig, Mode, NetInput, Network, Targets};
use crate::optim::{clip_global_norm, AdamW, AdamWConfig};
use crate::session::{Label, SessionRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub clip_norm: f64,
    pub batch_sessions: usize,
    pub epochs: usize,
    pub seed: u64,
    pub trigger_pos_weight: f64,
    pub trigger_weight: f64,
    pub routing_weight: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let l = LossConfig::default();
        TrainConfig {
            optimizer: AdamWConfig::default(),
            clip_norm: 1.0,
            batch_sessions: 32,
            epochs: 2,
            seed: 0,
            trigger_pos_weight: l.trigger_pos_weight,
            trigger_weight: l.trigger_weight,
            routing_weight: l.routing_weight,
        }
    }
}

impl TrainConfig {
    pub fn loss(&self) -> LossConfig {
        LossConfig {
            trigger_pos_weight: self.trigger_pos_weight,
            trigger_weight: self.trigger_weight,
            routing_weight: self.routing_weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_sessions == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_sessions and epochs must be positive".into()));
        }
        if !(self.optimizer.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("lr and clip_norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub trig_loss: f64,
    pub rout_loss: f64,
    pub grad_norm: f64,
}

/// One session ready for the network.
#[derive(Debug, Clone)]
pub struct Example {
    pub graph: SessionGraph,
    pub input: NetInput,
    pub targets: Targets,
}

/// Builds training graphs (first 64 events) and embeds them once.
pub fn prepare_examples<E: TextEmbedder + ?Sized>(sessions: &[SessionRecord], embedder: &E) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        s.validate()?;
        let graph = build_session_graph(s, CapPolicy::KeepFirst);
        let input = NetInput::from_graph(&graph, embedder)?;
        let targets = Targets::from_graph(&graph);
        out.push(Example { graph, input, targets });
    }
    Ok(out)
}

/// Label-shuffled control: permutes trigger labels across all event slots
/// and routing labels across all entity slots of the dataset.
pub fn shuffle_labels(examples: &mut [Example], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permute = |pick: fn(&mut Example) -> &mut Vec<Label>, keep: fn(&Example, usize) -> bool| {
        let mut pool = Vec::new();
        for ex in examples.iter_mut() {
            let slots: Vec<usize> = (0..ex.input.len()).filter(|&i| keep(ex, i)).collect();
            let labels = pick(ex);
            pool.extend(slots.iter().map(|&i| labels[i]));
        }
        pool.shuffle(&mut rng);
        let mut it = pool.into_iter();
        for ex in examples.iter_mut() {
            let slots: Vec<usize> = (0..ex.input.len()).filter(|&i| keep(ex, i)).collect();
            let labels = pick(ex);
            for i in slots {
                labels[i] = it.next().expect("pool size matches slot count");
            }
        }
    };
    permute(|e| &mut e.targets.trigger, |e, i| !e.input.types[i].is_entity());
    permute(|e| &mut e.targets.routing, |e, i| e.input.types[i].is_entity());
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub arch: Architecture,
    pub config: TrainConfig,
    pub params: Vec<f32>,
    pub optimizer: AdamW,
}

/// Deterministic for fixed `(examples, arch, cfg)`. `on_step` sees every
/// optimizer step in order.
pub fn train(
    examples: &[Example],
    arch: &Architecture,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepLog),
) -> Result<TrainedModel> {
    arch.validate()?;
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !examples.iter().any(|e| e.targets.has_labels()) {
        return Err(Error::NoLabels);
    }
    let layout = Layout::new(arch);
    let mut params = layout.init(cfg.seed);
    let mut opt = AdamW::new(cfg.optimizer, layout.total);
    let loss_cfg = cfg.loss();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_sessions) {
            let parts: Vec<&NetInput> = chunk.iter().map(|&i| &examples[i].input).collect();
            let input = NetInput::union(&parts);
            let mut targets = Targets::default();
            for &i in chunk {
                targets.append(&examples[i].targets);
            }
            let step = opt.step + 1;
            let net = Network::new(arch, &layout, &params);
            let (loss, mut grads) =
                loss_and_gradients(&net, &input, &targets, Mode::Train { seed: cfg.seed, step }, &loss_cfg)?;
            let (norm, _) = clip_global_norm(&mut grads, cfg.clip_norm);
            opt.update(&mut params, &grads);
            on_step(&StepLog {
                step,
                epoch,
                loss: loss.total as f64,
                trig_loss: loss.trigger as f64,
                rout_loss: loss.routing as f64,
                grad_norm: norm,
            });
        }
    }
    Ok(TrainedModel { arch: *arch, config: *cfg, params, optimizer: opt })
}
