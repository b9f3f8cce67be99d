//! Joint masked BCE over trigger and routing logits.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::{sigmoid, softplus, Scalar};
use crate::session::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight on the positive trigger term.
    pub trigger_pos_weight: f64,
    pub trigger_weight: f64,
    pub routing_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { trigger_pos_weight: 0.15, trigger_weight: 0.3, routing_weight: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<S> {
    pub total: S,
    pub trigger: S,
    pub routing: S,
    pub trigger_labeled: usize,
    pub routing_labeled: usize,
    /// Set when the term had no labeled node and contributed 0.
    pub trigger_empty: bool,
    pub routing_empty: bool,
    pub d_trigger: Vec<S>,
    pub d_routing: Vec<S>,
}

/// Mean weighted BCE over labeled slots and its gradient w.r.t. each logit.
/// Unlabeled slots get a zero gradient.
fn masked_bce<S: Scalar>(logits: &[S], labels: &[Label], pos_weight: S, scale: S) -> (S, usize, Vec<S>) {
    assert_eq!(logits.len(), labels.len());
    let count = labels.iter().filter(|l| l.is_labeled()).count();
    let mut grad = vec![S::ZERO; logits.len()];
    if count == 0 {
        return (S::ZERO, 0, grad);
    }
    let inv = S::ONE / S::from_f64(count as f64);
    let mut sum = S::ZERO;
    for (i, (&x, l)) in logits.iter().zip(labels).enumerate() {
        match l {
            Label::Positive => {
                // -log sigmoid(x) = softplus(-x)
                sum += pos_weight * softplus(S::ZERO - x);
                grad[i] = scale * inv * pos_weight * (sigmoid(x) - S::ONE);
            }
            Label::Negative => {
                sum += softplus(x);
                grad[i] = scale * inv * sigmoid(x);
            }
            Label::Unlabeled => {}
        }
    }
    (sum * inv, count, grad)
}

pub fn joint_loss<S: Scalar>(
    trigger_logits: &[S],
    trigger_labels: &[Label],
    routing_logits: &[S],
    routing_labels: &[Label],
    cfg: &LossConfig,
) -> LossOutput<S> {
    let lt = S::from_f64(cfg.trigger_weight);
    let lr = S::from_f64(cfg.routing_weight);
    let (trigger, tn, d_trigger) =
        masked_bce(trigger_logits, trigger_labels, S::from_f64(cfg.trigger_pos_weight), lt);
    let (routing, rn, d_routing) = masked_bce(routing_logits, routing_labels, S::ONE, lr);
    LossOutput {
        total: lt * trigger + lr * routing,
        trigger,
        routing,
        trigger_labeled: tn,
        routing_labeled: rn,
        trigger_empty: tn == 0,
        routing_empty: rn == 0,
        d_trigger,
        d_routing,
    }
}
