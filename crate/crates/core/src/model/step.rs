use alloc::vec;
use alloc::vec::Vec;

use super::forward::{HeadRows, Mode, Network};
use super::input::{NetInput, Targets};
use super::loss::{joint_loss, LossConfig, LossOutput};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::session::Label;

/// Forward pass plus joint loss, without gradients.
pub fn loss_only<S: Scalar>(
    net: &Network<'_, S>,
    input: &NetInput,
    targets: &Targets,
    mode: Mode,
    cfg: &LossConfig,
) -> Result<LossOutput<S>> {
    let (out, _) = net.forward(input, HeadRows::all(input), mode)?;
    Ok(score_outputs(&out.trigger_rows, &out.trigger_logits, &out.routing_rows, &out.routing_logits, targets, cfg))
}

/// Forward, joint loss and a full gradient buffer.
pub fn loss_and_gradients<S: Scalar>(
    net: &Network<'_, S>,
    input: &NetInput,
    targets: &Targets,
    mode: Mode,
    cfg: &LossConfig,
) -> Result<(LossOutput<S>, Vec<S>)> {
    let (out, cache) = net.forward(input, HeadRows::all(input), mode)?;
    let loss = score_outputs(&out.trigger_rows, &out.trigger_logits, &out.routing_rows, &out.routing_logits, targets, cfg);
    let mut grads = vec![S::ZERO; net.layout.total];
    net.backward(input, &cache, &loss.d_trigger, &loss.d_routing, &mut grads);
    Ok((loss, grads))
}

fn score_outputs<S: Scalar>(
    trows: &[usize],
    tlogits: &[S],
    rrows: &[usize],
    rlogits: &[S],
    targets: &Targets,
    cfg: &LossConfig,
) -> LossOutput<S> {
    let tl: Vec<Label> = trows.iter().map(|&i| targets.trigger[i]).collect();
    let rl: Vec<Label> = rrows.iter().map(|&i| targets.routing[i]).collect();
    joint_loss(tlogits, &tl, rlogits, &rl, cfg)
}
