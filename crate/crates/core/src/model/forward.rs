//! Featurisation, relation-aware GATv2 layers, Jumping-Knowledge readout and
//! the two MLP heads, with the intermediates kept for the backward pass.

use alloc::vec;
use alloc::vec::Vec;

use super::arch::{Architecture, HeadIds, Layout};
use super::input::{Incoming, NetInput};
use crate::error::Result;
use crate::graph::EdgeChannel;
use crate::hash::{combine, counter_u64, unit_f64};
use crate::linalg::{add_row_bias, matmul};
use crate::scalar::{gelu, Scalar};

/// Dropout is active only in `Train`; masks are a pure function of
/// `(seed, step, site, element)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64, step: u64 },
}

pub(crate) const SITE_TRIGGER_HEAD: u64 = 100;
pub(crate) const SITE_ROUTING_HEAD: u64 = 101;

pub(crate) fn dropout_mask<S: Scalar>(mode: Mode, site: u64, len: usize, p: f64) -> Option<Vec<S>> {
    let Mode::Train { seed, step } = mode else { return None };
    if p <= 0.0 {
        return None;
    }
    let key = combine(combine(seed, step), site);
    let scale = S::from_f64(1.0 / (1.0 - p));
    Some(
        (0..len)
            .map(|i| if unit_f64(counter_u64(key, i as u64)) < p { S::ZERO } else { scale })
            .collect(),
    )
}

/// The network bound to a parameter buffer.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a, S: Scalar> {
    pub arch: &'a Architecture,
    pub layout: &'a Layout,
    pub params: &'a [S],
}

/// Which nodes each head is evaluated on.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HeadRows {
    pub trigger: Vec<usize>,
    pub routing: Vec<usize>,
}

impl HeadRows {
    /// Trigger head on every event node, routing head on every entity node.
    pub fn all(input: &NetInput) -> HeadRows {
        HeadRows { trigger: input.event_rows(), routing: input.entity_rows() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outputs<S> {
    pub trigger_rows: Vec<usize>,
    pub trigger_logits: Vec<S>,
    pub routing_rows: Vec<usize>,
    pub routing_logits: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct FeatureCache<S> {
    /// `n × feature_dim` concatenated input features.
    pub x0: Vec<S>,
    pub dt_input: Vec<S>,
    pub dt_pre: Vec<S>,
    pub dt_act: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct LayerCache<S> {
    pub source: Vec<S>,
    pub target: Vec<S>,
    pub edge_rel: Vec<S>,
    /// Pre-LeakyReLU attention input per edge, `edges × hidden`.
    pub z: Vec<S>,
    /// Attention weights per edge and head, `edges × heads`.
    pub alpha: Vec<S>,
    /// Aggregated messages before GELU.
    pub agg: Vec<S>,
    pub mask: Option<Vec<S>>,
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<S> {
    pub pre: Vec<S>,
    pub mask: Option<Vec<S>>,
}

#[derive(Debug, Clone)]
pub struct Cache<S> {
    pub(crate) incoming: Incoming,
    pub features: Option<FeatureCache<S>>,
    /// `layers + 1` node-state matrices; the Jumping-Knowledge readout is their concatenation.
    pub states: Vec<Vec<S>>,
    pub layers: Vec<LayerCache<S>>,
    pub trigger: HeadCache<S>,
    pub routing: HeadCache<S>,
    pub rows: HeadRows,
}

impl<S: Scalar> Cache<S> {
    /// Jumping-Knowledge vector of node `i`.
    pub fn jk_row(&self, i: usize, hidden: usize) -> Vec<S> {
        let mut out = Vec::with_capacity(hidden * self.states.len());
        for s in &self.states {
            out.extend_from_slice(&s[i * hidden..(i + 1) * hidden]);
        }
        out
    }
}

#[inline]
fn leaky<S: Scalar>(x: S, slope: S) -> S {
    if x > S::ZERO {
        x
    } else {
        x * slope
    }
}

impl<'a, S: Scalar> Network<'a, S> {
    pub fn new(arch: &'a Architecture, layout: &'a Layout, params: &'a [S]) -> Self {
        assert_eq!(params.len(), layout.total, "parameter buffer does not match layout");
        Network { arch, layout, params }
    }

    #[inline]
    fn p(&self, id: usize) -> &'a [S] {
        self.layout.slice(self.params, id)
    }

    /// Per-node 832-d features projected to the hidden width (layer 0).
    pub fn featurize(&self, input: &NetInput) -> (Vec<S>, FeatureCache<S>) {
        let a = self.arch;
        let n = input.len();
        let (tdim, ydim, ddim, fdim) = (a.text_dim, a.type_dim, a.dt_dim, a.feature_dim());
        assert_eq!(input.text_dim, tdim, "embedding width does not match architecture");
        let type_emb = self.p(self.layout.type_embedding);
        let w1 = self.p(self.layout.dt_hidden.weight);
        let b1 = self.p(self.layout.dt_hidden.bias);
        let w2 = self.p(self.layout.dt_out.weight);
        let b2 = self.p(self.layout.dt_out.bias);

        let mut x0 = vec![S::ZERO; n * fdim];
        let mut dt_input = vec![S::ZERO; n];
        let mut dt_pre = vec![S::ZERO; n * ddim];
        let mut dt_act = vec![S::ZERO; n * ddim];
        for i in 0..n {
            let row = &mut x0[i * fdim..(i + 1) * fdim];
            for (dst, &src) in row[..tdim].iter_mut().zip(&input.text[i * tdim..(i + 1) * tdim]) {
                *dst = S::from_f64(src as f64);
            }
            let t = input.types[i].index();
            row[tdim..tdim + ydim].copy_from_slice(&type_emb[t * ydim..(t + 1) * ydim]);
            if input.types[i].is_entity() {
                continue;
            }
            let u = S::from_f64(input.dt_seconds[i].max(0.0)).ln_1p();
            dt_input[i] = u;
            let pre = &mut dt_pre[i * ddim..(i + 1) * ddim];
            let act = &mut dt_act[i * ddim..(i + 1) * ddim];
            for j in 0..ddim {
                pre[j] = u * w1[j] + b1[j];
                act[j] = gelu(pre[j]);
            }
            let out = &mut row[tdim + ydim..];
            out.copy_from_slice(b2);
            for k in 0..ddim {
                let g = act[k];
                for j in 0..ddim {
                    out[j] += g * w2[k * ddim + j];
                }
            }
        }
        let mut layer0 = vec![S::ZERO; n * a.hidden_dim];
        matmul(&x0, self.p(self.layout.input_projection.weight), n, fdim, a.hidden_dim, &mut layer0);
        add_row_bias(&mut layer0, self.p(self.layout.input_projection.bias));
        (layer0, FeatureCache { x0, dt_input, dt_pre, dt_act })
    }

    /// One attention block: `LN(x + Drop(GELU(GATv2(x, e, rel))))`.
    pub(crate) fn layer_forward(
        &self,
        l: usize,
        x: &[S],
        input: &NetInput,
        incoming: &Incoming,
        mode: Mode,
    ) -> (Vec<S>, LayerCache<S>) {
        let a = self.arch;
        let ids = self.layout.layers[l];
        let n = input.len();
        let (d, h, c) = (a.hidden_dim, a.heads, a.head_dim());
        let slope = S::from_f64(a.leaky_slope);

        let mut source = vec![S::ZERO; n * d];
        matmul(x, self.p(ids.source.weight), n, d, d, &mut source);
        add_row_bias(&mut source, self.p(ids.source.bias));
        let mut target = vec![S::ZERO; n * d];
        matmul(x, self.p(ids.target.weight), n, d, d, &mut target);
        add_row_bias(&mut target, self.p(ids.target.bias));
        let nch = EdgeChannel::ALL.len();
        let mut edge_rel = vec![S::ZERO; nch * d];
        matmul(self.p(self.layout.relation_embedding), self.p(ids.edge.weight), nch, a.edge_dim, d, &mut edge_rel);
        add_row_bias(&mut edge_rel, self.p(ids.edge.bias));

        let att = self.p(ids.attention);
        let ne = input.edges.len();
        let mut z = vec![S::ZERO; ne * d];
        let mut score = vec![S::ZERO; ne * h];
        for (k, e) in input.edges.iter().enumerate() {
            let zr = &mut z[k * d..(k + 1) * d];
            let ti = &target[e.dst * d..(e.dst + 1) * d];
            let sj = &source[e.src * d..(e.src + 1) * d];
            let er = &edge_rel[e.channel.index() * d..(e.channel.index() + 1) * d];
            for j in 0..d {
                zr[j] = ti[j] + sj[j] + er[j];
            }
            for hh in 0..h {
                let mut acc = S::ZERO;
                for j in hh * c..(hh + 1) * c {
                    acc += att[j] * leaky(zr[j], slope);
                }
                score[k * h + hh] = acc;
            }
        }

        let mut alpha = vec![S::ZERO; ne * h];
        let mut agg = vec![S::ZERO; n * d];
        for i in 0..n {
            let inc = incoming.of(i);
            for hh in 0..h {
                let mut mx = score[inc[0] * h + hh];
                for &k in inc {
                    mx = mx.max(score[k * h + hh]);
                }
                let mut denom = S::ZERO;
                for &k in inc {
                    let w = (score[k * h + hh] - mx).exp();
                    alpha[k * h + hh] = w;
                    denom += w;
                }
                for &k in inc {
                    alpha[k * h + hh] /= denom;
                }
            }
            let out = &mut agg[i * d..(i + 1) * d];
            for &k in inc {
                let e = input.edges[k];
                let sj = &source[e.src * d..(e.src + 1) * d];
                let er = &edge_rel[e.channel.index() * d..(e.channel.index() + 1) * d];
                for hh in 0..h {
                    let w = alpha[k * h + hh];
                    for j in hh * c..(hh + 1) * c {
                        out[j] += w * (sj[j] + er[j]);
                    }
                }
            }
        }

        let mask = dropout_mask::<S>(mode, 1 + l as u64, n * d, a.dropout);
        let gamma = self.p(ids.norm_scale);
        let beta = self.p(ids.norm_shift);
        let eps = S::from_f64(a.ln_eps);
        let inv_d = S::from_f64(1.0 / d as f64);
        let mut y = vec![S::ZERO; n * d];
        let mut xhat = vec![S::ZERO; n * d];
        let mut inv_std = vec![S::ZERO; n];
        let mut r = vec![S::ZERO; d];
        for i in 0..n {
            for j in 0..d {
                let mut g = gelu(agg[i * d + j]);
                if let Some(m) = &mask {
                    g *= m[i * d + j];
                }
                r[j] = x[i * d + j] + g;
            }
            let mut mean = S::ZERO;
            for &v in &r {
                mean += v;
            }
            mean *= inv_d;
            let mut var = S::ZERO;
            for &v in &r {
                let dv = v - mean;
                var += dv * dv;
            }
            var *= inv_d;
            let is = S::ONE / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..d {
                let xh = (r[j] - mean) * is;
                xhat[i * d + j] = xh;
                y[i * d + j] = xh * gamma[j] + beta[j];
            }
        }
        (y, LayerCache { source, target, edge_rel, z, alpha, agg, mask, xhat, inv_std })
    }

    /// Attention stack on top of a precomputed layer 0.
    pub(crate) fn backbone_from_layer0(
        &self,
        input: &NetInput,
        layer0: Vec<S>,
        mode: Mode,
    ) -> Result<(Vec<Vec<S>>, Vec<LayerCache<S>>, Incoming)> {
        let incoming = input.incoming()?;
        let mut states = Vec::with_capacity(self.arch.layers + 1);
        let mut caches = Vec::with_capacity(self.arch.layers);
        states.push(layer0);
        for l in 0..self.arch.layers {
            let (y, c) = self.layer_forward(l, states.last().unwrap(), input, &incoming, mode);
            states.push(y);
            caches.push(c);
        }
        Ok((states, caches, incoming))
    }

    pub(crate) fn head_forward(
        &self,
        head: HeadIds,
        states: &[Vec<S>],
        rows: &[usize],
        site: u64,
        mode: Mode,
    ) -> (Vec<S>, HeadCache<S>) {
        let a = self.arch;
        let (d, jk, hh) = (a.hidden_dim, a.jk_dim(), a.head_hidden);
        let r = rows.len();
        let mut x = vec![S::ZERO; r * jk];
        for (ri, &i) in rows.iter().enumerate() {
            for (s, st) in states.iter().enumerate() {
                x[ri * jk + s * d..ri * jk + (s + 1) * d].copy_from_slice(&st[i * d..(i + 1) * d]);
            }
        }
        let mut pre = vec![S::ZERO; r * hh];
        matmul(&x, self.p(head.hidden.weight), r, jk, hh, &mut pre);
        add_row_bias(&mut pre, self.p(head.hidden.bias));
        let mask = dropout_mask::<S>(mode, site, r * hh, a.dropout);
        let w2 = self.p(head.out.weight);
        let b2 = self.p(head.out.bias)[0];
        let logits = (0..r)
            .map(|ri| {
                let mut acc = b2;
                for j in 0..hh {
                    let mut g = gelu(pre[ri * hh + j]);
                    if let Some(m) = &mask {
                        g *= m[ri * hh + j];
                    }
                    acc += g * w2[j];
                }
                acc
            })
            .collect();
        (logits, HeadCache { pre, mask })
    }

    /// Full forward pass: features, backbone, and both heads on `rows`.
    pub fn forward(&self, input: &NetInput, rows: HeadRows, mode: Mode) -> Result<(Outputs<S>, Cache<S>)> {
        let (layer0, features) = self.featurize(input);
        let (out, mut cache) = self.forward_from_layer0(input, layer0, rows, mode)?;
        cache.features = Some(features);
        Ok((out, cache))
    }

    /// Forward with a caller-supplied layer 0 (cached input projections).
    /// The returned cache has no feature intermediates and cannot be used
    /// for a full backward pass.
    pub fn forward_from_layer0(
        &self,
        input: &NetInput,
        layer0: Vec<S>,
        rows: HeadRows,
        mode: Mode,
    ) -> Result<(Outputs<S>, Cache<S>)> {
        let (states, layers, incoming) = self.backbone_from_layer0(input, layer0, mode)?;
        let (trigger_logits, trigger) =
            self.head_forward(self.layout.trigger_head, &states, &rows.trigger, SITE_TRIGGER_HEAD, mode);
        let (routing_logits, routing) =
            self.head_forward(self.layout.routing_head, &states, &rows.routing, SITE_ROUTING_HEAD, mode);
        let out = Outputs {
            trigger_rows: rows.trigger.clone(),
            trigger_logits,
            routing_rows: rows.routing.clone(),
            routing_logits,
        };
        Ok((out, Cache { incoming, features: None, states, layers, trigger, routing, rows }))
    }
}
