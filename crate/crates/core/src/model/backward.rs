//! Reverse-mode gradients for the fixed architecture. All gradients are
//! accumulated (`+=`) into a buffer laid out like the parameters.

use alloc::vec;
use alloc::vec::Vec;

use super::arch::HeadIds;
use super::forward::{Cache, HeadCache, LayerCache, Network};
use super::input::NetInput;
use crate::graph::EdgeChannel;
use crate::linalg::{col_sum_acc, matmul_a_bt, matmul_at_b_acc};
use crate::scalar::{gelu, gelu_grad, Scalar};

impl<'a, S: Scalar> Network<'a, S> {
    /// Backpropagates logit gradients through heads, backbone and features.
    ///
    /// `d_trigger[r]` / `d_routing[r]` are dLoss/dlogit for `cache.rows`.
    /// Requires a cache from [`Network::forward`].
    pub fn backward(&self, input: &NetInput, cache: &Cache<S>, d_trigger: &[S], d_routing: &[S], grads: &mut [S]) {
        assert_eq!(grads.len(), self.layout.total);
        assert_eq!(d_trigger.len(), cache.rows.trigger.len());
        assert_eq!(d_routing.len(), cache.rows.routing.len());
        let features = cache.features.as_ref().expect("backward needs feature intermediates");
        let n = input.len();
        let d = self.arch.hidden_dim;
        let mut dstates: Vec<Vec<S>> = (0..cache.states.len()).map(|_| vec![S::ZERO; n * d]).collect();

        self.head_backward(self.layout.trigger_head, &cache.states, &cache.rows.trigger, &cache.trigger, d_trigger, &mut dstates, grads);
        self.head_backward(self.layout.routing_head, &cache.states, &cache.rows.routing, &cache.routing, d_routing, &mut dstates, grads);

        for l in (0..self.arch.layers).rev() {
            let (lower, upper) = dstates.split_at_mut(l + 1);
            let dx = self.layer_backward(l, &cache.states[l], input, cache, &cache.layers[l], &upper[0], grads);
            for (a, b) in lower[l].iter_mut().zip(dx) {
                *a += b;
            }
        }
        self.features_backward(input, features, &dstates[0], grads);
    }

    #[allow(clippy::too_many_arguments)]
    fn head_backward(
        &self,
        head: HeadIds,
        states: &[Vec<S>],
        rows: &[usize],
        hc: &HeadCache<S>,
        dlogit: &[S],
        dstates: &mut [Vec<S>],
        grads: &mut [S],
    ) {
        let a = self.arch;
        let (d, jk, hh) = (a.hidden_dim, a.jk_dim(), a.head_hidden);
        let active: Vec<usize> = (0..rows.len()).filter(|&r| dlogit[r] != S::ZERO).collect();
        if active.is_empty() {
            return;
        }
        let w2 = self.layout.slice(self.params, head.out.weight);
        let ra = active.len();
        let mut dpre = vec![S::ZERO; ra * hh];
        let mut x = vec![S::ZERO; ra * jk];
        {
            let gw2 = self.layout.slice_mut(grads, head.out.weight);
            for (ai, &r) in active.iter().enumerate() {
                let g = dlogit[r];
                for j in 0..hh {
                    let pre = hc.pre[r * hh + j];
                    let m = hc.mask.as_ref().map_or(S::ONE, |m| m[r * hh + j]);
                    gw2[j] += g * gelu(pre) * m;
                    dpre[ai * hh + j] = g * w2[j] * m * gelu_grad(pre);
                }
                let i = rows[r];
                for (s, st) in states.iter().enumerate() {
                    x[ai * jk + s * d..ai * jk + (s + 1) * d].copy_from_slice(&st[i * d..(i + 1) * d]);
                }
            }
        }
        self.layout.slice_mut(grads, head.out.bias)[0] += active.iter().fold(S::ZERO, |acc, &r| acc + dlogit[r]);
        matmul_at_b_acc(&x, &dpre, ra, jk, hh, self.layout.slice_mut(grads, head.hidden.weight));
        col_sum_acc(&dpre, hh, self.layout.slice_mut(grads, head.hidden.bias));
        let mut dx = vec![S::ZERO; ra * jk];
        matmul_a_bt(&dpre, self.layout.slice(self.params, head.hidden.weight), ra, hh, jk, &mut dx);
        for (ai, &r) in active.iter().enumerate() {
            let i = rows[r];
            for (s, ds) in dstates.iter_mut().enumerate() {
                let src = &dx[ai * jk + s * d..ai * jk + (s + 1) * d];
                for (o, &v) in ds[i * d..(i + 1) * d].iter_mut().zip(src) {
                    *o += v;
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        l: usize,
        x: &[S],
        input: &NetInput,
        cache: &Cache<S>,
        lc: &LayerCache<S>,
        dy: &[S],
        grads: &mut [S],
    ) -> Vec<S> {
        let a = self.arch;
        let ids = self.layout.layers[l];
        let n = input.len();
        let (d, h, c) = (a.hidden_dim, a.heads, a.head_dim());
        let slope = S::from_f64(a.leaky_slope);
        let inv_d = S::from_f64(1.0 / d as f64);
        let gamma = self.layout.slice(self.params, ids.norm_scale);

        // Layer norm.
        let mut dr = vec![S::ZERO; n * d];
        {
            let dgamma = self.layout.slice_mut(grads, ids.norm_scale);
            for i in 0..n {
                for j in 0..d {
                    dgamma[j] += dy[i * d + j] * lc.xhat[i * d + j];
                }
            }
        }
        col_sum_acc(dy, d, self.layout.slice_mut(grads, ids.norm_shift));
        for i in 0..n {
            let xh = &lc.xhat[i * d..(i + 1) * d];
            let g = &dy[i * d..(i + 1) * d];
            let mut m1 = S::ZERO;
            let mut m2 = S::ZERO;
            for j in 0..d {
                let dxh = g[j] * gamma[j];
                m1 += dxh;
                m2 += dxh * xh[j];
            }
            m1 *= inv_d;
            m2 *= inv_d;
            let is = lc.inv_std[i];
            for j in 0..d {
                dr[i * d + j] = is * (g[j] * gamma[j] - m1 - xh[j] * m2);
            }
        }

        // Residual branch passes straight through; message branch goes through dropout and GELU.
        let mut dx = dr.clone();
        let mut dagg = vec![S::ZERO; n * d];
        for idx in 0..n * d {
            let m = lc.mask.as_ref().map_or(S::ONE, |m| m[idx]);
            dagg[idx] = dr[idx] * m * gelu_grad(lc.agg[idx]);
        }

        let ne = input.edges.len();
        let nch = EdgeChannel::ALL.len();
        let mut dsource = vec![S::ZERO; n * d];
        let mut dtarget = vec![S::ZERO; n * d];
        let mut drel = vec![S::ZERO; nch * d];
        let mut dscore = vec![S::ZERO; ne * h];
        let mut dalpha = vec![S::ZERO; ne * h];
        for i in 0..n {
            let inc = cache.incoming.of(i);
            let gi = &dagg[i * d..(i + 1) * d];
            for &k in inc {
                let e = input.edges[k];
                let ch = e.channel.index();
                for hh in 0..h {
                    let w = lc.alpha[k * h + hh];
                    let mut acc = S::ZERO;
                    for j in hh * c..(hh + 1) * c {
                        let msg = lc.source[e.src * d + j] + lc.edge_rel[ch * d + j];
                        acc += gi[j] * msg;
                        let gm = w * gi[j];
                        dsource[e.src * d + j] += gm;
                        drel[ch * d + j] += gm;
                    }
                    dalpha[k * h + hh] = acc;
                }
            }
            for hh in 0..h {
                let mut dot = S::ZERO;
                for &k in inc {
                    dot += lc.alpha[k * h + hh] * dalpha[k * h + hh];
                }
                for &k in inc {
                    dscore[k * h + hh] = lc.alpha[k * h + hh] * (dalpha[k * h + hh] - dot);
                }
            }
        }

        {
            let att = self.layout.slice(self.params, ids.attention);
            let mut datt = vec![S::ZERO; d];
            for (k, e) in input.edges.iter().enumerate() {
                let ch = e.channel.index();
                for hh in 0..h {
                    let ds = dscore[k * h + hh];
                    if ds == S::ZERO {
                        continue;
                    }
                    for j in hh * c..(hh + 1) * c {
                        let z = lc.z[k * d + j];
                        let (g, gp) = if z > S::ZERO { (z, S::ONE) } else { (z * slope, slope) };
                        datt[j] += ds * g;
                        let dz = ds * att[j] * gp;
                        dtarget[e.dst * d + j] += dz;
                        dsource[e.src * d + j] += dz;
                        drel[ch * d + j] += dz;
                    }
                }
            }
            for (g, v) in self.layout.slice_mut(grads, ids.attention).iter_mut().zip(datt) {
                *g += v;
            }
        }

        matmul_at_b_acc(x, &dsource, n, d, d, self.layout.slice_mut(grads, ids.source.weight));
        col_sum_acc(&dsource, d, self.layout.slice_mut(grads, ids.source.bias));
        matmul_at_b_acc(x, &dtarget, n, d, d, self.layout.slice_mut(grads, ids.target.weight));
        col_sum_acc(&dtarget, d, self.layout.slice_mut(grads, ids.target.bias));
        let mut tmp = vec![S::ZERO; n * d];
        matmul_a_bt(&dsource, self.layout.slice(self.params, ids.source.weight), n, d, d, &mut tmp);
        for (o, v) in dx.iter_mut().zip(&tmp) {
            *o += *v;
        }
        matmul_a_bt(&dtarget, self.layout.slice(self.params, ids.target.weight), n, d, d, &mut tmp);
        for (o, v) in dx.iter_mut().zip(&tmp) {
            *o += *v;
        }

        let rel = self.layout.slice(self.params, self.layout.relation_embedding);
        let ed = a.edge_dim;
        matmul_at_b_acc(rel, &drel, nch, ed, d, self.layout.slice_mut(grads, ids.edge.weight));
        col_sum_acc(&drel, d, self.layout.slice_mut(grads, ids.edge.bias));
        let mut drel_emb = vec![S::ZERO; nch * ed];
        matmul_a_bt(&drel, self.layout.slice(self.params, ids.edge.weight), nch, d, ed, &mut drel_emb);
        for (g, v) in self.layout.slice_mut(grads, self.layout.relation_embedding).iter_mut().zip(drel_emb) {
            *g += v;
        }
        dx
    }

    fn features_backward(&self, input: &NetInput, fc: &super::forward::FeatureCache<S>, dl0: &[S], grads: &mut [S]) {
        let a = self.arch;
        let n = input.len();
        let (tdim, ydim, ddim, fdim, d) = (a.text_dim, a.type_dim, a.dt_dim, a.feature_dim(), a.hidden_dim);
        let proj = self.layout.input_projection;
        matmul_at_b_acc(&fc.x0, dl0, n, fdim, d, self.layout.slice_mut(grads, proj.weight));
        col_sum_acc(dl0, d, self.layout.slice_mut(grads, proj.bias));

        // Text columns are frozen; only the type and time-gap columns need input gradients.
        let tail = ydim + ddim;
        let w_tail = &self.layout.slice(self.params, proj.weight)[tdim * d..];
        let mut dtail = vec![S::ZERO; n * tail];
        matmul_a_bt(dl0, w_tail, n, d, tail, &mut dtail);

        {
            let gtype = self.layout.slice_mut(grads, self.layout.type_embedding);
            for i in 0..n {
                let t = input.types[i].index();
                for j in 0..ydim {
                    gtype[t * ydim + j] += dtail[i * tail + j];
                }
            }
        }

        let w2 = self.layout.slice(self.params, self.layout.dt_out.weight);
        let mut gw1 = vec![S::ZERO; ddim];
        let mut gb1 = vec![S::ZERO; ddim];
        let mut gw2 = vec![S::ZERO; ddim * ddim];
        let mut gb2 = vec![S::ZERO; ddim];
        for i in (0..n).filter(|&i| !input.types[i].is_entity()) {
            let dd = &dtail[i * tail + ydim..(i + 1) * tail];
            let act = &fc.dt_act[i * ddim..(i + 1) * ddim];
            let pre = &fc.dt_pre[i * ddim..(i + 1) * ddim];
            let u = fc.dt_input[i];
            for j in 0..ddim {
                gb2[j] += dd[j];
            }
            for k in 0..ddim {
                let mut dact = S::ZERO;
                for j in 0..ddim {
                    gw2[k * ddim + j] += act[k] * dd[j];
                    dact += dd[j] * w2[k * ddim + j];
                }
                let dp = dact * gelu_grad(pre[k]);
                gw1[k] += u * dp;
                gb1[k] += dp;
            }
        }
        for (id, g) in [
            (self.layout.dt_hidden.weight, gw1),
            (self.layout.dt_hidden.bias, gb1),
            (self.layout.dt_out.weight, gw2),
            (self.layout.dt_out.bias, gb2),
        ] {
            for (o, v) in self.layout.slice_mut(grads, id).iter_mut().zip(g) {
                *o += v;
            }
        }
    }
}
