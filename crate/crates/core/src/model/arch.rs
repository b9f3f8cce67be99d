//! Architecture hyperparameters and the flat parameter layout.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeChannel, NodeType};
use crate::hash::{combine, fnv1a64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub text_dim: usize,
    pub type_dim: usize,
    pub dt_dim: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub edge_dim: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub ln_eps: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            text_dim: 768,
            type_dim: 32,
            dt_dim: 32,
            hidden_dim: 256,
            heads: 4,
            layers: 3,
            edge_dim: 32,
            head_hidden: 256,
            dropout: 0.2,
            leaky_slope: 0.2,
            ln_eps: 1e-5,
        }
    }
}

impl Architecture {
    pub fn feature_dim(&self) -> usize {
        self.text_dim + self.type_dim + self.dt_dim
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }

    /// Input projection plus every attention layer, concatenated.
    pub fn jk_dim(&self) -> usize {
        self.hidden_dim * (self.layers + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.hidden_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Position of one named tensor in the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    FanIn(usize),
    Normal(f64),
    Constant(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearIds {
    pub weight: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerIds {
    pub source: LinearIds,
    pub target: LinearIds,
    pub attention: usize,
    pub edge: LinearIds,
    pub norm_scale: usize,
    pub norm_shift: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadIds {
    pub hidden: LinearIds,
    pub out: LinearIds,
}

/// Every trainable tensor, in checkpoint order. Linear weights are stored
/// `[in, out]` row-major so that `y = x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    pub type_embedding: usize,
    pub dt_hidden: LinearIds,
    pub dt_out: LinearIds,
    pub input_projection: LinearIds,
    pub relation_embedding: usize,
    pub layers: Vec<LayerIds>,
    pub trigger_head: HeadIds,
    pub routing_head: HeadIds,
    pub total: usize,
}

struct LayoutBuilder {
    specs: Vec<TensorSpec>,
    inits: Vec<Init>,
    offset: usize,
}

impl LayoutBuilder {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let len = shape.iter().product();
        self.specs.push(TensorSpec { name, shape, offset: self.offset, len });
        self.inits.push(init);
        self.offset += len;
        self.specs.len() - 1
    }

    fn linear(&mut self, prefix: &str, inp: usize, out: usize) -> LinearIds {
        LinearIds {
            weight: self.push(format!("{prefix}.weight"), vec![inp, out], Init::FanIn(inp)),
            bias: self.push(format!("{prefix}.bias"), vec![out], Init::FanIn(inp)),
        }
    }
}

impl Layout {
    pub fn new(arch: &Architecture) -> Layout {
        let mut b = LayoutBuilder { specs: Vec::new(), inits: Vec::new(), offset: 0 };
        let d = arch.hidden_dim;
        let type_embedding = b.push(
            "features.type_embedding".into(),
            vec![NodeType::ALL.len(), arch.type_dim],
            Init::Normal(0.02),
        );
        let dt_hidden = b.linear("features.dt_mlp.hidden", 1, arch.dt_dim);
        let dt_out = b.linear("features.dt_mlp.out", arch.dt_dim, arch.dt_dim);
        let input_projection = b.linear("features.input_projection", arch.feature_dim(), d);
        let relation_embedding = b.push(
            "relation_embedding".into(),
            vec![EdgeChannel::ALL.len(), arch.edge_dim],
            Init::Normal(0.02),
        );
        let layers = (0..arch.layers)
            .map(|l| {
                let p = format!("layers.{l}");
                LayerIds {
                    source: b.linear(&format!("{p}.source"), d, d),
                    target: b.linear(&format!("{p}.target"), d, d),
                    attention: b.push(
                        format!("{p}.attention"),
                        vec![arch.heads, arch.head_dim()],
                        Init::FanIn(arch.head_dim()),
                    ),
                    edge: b.linear(&format!("{p}.edge"), arch.edge_dim, d),
                    norm_scale: b.push(format!("{p}.norm.scale"), vec![d], Init::Constant(1.0)),
                    norm_shift: b.push(format!("{p}.norm.shift"), vec![d], Init::Constant(0.0)),
                }
            })
            .collect();
        let mut head = |name: &str| HeadIds {
            hidden: b.linear(&format!("{name}.hidden"), arch.jk_dim(), arch.head_hidden),
            out: b.linear(&format!("{name}.out"), arch.head_hidden, 1),
        };
        let trigger_head = head("trigger_head");
        let routing_head = head("routing_head");
        Layout {
            total: b.offset,
            specs: b.specs,
            inits: b.inits,
            type_embedding,
            dt_hidden,
            dt_out,
            input_projection,
            relation_embedding,
            layers,
            trigger_head,
            routing_head,
        }
    }

    #[inline]
    pub fn slice<'a, S>(&self, params: &'a [S], id: usize) -> &'a [S] {
        let s = &self.specs[id];
        &params[s.offset..s.offset + s.len]
    }

    #[inline]
    pub fn slice_mut<'a, S>(&self, params: &'a mut [S], id: usize) -> &'a mut [S] {
        let s = &self.specs[id];
        &mut params[s.offset..s.offset + s.len]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    /// Deterministic initialisation; each tensor draws from its own stream
    /// keyed by `(seed, tensor name)`.
    pub fn init(&self, seed: u64) -> Vec<f32> {
        let mut out = vec![0.0f32; self.total];
        for (spec, init) in self.specs.iter().zip(&self.inits) {
            let mut rng = ChaCha8Rng::seed_from_u64(combine(seed, fnv1a64(spec.name.as_bytes())));
            let dst = &mut out[spec.offset..spec.offset + spec.len];
            match *init {
                Init::FanIn(fan_in) => {
                    let bound = 1.0 / libm::sqrt(fan_in as f64);
                    for v in dst {
                        *v = rng.gen_range(-bound..bound) as f32;
                    }
                }
                Init::Normal(std) => {
                    for v in dst {
                        let u1: f64 = 1.0 - rng.gen::<f64>();
                        let u2: f64 = rng.gen();
                        let z = libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2);
                        *v = (z * std) as f32;
                    }
                }
                Init::Constant(c) => dst.iter_mut().for_each(|v| *v = c as f32),
            }
        }
        out
    }
}

/// Sum of trainable tensor element counts.
pub fn count_parameters(layout: &Layout) -> usize {
    layout.specs.iter().map(|s| s.len).sum()
}

/// Element counts grouped by component prefix.
pub fn parameter_breakdown(layout: &Layout) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = Vec::new();
    for s in &layout.specs {
        let key = match s.name.split('.').next().unwrap_or("") {
            "layers" => s.name.splitn(3, '.').take(2).collect::<Vec<_>>().join("."),
            "features" => s.name.splitn(3, '.').take(2).collect::<Vec<_>>().join("."),
            other => String::from(other),
        };
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, n)) => *n += s.len,
            None => out.push((key, s.len)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_embedding_rows_distinct_at_init() {
        let arch = Architecture::default();
        let layout = Layout::new(&arch);
        let p = layout.init(0);
        let t = layout.slice(&p, layout.type_embedding);
        for a in 0..10 {
            for b in (a + 1)..10 {
                assert_ne!(&t[a * 32..(a + 1) * 32], &t[b * 32..(b + 1) * 32]);
            }
        }
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let layout = Layout::new(&Architecture::default());
        assert_eq!(layout.init(3), layout.init(3));
        assert_ne!(layout.init(3), layout.init(4));
    }

    #[test]
    fn offsets_are_contiguous() {
        let layout = Layout::new(&Architecture::default());
        let mut off = 0;
        for s in &layout.specs {
            assert_eq!(s.offset, off);
            off += s.len;
        }
        assert_eq!(off, layout.total);
    }
}
