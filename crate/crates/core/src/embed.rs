//! Frozen text embedders.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hash::{counter_u64, fnv1a64, sha1_bytes, to_hex, unit_f64};

pub const TEXT_DIM: usize = 768;

/// A frozen map from text to a unit-norm vector. Never receives gradients.
pub trait TextEmbedder {
    fn dim(&self) -> usize;

    fn embed_into(&self, text: &str, out: &mut [f32]) -> Result<()>;

    fn embed(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0.0; self.dim()];
        self.embed_into(text, &mut v)?;
        Ok(v)
    }
}

impl<T: TextEmbedder + ?Sized> TextEmbedder for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_into(&self, text: &str, out: &mut [f32]) -> Result<()> {
        (**self).embed_into(text, out)
    }
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// Deterministic bag-of-tokens embedder.
///
/// Each token's FNV-1a hash keys a SplitMix64 counter stream; consecutive
/// pairs of uniforms become Gaussians by Box-Muller. Token vectors are
/// averaged and L2-normalised. No tokens gives the basis vector e1.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: TEXT_DIM }
    }
}

impl HashEmbedder {
    pub fn with_dim(dim: usize) -> Self {
        assert!(dim > 0 && dim % 2 == 0, "embedding dim must be even");
        HashEmbedder { dim }
    }

    fn accumulate_token(&self, token: &str, acc: &mut [f64]) {
        let key = fnv1a64(token.as_bytes());
        for pair in 0..self.dim / 2 {
            let u1 = 1.0 - unit_f64(counter_u64(key, 2 * pair as u64));
            let u2 = unit_f64(counter_u64(key, 2 * pair as u64 + 1));
            let r = libm::sqrt(-2.0 * libm::log(u1));
            let theta = 2.0 * core::f64::consts::PI * u2;
            acc[2 * pair] += r * libm::cos(theta);
            acc[2 * pair + 1] += r * libm::sin(theta);
        }
    }
}

impl TextEmbedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_into(&self, text: &str, out: &mut [f32]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::EmbeddingDim { expected: self.dim, got: out.len() });
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            out.iter_mut().for_each(|v| *v = 0.0);
            out[0] = 1.0;
            return Ok(());
        }
        let mut acc = vec![0.0f64; self.dim];
        for t in &tokens {
            self.accumulate_token(t, &mut acc);
        }
        let inv_n = 1.0 / tokens.len() as f64;
        acc.iter_mut().for_each(|v| *v *= inv_n);
        let norm = libm::sqrt(acc.iter().map(|v| v * v).sum::<f64>());
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = (a / norm) as f32;
        }
        Ok(())
    }
}

/// What a [`TableEmbedder`] does with text it has no vector for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingKey {
    Error,
    FallbackToDefault,
}

/// Precomputed vectors keyed by `sha1(text)`.
#[derive(Debug, Clone)]
pub struct TableEmbedder {
    dim: usize,
    table: BTreeMap<[u8; 20], Vec<f32>>,
    missing: MissingKey,
    fallback: HashEmbedder,
}

impl TableEmbedder {
    pub fn new(dim: usize, missing: MissingKey) -> Self {
        TableEmbedder {
            dim,
            table: BTreeMap::new(),
            missing,
            fallback: HashEmbedder::with_dim(dim),
        }
    }

    pub fn insert_key(&mut self, key: [u8; 20], vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::EmbeddingDim { expected: self.dim, got: vector.len() });
        }
        self.table.insert(key, vector);
        Ok(())
    }

    pub fn insert_text(&mut self, text: &str, vector: Vec<f32>) -> Result<()> {
        self.insert_key(sha1_bytes(text.as_bytes()), vector)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[u8; 20], &Vec<f32>)> {
        self.table.iter()
    }
}

impl TextEmbedder for TableEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_into(&self, text: &str, out: &mut [f32]) -> Result<()> {
        let key = sha1_bytes(text.as_bytes());
        match self.table.get(&key) {
            Some(v) => {
                out.copy_from_slice(v);
                Ok(())
            }
            None => match self.missing {
                MissingKey::Error => Err(Error::MissingEmbedding(to_hex(&key))),
                MissingKey::FallbackToDefault => self.fallback.embed_into(text, out),
            },
        }
    }
}
