//! Which text embedder a checkpoint was trained with, and how to rebuild it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tgl_core::embed::{HashEmbedder, MissingKey, TableEmbedder, TextEmbedder};
use tgl_core::hash::sha1_hex;

use crate::embtable::encode_table;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hash { dim: usize },
    /// `sha1` is the digest of the table file contents.
    Table { dim: usize, entries: usize, sha1: String },
}

impl EmbedderSpec {
    pub fn dim(&self) -> usize {
        match self {
            EmbedderSpec::Hash { dim } | EmbedderSpec::Table { dim, .. } => *dim,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Embedder {
    Hash(HashEmbedder),
    Table(TableEmbedder),
}

impl Default for Embedder {
    fn default() -> Self {
        Embedder::Hash(HashEmbedder::default())
    }
}

impl Embedder {
    /// The default embedder, or the table at `table`.
    pub fn open(table: Option<&Path>) -> Result<Embedder> {
        match table {
            None => Ok(Embedder::default()),
            Some(p) => Ok(Embedder::Table(crate::embtable::read_table(p, MissingKey::Error)?)),
        }
    }

    pub fn spec(&self) -> EmbedderSpec {
        match self {
            Embedder::Hash(h) => EmbedderSpec::Hash { dim: h.dim() },
            Embedder::Table(t) => EmbedderSpec::Table { dim: t.dim(), entries: t.len(), sha1: sha1_hex(&encode_table(t)) },
        }
    }

    /// Fails unless this embedder is the one described by `spec`.
    pub fn check(&self, spec: &EmbedderSpec) -> Result<()> {
        let have = self.spec();
        if &have != spec {
            return Err(Error::Checkpoint {
                path: Default::default(),
                msg: format!("embedder mismatch: checkpoint expects {spec:?}, runtime has {have:?}"),
            });
        }
        Ok(())
    }
}

impl TextEmbedder for Embedder {
    fn dim(&self) -> usize {
        match self {
            Embedder::Hash(h) => h.dim(),
            Embedder::Table(t) => t.dim(),
        }
    }

    fn embed_into(&self, text: &str, out: &mut [f32]) -> tgl_core::Result<()> {
        match self {
            Embedder::Hash(h) => h.embed_into(text, out),
            Embedder::Table(t) => t.embed_into(text, out),
        }
    }
}
