//! On-disk checkpoints.
//!
//! A checkpoint is a directory with three files:
//! `manifest.json` (format version, architecture, training config, embedder,
//! tensor table), `weights.bin` (every tensor as little-endian f32, in
//! manifest order) and `optimizer.bin` (AdamW first moments, then second
//! moments, same order). The optimizer step counter lives in the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tgl_core::model::{count_parameters, Architecture, Layout, TensorSpec};
use tgl_core::optim::AdamW;
use tgl_core::train::{TrainConfig, TrainedModel};

use crate::embedder::EmbedderSpec;
use crate::error::{io_err, Error, Result};

pub const FORMAT: &str = "tgl-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";
pub const OPTIMIZER: &str = "optimizer.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub train_config: TrainConfig,
    pub embedder: EmbedderSpec,
    pub optimizer_step: u64,
    pub parameter_count: usize,
    pub tensors: Vec<TensorSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Architecture,
    pub train_config: TrainConfig,
    pub embedder: EmbedderSpec,
    pub params: Vec<f32>,
    pub optimizer: AdamW,
}

impl Checkpoint {
    pub fn from_trained(model: TrainedModel, embedder: EmbedderSpec) -> Checkpoint {
        Checkpoint {
            arch: model.arch,
            train_config: model.config,
            embedder,
            params: model.params,
            optimizer: model.optimizer,
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.arch)
    }

    pub fn manifest(&self) -> Manifest {
        let layout = self.layout();
        Manifest {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            architecture: self.arch,
            train_config: self.train_config,
            embedder: self.embedder.clone(),
            optimizer_step: self.optimizer.step,
            parameter_count: count_parameters(&layout),
            tensors: layout.specs,
        }
    }
}

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<()> {
    let total = ckpt.layout().total;
    if ckpt.params.len() != total || ckpt.optimizer.m.len() != total || ckpt.optimizer.v.len() != total {
        return Err(Error::Checkpoint {
            path: dir.to_path_buf(),
            msg: format!("buffers do not match the architecture's {total} parameters"),
        });
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    crate::io::write_json(&dir.join(MANIFEST), &ckpt.manifest())?;
    let w = dir.join(WEIGHTS);
    std::fs::write(&w, f32_bytes(&ckpt.params)).map_err(io_err(&w))?;
    let mut opt = f32_bytes(&ckpt.optimizer.m);
    opt.extend(f32_bytes(&ckpt.optimizer.v));
    let o = dir.join(OPTIMIZER);
    std::fs::write(&o, opt).map_err(io_err(&o))
}

/// Loads and verifies a checkpoint. With `expected`, any architecture field
/// that differs from the manifest is a hard error.
pub fn load_checkpoint(dir: &Path, expected: Option<&Architecture>) -> Result<Checkpoint> {
    let fail = |msg: String| Error::Checkpoint { path: dir.to_path_buf(), msg };
    let manifest: Manifest = crate::io::read_json(&dir.join(MANIFEST))?;
    if manifest.format != FORMAT {
        return Err(fail(format!("unknown format `{}`", manifest.format)));
    }
    if manifest.version != FORMAT_VERSION {
        return Err(fail(format!("format version {} is not supported (expected {FORMAT_VERSION})", manifest.version)));
    }
    manifest.architecture.validate()?;
    if let Some(want) = expected {
        if *want != manifest.architecture {
            return Err(fail(format!(
                "architecture mismatch: runtime {want:?}, manifest {:?}",
                manifest.architecture
            )));
        }
    }
    if manifest.embedder.dim() != manifest.architecture.text_dim {
        return Err(fail(format!(
            "embedder dim {} does not match text_dim {}",
            manifest.embedder.dim(),
            manifest.architecture.text_dim
        )));
    }
    let layout = Layout::new(&manifest.architecture);
    check_tensor_table(&layout.specs, &manifest.tensors).map_err(fail)?;
    if manifest.parameter_count != layout.total {
        return Err(fail(format!(
            "manifest claims {} parameters, architecture has {}",
            manifest.parameter_count, layout.total
        )));
    }

    let params = read_blob(&dir.join(WEIGHTS), &layout.specs, 1)?;
    let mut moments = read_blob(&dir.join(OPTIMIZER), &layout.specs, 2)?;
    let v = moments.split_off(layout.total);
    let optimizer = AdamW { cfg: manifest.train_config.optimizer, step: manifest.optimizer_step, m: moments, v };
    Ok(Checkpoint {
        arch: manifest.architecture,
        train_config: manifest.train_config,
        embedder: manifest.embedder,
        params,
        optimizer,
    })
}

fn check_tensor_table(want: &[TensorSpec], got: &[TensorSpec]) -> std::result::Result<(), String> {
    for (i, w) in want.iter().enumerate() {
        match got.get(i) {
            None => return Err(format!("tensor `{}` missing from manifest", w.name)),
            Some(g) if g != w => {
                return Err(format!(
                    "tensor `{}`: manifest has `{}` {:?} at offset {}, architecture needs {:?} at offset {}",
                    w.name, g.name, g.shape, g.offset, w.shape, w.offset
                ))
            }
            Some(_) => {}
        }
    }
    if let Some(extra) = got.get(want.len()) {
        return Err(format!("unexpected tensor `{}` in manifest", extra.name));
    }
    Ok(())
}

/// Reads `copies` back-to-back runs of the tensor table.
fn read_blob(path: &Path, specs: &[TensorSpec], copies: usize) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let total: usize = specs.iter().map(|s| s.len).sum();
    let fail = |msg: String| Error::Checkpoint { path: PathBuf::from(path), msg };
    if bytes.len() % 4 != 0 {
        return Err(fail(format!("{} bytes is not a whole number of f32 values", bytes.len())));
    }
    let have = bytes.len() / 4;
    if have < total * copies {
        let copy = have / total;
        let within = have % total;
        let missing = specs.iter().find(|s| s.offset + s.len > within).expect("short blob has a missing tensor");
        return Err(fail(format!(
            "truncated: tensor `{}` (copy {} of {copies}) needs values {}..{}, file ends at {within}",
            missing.name,
            copy + 1,
            missing.offset,
            missing.offset + missing.len
        )));
    }
    if have > total * copies {
        return Err(fail(format!("{} trailing values", have - total * copies)));
    }
    Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Checkpoint {
        let arch = Architecture {
            text_dim: 6,
            type_dim: 4,
            dt_dim: 4,
            hidden_dim: 8,
            heads: 2,
            layers: 2,
            edge_dim: 3,
            head_hidden: 5,
            ..Architecture::default()
        };
        let layout = Layout::new(&arch);
        let cfg = TrainConfig::default();
        let params = layout.init(3);
        let mut optimizer = AdamW::new(cfg.optimizer, layout.total);
        optimizer.update(&mut params.clone(), &vec![0.1; layout.total]);
        Checkpoint { arch, train_config: cfg, embedder: EmbedderSpec::Hash { dim: 6 }, params, optimizer }
    }

    #[test]
    fn truncation_names_the_missing_tensor() {
        let ck = tiny();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &ck).unwrap();
        let w = dir.path().join(WEIGHTS);
        let bytes = std::fs::read(&w).unwrap();
        let last = ck.layout().specs.last().unwrap().clone();
        std::fs::write(&w, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_checkpoint(dir.path(), None).unwrap_err().to_string();
        assert!(err.contains(&format!("`{}`", last.name)), "{err}");
    }
}
