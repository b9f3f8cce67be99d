//! Run manifests written next to every output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub core_version: String,
    /// Every resolved option, flags merged over any config file.
    pub options: Value,
    pub inputs: Vec<InputFile>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha1: String,
}

impl RunManifest {
    pub fn new(command: &str, options: Value) -> Self {
        RunManifest {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            core_version: tgl_core::VERSION.into(),
            options,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Records an input file with a digest of its contents (or of every
    /// file in it, for a checkpoint directory).
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha1 = digest(path)?;
        self.inputs.push(InputFile { path: path.display().to_string(), sha1 });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// `<out>.manifest.json` beside the primary output.
    pub fn write_beside(&self, out: &Path) -> Result<PathBuf> {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        let path = out.with_file_name(name);
        crate::io::write_json(&path, self)?;
        Ok(path)
    }
}

fn digest(path: &Path) -> Result<String> {
    let read = |p: &Path| std::fs::read(p).map_err(crate::error::io_err(p));
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(crate::error::io_err(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        let mut all = Vec::new();
        for p in entries {
            all.extend(p.file_name().unwrap_or_default().as_encoded_bytes());
            all.extend(read(&p)?);
        }
        Ok(tgl_core::hash::sha1_hex(&all))
    } else {
        Ok(tgl_core::hash::sha1_hex(&read(path)?))
    }
}
