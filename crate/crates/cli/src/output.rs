//! Ordered, single-threaded writing of run artifacts and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Config;

#[derive(Serialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Serialize)]
pub struct Manifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub exit_code: i32,
    pub config: &'a Config,
    pub files: Vec<FileEntry>,
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<FileEntry>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry { name: name.to_string(), sha256: hex(&Sha256::digest(data)), bytes: data.len() });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let data = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
        self.write(name, &data)
    }

    pub fn finish(self, command: &str, config: &Config, threads: usize, exit_code: i32) -> Result<()> {
        let m = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: config.seed(),
            threads,
            exit_code,
            config,
            files: self.files,
        };
        let mut s = serde_json::to_string_pretty(&m)?;
        s.push('\n');
        let path = self.root.join("manifest.json");
        fs::write(&path, s).with_context(|| format!("writing {}", path.display()))
    }
}
