//! Per-run manifest and output helpers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce a run. Contains no timestamps or host
/// details, so equal runs produce byte-identical manifests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, InputRecord>,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        let mut versions = BTreeMap::new();
        versions.insert("nsotree".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest".to_string(), "1".to_string());
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: BTreeMap::new(),
            seed,
            artifacts: Vec::new(),
            versions,
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.insert(
            role.to_string(),
            InputRecord {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            },
        );
        Ok(())
    }

    /// Writes `manifest.json` into `out`.
    pub fn write(mut self, out: &Output) -> Result<PathBuf> {
        self.artifacts = out.written.iter().map(|p| p.display().to_string()).collect();
        let path = out.dir.join("manifest.json");
        write_text(&path, &(serde_json::to_string_pretty(&self)? + "\n"))?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).with_context(|| format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Output directory that remembers which artifacts were written.
pub struct Output {
    pub dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self {
            dir,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Records a file written by other code.
    pub fn record(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.written.push(p.clone());
        p
    }

    pub fn text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.record(name);
        write_text(&p, text)?;
        Ok(p)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        self.text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

/// Resolves the output directory: flag, then config, then `NSOTREE_OUT`,
/// then `./nsotree-out/<command>`.
pub fn output_dir(flag: Option<PathBuf>, command: &str) -> PathBuf {
    flag.unwrap_or_else(|| {
        std::env::var_os("NSOTREE_OUT")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("nsotree-out"))
            .join(command)
    })
}
