use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Everything needed to repeat a run: arguments, resolved configuration,
/// input and output digests, and how long each stage took.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command_line: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// sha256 of every input file, keyed by the path given on the command line.
    pub inputs: BTreeMap<String, String>,
    /// sha256 of every artifact, keyed by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
    pub timings: Vec<StageTiming>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value, seed: Option<u64>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command_line: std::env::args().collect(),
            seed,
            config,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            timings: Vec::new(),
        }
    }

    /// Runs `f` and records its wall-clock time under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn add_artifact(&mut self, out: &Path, relative: &str) -> Result<()> {
        self.artifacts
            .insert(relative.to_string(), sha256_file(&out.join(relative))?);
        Ok(())
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
