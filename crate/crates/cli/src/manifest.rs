//! Run manifests: resolved config, seeds, file hashes and run details.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, Context};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).at(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes of every file under `root` (or of `root` itself), keyed by path
/// relative to `base`, in sorted order.
pub fn hash_tree(root: &Path, base: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(p) = stack.pop() {
        if p.is_dir() {
            for entry in std::fs::read_dir(&p).at(&p)? {
                stack.push(entry.at(&p)?.path());
            }
        } else {
            let key = p.strip_prefix(base).unwrap_or(&p).display().to_string();
            out.insert(key, sha256_file(&p)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    /// Config after defaults and flag overrides.
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config: serde_json::to_value(config).unwrap_or_default(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn add_inputs(&mut self, paths: &[&Path]) -> CliResult<()> {
        for p in paths {
            let base = p.parent().unwrap_or(Path::new(""));
            self.inputs.extend(hash_tree(p, base)?);
        }
        Ok(())
    }

    /// Hashes everything written to `out` so far and saves the manifest there.
    pub fn finish(mut self, out: &Path) -> CliResult<PathBuf> {
        let mut outputs = hash_tree(out, out)?;
        outputs.remove(MANIFEST_FILE);
        self.outputs = outputs;
        let path = out.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").at(&path)?;
        Ok(path)
    }
}
