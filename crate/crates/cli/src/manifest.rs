//! Run manifest: `<verb>.manifest.json` in the output directory, listing the
//! resolved configuration, every input and output file with its SHA-256
//! and size, and nonfatal warnings. Contains no timestamps, so identical runs
//! produce identical manifests.

use std::fs;
use std::path::{Path, PathBuf};

use patternnet::Result;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::Config;

pub const MANIFEST_FORMAT: u32 = 1;

fn file_entry(path: &Path, shown: String) -> Result<Value> {
    let bytes = fs::read(path)?;
    Ok(json!({
        "path": shown,
        "sha256": format!("{:x}", Sha256::digest(&bytes)),
        "bytes": bytes.len(),
    }))
}

pub struct Manifest {
    name: String,
    out: PathBuf,
    inputs: Vec<Value>,
    outputs: Vec<Value>,
    warnings: Vec<String>,
    summary: Value,
}

impl Manifest {
    pub fn new(name: impl Into<String>, out: &Path) -> Self {
        Manifest {
            name: name.into(),
            out: out.to_path_buf(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            summary: json!({}),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        if self.inputs.iter().any(|e| e["path"] == shown.as_str()) {
            return Ok(());
        }
        let e = file_entry(path, shown)?;
        self.inputs.push(e);
        Ok(())
    }

    /// Records a file written under the output directory.
    pub fn output(&mut self, path: &Path, tags: Value) -> Result<()> {
        let shown = path
            .strip_prefix(&self.out)
            .unwrap_or(path)
            .display()
            .to_string();
        let mut e = file_entry(path, shown)?;
        if let (Value::Object(m), Value::Object(t)) = (&mut e, tags) {
            m.extend(t);
        }
        self.outputs.push(e);
        Ok(())
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.warnings.contains(&msg) {
            eprintln!("warning: {msg}");
            self.warnings.push(msg);
        }
    }

    pub fn summarize(&mut self, key: &str, value: Value) {
        self.summary[key] = value;
    }

    pub fn write(&self, config: &Config) -> Result<PathBuf> {
        let doc = json!({
            "format": MANIFEST_FORMAT,
            "run": self.name,
            "config": config.values(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "summary": self.summary,
        });
        let path = self.out.join(format!("{}.manifest.json", self.name));
        fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n")?;
        Ok(path)
    }
}
