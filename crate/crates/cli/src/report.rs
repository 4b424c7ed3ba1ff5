//! Report envelopes and output helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::Failure;

pub const TOOL: &str = "dbrs";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// An input file read in full, with its digest.
pub struct Input {
    pub path: PathBuf,
    pub text: String,
    pub sha256: String,
}

impl Input {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let bytes = fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let text = String::from_utf8(bytes).map_err(|_| Failure::Input(format!("{} is not UTF-8", path.display())))?;
        Ok(Input { path: path.to_path_buf(), text, sha256 })
    }
}

/// Wraps a report with provenance: tool version, input digests and the
/// resolved configuration.
pub fn envelope<C: Serialize, R: Serialize>(command: &str, inputs: &[&Input], config: &C, report: &R) -> Result<Value, Failure> {
    let digests: serde_json::Map<String, Value> = inputs
        .iter()
        .map(|i| (i.path.display().to_string(), Value::String(i.sha256.clone())))
        .collect();
    Ok(json!({
        "tool": TOOL,
        "version": VERSION,
        "command": command,
        "inputs": digests,
        "config": to_value(config)?,
        "report": to_value(report)?,
    }))
}

pub fn to_value<T: Serialize>(x: &T) -> Result<Value, Failure> {
    serde_json::to_value(x).map_err(|e| Failure::Numerical { kind: "serialization".into(), message: e.to_string() })
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Writes to `out`, or to stdout when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::Input(format!("cannot write to stdout: {e}")))
        }
    }
}

/// Sidecar `<out>.meta.json` next to a CSV output.
pub fn emit_meta(out: Option<&Path>, meta: &Value) -> Result<(), Failure> {
    if let Some(p) = out {
        let mut name = p.as_os_str().to_owned();
        name.push(".meta.json");
        emit(Some(Path::new(&name)), &pretty(meta))?;
    }
    Ok(())
}
