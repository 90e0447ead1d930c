//! Metrics output (JSON plus flat `key=value` text) and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use recipekg_core::eval::{MetricsReport, WilcoxonResult};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Result};
use crate::formats::write_bytes;

pub fn metrics_json(m: &MetricsReport) -> Value {
    json!({
        "k": m.k,
        "hit_at_k": m.hit_at_k,
        "ndcg_at_k": m.ndcg_at_k,
        "mrr_at_k": m.mrr_at_k,
        "mrr": m.mrr,
        "mean_rank": m.mean_rank,
        "queries": m.n_queries,
    })
}

pub fn wilcoxon_json(w: &WilcoxonResult) -> Value {
    json!({
        "statistic": w.statistic,
        "w_plus": w.w_plus,
        "w_minus": w.w_minus,
        "n": w.n,
        "p_value": w.p_value,
        "method": format!("{:?}", w.method).to_lowercase(),
        "flags": w.flags(),
    })
}

/// Dotted keys, one `key=value` per line, in key order.
pub fn flatten(value: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut String) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, v, out);
                }
            }
            Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
                let joined: Vec<String> = items.iter().map(scalar).collect();
                let _ = writeln!(out, "{prefix}={}", joined.join(","));
            }
            Value::Array(items) => {
                for (i, v) in items.iter().enumerate() {
                    walk(&format!("{prefix}.{i}"), v, out);
                }
            }
            other => {
                let _ = writeln!(out, "{prefix}={}", scalar(other));
            }
        }
    }
    fn scalar(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
    let mut out = String::new();
    walk("", value, &mut out);
    out
}

/// `path` gets pretty JSON; a `.txt` sibling gets the flat form.
pub fn write_metrics(path: &Path, value: &Value) -> Result<Vec<PathBuf>> {
    let mut text = serde_json::to_string_pretty(value).expect("metrics serialize");
    text.push('\n');
    write_bytes(path, text.as_bytes())?;
    let flat_path = path.with_extension("txt");
    write_bytes(&flat_path, flatten(value).as_bytes())?;
    Ok(vec![path.to_path_buf(), flat_path])
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Hash a file, or every file directly inside a directory (sorted by name).
pub fn artifacts(path: &Path) -> Result<Vec<Artifact>> {
    let meta = fs::metadata(path).map_err(io_err(path))?;
    if meta.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(io_err(path))?
            .map(|e| e.map(|e| e.path()).map_err(io_err(path)))
            .collect::<Result<_>>()?;
        entries.sort();
        let mut out = Vec::new();
        for e in entries.iter().filter(|e| e.is_file()) {
            out.extend(artifacts(e)?);
        }
        return Ok(out);
    }
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(vec![Artifact {
        path: path.display().to_string(),
        sha256: hex(&Sha256::digest(&bytes)),
        bytes: bytes.len() as u64,
    }])
}

fn hex(digest: &[u8]) -> String {
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub config: Value,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub summary: Map<String, Value>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialize");
        text.push('\n');
        write_bytes(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_keys_are_dotted_and_sorted() {
        let v = json!({"b": 1, "a": {"y": "s", "x": [1, 2]}});
        assert_eq!(flatten(&v), "a.x=1,2\na.y=s\nb=1\n");
    }
}
