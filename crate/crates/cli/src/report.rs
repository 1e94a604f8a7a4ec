//! Report envelope, determinism hash and JSON/CSV output.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const VERSION: &str = env!("SCHROLAB_VERSION");

/// A CSV mirror of tabular report data.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// What a subcommand produced.
pub struct Outcome {
    pub result: Value,
    pub tables: Vec<Table>,
    /// A property check failed; maps to exit code 2.
    pub failed: bool,
}

impl Outcome {
    pub fn ok(result: impl Serialize, tables: Vec<Table>) -> Self {
        Self { result: json!(result), tables, failed: false }
    }
}

/// sha256 over the canonical JSON of the envelope without `timestamp` and `hash`.
pub fn determinism_hash(envelope: &Value) -> String {
    let mut v = envelope.clone();
    if let Value::Object(m) = &mut v {
        m.remove("timestamp");
        m.remove("hash");
    }
    hex::encode(Sha256::digest(serde_json::to_vec(&v).expect("json value serializes")))
}

pub fn envelope(command: &str, config: Value, seed: u64, result: Value) -> Value {
    let mut env = json!({
        "tool": "schrolab",
        "version": VERSION,
        "command": command,
        "config": config,
        "seed": seed,
        "result": result,
    });
    let hash = determinism_hash(&env);
    let m = env.as_object_mut().expect("object");
    m.insert("timestamp".into(), json!(chrono::Utc::now().to_rfc3339()));
    m.insert("hash".into(), json!(hash));
    env
}

/// Writes `<command>.json` and one `<command>-<table>.csv` per table into
/// `out`, or prints the JSON to stdout when `out` is `None`.
pub fn emit(command: &str, env: &Value, tables: &[Table], out: Option<&Path>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(env)?;
    match out {
        None => match writeln!(std::io::stdout().lock(), "{text}") {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            r => r?,
        },
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{command}.json")), text + "\n")?;
            for t in tables {
                t.write(&dir.join(format!("{command}-{}.csv", t.name)))?;
            }
            log::info!("wrote {} report(s) to {}", 1 + tables.len(), dir.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timestamp() {
        let a = envelope("x", json!({"k": 1}), 0, json!([1, 2]));
        let mut b = a.clone();
        b["timestamp"] = json!("1970-01-01T00:00:00Z");
        assert_eq!(determinism_hash(&a), determinism_hash(&b));
        assert_eq!(a["hash"], json!(determinism_hash(&a)));
    }

    #[test]
    fn hash_tracks_result() {
        let a = envelope("x", json!({}), 0, json!(1));
        let b = envelope("x", json!({}), 0, json!(2));
        assert_ne!(a["hash"], b["hash"]);
    }
}
