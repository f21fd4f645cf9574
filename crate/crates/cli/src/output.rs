use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Wraps a command result with the schema version. Timing goes under
/// `metadata` so the rest of the document is reproducible byte for byte.
pub fn report(command: &str, result: Value, solve_time_s: Option<f64>) -> Value {
    let generated = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "result": result,
        "metadata": { "generated_unix_s": generated, "solve_time_s": solve_time_s },
    })
}

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub struct OutDir(PathBuf);

impl OutDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        fs::create_dir_all(path).map_err(|e| CliError::input(path, e))?;
        Ok(Self(path.to_path_buf()))
    }

    pub fn write(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let p = self.0.join(name);
        fs::write(&p, contents).map_err(|e| CliError::input(&p, e))?;
        Ok(p)
    }

    pub fn write_json(&self, name: &str, v: &Value) -> CliResult<PathBuf> {
        self.write(name, &pretty(v))
    }
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}
