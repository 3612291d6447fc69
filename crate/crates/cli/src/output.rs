//! Staged command output. Files are collected in memory and only written,
//! each through a temporary file renamed into place, once the command has
//! produced all of them.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
    timing: Map<String, Value>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timing: Map::new(),
        }
    }

    pub fn add_bytes(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Adds a JSON report. Any `timing` object inside it moves to the
    /// command's timing file under its JSON path.
    pub fn add_report(&mut self, name: &str, report: &impl Serialize) -> Result<(), CliError> {
        let mut value = serde_json::to_value(report).map_err(|e| CliError::Internal(e.to_string()))?;
        take_timing(&mut value, name, &mut self.timing);
        let mut bytes = serde_json::to_vec_pretty(&value).map_err(|e| CliError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        self.add_bytes(name, bytes);
        Ok(())
    }

    /// Writes everything plus `<command>_timing.json`.
    pub fn commit(mut self, command: &str, seconds: f64) -> Result<Vec<PathBuf>, CliError> {
        let timing = serde_json::json!({
            "command": command,
            "seconds": seconds,
            "sections": Value::Object(std::mem::take(&mut self.timing)),
        });
        let mut bytes = serde_json::to_vec_pretty(&timing).map_err(|e| CliError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        self.add_bytes(&format!("{command}_timing.json"), bytes);

        std::fs::create_dir_all(&self.dir).map_err(|e| io_error(&self.dir, e))?;
        let mut staged = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| io_error(&self.dir, e))?;
            tmp.write_all(bytes).map_err(|e| io_error(tmp.path(), e))?;
            staged.push((tmp, self.dir.join(name)));
        }
        let mut written = Vec::with_capacity(staged.len());
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| io_error(&path, e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn take_timing(value: &mut Value, path: &str, out: &mut Map<String, Value>) {
    match value {
        Value::Object(map) => {
            if let Some(t) = map.remove("timing") {
                out.insert(path.to_string(), t);
            }
            for (k, v) in map.iter_mut() {
                take_timing(v, &format!("{path}/{k}"), out);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                take_timing(v, &format!("{path}/{i}"), out);
            }
        }
        _ => {}
    }
}
