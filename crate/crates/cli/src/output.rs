use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, RunConfig, SCHEMA_VERSION};

/// Destination of one run: result.json, optional curve.csv and the
/// timestamped run.log, all in one directory; stdout when no directory is
/// given.
pub struct Output {
    dir: Option<PathBuf>,
    command: &'static str,
    config: Value,
    csv: bool,
    log: Option<File>,
}

impl Output {
    pub fn new(dir: Option<&Path>, command: &'static str, cfg: &RunConfig) -> Result<Self, CliError> {
        let log = match dir {
            Some(d) => {
                fs::create_dir_all(d)?;
                Some(OpenOptions::new().create(true).append(true).open(d.join("run.log"))?)
            }
            None => None,
        };
        Ok(Output {
            dir: dir.map(Path::to_path_buf),
            command,
            config: serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))?,
            csv: cfg.output.csv,
            log,
        })
    }

    pub fn log(&mut self, msg: &str) {
        if let Some(f) = &mut self.log {
            let _ = writeln!(f, "{} {} {msg}", chrono::Utc::now().to_rfc3339(), self.command);
        }
    }

    /// Writes the result envelope and returns its text.
    pub fn result(&mut self, result: impl Serialize) -> Result<(), CliError> {
        let doc = json!({
            "schema_version": SCHEMA_VERSION,
            "version": pathwit_core::VERSION,
            "command": self.command,
            "config": self.config,
            "result": serde_json::to_value(result).map_err(|e| CliError::Io(e.to_string()))?,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))? + "\n";
        match &self.dir {
            Some(d) => {
                let path = d.join("result.json");
                fs::write(&path, &text)?;
                self.log(&format!("wrote {}", path.display()));
            }
            None => print!("{text}"),
        }
        Ok(())
    }

    /// Writes `rows` under `header` to curve.csv when CSV output is enabled.
    pub fn table(&mut self, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        if !self.csv {
            return Ok(());
        }
        let Some(d) = &self.dir else {
            self.log("csv requested without an output directory");
            return Err(CliError::invalid("output.csv", "needs an output directory (--out)"));
        };
        let path = d.join("curve.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(e.to_string()))?;
        w.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
        for r in rows {
            w.write_record(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        self.log(&format!("wrote {}", path.display()));
        Ok(())
    }
}

/// Shortest round-trip representation, as in the JSON.
pub fn num(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| "NaN".into())
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
