//! Delimited-table and JSON writers; every file carries the resolved
//! config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub struct OutputDir<'a> {
    pub dir: PathBuf,
    cfg: &'a RunConfig,
    command: &'static str,
    pub written: Vec<PathBuf>,
}

impl<'a> OutputDir<'a> {
    pub fn create(cfg: &'a RunConfig, command: &'static str) -> CliResult<Self> {
        std::fs::create_dir_all(&cfg.output).map_err(CliError::io(&cfg.output))?;
        Ok(OutputDir { dir: cfg.output.clone(), cfg, command, written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(CliError::io(&path))?;
        self.written.push(path);
        Ok(())
    }

    /// Comma-separated table with the config as `#` comment lines.
    pub fn table(&mut self, name: &str, columns: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut body = self.cfg.header(self.command);
        body.push_str(&columns.join(","));
        body.push('\n');
        for r in rows {
            body.push_str(&r.join(","));
            body.push('\n');
        }
        self.write(name, &body)
    }

    /// Raw text with the config header (for data files in the ingestion
    /// format).
    pub fn text(&mut self, name: &str, content: &str) -> CliResult<()> {
        let body = format!("{}{content}", self.cfg.header(self.command));
        self.write(name, &body)
    }

    /// JSON document `{ "config": ..., "command": ..., "result": ... }`.
    pub fn json<T: Serialize>(&mut self, name: &str, result: &T) -> CliResult<()> {
        #[derive(Serialize)]
        struct Doc<'b, T> {
            command: &'b str,
            config: &'b RunConfig,
            result: &'b T,
        }
        let doc = Doc { command: self.command, config: self.cfg, result };
        let mut body = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Config(e.to_string()))?;
        body.push('\n');
        self.write(name, &body)
    }
}

pub fn num(v: f64) -> String {
    let mut s = String::new();
    write!(s, "{v}").expect("formatting to a string");
    s
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// File stem used as a dataset label.
pub fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}
