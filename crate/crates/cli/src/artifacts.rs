//! Output directory handling. Every artifact carries the tool version and
//! the resolved configuration; none carries a timestamp.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub struct OutputDir {
    root: PathBuf,
    command: &'static str,
    config: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path, command: &'static str) -> Result<Self, Failure> {
        std::fs::create_dir_all(root).map_err(|e| Failure::Config(format!("output directory {}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), command, config: BTreeMap::new() })
    }

    pub fn set_config(&mut self, config: &BTreeMap<String, String>) {
        self.config = config.clone();
    }

    pub fn record(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    fn open(&self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.root.join(name);
        let f = File::create(&path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        Ok(BufWriter::new(f))
    }

    pub fn write_json(&self, name: &str, result: &impl Serialize) -> Result<(), Failure> {
        #[derive(Serialize)]
        struct Envelope<'a, T> {
            tool: &'static str,
            version: &'static str,
            command: &'static str,
            config: &'a BTreeMap<String, String>,
            result: &'a T,
        }
        let env = Envelope { tool: "kspp", version: VERSION, command: self.command, config: &self.config, result };
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, &env).map_err(|e| Failure::Runtime(e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(io)
    }

    /// CSV preceded by `#` comment lines with the version and configuration.
    pub fn write_csv<R: Serialize>(&self, name: &str, rows: &[R]) -> Result<(), Failure> {
        let mut w = self.open(name)?;
        self.write_preamble(&mut w)?;
        let mut csv = csv::Writer::from_writer(w);
        for row in rows {
            csv.serialize(row).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        csv.flush().map_err(io)
    }

    /// Raw writer with the comment preamble already emitted.
    pub fn write_with(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
        let mut w = self.open(name)?;
        self.write_preamble(&mut w)?;
        body(&mut w)?;
        w.flush().map_err(io)
    }

    pub fn write_bytes(&self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
        let mut w = self.open(name)?;
        body(&mut w)?;
        w.flush().map_err(io)
    }

    fn write_preamble(&self, w: &mut impl Write) -> Result<(), Failure> {
        writeln!(w, "# kspp {VERSION} {}", self.command).map_err(io)?;
        for (k, v) in &self.config {
            writeln!(w, "# {k} = {v}").map_err(io)?;
        }
        Ok(())
    }
}

fn io(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}
