//! Output directories: atomic writes, the run manifest and the config echo.

use std::path::{Path, PathBuf};

use llab_core::io::{save_binary, write_atomic, write_csv};
use llab_core::report::to_json;
use llab_core::{Error, Result};
use serde::Serialize;

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG_ECHO: &str = "config.toml";

pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn prepare(&mut self, rel: &str) -> Result<PathBuf> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
        Ok(path)
    }

    pub fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.prepare(rel)?;
        write_atomic(&path, bytes)
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        self.bytes(rel, to_json(value)?.as_bytes())
    }

    pub fn csv(&mut self, rel: &str, field: &llab_core::grid::ScalarField) -> Result<()> {
        let mut buf = Vec::new();
        write_csv(field, &mut buf)?;
        self.bytes(rel, &buf)
    }

    pub fn field(&mut self, rel: &str, field: &llab_core::grid::ScalarField) -> Result<()> {
        let path = self.prepare(rel)?;
        save_binary(field, &path)
    }

    /// Writes the config echo and then the manifest, which lists every
    /// file written before it.
    pub fn finish<C: Serialize>(mut self, command: &str, scenario: Option<&Path>, seed: Option<u64>, config: &C) -> Result<()> {
        let echo = toml::to_string(config).map_err(|e| Error::Format(e.to_string()))?;
        self.bytes(CONFIG_ECHO, echo.as_bytes())?;
        let manifest = RunManifest {
            command: command.to_string(),
            scenario: scenario.map(|p| p.display().to_string()),
            output_dir: self.root.display().to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
            files: self.written.clone(),
        };
        self.json(MANIFEST, &manifest)
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub scenario: Option<String>,
    pub output_dir: String,
    pub seed: Option<u64>,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub files: Vec<String>,
}
