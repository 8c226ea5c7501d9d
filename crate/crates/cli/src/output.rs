//! Staged output directory and run manifests.
//!
//! Files are written into a hidden staging directory inside `--out` and
//! renamed into place only after the whole command succeeded; on failure the
//! staging directory is dropped and the output directory is left untouched.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use tempfile::TempDir;

use crate::failure::Failure;

/// 17 significant digits, locale independent; `-0` prints as `0`.
pub fn num(v: f64) -> String {
    gtspectra::weights_io::format_f64(if v == 0.0 { 0.0 } else { v })
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub struct Staging {
    dir: TempDir,
    out: PathBuf,
    files: Vec<String>,
}

impl Staging {
    pub fn new(out: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(out).map_err(|e| Failure::input(out.display(), e))?;
        let dir = tempfile::Builder::new()
            .prefix(".staging-")
            .tempdir_in(out)
            .map_err(|e| Failure::input(out.display(), e))?;
        Ok(Staging {
            dir,
            out: out.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.dir.path().join(name)
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), Failure> {
        let path = self.register(name);
        std::fs::write(path, contents)?;
        Ok(())
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<File>, Failure> {
        let path = self.register(name);
        Ok(csv::Writer::from_path(path)?)
    }

    pub fn lines(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.register(name);
        Ok(BufWriter::new(File::create(path)?))
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, Failure> {
        let mut moved = Vec::new();
        for name in &self.files {
            let dest = self.out.join(name);
            std::fs::rename(self.dir.path().join(name), &dest)?;
            moved.push(dest);
        }
        Ok(moved)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub tool_version: String,
    pub config_hash: Option<String>,
    pub weights_hash: Option<String>,
    pub corpus_hash: Option<String>,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch; the only field that varies between
    /// otherwise identical runs.
    pub timestamp: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new() -> Self {
        RunManifest {
            command_line: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: None,
            weights_hash: None,
            corpus_hash: None,
            seed: None,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs: Vec::new(),
        }
    }

    /// Write `<command>_manifest.json` into the staging area, listing every
    /// file staged so far.
    pub fn stage(mut self, staging: &mut Staging, command: &str) -> Result<(), Failure> {
        self.outputs = staging.files().to_vec();
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        staging.write(&format!("{command}_manifest.json"), text.as_bytes())
    }
}

pub fn write_json_line(out: &mut impl Write, value: &impl Serialize) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Failure::Input(format!("E_IO: {e}")))?;
    out.write_all(b"\n")?;
    Ok(())
}
