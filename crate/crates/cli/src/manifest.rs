//! Run manifests and the writer that keeps them complete.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use lbs_core::DenseVector;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::run::save_gray;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SolverMetrics {
    pub solver: String,
    pub iterations: usize,
    pub converged: bool,
    pub final_psi: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Share of block updates that took the model-based branch (LBS only).
    pub fallback_fraction: Option<f64>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub library_version: String,
    pub threads: usize,
    pub config: BTreeMap<String, String>,
    pub wall_time_s: f64,
    pub input_psnr: Option<f64>,
    pub metrics: Vec<SolverMetrics>,
    pub trace_paths: Vec<PathBuf>,
    pub image_paths: Vec<PathBuf>,
    /// Scalar results that are not per-solver, e.g. training losses.
    pub summary: BTreeMap<String, f64>,
    /// Every file the run wrote, this manifest included.
    pub files: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, wall_time_s: f64) -> Self {
        let config = cfg
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self::bare(command, config, wall_time_s)
    }

    /// A manifest whose config snapshot is an arbitrary key/value map.
    pub fn bare(command: &str, config: BTreeMap<String, String>, wall_time_s: f64) -> Self {
        Self {
            command: command.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: crate::thread_cap(),
            config,
            wall_time_s,
            input_psnr: None,
            metrics: Vec::new(),
            trace_paths: Vec::new(),
            image_paths: Vec::new(),
            summary: BTreeMap::new(),
            files: Vec::new(),
        }
    }

    pub fn with_input_psnr(mut self, v: Option<f64>) -> Self {
        self.input_psnr = v;
        self
    }

    pub fn with_solver(mut self, m: SolverMetrics) -> Self {
        self.metrics.push(m);
        self
    }

    pub fn with_traces(mut self, paths: Vec<PathBuf>) -> Self {
        self.trace_paths = paths;
        self
    }

    pub fn with_images(mut self, paths: Vec<PathBuf>) -> Self {
        self.image_paths = paths;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest fields are serializable")
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes into one output directory and remembers every path it wrote.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn record(&mut self, path: PathBuf) -> PathBuf {
        if !self.written.contains(&path) {
            self.written.push(path.clone());
        }
        path
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(self.record(path))
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        Ok(self.record(path))
    }

    pub fn write_image(&mut self, name: &str, image: &DenseVector) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        save_gray(&path, image)?;
        Ok(self.record(path))
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes the manifest through a temporary file and a rename, so a
    /// reader never sees a partial manifest.
    pub fn finish(self, manifest: RunManifest) -> CliResult<PathBuf> {
        self.finish_as(manifest, MANIFEST_NAME)
    }

    pub fn finish_as(mut self, mut manifest: RunManifest, name: &str) -> CliResult<PathBuf> {
        let path = self.dir.join(name);
        self.record(path.clone());
        manifest.files = self.written.clone();
        let tmp = self.dir.join(format!(".{name}.tmp"));
        fs::write(&tmp, manifest.to_json()).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_itself_and_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ArtifactWriter::new(dir.path()).unwrap();
        w.write_text("a.csv", "x\n").unwrap();
        w.write_text("a.csv", "y\n").unwrap();
        w.write_image("b.pgm", &DenseVector::zeros(&[2, 3])).unwrap();
        let cfg = ExperimentConfig::default();
        let path = w.finish(RunManifest::new("test", &cfg, 0.0)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let files: Vec<&str> = v["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
        assert_eq!(files.len(), 3);
        assert!(files[2].ends_with(MANIFEST_NAME));
        let mut on_disk: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
        on_disk.sort();
        let mut listed: Vec<PathBuf> = files.iter().map(PathBuf::from).collect();
        listed.sort();
        assert_eq!(on_disk, listed);
        assert_eq!(v["config"]["task"], "complete");
    }
}
