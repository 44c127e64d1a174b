//! Output directory bookkeeping: artifacts, checksum index, manifest.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use msqg_core::certificates::{BinnedSpectrum, CertificateReport};
use msqg_core::SpectralScalarField;

use crate::config::RunConfig;
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";
pub const CHECKSUMS: &str = "checksums.sha256";

pub struct OutputDir {
    root: PathBuf,
    artifacts: BTreeSet<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output {
        path: path.to_path_buf(),
        source,
    }
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            artifacts: BTreeSet::new(),
        })
    }

    /// Opens `rel` for writing and records it in the checksum index.
    pub fn create_file(&mut self, rel: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let file = File::create(&path).map_err(io_err(&path))?;
        self.artifacts.insert(rel.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<(), CliError> {
        let mut w = self.create_file(rel)?;
        let path = self.root.join(rel);
        w.write_all(text.as_bytes()).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("report serializes");
        self.write_text(rel, &(text + "\n"))
    }

    pub fn write_rows<T: Serialize>(&mut self, rel: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.root.join(rel);
        let mut wr = csv::Writer::from_writer(self.create_file(rel)?);
        for row in rows {
            wr.serialize(row)
                .map_err(|e| CliError::Output {
                    path: path.clone(),
                    source: std::io::Error::other(e),
                })?;
        }
        wr.flush().map_err(io_err(&path))
    }

    pub fn write_field(&mut self, rel: &str, field: &SpectralScalarField) -> Result<(), CliError> {
        let path = self.root.join(rel);
        let mut w = self.create_file(rel)?;
        field.write_msqg(&mut w).map_err(io_err(&path))?;
        w.flush().map_err(io_err(&path))
    }

    pub fn write_spectrum(&mut self, rel: &str, spectrum: &BinnedSpectrum) -> Result<(), CliError> {
        let w = self.create_file(rel)?;
        spectrum.write_csv(w)?;
        Ok(())
    }

    /// Report JSON plus one CSV per attached spectrum, under `certificates/`.
    pub fn write_report(&mut self, report: &CertificateReport) -> Result<(), CliError> {
        self.write_json(&format!("certificates/{}.json", report.name), report)?;
        for (key, spectrum) in &report.spectra {
            self.write_spectrum(&format!("certificates/{}_{}.csv", report.name, key), spectrum)?;
        }
        Ok(())
    }

    /// `sha256  path` per artifact, sorted by path.
    pub fn checksum_index(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for rel in &self.artifacts {
            let path = self.root.join(rel);
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let digest = Sha256::digest(&bytes);
            let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
            out.push_str(&format!("{hex}  {rel}\n"));
        }
        Ok(out)
    }

    /// Writes the checksum index and the manifest; both stay out of the index.
    pub fn finish(mut self, mut manifest: RunManifest) -> Result<(), CliError> {
        let index = self.checksum_index()?;
        manifest.artifacts = self.artifacts.iter().cloned().collect();
        let path = self.root.join(CHECKSUMS);
        std::fs::write(&path, index).map_err(io_err(&path))?;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
        self.artifacts.clear();
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

/// Everything needed to replay a run, plus how long it took.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub version: String,
    pub workers: usize,
    pub outcome: String,
    pub exit_code: u8,
    pub wall_clock_seconds: f64,
    pub timings: Vec<Timing>,
    pub artifacts: Vec<String>,
    pub config: RunConfig,
}
