//! Run manifests and report writing.
//!
//! Every report carries a [`ReportManifest`], which holds no timestamps, so
//! identical inputs give byte-identical reports. Wall-clock times go only
//! into the separate `<subcommand>.manifest.json`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::{DateTime, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl InputFile {
    pub fn hash(path: &Path) -> anyhow::Result<Self> {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(InputFile {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub subcommand: String,
    pub inputs: Vec<InputFile>,
    pub config_digest: String,
}

impl ReportManifest {
    pub fn new(subcommand: &str, inputs: &[&Path], config_digest: String) -> anyhow::Result<Self> {
        Ok(ReportManifest {
            tool: "shutdownlens",
            tool_version: TOOL_VERSION,
            subcommand: subcommand.to_string(),
            inputs: inputs.iter().map(|p| InputFile::hash(p)).collect::<anyhow::Result<_>>()?,
            config_digest,
        })
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("manifest serializes")))
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    #[serde(flatten)]
    pub report: &'a ReportManifest,
    pub manifest_digest: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: &'a [String],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

/// Collects report files and writes them together at the end of a command.
pub struct Outputs {
    dir: PathBuf,
    format: Format,
    manifest: ReportManifest,
    started_at: DateTime<Utc>,
    pending: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    manifest: &'a ReportManifest,
    manifest_digest: String,
    report: &'a T,
}

impl Outputs {
    pub fn new(dir: &Path, format: Format, manifest: ReportManifest, started_at: DateTime<Utc>) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            format,
            manifest,
            started_at,
            pending: Vec::new(),
        }
    }

    pub fn manifest(&self) -> &ReportManifest {
        &self.manifest
    }

    /// Queue a CSV report; the first line is a `# manifest <digest>` comment.
    pub fn csv(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut Vec<u8>) -> Result<(), Box<dyn std::error::Error + Send + Sync>>,
    ) -> anyhow::Result<()> {
        if self.format == Format::Json {
            return Ok(());
        }
        let mut buf = format!("# manifest {}\n", self.manifest.digest()).into_bytes();
        body(&mut buf).map_err(|e| anyhow::anyhow!("writing {name}: {e}"))?;
        self.pending.push((name.to_string(), buf));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> anyhow::Result<()> {
        if self.format == Format::Csv {
            return Ok(());
        }
        let wrapped = Wrapped {
            manifest: &self.manifest,
            manifest_digest: self.manifest.digest(),
            report,
        };
        let mut buf = serde_json::to_vec_pretty(&wrapped)?;
        buf.push(b'\n');
        self.pending.push((name.to_string(), buf));
        Ok(())
    }

    /// Queue a file written regardless of `--format`.
    pub fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.pending.push((name.to_string(), bytes));
    }

    /// Write every queued file plus the run manifest.
    pub fn finish(self) -> anyhow::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut written = Vec::new();
        let names: Vec<String> = self.pending.iter().map(|(n, _)| n.clone()).collect();
        for (name, bytes) in &self.pending {
            let path = self.dir.join(name);
            write_atomic(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
        }
        let run = RunManifest {
            report: &self.manifest,
            manifest_digest: self.manifest.digest(),
            started_at: self.started_at.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            outputs: &names,
        };
        let path = self.dir.join(format!("{}.manifest.json", self.manifest.subcommand));
        let mut buf = serde_json::to_vec_pretty(&run)?;
        buf.push(b'\n');
        write_atomic(&path, &buf)?;
        written.push(path);
        Ok(written)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}
