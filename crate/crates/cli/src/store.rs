//! Output directory with atomically written files and a hashed manifest.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    task: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    started_unix: u64,
    finished_unix: u64,
    jobs_total: usize,
    jobs_failed: usize,
    files: &'a BTreeMap<String, FileEntry>,
}

/// Files written under one output directory, keyed by relative path.
#[derive(Debug)]
pub struct ResultStore {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
    started: u64,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ResultStore {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
            started: unix_now(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        write_atomic(&self.path(rel), contents)?;
        self.files.insert(
            rel.to_string(),
            FileEntry {
                sha256: sha256_hex(contents),
                bytes: contents.len(),
            },
        );
        Ok(())
    }

    /// Writes a header line followed by rows, each terminated by a newline.
    pub fn write_csv(&mut self, rel: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut text = String::with_capacity(64 * (rows.len() + 1));
        text.push_str(header);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        self.write(rel, text.as_bytes())
    }

    pub fn files(&self) -> &BTreeMap<String, FileEntry> {
        &self.files
    }

    pub fn finish(&mut self, config: &RunConfig, task: &str, jobs_total: usize, jobs_failed: usize) -> Result<()> {
        let config_json = serde_json::to_string(config)?;
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            task,
            config_sha256: sha256_hex(config_json.as_bytes()),
            config,
            started_unix: self.started,
            finished_unix: unix_now(),
            jobs_total,
            jobs_failed,
            files: &self.files,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        write_atomic(&self.path(MANIFEST), text.as_bytes())
    }
}

/// Reads a CSV written by [`ResultStore::write_csv`] into header-keyed rows.
pub fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    Ok(lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            header
                .iter()
                .zip(l.split(','))
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_round_trip_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ResultStore::create(dir.path()).unwrap();
        store
            .write_csv("a.csv", "x,y", &["1,2".to_string(), "3,4".to_string()])
            .unwrap();
        let rows = read_csv(&store.path("a.csv")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1]["y"], "4");
        store.finish(&RunConfig::default(), "point", 1, 0).unwrap();
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(store.path(MANIFEST)).unwrap()).unwrap();
        assert_eq!(
            manifest["files"]["a.csv"]["sha256"],
            sha256_hex(b"x,y\n1,2\n3,4\n")
        );
        let leftovers: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
            .collect();
        assert!(leftovers.is_empty());
    }
}
