use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one pipeline command: what ran, with which seeds, and the
/// digests of everything it read and wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Digests of a file, or of every file directly inside a directory (the
/// manifest itself excluded), keyed by path.
fn digests(path: &Path, into: &mut BTreeMap<String, String>) -> io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<io::Result<_>>()?;
        entries.sort();
        for entry in entries {
            if entry.is_file() && entry.file_name().is_some_and(|n| n != MANIFEST_NAME) {
                into.insert(entry.display().to_string(), sha256_file(&entry)?);
            }
        }
    } else {
        into.insert(path.display().to_string(), sha256_file(path)?);
    }
    Ok(())
}

impl RunManifest {
    pub fn start() -> Self {
        RunManifest {
            tool: env!("CARGO_BIN_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_owned(), value);
    }

    pub fn input(&mut self, path: &Path) -> io::Result<()> {
        digests(path, &mut self.inputs)
    }

    /// Digests `output` and writes the manifest next to it: inside it when
    /// it is a directory, as `<file>.manifest.json` otherwise.
    pub fn finish(mut self, output: &Path) -> io::Result<PathBuf> {
        digests(output, &mut self.outputs)?;
        self.finished_unix_ms = now_ms();
        let target = manifest_path(output);
        let json = serde_json::to_string_pretty(&self).map_err(io::Error::from)?;
        fs::write(&target, json + "\n")?;
        Ok(target)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        output.join(MANIFEST_NAME)
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_and_directory_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("out.txt");
        fs::write(&file, "abc").unwrap();
        let mut m = RunManifest::start();
        m.seed("seed", 4);
        m.input(&file).unwrap();
        let written = m.finish(&file).unwrap();
        assert_eq!(written, dir.path().join("out.txt.manifest.json"));
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&written).unwrap()).unwrap();
        let key = file.display().to_string();
        assert_eq!(
            v["outputs"][&key],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(v["seeds"]["seed"], 4);

        let sub = dir.path().join("ckpt");
        fs::create_dir(&sub).unwrap();
        fs::write(sub.join("a"), "").unwrap();
        let written = RunManifest::start().finish(&sub).unwrap();
        assert_eq!(written, sub.join(MANIFEST_NAME));
        let again = RunManifest::start().finish(&sub).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(again).unwrap()).unwrap();
        assert_eq!(v["outputs"].as_object().unwrap().len(), 1);
    }
}
