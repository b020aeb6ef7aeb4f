//! Artifact directory layout and the manifest of produced files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use funnel_core::terrain::PolicyKind;

use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone)]
pub struct ArtifactDir {
    pub root: PathBuf,
}

impl ArtifactDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ArtifactDir { root: root.into() }
    }

    pub fn policy(&self, kind: PolicyKind) -> PathBuf {
        self.root.join("policies").join(format!("{}.policy", kind.name()))
    }

    pub fn training_log(&self, kind: PolicyKind) -> PathBuf {
        self.root.join("policies").join(format!("{}.train.csv", kind.name()))
    }

    pub fn dataset(&self, kind: PolicyKind) -> PathBuf {
        self.root.join("datasets").join(format!("{}.switchds", kind.name()))
    }

    pub fn estimator(&self, kind: PolicyKind) -> PathBuf {
        self.root.join("estimators").join(format!("{}.estimator", kind.name()))
    }

    pub fn lookup(&self) -> PathBuf {
        self.root.join("lookups").join("lookup.table")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn track(&self, name: &str) -> PathBuf {
        self.root.join("tracks").join(name)
    }

    pub fn require(&self, path: &Path) -> Result<(), CliError> {
        if path.is_file() {
            Ok(())
        } else {
            Err(CliError::Missing(path.to_path_buf()))
        }
    }

    /// Write `contents` to `path` and record it in the manifest.
    pub fn write(&self, path: &Path, contents: &str, provenance: &Provenance) -> Result<(), CliError> {
        write_file(path, contents)?;
        let rel = path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().into_owned();
        let mut m = Manifest::load(&self.root.join(MANIFEST))?;
        m.entries.insert(
            rel,
            ManifestEntry {
                sha256: sha256_hex(contents.as_bytes()),
                config_hash: provenance.config_hash.clone(),
                seed: provenance.seed,
                command: provenance.command.clone(),
            },
        );
        write_file(&self.root.join(MANIFEST), &m.to_text())
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// What produced an artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub sha256: String,
    pub config_hash: String,
    pub seed: u64,
    pub command: String,
}

/// Produced files keyed by path relative to the artifact directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest, CliError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Manifest::from_text(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(CliError::Other(format!("{}: {e}", path.display()))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("manifest v1\n");
        for (path, e) in &self.entries {
            let _ = writeln!(
                s,
                "{} {} config={} seed={} command={}",
                e.sha256, path, e.config_hash, e.seed, e.command
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Manifest, CliError> {
        let bad = |l: &str| CliError::Other(format!("corrupt manifest line {l:?}"));
        let mut lines = text.lines();
        if lines.next() != Some("manifest v1") {
            return Err(CliError::Other("manifest has an unknown version".into()));
        }
        let mut entries = BTreeMap::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let parts: Vec<&str> = line.split(' ').collect();
            let [sha, path, cfg, seed, cmd] = parts[..] else {
                return Err(bad(line));
            };
            let field = |p: &str, k: &str| p.strip_prefix(k).map(str::to_string).ok_or_else(|| bad(line));
            entries.insert(
                path.to_string(),
                ManifestEntry {
                    sha256: sha.to_string(),
                    config_hash: field(cfg, "config=")?,
                    seed: field(seed, "seed=")?.parse().map_err(|_| bad(line))?,
                    command: field(cmd, "command=")?,
                },
            );
        }
        Ok(Manifest { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip_and_update() {
        let dir = tempfile::tempdir().unwrap();
        let a = ArtifactDir::new(dir.path());
        let p = Provenance {
            config_hash: "abcd".into(),
            seed: 3,
            command: "gen-track".into(),
        };
        a.write(&a.track("t1.track"), "one", &p).unwrap();
        a.write(&a.track("t2.track"), "two", &p).unwrap();
        a.write(&a.track("t1.track"), "uno", &p).unwrap();
        let m = Manifest::load(&dir.path().join(MANIFEST)).unwrap();
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries["tracks/t1.track"].sha256, sha256_hex(b"uno"));
        assert_eq!(Manifest::from_text(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn missing_prerequisite_names_the_file() {
        let a = ArtifactDir::new("/nonexistent/run");
        let err = a.require(&a.estimator(PolicyKind::Gap)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("estimators/gap.estimator"));
    }
}
