//! Checksummed dataset acquisition into a local cache.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SubsetName;
use crate::imageio::is_image;

const BUNDLED: &str = include_str!("../data/u45_manifest.json");

/// Environment variable overriding the cache root.
pub const CACHE_ENV: &str = "AQUAFUSE_CACHE";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Installed file name.
    pub file: String,
    /// Path relative to `base_url`.
    pub path: String,
    pub subset: SubsetName,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Human-facing home of the dataset.
    pub source: String,
    pub base_url: String,
    pub expected_count: usize,
    pub entries: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn default_cache_root() -> PathBuf {
    if let Some(v) = std::env::var_os(CACHE_ENV) {
        return PathBuf::from(v);
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".cache").join("aquafuse"),
        None => PathBuf::from(".aquafuse-cache"),
    }
}

impl DatasetManifest {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled manifest is valid JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        m.validate()?;
        Ok(m)
    }

    /// Unique names and well-formed digests.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.file.as_str()) {
                bail!("manifest lists {} twice", e.file);
            }
            if e.file.contains(['/', '\\']) || e.file.starts_with('.') {
                bail!("manifest file name {:?} is not a plain name", e.file);
            }
            if e.sha256.len() != 64 || !e.sha256.bytes().all(|b| b.is_ascii_hexdigit()) {
                bail!("manifest digest for {} is not a sha256 hex string", e.file);
            }
        }
        Ok(())
    }

    /// True when every expected image has a pinned digest.
    pub fn is_pinned(&self) -> bool {
        self.entries.len() == self.expected_count
    }

    pub fn subset_of(&self, file: &str) -> Option<SubsetName> {
        self.entries.iter().find(|e| e.file == file).map(|e| e.subset)
    }

    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut m = BTreeMap::new();
        for e in &self.entries {
            *m.entry(e.subset.dir()).or_default() += 1;
        }
        m
    }

    pub fn install_dir(&self, cache_root: &Path) -> PathBuf {
        cache_root.join(self.name.to_lowercase())
    }

    /// Builds a manifest from a local copy laid out as
    /// `<dir>/{green,blue,haze}/<file>`, keeping this manifest's source.
    pub fn pin_from_dir(&self, dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for subset in SubsetName::ALL {
            let sub = dir.join(subset.dir());
            if !sub.is_dir() {
                continue;
            }
            let mut files: Vec<PathBuf> = std::fs::read_dir(&sub)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|p| p.is_file() && is_image(p));
            files.sort();
            for p in files {
                let file = p.file_name().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad file name {}", p.display()))?;
                entries.push(ManifestEntry {
                    file: file.to_string(),
                    path: format!("{}/{file}", subset.dir()),
                    subset,
                    sha256: sha256_hex(&std::fs::read(&p)?),
                });
            }
        }
        let pinned = Self { entries, ..self.clone() };
        pinned.validate()?;
        Ok(pinned)
    }
}

/// Source of remote bytes.
pub trait Fetch {
    fn get(&self, url: &str) -> Result<Vec<u8>>;
}

pub struct HttpFetcher {
    agent: ureq::Agent,
}

impl Default for HttpFetcher {
    fn default() -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs(60)).build(),
        }
    }
}

impl Fetch for HttpFetcher {
    fn get(&self, url: &str) -> Result<Vec<u8>> {
        let resp = self.agent.get(url).call().map_err(|e| anyhow!("{url}: {e}"))?;
        let mut buf = Vec::new();
        resp.into_reader().take(256 << 20).read_to_end(&mut buf)?;
        Ok(buf)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quarantined {
    pub file: String,
    pub expected: String,
    pub actual: String,
    pub path: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FetchReport {
    /// Already present with a matching digest.
    pub cached: Vec<String>,
    pub downloaded: Vec<String>,
    pub quarantined: Vec<Quarantined>,
    /// Files that could not be obtained, with the reason.
    pub missing: Vec<(String, String)>,
}

impl FetchReport {
    pub fn is_complete(&self) -> bool {
        self.quarantined.is_empty() && self.missing.is_empty()
    }
}

/// Installs every manifest entry under `<cache>/<name>/<subset>/<file>`.
///
/// Files already in place with the right digest are not fetched again.
/// Downloads whose digest does not match are moved to
/// `<cache>/quarantine/` and reported.
pub fn fetch_dataset(manifest: &DatasetManifest, cache_root: &Path, fetcher: &dyn Fetch) -> Result<FetchReport> {
    manifest.validate()?;
    if !manifest.is_pinned() {
        bail!(
            "manifest for {} pins {} of {} images; pin a local copy with --pin-from <dir> and pass it with --manifest",
            manifest.name,
            manifest.entries.len(),
            manifest.expected_count
        );
    }
    let root = manifest.install_dir(cache_root);
    let quarantine = cache_root.join("quarantine");
    let mut report = FetchReport::default();
    for e in &manifest.entries {
        let dest = root.join(e.subset.dir()).join(&e.file);
        if let Ok(bytes) = std::fs::read(&dest) {
            if sha256_hex(&bytes) == e.sha256 {
                report.cached.push(e.file.clone());
                continue;
            }
        }
        let url = format!("{}/{}", manifest.base_url.trim_end_matches('/'), e.path);
        let bytes = match fetcher.get(&url) {
            Ok(b) => b,
            Err(err) => {
                report.missing.push((e.file.clone(), err.to_string()));
                continue;
            }
        };
        let actual = sha256_hex(&bytes);
        if actual != e.sha256 {
            std::fs::create_dir_all(&quarantine)?;
            let path = quarantine.join(&e.file);
            std::fs::write(&path, &bytes)?;
            std::fs::remove_file(&dest).ok();
            report.quarantined.push(Quarantined {
                file: e.file.clone(),
                expected: e.sha256.clone(),
                actual,
                path,
            });
            continue;
        }
        std::fs::create_dir_all(dest.parent().expect("dest has a parent"))?;
        let tmp = dest.with_extension("part");
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &dest)?;
        report.downloaded.push(e.file.clone());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_manifest_is_well_formed() {
        let m = DatasetManifest::bundled();
        m.validate().unwrap();
        assert_eq!(m.expected_count, 45);
        assert!(m.entries.len() <= 45);
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn duplicate_and_malformed_entries_are_rejected() {
        let e = ManifestEntry {
            file: "a.png".into(),
            path: "green/a.png".into(),
            subset: SubsetName::Green,
            sha256: "0".repeat(64),
        };
        let mut m = DatasetManifest {
            name: "t".into(),
            source: String::new(),
            base_url: String::new(),
            expected_count: 2,
            entries: vec![e.clone(), e.clone()],
        };
        assert!(m.validate().is_err());
        m.entries[1].file = "../b.png".into();
        assert!(m.validate().is_err());
        m.entries[1].file = "b.png".into();
        m.entries[1].sha256 = "xyz".into();
        assert!(m.validate().is_err());
    }

    #[test]
    fn unpinned_manifest_refuses_to_fetch() {
        struct Never;
        impl Fetch for Never {
            fn get(&self, _: &str) -> Result<Vec<u8>> {
                panic!("no request expected")
            }
        }
        let mut m = DatasetManifest::bundled();
        m.entries.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(fetch_dataset(&m, dir.path(), &Never).is_err());
    }
}
