//! Paired clean/noisy utterances and the on-disk manifest.
//!
//! A corpus directory holds `clean/<id>.wav` and either `noisy/<id>.wav` or
//! `noisy/<noise>/<id>.wav`, one subdirectory per noise type. Corpora
//! already split into `train/`, `val/` and `test/` subdirectories are also
//! accepted; otherwise each clean id is assigned to a split by its hash.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::snr;
use crate::signal::{highpass_80, normalize_spl, read_wav, Calibration, Waveform, PRESENTATION_LEVEL_DB};

pub const MANIFEST_VERSION: u32 = 1;
/// Largest clean/noisy length difference accepted at ingest, in samples.
pub const LENGTH_TOLERANCE: usize = 1024;
/// Noise tag for corpora without per-noise subdirectories.
pub const UNSPECIFIED_NOISE: &str = "unspecified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    /// 80/10/10 assignment from a stable hash of the clean id.
    pub fn from_hash(id: &str) -> Split {
        let h = Sha256::digest(id.as_bytes());
        let v = u16::from_be_bytes([h[0], h[1]]) as u32 * 100 / 65_536;
        match v {
            0..80 => Split::Train,
            80..90 => Split::Val,
            _ => Split::Test,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split `{s}`"))),
        }
    }
}

/// Which signal of a pair is fed to the hearing aid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Clean,
    #[default]
    Noisy,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Clean => "clean",
            Source::Noisy => "noisy",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Source::Clean),
            "noisy" => Ok(Source::Noisy),
            _ => Err(Error::Config(format!("unknown source `{s}` (expected clean or noisy)"))),
        }
    }
}

/// A prepared pair: both signals high-passed and at the presentation level.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub noise: String,
    pub split: Split,
}

impl Utterance {
    /// Prepares a raw pair. The noisy signal is cropped or padded to the
    /// clean length.
    pub fn prepare(
        id: impl Into<String>,
        clean: &Waveform,
        noisy: &Waveform,
        noise: impl Into<String>,
        split: Split,
        cal: &Calibration,
    ) -> Result<Self> {
        let noisy = noisy.fit_length(clean.len());
        Ok(Self {
            id: id.into(),
            clean: prepare_signal(clean, cal)?,
            noisy: prepare_signal(&noisy, cal)?,
            noise: noise.into(),
            split,
        })
    }

    pub fn input(&self, source: Source) -> &Waveform {
        match source {
            Source::Clean => &self.clean,
            Source::Noisy => &self.noisy,
        }
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }
}

/// 80 Hz high-pass, then scaling to the presentation level.
pub fn prepare_signal(w: &Waveform, cal: &Calibration) -> Result<Waveform> {
    normalize_spl(&highpass_80(w), PRESENTATION_LEVEL_DB, cal)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn new(utterances: Vec<Utterance>) -> Self {
        Self { utterances }
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn split(&self, split: Split) -> Dataset {
        self.filter(|u| u.split == split)
    }

    pub fn with_noise(&self, noise: &str) -> Dataset {
        self.filter(|u| u.noise == noise)
    }

    pub fn filter(&self, keep: impl Fn(&Utterance) -> bool) -> Dataset {
        Dataset::new(self.utterances.iter().filter(|u| keep(u)).cloned().collect())
    }

    pub fn noise_types(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.utterances.iter().map(|u| u.noise.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Hash of the utterance ids, in order.
    pub fn id_hash(&self) -> String {
        let mut h = Sha256::new();
        for u in &self.utterances {
            h.update(u.id.as_bytes());
            h.update(b"\n");
        }
        hex(&h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest root.
    pub clean: PathBuf,
    pub noisy: PathBuf,
    pub noise: String,
    pub snr_db: f64,
    pub split: Split,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub root: PathBuf,
    pub hash: String,
    pub entries: Vec<ManifestEntry>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn entries_hash(entries: &[ManifestEntry]) -> String {
    let mut h = Sha256::new();
    for e in entries {
        h.update(
            format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                e.id,
                e.clean.display(),
                e.noisy.display(),
                e.noise,
                e.split,
                e.samples
            )
            .as_bytes(),
        );
    }
    hex(&h.finalize())
}

fn wav_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_wav = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if path.is_file() && is_wav {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    out.sort();
    Ok(out)
}

fn relative(path: &Path, root: &Path) -> PathBuf {
    path.strip_prefix(root).unwrap_or(path).to_path_buf()
}

/// Scans one `clean/` + `noisy/` pair of directories.
fn ingest_pair(root: &Path, base: &Path, fixed_split: Option<Split>, entries: &mut Vec<ManifestEntry>) -> Result<()> {
    let clean = wav_stems(&base.join("clean"))?;
    let noisy_dir = base.join("noisy");
    let mut groups: Vec<(String, BTreeMap<String, PathBuf>)> = Vec::new();
    let flat = wav_stems(&noisy_dir)?;
    if !flat.is_empty() {
        groups.push((UNSPECIFIED_NOISE.to_string(), flat));
    }
    for dir in subdirs(&noisy_dir)? {
        let tag = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        groups.push((tag, wav_stems(&dir)?));
    }
    let mut orphans = Vec::new();
    for (noise, files) in &groups {
        for (stem, noisy_path) in files {
            let Some(clean_path) = clean.get(stem) else {
                orphans.push(relative(noisy_path, root).display().to_string());
                continue;
            };
            let c = read_wav(clean_path).map_err(|e| with_path(e, clean_path))?;
            let n = read_wav(noisy_path).map_err(|e| with_path(e, noisy_path))?;
            if c.len().abs_diff(n.len()) > LENGTH_TOLERANCE {
                return Err(Error::Dataset(format!(
                    "`{}` has {} samples but its clean file has {}",
                    relative(noisy_path, root).display(),
                    n.len(),
                    c.len()
                )));
            }
            let id = if noise == UNSPECIFIED_NOISE {
                stem.clone()
            } else {
                format!("{noise}/{stem}")
            };
            let split = fixed_split.unwrap_or_else(|| Split::from_hash(stem));
            entries.push(ManifestEntry {
                id,
                clean: relative(clean_path, root),
                noisy: relative(noisy_path, root),
                noise: noise.clone(),
                snr_db: snr(&c, &n.fit_length(c.len()))?,
                split,
                samples: c.len(),
            });
        }
    }
    if !orphans.is_empty() {
        return Err(Error::OrphanFiles(orphans));
    }
    Ok(())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::Dataset(format!("{}: {other}", path.display())),
    }
}

/// Builds and validates a manifest for the corpus under `root`.
pub fn ingest(root: impl AsRef<Path>) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let mut entries = Vec::new();
    if root.join("clean").is_dir() {
        ingest_pair(root, root, None, &mut entries)?;
    } else {
        for split in Split::ALL {
            let base = root.join(split.to_string());
            if base.join("clean").is_dir() {
                ingest_pair(root, &base, Some(split), &mut entries)?;
            }
        }
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    entries.sort_by(|a, b| (a.split, &a.id).cmp(&(b.split, &b.id)));
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        root: root.to_path_buf(),
        hash: entries_hash(&entries),
        entries,
    })
}

impl DatasetManifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: DatasetManifest = toml::from_str(text).map_err(|e| Error::Dataset(e.message().to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Dataset(format!(
                "manifest version {} is not supported (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        if entries_hash(&m.entries) != m.hash {
            return Err(Error::Dataset("manifest hash does not match its entries".into()));
        }
        Ok(m)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Reads and prepares the entries accepted by `keep`.
    pub fn load_dataset(&self, cal: &Calibration, keep: impl Fn(&ManifestEntry) -> bool) -> Result<Dataset> {
        let mut out = Vec::new();
        for e in self.entries.iter().filter(|e| keep(e)) {
            let clean = read_wav(self.root.join(&e.clean))?;
            let noisy = read_wav(self.root.join(&e.noisy))?;
            out.push(Utterance::prepare(&e.id, &clean, &noisy, &e.noise, e.split, cal)?);
        }
        Ok(Dataset::new(out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_split_is_stable_and_roughly_80_10_10() {
        let mut counts = BTreeMap::new();
        for i in 0..2000 {
            *counts.entry(Split::from_hash(&format!("p{i:04}"))).or_insert(0) += 1;
        }
        assert!((1500..1700).contains(&counts[&Split::Train]));
        assert!((120..280).contains(&counts[&Split::Val]));
        assert!((120..280).contains(&counts[&Split::Test]));
        assert_eq!(Split::from_hash("abc"), Split::from_hash("abc"));
    }

    #[test]
    fn prepare_hits_the_presentation_level() {
        let cal = Calibration::default();
        let c = crate::synth::speech(0.5, 1);
        let n = crate::synth::mix(&c, &crate::synth::white_noise(c.len(), 2), 0.0).unwrap();
        let u = Utterance::prepare("x", &c, &n, "white", Split::Test, &cal).unwrap();
        for w in [&u.clean, &u.noisy] {
            let spl = crate::signal::measure_spl(w, &cal).unwrap();
            assert!((spl - PRESENTATION_LEVEL_DB).abs() < 1e-9);
        }
    }

    #[test]
    fn manifest_hash_is_checked() {
        let entries = vec![ManifestEntry {
            id: "a".into(),
            clean: "clean/a.wav".into(),
            noisy: "noisy/a.wav".into(),
            noise: UNSPECIFIED_NOISE.into(),
            snr_db: 5.0,
            split: Split::Train,
            samples: 100,
        }];
        let m = DatasetManifest {
            version: MANIFEST_VERSION,
            root: "/tmp".into(),
            hash: entries_hash(&entries),
            entries,
        };
        assert_eq!(DatasetManifest::parse(&m.to_toml()).unwrap(), m);
        let mut bad = m.clone();
        bad.entries[0].samples = 101;
        assert!(DatasetManifest::parse(&bad.to_toml()).is_err());
    }

    #[test]
    fn dataset_filters() {
        let cal = Calibration::default();
        let c = crate::synth::speech(0.3, 1);
        let mk = |id: &str, noise: &str, split| Utterance::prepare(id, &c, &c, noise, split, &cal).unwrap();
        let d = Dataset::new(vec![
            mk("a", "x", Split::Train),
            mk("b", "y", Split::Test),
            mk("c", "x", Split::Test),
        ]);
        assert_eq!(d.split(Split::Test).len(), 2);
        assert_eq!(d.with_noise("x").len(), 2);
        assert_eq!(d.noise_types(), vec!["x".to_string(), "y".to_string()]);
        assert_ne!(d.id_hash(), d.split(Split::Test).id_hash());
    }
}
