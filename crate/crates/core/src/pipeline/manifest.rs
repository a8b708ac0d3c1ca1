use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::SplitSelector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn selected_by(self, sel: SplitSelector) -> bool {
        matches!(
            (sel, self),
            (SplitSelector::All, _)
                | (SplitSelector::Train, Split::Train)
                | (SplitSelector::Valid, Split::Valid)
                | (SplitSelector::Test, Split::Test)
        )
    }
}

/// One CSV row, with paths as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub utt_id: String,
    #[serde(default)]
    pub audio_path: String,
    #[serde(default)]
    pub feature_path: String,
    #[serde(default)]
    pub alignment_path: String,
    pub split: Split,
}

/// Corpus listing read from `utt_id,audio_path,feature_path,alignment_path,split`.
/// Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    base_dir: PathBuf,
}

fn non_empty(s: &str) -> Option<&str> {
    let s = s.trim();
    (!s.is_empty()).then_some(s)
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if r.utt_id.trim().is_empty() || r.utt_id.contains(['\t', '/', '\\']) {
                return Err(Error::data(format!("invalid utterance id `{}`", r.utt_id)));
            }
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::data(format!("duplicate utterance id `{}`", r.utt_id)));
            }
        }
        Ok(Self {
            rows,
            base_dir: base_dir.into(),
        })
    }

    /// Reads and validates a manifest; every referenced path must exist.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::io(path, std::io::Error::other(e.to_string())),
            _ => Error::Csv(e),
        })?;
        let headers = reader.headers()?.clone();
        let expected = ["utt_id", "audio_path", "feature_path", "alignment_path", "split"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::format(path, format!("header must be `{}`", expected.join(","))));
        }
        let rows = reader.deserialize().collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let manifest = Self::new(rows, base)?;
        for r in &manifest.rows {
            for p in [manifest.audio_path(r), manifest.feature_path(r), manifest.alignment_path(r)]
                .into_iter()
                .flatten()
            {
                if !p.exists() {
                    return Err(Error::data(format!("{}: missing file {}", r.utt_id, p.display())));
                }
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Directory that relative paths resolve against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    fn resolve(&self, p: &str) -> Option<PathBuf> {
        non_empty(p).map(|p| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                self.base_dir.join(p)
            }
        })
    }

    pub fn audio_path(&self, r: &ManifestRow) -> Option<PathBuf> {
        self.resolve(&r.audio_path)
    }

    pub fn feature_path(&self, r: &ManifestRow) -> Option<PathBuf> {
        self.resolve(&r.feature_path)
    }

    pub fn alignment_path(&self, r: &ManifestRow) -> Option<PathBuf> {
        self.resolve(&r.alignment_path)
    }

    /// Rows in the selected split, ordered by utterance id.
    pub fn select(&self, sel: SplitSelector) -> Vec<&ManifestRow> {
        let mut rows: Vec<&ManifestRow> = self.rows.iter().filter(|r| r.split.selected_by(sel)).collect();
        rows.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
        rows
    }
}
