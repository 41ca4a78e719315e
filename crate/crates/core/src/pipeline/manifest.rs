//! Dataset manifests.
//!
//! A manifest is a TOML file with one `[[protein]]` table per protein:
//!
//! ```toml
//! [[protein]]
//! id = "p0001"
//! seq = "emb/p0001.seq.emb"      # MERAEMB1, one row per residue
//! text = "emb/p0001.text.emb"    # optional, one row per token
//! labels = "0010000100"          # or labels_file = "p0001.labels"
//! split = "train"                # train | valid | test
//! cluster = "fam03"              # optional
//!
//! [protein.extra]                # optional named residue blocks
//! peptide = "emb/p0001.pep.emb"
//! ```
//!
//! Relative paths resolve against the manifest's directory. A labels file
//! holds `0`/`1` characters; whitespace is ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::embfile::load_embedding;
use crate::error::{MeraError, Result};
use crate::model::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = MeraError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(MeraError::Parameter(format!(
                "unknown split `{other}` (expected train, valid or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub seq: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels_file: Option<PathBuf>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(default)]
    protein: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub base_dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

/// Parses a `0`/`1` label string, ignoring whitespace.
pub fn parse_labels(text: &str, id: &str) -> Result<Vec<u8>> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(MeraError::Ingestion(format!(
                "protein `{id}`: label character `{other}` is not 0 or 1"
            ))),
        })
        .collect()
}

pub fn format_labels(labels: &[u8]) -> String {
    labels
        .iter()
        .map(|&l| if l == 1 { '1' } else { '0' })
        .collect()
}

impl Manifest {
    /// Parses manifest text and checks ids and label sources; files are not
    /// touched.
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Manifest> {
        let file: ManifestFile = toml::from_str(text).map_err(|e| {
            MeraError::format(
                e.span().map_or(0, |s| s.start),
                format!("manifest: {}", e.message()),
            )
        })?;
        let mut seen = HashSet::new();
        for e in &file.protein {
            if e.id.is_empty() {
                return Err(MeraError::Ingestion(
                    "manifest entry with an empty id".into(),
                ));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(MeraError::Ingestion(format!(
                    "duplicate protein id `{}`",
                    e.id
                )));
            }
            match (&e.labels, &e.labels_file) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    return Err(MeraError::Ingestion(format!(
                        "protein `{}` needs exactly one of labels / labels_file",
                        e.id
                    )))
                }
            }
            if let Some(l) = &e.labels {
                parse_labels(l, &e.id)?;
            }
        }
        Ok(Manifest {
            base_dir: base_dir.into(),
            entries: file.protein,
        })
    }

    pub fn load(path: &Path) -> Result<Manifest> {
        let text = std::fs::read_to_string(path).map_err(|e| MeraError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&text, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&ManifestFile {
            protein: self.entries.clone(),
        })
        .expect("manifest serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut out: BTreeMap<Split, usize> = Split::ALL.iter().map(|&s| (s, 0)).collect();
        for e in &self.entries {
            *out.entry(e.split).or_default() += 1;
        }
        out
    }

    pub fn ids(&self, split: Split) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| e.id.as_str())
            .collect()
    }

    /// Reads one entry's files into a [`Sample`].
    pub fn load_entry(&self, e: &ManifestEntry) -> Result<Sample> {
        let seq = load_embedding(&self.resolve(&e.seq))?;
        let labels = match (&e.labels, &e.labels_file) {
            (Some(l), _) => parse_labels(l, &e.id)?,
            (None, Some(f)) => {
                let path = self.resolve(f);
                let text =
                    std::fs::read_to_string(&path).map_err(|err| MeraError::io(&path, err))?;
                parse_labels(&text, &e.id)?
            }
            (None, None) => unreachable!("checked at parse time"),
        };
        if labels.len() != seq.rows() {
            return Err(MeraError::Ingestion(format!(
                "protein `{}`: {} labels for {} embedding rows",
                e.id,
                labels.len(),
                seq.rows()
            )));
        }
        let mut sample = Sample::new(e.id.clone(), seq, labels)?;
        if let Some(t) = &e.text {
            sample.text = Some(load_embedding(&self.resolve(t))?);
        }
        sample.cluster = e.cluster.clone();
        for (name, path) in &e.extra {
            let block = load_embedding(&self.resolve(path))?;
            if block.cols() != sample.seq.cols() {
                return Err(MeraError::Dimension(format!(
                    "protein `{}`: extra block `{name}` has width {}, embeddings have {}",
                    e.id,
                    block.cols(),
                    sample.seq.cols()
                )));
            }
            sample.extras.insert(name.clone(), block);
        }
        Ok(sample)
    }

    /// Loads every protein of `split` in manifest order.
    pub fn load_split(&self, split: Split) -> Result<Vec<Sample>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| self.load_entry(e))
            .collect()
    }

    pub fn load_all(&self) -> Result<Vec<(Split, Sample)>> {
        self.entries
            .iter()
            .map(|e| Ok((e.split, self.load_entry(e)?)))
            .collect()
    }
}
