//! Caption manifests: one JSON `CaptionRecord` per line in `<split>.jsonl`,
//! plus a sibling `<split>.images.json` mapping image ids to feature files.
//! Feature paths are relative to the manifest's directory.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::upos::Upos;
use crate::error::{Result, VgsError};

pub const DEFAULT_HOP_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenSpan {
    pub surface: String,
    pub start_s: f64,
    pub end_s: f64,
    pub upos: Upos,
}

impl TokenSpan {
    pub fn contains(&self, time_s: f64) -> bool {
        self.start_s <= time_s && time_s < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub image_id: String,
    pub language: String,
    pub feature_ref: String,
    pub n_frames: usize,
    pub tokens: Vec<TokenSpan>,
}

impl CaptionRecord {
    /// Checks span ordering and frame coverage.
    pub fn validate(&self, hop_ms: f64) -> Result<()> {
        let fail = |reason: String| VgsError::Caption {
            caption_id: self.caption_id.clone(),
            reason,
        };
        let mut prev_end = 0.0f64;
        for (k, tok) in self.tokens.iter().enumerate() {
            if !(tok.start_s.is_finite() && tok.end_s.is_finite())
                || tok.start_s < 0.0
                || tok.start_s >= tok.end_s
            {
                return Err(fail(format!(
                    "token {k} ({:?}) has invalid span [{}, {})",
                    tok.surface, tok.start_s, tok.end_s
                )));
            }
            if k > 0 && tok.start_s < prev_end {
                return Err(fail(format!(
                    "token {k} ({:?}) starts at {} before the previous token ends at {prev_end}",
                    tok.surface, tok.start_s
                )));
            }
            prev_end = tok.end_s;
        }
        if self.n_frames == 0 {
            return Err(fail("n_frames must be positive".into()));
        }
        let hop = hop_ms / 1000.0;
        let covered = self.n_frames as f64 * hop;
        if prev_end > covered + hop + 1e-9 {
            return Err(fail(format!(
                "tokens end at {prev_end} s but {} frames cover only {covered} s",
                self.n_frames
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub split: String,
    pub records: Vec<CaptionRecord>,
    /// image id → feature path relative to `base_dir`.
    pub images: BTreeMap<String, String>,
    pub base_dir: PathBuf,
}

/// `<dir>/<split>.images.json` next to `<dir>/<split>.jsonl`.
pub fn images_index_path(manifest_path: &Path) -> PathBuf {
    let stem = manifest_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    manifest_path.with_file_name(format!("{stem}.images.json"))
}

impl Manifest {
    pub fn new(split: impl Into<String>, base_dir: impl Into<PathBuf>) -> Self {
        Manifest {
            split: split.into(),
            records: Vec::new(),
            images: BTreeMap::new(),
            base_dir: base_dir.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self, hop_ms: f64) -> Result<()> {
        let mut seen = HashSet::new();
        for rec in &self.records {
            if !seen.insert(rec.caption_id.as_str()) {
                return Err(VgsError::Caption {
                    caption_id: rec.caption_id.clone(),
                    reason: "duplicate caption_id".into(),
                });
            }
            if !self.images.contains_key(&rec.image_id) {
                return Err(VgsError::Caption {
                    caption_id: rec.caption_id.clone(),
                    reason: format!("image_id {:?} not in images index", rec.image_id),
                });
            }
            rec.validate(hop_ms)?;
        }
        Ok(())
    }

    pub fn feature_path(&self, feature_ref: &str) -> PathBuf {
        self.base_dir.join(feature_ref)
    }

    pub fn image_path(&self, image_id: &str) -> Option<PathBuf> {
        self.images.get(image_id).map(|r| self.base_dir.join(r))
    }

    /// Image ids in order of first use by a caption.
    pub fn image_order(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.records
            .iter()
            .filter(|r| seen.insert(r.image_id.as_str()))
            .map(|r| r.image_id.clone())
            .collect()
    }

    /// Restricts the manifest to the given images (and their captions).
    pub fn restrict_images(&self, keep: &BTreeSet<String>, split: &str) -> Manifest {
        Manifest {
            split: split.to_string(),
            records: self
                .records
                .iter()
                .filter(|r| keep.contains(&r.image_id))
                .cloned()
                .collect(),
            images: self
                .images
                .iter()
                .filter(|(k, _)| keep.contains(*k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// First or second half of the images (by sorted id) with their captions.
    pub fn half(&self, second: bool) -> Manifest {
        let ids: Vec<&String> = self.images.keys().collect();
        let mid = ids.len().div_ceil(2);
        let chosen = if second { &ids[mid..] } else { &ids[..mid] };
        let keep: BTreeSet<String> = chosen.iter().map(|s| (*s).clone()).collect();
        let name = format!("{}-{}", self.split, if second { "second" } else { "first" });
        self.restrict_images(&keep, &name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| VgsError::io(parent, e))?;
        }
        let mut buf = Vec::new();
        for rec in &self.records {
            serde_json::to_writer(&mut buf, rec)?;
            buf.push(b'\n');
        }
        std::fs::write(path, &buf).map_err(|e| VgsError::io(path, e))?;
        let index = images_index_path(path);
        let mut f = std::fs::File::create(&index).map_err(|e| VgsError::io(&index, e))?;
        serde_json::to_writer_pretty(&mut f, &self.images)?;
        f.write_all(b"\n").map_err(|e| VgsError::io(&index, e))
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    load_manifest_with_hop(path, DEFAULT_HOP_MS)
}

pub fn load_manifest_with_hop(path: &Path, hop_ms: f64) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| VgsError::io(path, e))?;
    let split = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut manifest = Manifest::new(split, base_dir);
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(line).map_err(|e| VgsError::Manifest {
            path: path.to_path_buf(),
            line: n + 1,
            reason: e.to_string(),
        })?;
        manifest.records.push(rec);
    }
    let index = images_index_path(path);
    if index.exists() {
        let text = std::fs::read_to_string(&index).map_err(|e| VgsError::io(&index, e))?;
        manifest.images = serde_json::from_str(&text).map_err(|e| VgsError::Manifest {
            path: index.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;
    }
    manifest.validate(hop_ms)?;
    Ok(manifest)
}

/// Caption ids and image ids must not be shared between splits.
pub fn check_disjoint(splits: &[&Manifest]) -> Result<()> {
    let mut captions: BTreeMap<&str, &str> = BTreeMap::new();
    let mut images: BTreeMap<&str, &str> = BTreeMap::new();
    for m in splits {
        for rec in &m.records {
            if let Some(other) = captions.insert(&rec.caption_id, &m.split) {
                return Err(VgsError::Caption {
                    caption_id: rec.caption_id.clone(),
                    reason: format!("appears in splits {other} and {}", m.split),
                });
            }
        }
        for id in m.images.keys() {
            if let Some(other) = images.insert(id, &m.split) {
                return Err(VgsError::config(
                    "splits",
                    format!("image {id} appears in splits {other} and {}", m.split),
                ));
            }
        }
    }
    Ok(())
}
