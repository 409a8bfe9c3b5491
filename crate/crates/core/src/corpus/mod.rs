//! Comment corpora: types, storage layout and ingestion.
//!
//! A corpus directory holds `manifest.json` (playlists and videos) and
//! `comments.jsonl` (one comment per line with exactly the fields
//! `comment_id`, `video_id`, `playlist_id`, `text`). Comments are kept
//! sorted by `(playlist_id, video_id, comment_id)`.

mod anonymize;
pub mod youtube;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::jsonl::{self, JsonlError};
use crate::promptgen::PromptContext;

pub use anonymize::{anonymize, is_anonymized, USERNAME_PLACEHOLDER};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMMENTS_FILE: &str = "comments.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comment {
    pub comment_id: String,
    pub video_id: String,
    pub playlist_id: String,
    pub text: String,
}

impl Comment {
    /// Whether the text carries no `@` mention other than the placeholder.
    pub fn is_anonymized(&self) -> bool {
        is_anonymized(&self.text)
    }

    fn sort_key(&self) -> (&str, &str, &str) {
        (&self.playlist_id, &self.video_id, &self.comment_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Playlist {
    pub playlist_id: String,
    pub playlist_name: String,
    #[serde(default)]
    pub comment_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub video_id: String,
    pub title: String,
    pub playlist_id: String,
    pub playlist_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcription_model: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub playlists: Vec<Playlist>,
    pub videos: Vec<VideoRecord>,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Store(#[from] JsonlError),
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("comment {comment_id}: text is empty")]
    EmptyText { comment_id: String },
    #[error("duplicate comment id {0}")]
    DuplicateComment(String),
    #[error("duplicate video id {0}")]
    DuplicateVideo(String),
    #[error("video {video_id} references unknown playlist {playlist_id}")]
    UnknownPlaylist { video_id: String, playlist_id: String },
    #[error("comment {comment_id} references unknown video {video_id}")]
    UnknownVideo { comment_id: String, video_id: String },
    #[error("playlist {playlist_id}: manifest says {expected} comments, store has {actual}")]
    CountMismatch {
        playlist_id: String,
        expected: usize,
        actual: usize,
    },
}

/// A validated corpus: manifest plus sorted comments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    manifest: CorpusManifest,
    comments: Vec<Comment>,
}

impl Corpus {
    /// Builds a corpus, recomputing per-playlist comment counts.
    pub fn new(mut manifest: CorpusManifest, mut comments: Vec<Comment>) -> Result<Self, CorpusError> {
        comments.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for c in &comments {
            *counts.entry(c.playlist_id.as_str()).or_default() += 1;
        }
        for p in &mut manifest.playlists {
            p.comment_count = counts.get(p.playlist_id.as_str()).copied().unwrap_or(0);
        }
        let corpus = Corpus { manifest, comments };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn empty() -> Self {
        Corpus {
            manifest: CorpusManifest::default(),
            comments: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        let playlists: BTreeSet<&str> = self.manifest.playlists.iter().map(|p| p.playlist_id.as_str()).collect();
        let mut videos = BTreeSet::new();
        for v in &self.manifest.videos {
            if !videos.insert(v.video_id.as_str()) {
                return Err(CorpusError::DuplicateVideo(v.video_id.clone()));
            }
            if !playlists.contains(v.playlist_id.as_str()) {
                return Err(CorpusError::UnknownPlaylist {
                    video_id: v.video_id.clone(),
                    playlist_id: v.playlist_id.clone(),
                });
            }
        }
        let mut ids = BTreeSet::new();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for c in &self.comments {
            if c.text.trim().is_empty() {
                return Err(CorpusError::EmptyText {
                    comment_id: c.comment_id.clone(),
                });
            }
            if !ids.insert(c.comment_id.as_str()) {
                return Err(CorpusError::DuplicateComment(c.comment_id.clone()));
            }
            if !videos.contains(c.video_id.as_str()) {
                return Err(CorpusError::UnknownVideo {
                    comment_id: c.comment_id.clone(),
                    video_id: c.video_id.clone(),
                });
            }
            *counts.entry(c.playlist_id.as_str()).or_default() += 1;
        }
        for p in &self.manifest.playlists {
            let actual = counts.get(p.playlist_id.as_str()).copied().unwrap_or(0);
            if actual != p.comment_count {
                return Err(CorpusError::CountMismatch {
                    playlist_id: p.playlist_id.clone(),
                    expected: p.comment_count,
                    actual,
                });
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn comments(&self) -> &[Comment] {
        &self.comments
    }

    pub fn len(&self) -> usize {
        self.comments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comments.is_empty()
    }

    pub fn comment(&self, comment_id: &str) -> Option<&Comment> {
        self.comments.iter().find(|c| c.comment_id == comment_id)
    }

    pub fn comment_ids(&self) -> BTreeSet<String> {
        self.comments.iter().map(|c| c.comment_id.clone()).collect()
    }

    pub fn video(&self, video_id: &str) -> Option<&VideoRecord> {
        self.manifest.videos.iter().find(|v| v.video_id == video_id)
    }

    /// Prompt context (playlist and video names) for a stored comment.
    pub fn context_for(&self, comment: &Comment) -> PromptContext {
        let (playlist_name, video_name) = match self.video(&comment.video_id) {
            Some(v) => (v.playlist_name.clone(), v.title.clone()),
            None => (comment.playlist_id.clone(), comment.video_id.clone()),
        };
        PromptContext {
            playlist_name,
            video_name,
            comment_text: comment.text.clone(),
        }
    }

    /// Replaces everything stored for the playlists present in `other`.
    pub fn merge(self, other: Corpus) -> Result<Corpus, CorpusError> {
        let replaced: BTreeSet<String> = other.manifest.playlists.iter().map(|p| p.playlist_id.clone()).collect();
        let mut manifest = self.manifest;
        manifest.playlists.retain(|p| !replaced.contains(&p.playlist_id));
        manifest.videos.retain(|v| !replaced.contains(&v.playlist_id));
        manifest.playlists.extend(other.manifest.playlists);
        manifest.videos.extend(other.manifest.videos);
        let mut comments = self.comments;
        comments.retain(|c| !replaced.contains(&c.playlist_id));
        comments.extend(other.comments);
        Corpus::new(manifest, comments)
    }

    /// Digest over the canonical comment store.
    pub fn digest(&self) -> String {
        let mut buf = String::new();
        for c in &self.comments {
            buf.push_str(&jsonl::to_line(c));
        }
        for v in &self.manifest.videos {
            buf.push_str(&jsonl::to_line(v));
        }
        sha256_hex(buf)
    }

    /// Comment counts per playlist id, straight from the store.
    pub fn counts_by_playlist(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for c in &self.comments {
            *out.entry(c.playlist_id.clone()).or_default() += 1;
        }
        out
    }
}

pub fn save_corpus(corpus: &Corpus, dir: &Path) -> Result<(), CorpusError> {
    let manifest = serde_json::to_vec_pretty(&corpus.manifest).expect("manifest serializes");
    jsonl::write_atomic(&dir.join(MANIFEST_FILE), &manifest)?;
    jsonl::write_all(&dir.join(COMMENTS_FILE), &corpus.comments)?;
    Ok(())
}

pub fn load_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = std::fs::read(&manifest_path).map_err(|e| JsonlError::io(&manifest_path, e))?;
    let manifest: CorpusManifest = serde_json::from_slice(&raw).map_err(|e| CorpusError::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let mut comments: Vec<Comment> = jsonl::read_all(&dir.join(COMMENTS_FILE))?;
    comments.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let corpus = Corpus { manifest, comments };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_corpus() -> Corpus {
        let manifest = CorpusManifest {
            playlists: vec![Playlist {
                playlist_id: "PL1".into(),
                playlist_name: "18.06 Linear Algebra".into(),
                comment_count: 0,
            }],
            videos: vec![VideoRecord {
                video_id: "v1".into(),
                title: "1. The Geometry of Linear Equations".into(),
                playlist_id: "PL1".into(),
                playlist_name: "18.06 Linear Algebra".into(),
                transcript_path: None,
                transcription_model: Some("large-v2".into()),
            }],
        };
        let comments = ["c3", "c1", "c2"]
            .iter()
            .map(|id| Comment {
                comment_id: id.to_string(),
                video_id: "v1".into(),
                playlist_id: "PL1".into(),
                text: format!("comment {id} @[USERNAME] great"),
            })
            .collect();
        Corpus::new(manifest, comments).unwrap()
    }

    #[test]
    fn new_sorts_and_counts() {
        let corpus = small_corpus();
        let ids: Vec<_> = corpus.comments().iter().map(|c| c.comment_id.as_str()).collect();
        assert_eq!(ids, ["c1", "c2", "c3"]);
        assert_eq!(corpus.manifest().playlists[0].comment_count, 3);
        assert!(corpus.comments().iter().all(Comment::is_anonymized));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus();
        save_corpus(&corpus, dir.path()).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
    }

    #[test]
    fn corrupt_line_names_line_two() {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&small_corpus(), dir.path()).unwrap();
        let path = dir.path().join(COMMENTS_FILE);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1] = "{\"comment_id\": \"c2\", ";
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(
            matches!(err, CorpusError::Store(JsonlError::Malformed { line: 2, .. })),
            "{err}"
        );
    }

    #[test]
    fn unknown_field_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_corpus(&small_corpus(), dir.path()).unwrap();
        std::fs::write(
            dir.path().join(COMMENTS_FILE),
            "{\"comment_id\":\"c1\",\"video_id\":\"v1\",\"playlist_id\":\"PL1\",\"text\":\"x\",\"author\":\"bob\"}\n",
        )
        .unwrap();
        assert!(load_corpus(dir.path()).is_err());
    }

    #[test]
    fn missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(matches!(err, CorpusError::Store(ref e) if e.is_not_found()), "{err}");
    }

    #[test]
    fn count_mismatch_detected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus();
        save_corpus(&corpus, dir.path()).unwrap();
        let mut manifest = corpus.manifest().clone();
        manifest.playlists[0].comment_count = 7;
        std::fs::write(dir.path().join(MANIFEST_FILE), serde_json::to_vec(&manifest).unwrap()).unwrap();
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::CountMismatch {
                expected: 7,
                actual: 3,
                ..
            })
        ));
    }

    #[test]
    fn invariants_enforced() {
        let corpus = small_corpus();
        let mut comments = corpus.comments().to_vec();
        comments.push(comments[0].clone());
        assert!(matches!(
            Corpus::new(corpus.manifest().clone(), comments),
            Err(CorpusError::DuplicateComment(_))
        ));
        let mut comments = corpus.comments().to_vec();
        comments[0].text = "   ".into();
        assert!(matches!(
            Corpus::new(corpus.manifest().clone(), comments),
            Err(CorpusError::EmptyText { .. })
        ));
    }

    #[test]
    fn merge_replaces_playlist() {
        let a = small_corpus();
        let b = small_corpus();
        let merged = a.merge(b.clone()).unwrap();
        assert_eq!(merged, b);
    }
}
