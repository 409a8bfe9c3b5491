//! Comment ingestion over the YouTube Data API v3 wire shape.
//!
//! Uses `playlists.list` for the playlist title, `playlistItems.list` for
//! the videos, and `commentThreads.list` per video. Only the thread's
//! `topLevelComment` is kept; `replies` are never read into the corpus.

use std::path::Path;

use futures::stream::{self, StreamExt, TryStreamExt};
use serde::Deserialize;

use super::{anonymize, Comment, Corpus, CorpusError, CorpusManifest, Playlist, VideoRecord};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("request to {url} failed: {message}")]
    Network { url: String, message: String },
    #[error("{url}: authorization rejected ({status})")]
    Auth { url: String, status: u16 },
    #[error("{url}: server returned {status}")]
    Http { url: String, status: u16 },
    #[error("malformed API payload on {page}: {message}")]
    Malformed { page: String, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl IngestError {
    /// Network failures, throttling and server errors can be retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            IngestError::Network { .. } => true,
            IngestError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", bound(deserialize = "T: Deserialize<'de>"))]
struct Page<T> {
    #[serde(default = "Vec::new")]
    items: Vec<T>,
    #[serde(default)]
    next_page_token: Option<String>,
}

#[derive(Debug, Deserialize)]
struct PlaylistResource {
    snippet: PlaylistSnippet,
}

#[derive(Debug, Deserialize)]
struct PlaylistSnippet {
    title: String,
}

#[derive(Debug, Deserialize)]
struct PlaylistItem {
    snippet: PlaylistItemSnippet,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct PlaylistItemSnippet {
    title: String,
    resource_id: ResourceId,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ResourceId {
    video_id: String,
}

#[derive(Debug, Deserialize)]
struct CommentThread {
    snippet: ThreadSnippet,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ThreadSnippet {
    top_level_comment: CommentResource,
}

#[derive(Debug, Deserialize)]
struct CommentResource {
    id: String,
    snippet: CommentSnippet,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct CommentSnippet {
    #[serde(default)]
    text_original: Option<String>,
    #[serde(default)]
    text_display: Option<String>,
    #[serde(default)]
    parent_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ApiErrorBody {
    error: ApiError,
}

#[derive(Debug, Deserialize)]
struct ApiError {
    #[serde(default)]
    errors: Vec<ApiErrorItem>,
}

#[derive(Debug, Deserialize)]
struct ApiErrorItem {
    #[serde(default)]
    reason: String,
}

/// Client for a YouTube-Data-API-v3-compatible endpoint.
#[derive(Debug, Clone)]
pub struct YouTubeClient {
    http: reqwest::Client,
    base_url: String,
    api_key: String,
    video_concurrency: usize,
}

/// Transcript files to attach while ingesting: `<dir>/<video_id>.txt`.
#[derive(Debug, Clone)]
pub struct TranscriptSource<'a> {
    pub dir: &'a Path,
    pub model: Option<&'a str>,
}

impl YouTubeClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        YouTubeClient {
            http: reqwest::Client::new(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            video_concurrency: 4,
        }
    }

    pub fn with_video_concurrency(mut self, n: usize) -> Self {
        self.video_concurrency = n.max(1);
        self
    }

    async fn get_page<T: serde::de::DeserializeOwned>(
        &self,
        resource: &str,
        params: &[(&str, &str)],
        page_token: Option<&str>,
        page_label: String,
    ) -> Result<Page<T>, IngestError> {
        let url = format!("{}/{}", self.base_url, resource);
        let mut query: Vec<(&str, &str)> = params.to_vec();
        query.push(("key", &self.api_key));
        if let Some(token) = page_token {
            query.push(("pageToken", token));
        }
        let response = self
            .http
            .get(&url)
            .query(&query)
            .send()
            .await
            .map_err(|e| IngestError::Network {
                url: url.clone(),
                message: e.to_string(),
            })?;
        let status = response.status().as_u16();
        let body = response.bytes().await.map_err(|e| IngestError::Network {
            url: url.clone(),
            message: e.to_string(),
        })?;
        if status == 403 && is_comments_disabled(&body) {
            return Ok(Page {
                items: Vec::new(),
                next_page_token: None,
            });
        }
        match status {
            200..=299 => {}
            401 | 403 => return Err(IngestError::Auth { url, status }),
            _ => return Err(IngestError::Http { url, status }),
        }
        serde_json::from_slice(&body).map_err(|e| IngestError::Malformed {
            page: page_label,
            message: e.to_string(),
        })
    }

    async fn playlist_name(&self, playlist_id: &str) -> Result<String, IngestError> {
        let page: Page<PlaylistResource> = self
            .get_page(
                "playlists",
                &[("part", "snippet"), ("id", playlist_id)],
                None,
                format!("playlists id={playlist_id}"),
            )
            .await?;
        Ok(page
            .items
            .into_iter()
            .next()
            .map(|p| p.snippet.title)
            .unwrap_or_else(|| playlist_id.to_string()))
    }

    async fn playlist_videos(&self, playlist_id: &str) -> Result<Vec<(String, String)>, IngestError> {
        let mut out = Vec::new();
        let mut token: Option<String> = None;
        let mut page_no = 0;
        loop {
            let page: Page<PlaylistItem> = self
                .get_page(
                    "playlistItems",
                    &[("part", "snippet"), ("playlistId", playlist_id), ("maxResults", "50")],
                    token.as_deref(),
                    format!("playlistItems playlistId={playlist_id} page {page_no}"),
                )
                .await?;
            out.extend(
                page.items
                    .into_iter()
                    .map(|item| (item.snippet.resource_id.video_id, item.snippet.title)),
            );
            match page.next_page_token.filter(|t| !t.is_empty()) {
                Some(next) => token = Some(next),
                None => break,
            }
            page_no += 1;
        }
        Ok(out)
    }

    /// All top-level comments of one video, anonymized.
    pub async fn video_comments(&self, video_id: &str) -> Result<Vec<(String, String)>, IngestError> {
        let mut out = Vec::new();
        let mut token: Option<String> = None;
        let mut page_no = 0;
        loop {
            let page: Page<CommentThread> = self
                .get_page(
                    "commentThreads",
                    &[
                        ("part", "snippet"),
                        ("videoId", video_id),
                        ("maxResults", "100"),
                        ("textFormat", "plainText"),
                    ],
                    token.as_deref(),
                    format!("commentThreads videoId={video_id} page {page_no}"),
                )
                .await?;
            for thread in page.items {
                let top = thread.snippet.top_level_comment;
                if top.snippet.parent_id.is_some() {
                    continue;
                }
                let text = top
                    .snippet
                    .text_original
                    .or(top.snippet.text_display)
                    .unwrap_or_default();
                if text.trim().is_empty() {
                    continue;
                }
                out.push((top.id, anonymize(&text)));
            }
            match page.next_page_token.filter(|t| !t.is_empty()) {
                Some(next) => token = Some(next),
                None => break,
            }
            page_no += 1;
        }
        Ok(out)
    }

    /// Ingests one playlist into a standalone corpus.
    pub async fn ingest_playlist(
        &self,
        playlist_id: &str,
        transcripts: Option<&TranscriptSource<'_>>,
    ) -> Result<Corpus, IngestError> {
        let playlist_name = self.playlist_name(playlist_id).await?;
        let videos = self.playlist_videos(playlist_id).await?;

        let per_video: Vec<(String, Vec<(String, String)>)> = stream::iter(videos.iter())
            .map(|(video_id, _)| async move {
                self.video_comments(video_id)
                    .await
                    .map(|comments| (video_id.clone(), comments))
            })
            .buffer_unordered(self.video_concurrency)
            .try_collect()
            .await?;

        let mut comments = Vec::new();
        let mut seen_comments = std::collections::BTreeSet::new();
        for (video_id, items) in per_video {
            for (comment_id, text) in items {
                if !seen_comments.insert(comment_id.clone()) {
                    continue;
                }
                comments.push(Comment {
                    comment_id,
                    video_id: video_id.clone(),
                    playlist_id: playlist_id.to_string(),
                    text,
                });
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let records = videos
            .into_iter()
            .filter(|(id, _)| seen.insert(id.clone()))
            .map(|(video_id, title)| {
                let transcript_path = transcripts
                    .map(|t| t.dir.join(format!("{video_id}.txt")))
                    .filter(|p| p.is_file());
                let transcription_model = transcript_path
                    .as_ref()
                    .and(transcripts.and_then(|t| t.model.map(str::to_string)));
                VideoRecord {
                    video_id,
                    title,
                    playlist_id: playlist_id.to_string(),
                    playlist_name: playlist_name.clone(),
                    transcript_path,
                    transcription_model,
                }
            })
            .collect();
        let manifest = CorpusManifest {
            playlists: vec![Playlist {
                playlist_id: playlist_id.to_string(),
                playlist_name: playlist_name.clone(),
                comment_count: 0,
            }],
            videos: records,
        };
        Ok(Corpus::new(manifest, comments)?)
    }
}

fn is_comments_disabled(body: &[u8]) -> bool {
    serde_json::from_slice::<ApiErrorBody>(body)
        .map(|b| b.error.errors.iter().any(|e| e.reason == "commentsDisabled"))
        .unwrap_or(false)
}
