//! Record/replay store of completions keyed by a prompt digest.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendConfig, BackendError, ChatBackend, Completion, CompletionRequest};
use crate::digest::fields_digest;
use crate::jsonl::{self, Appender};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub cache_key: String,
    pub model_name: String,
    pub temperature: f64,
    pub attempt: u32,
    pub prompt_text: String,
    pub response_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Seconds since the Unix epoch. Not part of the key.
    pub timestamp: u64,
}

impl CompletionRecord {
    pub fn completion(&self) -> Completion {
        Completion {
            text: self.response_text.clone(),
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
        }
    }
}

/// `sha256` over model, temperature, attempt and prompt text.
pub fn cache_key(model_name: &str, temperature: f64, attempt: u32, prompt: &str) -> String {
    let temperature = format!("{temperature:?}");
    let attempt = attempt.to_string();
    fields_digest([model_name, temperature.as_str(), attempt.as_str(), prompt])
}

/// Append-only completion store. Readers see an in-memory index; a single
/// writer appends under a lock, and a key is never written twice.
#[derive(Debug)]
pub struct CompletionStore {
    index: Mutex<HashMap<String, CompletionRecord>>,
    writer: Mutex<Option<Appender>>,
    path: PathBuf,
}

impl CompletionStore {
    pub fn open(path: &Path) -> Result<CompletionStore, BackendError> {
        let records: Vec<CompletionRecord> = jsonl::read_all_or_empty(path)?;
        let mut index = HashMap::with_capacity(records.len());
        for record in records {
            // First write wins: responses are immutable once recorded.
            index.entry(record.cache_key.clone()).or_insert(record);
        }
        Ok(CompletionStore {
            index: Mutex::new(index),
            writer: Mutex::new(None),
            path: path.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.index.lock().expect("index lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CompletionRecord> {
        self.index.lock().expect("index lock").get(key).cloned()
    }

    /// Persists `record` unless its key is already present, and returns the
    /// record now stored under the key.
    pub fn insert(&self, record: CompletionRecord) -> Result<CompletionRecord, BackendError> {
        let mut writer = self.writer.lock().expect("writer lock");
        if let Some(existing) = self.get(&record.cache_key) {
            return Ok(existing);
        }
        if writer.is_none() {
            *writer = Some(Appender::open(&self.path)?);
        }
        writer.as_mut().expect("opened above").append(&record)?;
        self.index
            .lock()
            .expect("index lock")
            .insert(record.cache_key.clone(), record.clone());
        Ok(record)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    Record,
    Replay,
}

/// Serves completions from a [`CompletionStore`]. In record mode misses go
/// to the inner backend and are persisted before returning; in replay mode
/// a miss is an error and nothing else is contacted.
pub struct CachedBackend {
    store: Arc<CompletionStore>,
    inner: Option<Arc<dyn ChatBackend>>,
    model_name: String,
    temperature: f64,
}

impl CachedBackend {
    pub fn record(store: Arc<CompletionStore>, config: &BackendConfig, inner: Arc<dyn ChatBackend>) -> Self {
        CachedBackend {
            store,
            inner: Some(inner),
            model_name: config.model_name.clone(),
            temperature: config.temperature,
        }
    }

    pub fn replay(store: Arc<CompletionStore>, config: &BackendConfig) -> Self {
        CachedBackend {
            store,
            inner: None,
            model_name: config.model_name.clone(),
            temperature: config.temperature,
        }
    }

    pub fn mode(&self) -> CacheMode {
        if self.inner.is_some() {
            CacheMode::Record
        } else {
            CacheMode::Replay
        }
    }

    pub fn store(&self) -> &CompletionStore {
        &self.store
    }

    pub fn key_for(&self, request: &CompletionRequest) -> String {
        cache_key(&self.model_name, self.temperature, request.attempt, &request.prompt)
    }
}

#[async_trait]
impl ChatBackend for CachedBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::Fatal("empty prompt".into()));
        }
        let key = self.key_for(request);
        if let Some(hit) = self.store.get(&key) {
            return Ok(hit.completion());
        }
        let Some(inner) = &self.inner else {
            return Err(BackendError::FixtureMissing { key });
        };
        let live = inner.complete(request).await?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let stored = self.store.insert(CompletionRecord {
            cache_key: key,
            model_name: self.model_name.clone(),
            temperature: self.temperature,
            attempt: request.attempt,
            prompt_text: request.prompt.clone(),
            response_text: live.text,
            input_tokens: live.input_tokens,
            output_tokens: live.output_tokens,
            timestamp,
        })?;
        Ok(stored.completion())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::MockBackend;

    fn cfg() -> BackendConfig {
        BackendConfig::default()
    }

    #[tokio::test]
    async fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache/completions.jsonl");
        let mock = Arc::new(MockBackend::constant("true"));
        {
            let store = Arc::new(CompletionStore::open(&path).unwrap());
            let rec = CachedBackend::record(store.clone(), &cfg(), mock.clone());
            let a = rec.complete(&CompletionRequest::new("prompt one")).await.unwrap();
            let b = rec.complete(&CompletionRequest::new("prompt one")).await.unwrap();
            assert_eq!(a, b);
            assert_eq!(mock.calls(), 1);
            assert_eq!(store.len(), 1);
        }
        let store = Arc::new(CompletionStore::open(&path).unwrap());
        let replay = CachedBackend::replay(store, &cfg());
        assert_eq!(
            replay
                .complete(&CompletionRequest::new("prompt one"))
                .await
                .unwrap()
                .text,
            "true"
        );
        let miss = replay
            .complete(&CompletionRequest::new("prompt two"))
            .await
            .unwrap_err();
        let expected = cache_key("gpt-3.5-turbo", 0.0, 0, "prompt two");
        assert!(matches!(&miss, BackendError::FixtureMissing { key } if *key == expected));
        assert!(miss.to_string().contains(&expected));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 1);
    }

    #[tokio::test]
    async fn reask_has_its_own_slot() {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(CompletionStore::open(&dir.path().join("c.jsonl")).unwrap());
        let mock = Arc::new(MockBackend::constant("maybe"));
        let rec = CachedBackend::record(store.clone(), &cfg(), mock.clone());
        rec.complete(&CompletionRequest::new("p")).await.unwrap();
        rec.complete(&CompletionRequest::reask("p")).await.unwrap();
        assert_eq!(mock.calls(), 2);
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn key_excludes_nothing_that_matters() {
        let base = cache_key("m", 0.0, 0, "p");
        assert_ne!(base, cache_key("m2", 0.0, 0, "p"));
        assert_ne!(base, cache_key("m", 0.5, 0, "p"));
        assert_ne!(base, cache_key("m", 0.0, 1, "p"));
        assert_ne!(base, cache_key("m", 0.0, 0, "p "));
        assert_eq!(base.len(), 64);
    }

    #[tokio::test]
    async fn concurrent_inserts_never_duplicate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let store = Arc::new(CompletionStore::open(&path).unwrap());
        let mock: Arc<dyn ChatBackend> = Arc::new(MockBackend::constant("false"));
        let rec = Arc::new(CachedBackend::record(store, &cfg(), mock));
        let tasks: Vec<_> = (0..32)
            .map(|i| {
                let rec = rec.clone();
                tokio::spawn(async move { rec.complete(&CompletionRequest::new(format!("p{}", i % 4))).await })
            })
            .collect();
        for t in tasks {
            t.await.unwrap().unwrap();
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
    }
}
