//! Test fixtures: a seeded synthetic corpus, simulated human label files
//! and an in-process OpenAI-compatible stub server.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::routing::post;
use axum::{Json, Router};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rubricate_core::annotator::apply_inversion;
use rubricate_core::backend::{count_tokens, RuleFollowingResponder};
use rubricate_core::corpus::{save_corpus, CorpusManifest, Playlist};
use rubricate_core::{Comment, Corpus, LabelValue, Rubric, VideoRecord};
use serde_json::{json, Value};

const PLAYLISTS: [(&str, &str); 2] = [("PLla", "Linear Algebra"), ("PLcalc", "Single Variable Calculus")];

const OPENERS: [&str; 12] = [
    "Thanks so much for this lecture",
    "Why does the determinant vanish here?",
    "@[USERNAME] the basis changes because the columns are dependent",
    "I took this class back in 2009",
    "The chalk is hard to read at 12:30",
    "Muito obrigado professor",
    "Great explanation of eigenvalues",
    "I am lost after the second example",
    "Does anyone know which textbook this follows?",
    "¿Por qué la integral diverge?",
    "This professor explains so clearly",
    "first",
];

const TAILS: [&str; 8] = [
    "",
    " thank you",
    " and the camera keeps cutting away.",
    " I watch these before every exam.",
    " @[USERNAME] agreed.",
    " what is the rank of A?",
    " 谢谢",
    " the proof at the end is elegant.",
];

/// A corpus of `n` anonymized comments over two playlists of three videos
/// each. The same seed gives the same corpus.
pub fn synthetic_corpus(n: usize, seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut videos = Vec::new();
    for (pid, pname) in PLAYLISTS {
        for v in 1..=3 {
            videos.push(VideoRecord {
                video_id: format!("{pid}-v{v}"),
                title: format!("{pname}: Lecture {v}"),
                playlist_id: pid.to_string(),
                playlist_name: pname.to_string(),
                transcript_path: None,
                transcription_model: None,
            });
        }
    }
    let comments = (0..n)
        .map(|i| {
            let video = &videos[rng.random_range(0..videos.len())];
            let text = format!(
                "{}{} (#{i})",
                OPENERS[rng.random_range(0..OPENERS.len())],
                TAILS[rng.random_range(0..TAILS.len())]
            );
            Comment {
                comment_id: format!("c{i:05}"),
                video_id: video.video_id.clone(),
                playlist_id: video.playlist_id.clone(),
                text,
            }
        })
        .collect();
    let manifest = CorpusManifest {
        playlists: PLAYLISTS
            .iter()
            .map(|(id, name)| Playlist {
                playlist_id: id.to_string(),
                playlist_name: name.to_string(),
                comment_count: 0,
            })
            .collect(),
        videos,
    };
    Corpus::new(manifest, comments).expect("synthetic corpus is valid")
}

/// Per-comment category labels an annotator would give: the stub model's
/// answers with each cell flipped with probability `flip_percent`%.
/// A comment with no true category is labeled `na`.
pub fn simulated_labels(corpus: &Corpus, rubric: &Rubric, seed: u64, flip_percent: u32) -> Vec<(String, Vec<String>)> {
    let responder = RuleFollowingResponder::new(rubric.clone());
    let mut rng = StdRng::seed_from_u64(seed);
    corpus
        .comments()
        .iter()
        .map(|c| {
            let mut keys: Vec<String> = rubric
                .categories
                .iter()
                .filter(|cat| {
                    let answer = responder.answer(&cat.key, &c.text).unwrap_or(false);
                    let truth = apply_inversion(cat, LabelValue::from_bool(answer)) == LabelValue::True;
                    truth ^ (rng.random_range(0..100) < flip_percent)
                })
                .map(|cat| cat.key.clone())
                .collect();
            if keys.is_empty() {
                keys.push("na".to_string());
            }
            (c.comment_id.clone(), keys)
        })
        .collect()
}

/// `simulated_labels` in the human import format.
pub fn human_file(corpus: &Corpus, rubric: &Rubric, seed: u64, flip_percent: u32) -> String {
    simulated_labels(corpus, rubric, seed, flip_percent)
        .into_iter()
        .map(|(id, keys)| format!("{id}: {}\n", keys.join(", ")))
        .collect()
}

/// Writes `corpus` and a `backend.toml` pointing at `endpoint` into `root`.
pub fn write_data_dir(root: &Path, corpus: &Corpus, endpoint: &str) {
    let corpus_dir = root.join("corpus");
    std::fs::create_dir_all(&corpus_dir).expect("create corpus dir");
    save_corpus(corpus, &corpus_dir).expect("save corpus");
    let text =
        format!("endpoint_url = {endpoint:?}\nrequests_per_minute = 100000\nmax_concurrency = 8\nmax_retries = 1\n");
    std::fs::write(root.join("backend.toml"), text).expect("write backend.toml");
}

struct StubState {
    responder: RuleFollowingResponder,
    latency: Duration,
    calls: AtomicUsize,
}

/// An OpenAI-compatible `/v1/chat/completions` server answering with a
/// `RuleFollowingResponder`. Stops when dropped.
pub struct OpenAiStub {
    addr: SocketAddr,
    state: Arc<StubState>,
    task: tokio::task::JoinHandle<()>,
}

impl OpenAiStub {
    pub async fn start(rubric: Rubric, latency: Duration) -> OpenAiStub {
        let state = Arc::new(StubState {
            responder: RuleFollowingResponder::new(rubric),
            latency,
            calls: AtomicUsize::new(0),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(complete))
            .with_state(state.clone());
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.expect("bind stub");
        let addr = listener.local_addr().expect("stub addr");
        let task = tokio::spawn(async move {
            let _ = axum::serve(listener, app).await;
        });
        OpenAiStub { addr, state, task }
    }

    /// Base URL to use as `endpoint_url`.
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }
}

impl Drop for OpenAiStub {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn complete(State(state): State<Arc<StubState>>, Json(body): Json<Value>) -> Json<Value> {
    state.calls.fetch_add(1, Ordering::SeqCst);
    if !state.latency.is_zero() {
        tokio::time::sleep(state.latency).await;
    }
    let prompt = body["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let text = state.responder.respond(prompt);
    Json(json!({
        "id": "chatcmpl-stub",
        "object": "chat.completion",
        "model": body["model"],
        "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": count_tokens(prompt), "completion_tokens": count_tokens(&text)},
    }))
}
