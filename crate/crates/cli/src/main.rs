//! `rubricate`: command-line front end over a data directory.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rubricate_core::backend::{BackendConfig, Mode};
use rubricate_core::Strategy;

/// Exit status for runs that stopped before covering the whole grid.
pub const EXIT_INCOMPLETE: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "rubricate",
    version,
    about = "Rubric-driven annotation of lecture comments with LLMs"
)]
pub struct Cli {
    /// Data directory holding the corpus, labels, runs and cache.
    #[arg(long, global = true, env = "RUBRICATE_DATA_DIR", default_value = ".")]
    pub data: PathBuf,
    #[command(flatten)]
    pub backend: BackendFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct BackendFlags {
    /// Call the live endpoint and record every response in the cache.
    #[arg(long, global = true, conflicts_with_all = ["replay", "live"])]
    pub record: bool,
    /// Answer only from recorded responses (the default).
    #[arg(long, global = true, conflicts_with_all = ["record", "live"])]
    pub replay: bool,
    /// Call the live endpoint without recording.
    #[arg(long, global = true, conflicts_with_all = ["record", "replay"])]
    pub live: bool,
    /// Requests-per-minute cap for live calls.
    #[arg(long, global = true)]
    pub rpm: Option<u32>,
    /// Maximum requests in flight.
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
    /// Base URL of an OpenAI-compatible API, e.g. http://localhost:8000/v1.
    #[arg(long = "llm-endpoint", global = true)]
    pub endpoint: Option<String>,
    /// Model name sent to the endpoint.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Sampling temperature.
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
}

impl BackendFlags {
    pub fn mode(&self) -> Mode {
        if self.record {
            Mode::Record
        } else if self.live {
            Mode::Live
        } else {
            Mode::Replay
        }
    }

    pub fn apply(&self, mut config: BackendConfig) -> BackendConfig {
        if let Some(v) = self.rpm {
            config.requests_per_minute = v;
        }
        if let Some(v) = self.concurrency {
            config.max_concurrency = v;
        }
        if let Some(v) = &self.endpoint {
            config.endpoint_url = v.clone();
        }
        if let Some(v) = &self.model {
            config.model_name = v.clone();
        }
        if let Some(v) = self.temperature {
            config.temperature = v;
        }
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse::<Strategy>().map_err(|e| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Crawl playlists from the YouTube Data API into the corpus.
    Ingest {
        /// Playlist id; repeat for several.
        #[arg(long = "playlist", required = true)]
        playlists: Vec<String>,
        #[arg(long, env = "YOUTUBE_API_KEY", hide_env_values = true)]
        api_key: String,
        /// Base URL of the YouTube Data API.
        #[arg(
            long = "endpoint",
            alias = "api-base",
            default_value = "https://www.googleapis.com/youtube/v3"
        )]
        api_base: String,
        /// Directory of `<video_id>.txt` transcripts to attach.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        /// Name of the model that produced the transcripts.
        #[arg(long)]
        transcription_model: Option<String>,
        /// Corpus directory to create or extend (default: <data>/corpus).
        #[arg(long = "out", alias = "corpus")]
        corpus: Option<PathBuf>,
    },
    /// Replace @-mentions with a placeholder, in a corpus directory or a
    /// comments JSONL file.
    Anonymize {
        /// Corpus directory or comments file (default: <data>/corpus).
        #[arg(long = "in", alias = "corpus")]
        input: Option<PathBuf>,
        /// Where to write the result (default: in place).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label every (comment, category) cell with the model.
    Annotate {
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        /// Run id; re-using one resumes that run.
        #[arg(long)]
        run: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        rubric: Option<PathBuf>,
        /// Worked examples per prompt for the k-shot strategies.
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Stop after writing this many cells (the run stays resumable).
        #[arg(long)]
        cell_limit: Option<usize>,
    },
    /// Import one annotator's `comment_id: key[, key...]` file.
    ImportHumans {
        #[arg(long)]
        annotator: String,
        file: PathBuf,
        /// Accept comment ids that are not in the corpus.
        #[arg(long)]
        allow_unknown: bool,
    },
    /// Per-category kappa between two humans and one run.
    Kappa {
        #[arg(long)]
        run: String,
        /// Two label files; the stored annotators are used when omitted.
        #[arg(long, num_args = 2, value_names = ["FILE1", "FILE2"])]
        humans: Option<Vec<PathBuf>>,
    },
    /// Agreement table: human kappa and averaged human-model kappa per run.
    Report {
        /// Runs to include (default: every completed run).
        #[arg(long = "run")]
        runs: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Human vs human-model kappa points for one run, as CSV.
    Scatter {
        #[arg(long)]
        run: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Category counts over the human-labeled sample.
    Distribution {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Comments where both humans agree and the model does not.
    Disagreements {
        #[arg(long)]
        category: String,
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<Strategy>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Estimate what a run would cost.
    Cost {
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Mean response tokens (default: 1, or 80 with reasoning).
        #[arg(long)]
        output_tokens: Option<f64>,
    },
    /// Print the prompt for one comment and category.
    Render {
        #[arg(long)]
        category: String,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Strategy,
        #[arg(long, conflicts_with = "text")]
        comment_id: Option<String>,
        /// Ad-hoc comment text, rendered with placeholder video context.
        #[arg(long)]
        text: Option<String>,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Serve the HTTP API (and a built UI, if given).
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory of static files served at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_env("RUBRICATE_LOG").unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(cli).await {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
