//! Subcommand implementations.

use std::error::Error;
use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use rubricate_core::annotator::human::import_human_annotations;
use rubricate_core::annotator::run::{PreparedRun, RunOptions};
use rubricate_core::annotator::AnnotationMatrix;
use rubricate_core::backend::{build_backend, count_tokens, estimate_cost, BackendConfig, RunPlan};
use rubricate_core::corpus::youtube::{TranscriptSource, YouTubeClient};
use rubricate_core::corpus::{anonymize, load_corpus, save_corpus, Comment};
use rubricate_core::metrics::{agreement_report, scatter_data, ModelRun};
use rubricate_core::promptgen::{PromptPlan, DEFAULT_K};
use rubricate_core::workspace::{DataDir, DisagreementList};
use rubricate_core::{Corpus, PromptContext, Rubric, Strategy};
use rubricate_service::AppState;

use crate::{Cli, Command, Format, EXIT_INCOMPLETE};

type AnyResult<T> = Result<T, Box<dyn Error + Send + Sync>>;

/// Mean response tokens assumed when estimating: a bare label, or a short
/// explanation followed by the label.
const LABEL_OUTPUT_TOKENS: f64 = 1.0;
const REASONING_OUTPUT_TOKENS: f64 = 60.0;

pub async fn run(cli: Cli) -> AnyResult<ExitCode> {
    let data = DataDir::new(&cli.data);
    let config = || -> AnyResult<BackendConfig> {
        let c = cli.backend.apply(data.load_backend_config()?);
        c.validate()?;
        Ok(c)
    };
    match cli.command {
        Command::Ingest {
            ref playlists,
            ref api_key,
            ref api_base,
            ref transcripts,
            ref transcription_model,
            ref corpus,
        } => {
            let dir = corpus.clone().unwrap_or_else(|| data.corpus_dir());
            let client = YouTubeClient::new(api_base.clone(), api_key.clone());
            let source = transcripts.as_deref().map(|d| TranscriptSource {
                dir: d,
                model: transcription_model.as_deref(),
            });
            let mut merged = if dir.join(rubricate_core::corpus::MANIFEST_FILE).is_file() {
                load_corpus(&dir)?
            } else {
                Corpus::empty()
            };
            for id in playlists {
                let part = client.ingest_playlist(id, source.as_ref()).await?;
                eprintln!(
                    "{id}: {} comments from {} videos",
                    part.len(),
                    part.manifest().videos.len()
                );
                merged = merged.merge(part)?;
            }
            std::fs::create_dir_all(&dir)?;
            save_corpus(&merged, &dir)?;
            println!("{} comments in {}", merged.len(), dir.display());
        }
        Command::Anonymize { ref input, ref out } => {
            let input = input.clone().unwrap_or_else(|| data.corpus_dir());
            let out = out.clone().unwrap_or_else(|| input.clone());
            let (changed, total) = if input.is_dir() {
                let before = load_corpus(&input)?;
                let (comments, changed) = anonymize_all(before.comments());
                let after = Corpus::new(before.manifest().clone(), comments)?;
                std::fs::create_dir_all(&out)?;
                save_corpus(&after, &out)?;
                (changed, after.len())
            } else {
                let before: Vec<Comment> = rubricate_core::jsonl::read_all(&input)?;
                let (comments, changed) = anonymize_all(&before);
                rubricate_core::jsonl::write_all(&out, &comments)?;
                (changed, comments.len())
            };
            println!("anonymized {changed} of {total} comments into {}", out.display());
        }
        Command::Annotate {
            strategy,
            ref run,
            ref corpus,
            ref rubric,
            k,
            cell_limit,
        } => {
            let config = config()?;
            let rubric = match rubric {
                Some(p) => Rubric::load(p)?,
                None => data.load_rubric()?,
            };
            let corpus = match corpus {
                Some(p) => load_corpus(p)?,
                None => data.load_corpus()?,
            };
            let plan = PromptPlan::new(
                data.load_templates(&rubric)?,
                data.load_shots(&rubric)?,
                strategy,
                k,
                &rubric,
            )?;
            let backend = build_backend(&config, cli.backend.mode(), &data.cache_dir())?;
            let prepared = PreparedRun::prepare(
                &data.runs_dir(),
                run,
                Arc::new(corpus),
                Arc::new(rubric),
                Arc::new(plan),
                &config.digest(),
                config.pricing(),
            )?;
            eprintln!("{run}: {} cells pending", prepared.pending());
            let summary = prepared
                .execute(
                    backend,
                    RunOptions {
                        concurrency: config.max_concurrency,
                        cell_limit,
                    },
                )
                .await?;
            let m = &summary.manifest;
            println!(
                "{}: {:?} {}/{} cells ({} unparseable, {} re-asked), {} in / {} out tokens, cost {:.4}",
                m.run_id,
                m.status,
                m.completed_cells,
                m.total_cells,
                m.unparseable_cells,
                m.reasked_cells,
                m.input_tokens,
                m.output_tokens,
                m.total_cost
            );
            if let Some(msg) = &m.message {
                eprintln!("{msg}");
            }
            if !m.is_complete() {
                return Ok(ExitCode::from(EXIT_INCOMPLETE));
            }
        }
        Command::ImportHumans {
            ref annotator,
            ref file,
            allow_unknown,
        } => {
            let rubric = data.load_rubric()?;
            let known = if allow_unknown {
                None
            } else {
                Some(data.load_corpus()?.comment_ids())
            };
            let annotations = import_human_annotations(file, annotator, &rubric, known.as_ref())?;
            data.save_human(annotator, &annotations)?;
            println!(
                "{annotator}: {} comments, {} cells",
                annotations.len() / rubric.len().max(1),
                annotations.len()
            );
        }
        Command::Kappa { ref run, ref humans } => {
            let rubric = data.load_rubric()?;
            let [h1, h2] = match humans {
                Some(files) => {
                    let load = |path: &Path, fallback: &str| -> AnyResult<(String, AnnotationMatrix)> {
                        let id = path
                            .file_stem()
                            .and_then(|s| s.to_str())
                            .filter(|s| rubricate_core::annotator::human::validate_annotator_id(s).is_ok())
                            .unwrap_or(fallback)
                            .to_string();
                        let rows = import_human_annotations(path, &id, &rubric, None)?;
                        Ok((id, AnnotationMatrix::from_annotations(rows)))
                    };
                    let a = load(&files[0], "h1")?;
                    let mut b = load(&files[1], "h2")?;
                    if b.0 == a.0 {
                        b.0.push_str("-2");
                    }
                    [a, b]
                }
                None => data.two_humans()?,
            };
            let manifest = data.manifest(run)?;
            let matrix = data.run_matrix(run)?;
            let model = ModelRun {
                run_id: &manifest.run_id,
                strategy: manifest.strategy,
                k: if manifest.k == 0 { DEFAULT_K } else { manifest.k },
                matrix: &matrix,
            };
            let report = agreement_report(&rubric, (&h1.0, &h1.1), (&h2.0, &h2.1), &[model])?;
            print!("{}", report.to_table());
        }
        Command::Report { ref runs, format } => {
            let ids = (!runs.is_empty()).then_some(runs.as_slice());
            let report = data.agreement_report(ids)?;
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Csv => print!("{}", report.to_csv()),
                Format::Json => println!("{}", report.to_json()),
            }
        }
        Command::Scatter { ref run, ref out } => {
            let report = data.agreement_report(Some(std::slice::from_ref(run)))?;
            let scatter = scatter_data(&report, run).ok_or_else(|| format!("run `{run}` is not in the report"))?;
            for note in &scatter.notes {
                eprintln!("note: {note}");
            }
            write_or_print(out.as_deref(), &scatter.to_csv())?;
        }
        Command::Distribution { format } => {
            let report = data.distribution()?;
            match format {
                Format::Table => print!("{}", report.to_table()),
                Format::Csv => print!("{}", report.to_csv()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Disagreements {
            ref category,
            ref run,
            strategy,
            format,
        } => {
            let list = data.disagreements(category, run.as_deref(), strategy)?;
            match format {
                Format::Table => print!("{}", disagreement_table(&list)),
                Format::Csv => print!("{}", disagreement_csv(&list)),
                Format::Json => println!("{}", serde_json::to_string_pretty(&list)?),
            }
        }
        Command::Cost {
            strategy,
            ref corpus,
            k,
            output_tokens,
        } => {
            let config = config()?;
            let rubric = data.load_rubric()?;
            let corpus = match corpus {
                Some(p) => load_corpus(p)?,
                None => data.load_corpus()?,
            };
            let plan = PromptPlan::new(
                data.load_templates(&rubric)?,
                data.load_shots(&rubric)?,
                strategy,
                k,
                &rubric,
            )?;
            let mean_input_tokens = mean_prompt_tokens(&corpus, &rubric, &plan)?;
            let mean_output_tokens = output_tokens.unwrap_or(if strategy == Strategy::KShotReasoning {
                REASONING_OUTPUT_TOKENS
            } else {
                LABEL_OUTPUT_TOKENS
            });
            let run_plan = RunPlan {
                comments: corpus.len() as u64,
                categories: rubric.len() as u64,
                mean_input_tokens,
                mean_output_tokens,
            };
            let pricing = config.pricing();
            let total = estimate_cost(&run_plan, &pricing);
            println!("model            {}", config.model_name);
            println!("requests         {}", run_plan.requests());
            println!("mean input       {mean_input_tokens:.1} tokens");
            println!("mean output      {mean_output_tokens:.1} tokens");
            println!(
                "per comment      {:.5}",
                if corpus.is_empty() {
                    0.0
                } else {
                    total / corpus.len() as f64
                }
            );
            println!("total            {total:.4}");
        }
        Command::Render {
            ref category,
            strategy,
            ref comment_id,
            ref text,
            k,
        } => {
            let rubric = data.load_rubric()?;
            let plan = PromptPlan::new(
                data.load_templates(&rubric)?,
                data.load_shots(&rubric)?,
                strategy,
                k,
                &rubric,
            )?;
            let context = match (comment_id, text) {
                (Some(id), _) => {
                    let corpus = data.load_corpus()?;
                    let comment = corpus.comment(id).ok_or_else(|| format!("unknown comment `{id}`"))?;
                    corpus.context_for(comment)
                }
                (None, Some(t)) => PromptContext {
                    playlist_name: "Untitled playlist".into(),
                    video_name: "Untitled video".into(),
                    comment_text: anonymize(t),
                },
                (None, None) => return Err("pass --comment-id or --text".into()),
            };
            println!("{}", plan.render(category, &context)?.text);
        }
        Command::Serve {
            port,
            ref host,
            ref static_dir,
        } => {
            let config = config()?;
            let backend = build_backend(&config, cli.backend.mode(), &data.cache_dir())?;
            let state = Arc::new(AppState::new(
                data.clone(),
                backend,
                config.digest(),
                config.max_concurrency,
            ));
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            eprintln!("serving {} on http://{addr}", data.root().display());
            rubricate_service::serve(addr, state, static_dir.clone()).await?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn anonymize_all(comments: &[Comment]) -> (Vec<Comment>, usize) {
    let mut changed = 0;
    let out = comments
        .iter()
        .map(|c| {
            let text = anonymize(&c.text);
            changed += usize::from(text != c.text);
            Comment { text, ..c.clone() }
        })
        .collect();
    (out, changed)
}

/// Mean prompt length in tokens over every (comment, category) cell.
pub fn mean_prompt_tokens(corpus: &Corpus, rubric: &Rubric, plan: &PromptPlan) -> AnyResult<f64> {
    let mut total = 0u64;
    let mut n = 0u64;
    for comment in corpus.comments() {
        let context = corpus.context_for(comment);
        for key in rubric.keys() {
            total += count_tokens(&plan.render(key, &context)?.text);
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { total as f64 / n as f64 })
}

fn write_or_print(out: Option<&Path>, text: &str) -> AnyResult<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
            eprintln!("wrote {}", PathBuf::from(path).display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn disagreement_table(list: &DisagreementList) -> String {
    let mut out = format!(
        "{} vs run {} ({}): {} comments\n",
        list.category,
        list.run_id,
        list.strategy,
        list.rows.len()
    );
    for r in &list.rows {
        let _ = writeln!(
            out,
            "{}\thuman={}\tmodel={}\t{}",
            r.comment_id,
            r.human_label,
            r.model_label,
            one_line(&r.text)
        );
    }
    out
}

fn disagreement_csv(list: &DisagreementList) -> String {
    let mut out = String::from("comment_id,human_label,model_label,text\n");
    for r in &list.rows {
        let text = one_line(&r.text).replace('"', "\"\"");
        let _ = writeln!(out, "{},{},{},\"{text}\"", r.comment_id, r.human_label, r.model_label);
    }
    out
}
