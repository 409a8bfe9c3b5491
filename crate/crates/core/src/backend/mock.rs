//! In-process backends for tests and offline demos.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;

use super::{count_tokens, BackendError, ChatBackend, Clock, Completion, CompletionRequest};
use crate::digest::sha256_hex;
use crate::rubric::Rubric;

type Responder = dyn Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync;

/// A scripted backend that counts calls and tracks peak concurrency.
pub struct MockBackend {
    responder: Box<Responder>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    latency: Option<(Duration, Arc<dyn Clock>)>,
    stamps: Mutex<Vec<Duration>>,
}

impl MockBackend {
    pub fn new(responder: impl Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync + 'static) -> Self {
        MockBackend {
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            latency: None,
            stamps: Mutex::new(Vec::new()),
        }
    }

    pub fn constant(text: &str) -> Self {
        let text = text.to_string();
        MockBackend::new(move |_| Ok(text.clone()))
    }

    pub fn failing(error: impl Fn(&CompletionRequest) -> BackendError + Send + Sync + 'static) -> Self {
        MockBackend::new(move |r| Err(error(r)))
    }

    /// Fails with a retryable error `failures` times, then answers `text`.
    pub fn flaky(failures: usize, text: &str) -> Self {
        let text = text.to_string();
        let seen = AtomicUsize::new(0);
        MockBackend::new(move |_| {
            if seen.fetch_add(1, Ordering::SeqCst) < failures {
                Err(BackendError::Retryable("HTTP 503".into()))
            } else {
                Ok(text.clone())
            }
        })
    }

    pub fn following(responder: RuleFollowingResponder) -> Self {
        MockBackend::new(move |r| Ok(responder.respond(&r.prompt)))
    }

    /// Each call sleeps `latency` on `clock` and records the clock time at
    /// which it started.
    pub fn with_latency(mut self, latency: Duration, clock: Arc<dyn Clock>) -> Self {
        self.latency = Some((latency, clock));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    /// Start times of calls, when a clock was supplied.
    pub fn call_times(&self) -> Vec<Duration> {
        self.stamps.lock().expect("stamps lock").clone()
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some((latency, clock)) = &self.latency {
            self.stamps.lock().expect("stamps lock").push(clock.now());
            clock.sleep(*latency).await;
        }
        let result = (self.responder)(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        let text = result?;
        Ok(Completion {
            input_tokens: count_tokens(&request.prompt),
            output_tokens: count_tokens(&text),
            text,
        })
    }
}

/// Answers rendered prompts the way a compliant model might, without any
/// model: keyword categories follow their deterministic rule, the
/// non-English category answers whether the comment is ASCII-only, and the
/// rest get a stable pseudo-random label from a digest of the comment.
/// Reasoning prompts get an explanation followed by a `Label:` line.
#[derive(Debug, Clone)]
pub struct RuleFollowingResponder {
    rubric: Rubric,
    /// Percentage of judgment-category cells answered `true`.
    pub true_rate: u8,
    /// Percentage of cells answered with an undecidable sentence.
    pub unparseable_rate: u8,
}

impl RuleFollowingResponder {
    pub fn new(rubric: Rubric) -> Self {
        RuleFollowingResponder {
            rubric,
            true_rate: 30,
            unparseable_rate: 0,
        }
    }

    pub fn with_unparseable_rate(mut self, percent: u8) -> Self {
        self.unparseable_rate = percent;
        self
    }

    /// The answer to the question asked for `category_key` about `comment`,
    /// before any label inversion. None means an undecidable reply.
    pub fn answer(&self, category_key: &str, comment: &str) -> Option<bool> {
        let digest = sha256_hex(format!("{category_key}\u{0}{comment}"));
        let roll = u8::from_str_radix(&digest[..2], 16).expect("hex") as u32 * 100 / 256;
        let roll2 = u8::from_str_radix(&digest[2..4], 16).expect("hex") as u32 * 100 / 256;
        if roll2 < self.unparseable_rate as u32 {
            return None;
        }
        Some(match self.rubric.category(category_key) {
            Some(c) if c.invert_label => comment.is_ascii(),
            Some(c) => match c.deterministic_rule {
                Some(rule) => rule.apply(comment),
                None => roll < self.true_rate as u32,
            },
            None => false,
        })
    }

    pub fn respond(&self, prompt: &str) -> String {
        let comment = prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Comment: "))
            .unwrap_or("");
        let key = self
            .rubric
            .categories
            .iter()
            .rev()
            .find(|c| prompt.contains(c.statement.as_str()) || prompt.contains(c.task_question.as_str()))
            .map(|c| c.key.as_str())
            .unwrap_or("");
        let Some(label) = self.answer(key, comment) else {
            return "It could be either.".to_string();
        };
        if prompt.trim_end().ends_with("Explanation:") {
            format!("The comment was read sentence by sentence. Therefore, the label is {label}.\nLabel: {label}")
        } else {
            label.to_string()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::promptgen::{PromptContext, PromptPlan, Strategy};

    fn ctx(text: &str) -> PromptContext {
        PromptContext {
            playlist_name: "P".into(),
            video_name: "V".into(),
            comment_text: text.into(),
        }
    }

    #[test]
    fn follows_keyword_rules_under_every_strategy() {
        let rubric = Rubric::sight_v1();
        let responder = RuleFollowingResponder::new(rubric.clone());
        for strategy in Strategy::ALL {
            let plan = PromptPlan::shipped(&rubric, strategy).unwrap();
            let yes = responder.respond(&plan.render("gratitude", &ctx("Thanks a lot")).unwrap().text);
            let no = responder.respond(&plan.render("gratitude", &ctx("Great lecture")).unwrap().text);
            assert!(yes.ends_with("true"), "{strategy}: {yes}");
            assert!(no.ends_with("false"), "{strategy}: {no}");
            let english = responder.respond(&plan.render("nonenglish", &ctx("Great lecture")).unwrap().text);
            assert!(english.ends_with("true"));
            let mention = responder.respond(&plan.render("clarification", &ctx("@[USERNAME] no")).unwrap().text);
            assert!(mention.ends_with("true"));
        }
    }

    #[test]
    fn reasoning_answers_carry_a_label_line() {
        let rubric = Rubric::sight_v1();
        let plan = PromptPlan::shipped(&rubric, Strategy::KShotReasoning).unwrap();
        let text =
            RuleFollowingResponder::new(rubric).respond(&plan.render("pedagogy", &ctx("nice proof")).unwrap().text);
        assert!(text.contains("\nLabel: "));
    }

    #[tokio::test]
    async fn mock_counts_calls() {
        let mock = MockBackend::constant("false");
        let c = mock.complete(&CompletionRequest::new("hello")).await.unwrap();
        assert_eq!(c.text, "false");
        assert!(c.input_tokens > 0);
        assert_eq!(mock.calls(), 1);
        assert_eq!(mock.peak_in_flight(), 1);
    }
}
