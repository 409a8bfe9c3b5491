//! Prompt rendering for the three prompting strategies.
//!
//! Templates are plain text files at `templates/<strategy>/<category_key>.txt`
//! with the placeholders `{playlistName}`, `{videoName}` and `{comment}`.
//! Zero-shot templates are the whole prompt. K-shot templates hold the
//! instruction header, a line containing only `{examples}`, and the query
//! block, whose last line is the answer cue (`Label:` or `Explanation:`).
//! Each worked example is the query block filled with the shot's context
//! and its cue replaced by the shot's explanation and label.
//!
//! Lines are joined with `\n`, blocks are separated by one blank line, and
//! rendered prompts carry no trailing newline.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::{fields_digest, sha256_hex};
use crate::rubric::Rubric;

pub const DEFAULT_K: usize = 3;
pub const EXAMPLES_MARKER: &str = "{examples}";
const PLACEHOLDERS: [&str; 3] = ["{playlistName}", "{videoName}", "{comment}"];

const SHIPPED_SHOTS: &str = include_str!("../assets/shots/sight-v1.toml");

macro_rules! shipped_templates {
    ($($strategy:literal / $key:literal),* $(,)?) => {
        &[$(($strategy, $key, include_str!(concat!("../assets/templates/", $strategy, "/", $key, ".txt")))),*]
    };
}

const SHIPPED_TEMPLATES: &[(&str, &str, &str)] = shipped_templates![
    "zero_shot" / "general",
    "zero_shot" / "confusion",
    "zero_shot" / "pedagogy",
    "zero_shot" / "setup",
    "zero_shot" / "personal",
    "zero_shot" / "clarification",
    "zero_shot" / "gratitude",
    "zero_shot" / "nonenglish",
    "zero_shot" / "na",
    "k_shot" / "general",
    "k_shot" / "confusion",
    "k_shot" / "pedagogy",
    "k_shot" / "setup",
    "k_shot" / "personal",
    "k_shot" / "clarification",
    "k_shot" / "gratitude",
    "k_shot" / "nonenglish",
    "k_shot" / "na",
    "k_shot_reasoning" / "general",
    "k_shot_reasoning" / "confusion",
    "k_shot_reasoning" / "pedagogy",
    "k_shot_reasoning" / "setup",
    "k_shot_reasoning" / "personal",
    "k_shot_reasoning" / "clarification",
    "k_shot_reasoning" / "gratitude",
    "k_shot_reasoning" / "nonenglish",
    "k_shot_reasoning" / "na",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    KShot,
    KShotReasoning,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::ZeroShot, Strategy::KShot, Strategy::KShotReasoning];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::ZeroShot => "zero_shot",
            Strategy::KShot => "k_shot",
            Strategy::KShotReasoning => "k_shot_reasoning",
        }
    }

    /// Row label in agreement tables (`0-shot`, `3-shot`, `3-shot-R`).
    pub fn table_label(self, k: usize) -> String {
        match self {
            Strategy::ZeroShot => "0-shot".to_string(),
            Strategy::KShot => format!("{k}-shot"),
            Strategy::KShotReasoning => format!("{k}-shot-R"),
        }
    }

    pub fn uses_shots(self) -> bool {
        !matches!(self, Strategy::ZeroShot)
    }

    fn cue(self) -> Option<&'static str> {
        match self {
            Strategy::ZeroShot => None,
            Strategy::KShot => Some("Label:"),
            Strategy::KShotReasoning => Some("Explanation:"),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero_shot" | "0-shot" => Ok(Strategy::ZeroShot),
            "k_shot" => Ok(Strategy::KShot),
            "k_shot_reasoning" => Ok(Strategy::KShotReasoning),
            other => Err(PromptError::UnknownStrategy(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptContext {
    pub playlist_name: String,
    pub video_name: String,
    pub comment_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleShot {
    pub context: PromptContext,
    pub label: bool,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub category_key: String,
    pub strategy: Strategy,
    pub content_hash: String,
}

impl RenderedPrompt {
    pub fn new(text: String, category_key: &str, strategy: Strategy) -> Self {
        let content_hash = sha256_hex(&text);
        RenderedPrompt {
            text,
            category_key: category_key.to_string(),
            strategy,
            content_hash,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown strategy `{0}` (expected zero_shot, k_shot or k_shot_reasoning)")]
    UnknownStrategy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("template {strategy}/{category}: missing placeholder {placeholder}")]
    MissingPlaceholder {
        strategy: Strategy,
        category: String,
        placeholder: &'static str,
    },
    #[error("template {strategy}/{category}: {message}")]
    MalformedTemplate {
        strategy: Strategy,
        category: String,
        message: String,
    },
    #[error("no template for {strategy}/{category}")]
    MissingTemplate { strategy: Strategy, category: String },
    #[error("{strategy} expects {expected} shots, got {actual}")]
    ShotCountMismatch {
        strategy: Strategy,
        expected: usize,
        actual: usize,
    },
    #[error("prompt context field `{0}` is empty")]
    EmptyContext(&'static str),
    #[error("shot library parse error: {0}")]
    ShotParse(String),
    #[error("shot library has no shots for category `{0}`")]
    MissingShots(String),
    #[error("category `{category}` has {available} shots, {requested} requested")]
    NotEnoughShots {
        category: String,
        available: usize,
        requested: usize,
    },
    #[error("category `{category}`: reasoning shot {index} has no explanation")]
    MissingExplanation { category: String, index: usize },
    #[error("shot library references unknown category `{0}`")]
    UnknownCategory(String),
}

/// One parsed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    strategy: Strategy,
    category: String,
    layout: Layout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Layout {
    Whole(String),
    Shots { header: String, query: String },
}

impl Template {
    pub fn parse(strategy: Strategy, category: &str, raw: &str) -> Result<Template, PromptError> {
        let text = raw.trim_end_matches('\n');
        let malformed = |message: &str| PromptError::MalformedTemplate {
            strategy,
            category: category.to_string(),
            message: message.to_string(),
        };
        for placeholder in PLACEHOLDERS {
            if !text.contains(placeholder) {
                return Err(PromptError::MissingPlaceholder {
                    strategy,
                    category: category.to_string(),
                    placeholder,
                });
            }
        }
        let marker_line = format!("\n{EXAMPLES_MARKER}\n");
        let layout = match strategy.cue() {
            None => {
                if text.contains(EXAMPLES_MARKER) {
                    return Err(malformed("zero-shot templates take no examples"));
                }
                Layout::Whole(text.to_string())
            }
            Some(cue) => {
                let (header, query) = text
                    .split_once(&marker_line)
                    .ok_or_else(|| malformed("missing `{examples}` marker line"))?;
                if query.contains(EXAMPLES_MARKER) {
                    return Err(malformed("more than one `{examples}` marker"));
                }
                let last = query.rsplit('\n').next().unwrap_or("");
                if last != cue {
                    return Err(malformed(&format!("query block must end with `{cue}`")));
                }
                if !query.contains("\n") {
                    return Err(malformed("query block is a single line"));
                }
                Layout::Shots {
                    header: header.to_string(),
                    query: query.to_string(),
                }
            }
        };
        Ok(Template {
            strategy,
            category: category.to_string(),
            layout,
        })
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    /// The template as it would appear on disk (without trailing newline).
    pub fn source(&self) -> String {
        match &self.layout {
            Layout::Whole(t) => t.clone(),
            Layout::Shots { header, query } => format!("{header}\n{EXAMPLES_MARKER}\n{query}"),
        }
    }

    pub fn render(&self, context: &PromptContext, shots: &[ExampleShot]) -> Result<RenderedPrompt, PromptError> {
        check_context(context)?;
        let text = match &self.layout {
            Layout::Whole(text) => {
                if !shots.is_empty() {
                    return Err(PromptError::ShotCountMismatch {
                        strategy: self.strategy,
                        expected: 0,
                        actual: shots.len(),
                    });
                }
                fill(text, context)
            }
            Layout::Shots { header, query } => {
                if shots.is_empty() {
                    return Err(PromptError::ShotCountMismatch {
                        strategy: self.strategy,
                        expected: DEFAULT_K,
                        actual: 0,
                    });
                }
                let (body, _cue) = query.rsplit_once('\n').expect("validated at parse");
                let mut out = format!("{header}\n");
                for (index, shot) in shots.iter().enumerate() {
                    check_context(&shot.context)?;
                    out.push_str(&fill(body, &shot.context));
                    out.push('\n');
                    if self.strategy == Strategy::KShotReasoning {
                        let explanation = shot
                            .explanation
                            .as_deref()
                            .filter(|e| !e.trim().is_empty())
                            .ok_or_else(|| PromptError::MissingExplanation {
                                category: self.category.clone(),
                                index,
                            })?;
                        out.push_str("Explanation: ");
                        out.push_str(explanation);
                        out.push('\n');
                    }
                    out.push_str(if shot.label { "Label: true" } else { "Label: false" });
                    out.push_str("\n\n");
                }
                out.push_str(&fill(query, context));
                out
            }
        };
        Ok(RenderedPrompt::new(text, &self.category, self.strategy))
    }
}

fn check_context(context: &PromptContext) -> Result<(), PromptError> {
    for (name, value) in [
        ("playlist_name", &context.playlist_name),
        ("video_name", &context.video_name),
        ("comment_text", &context.comment_text),
    ] {
        if value.trim().is_empty() {
            return Err(PromptError::EmptyContext(name));
        }
    }
    Ok(())
}

/// Single-pass placeholder substitution; substituted values are never rescanned.
fn fill(template: &str, context: &PromptContext) -> String {
    let mut out = String::with_capacity(template.len() + context.comment_text.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (placeholder, value) in [
            ("{playlistName}", &context.playlist_name),
            ("{videoName}", &context.video_name),
            ("{comment}", &context.comment_text),
        ] {
            if let Some(after) = tail.strip_prefix(placeholder) {
                out.push_str(value);
                rest = after;
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

/// Templates for every (strategy, category) pair of a rubric.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<(Strategy, String), Template>,
}

impl TemplateSet {
    /// The shipped templates for the nine-category rubric.
    pub fn shipped() -> TemplateSet {
        let mut templates = BTreeMap::new();
        for (strategy, key, raw) in SHIPPED_TEMPLATES {
            let strategy: Strategy = strategy.parse().expect("known strategy");
            let template = Template::parse(strategy, key, raw).expect("shipped template is valid");
            templates.insert((strategy, key.to_string()), template);
        }
        TemplateSet { templates }
    }

    /// Loads `<dir>/<strategy>/<key>.txt` for every category and strategy.
    /// Strategies whose directory is absent are skipped.
    pub fn load_dir(dir: &Path, rubric: &Rubric) -> Result<TemplateSet, PromptError> {
        let mut templates = BTreeMap::new();
        for strategy in Strategy::ALL {
            let sub = dir.join(strategy.as_str());
            if !sub.is_dir() {
                continue;
            }
            for key in rubric.keys() {
                let path = sub.join(format!("{key}.txt"));
                let raw = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.clone(),
                    source,
                })?;
                templates.insert((strategy, key.to_string()), Template::parse(strategy, key, &raw)?);
            }
        }
        Ok(TemplateSet { templates })
    }

    pub fn get(&self, strategy: Strategy, category: &str) -> Result<&Template, PromptError> {
        self.templates
            .get(&(strategy, category.to_string()))
            .ok_or_else(|| PromptError::MissingTemplate {
                strategy,
                category: category.to_string(),
            })
    }

    pub fn render(
        &self,
        category: &str,
        strategy: Strategy,
        context: &PromptContext,
        shots: &[ExampleShot],
    ) -> Result<RenderedPrompt, PromptError> {
        self.get(strategy, category)?.render(context, shots)
    }

    /// Errors unless every rubric category has a template for `strategy`.
    pub fn check_complete(&self, rubric: &Rubric, strategy: Strategy) -> Result<(), PromptError> {
        for key in rubric.keys() {
            self.get(strategy, key)?;
        }
        Ok(())
    }

    pub fn digest(&self, strategy: Strategy) -> String {
        let sources: Vec<String> = self
            .templates
            .iter()
            .filter(|((s, _), _)| *s == strategy)
            .flat_map(|((_, key), t)| [key.clone(), t.source()])
            .collect();
        fields_digest(sources.iter().map(String::as_str))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShotFile {
    #[serde(default)]
    version: String,
    #[serde(default, rename = "shot")]
    shots: Vec<ShotRow>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShotRow {
    category: String,
    playlist_name: String,
    video_name: String,
    comment: String,
    label: bool,
    #[serde(default)]
    explanation: Option<String>,
}

/// Worked examples per category, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotLibrary {
    pub version: String,
    shots: BTreeMap<String, Vec<ExampleShot>>,
}

impl ShotLibrary {
    pub fn shipped(rubric: &Rubric) -> Result<ShotLibrary, PromptError> {
        ShotLibrary::from_toml_str(SHIPPED_SHOTS, rubric)
    }

    pub fn load(path: &Path, rubric: &Rubric) -> Result<ShotLibrary, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        ShotLibrary::from_toml_str(&text, rubric)
    }

    pub fn from_toml_str(text: &str, rubric: &Rubric) -> Result<ShotLibrary, PromptError> {
        let file: ShotFile = toml::from_str(text).map_err(|e| PromptError::ShotParse(e.to_string()))?;
        let mut shots: BTreeMap<String, Vec<ExampleShot>> = BTreeMap::new();
        for row in file.shots {
            if rubric.category(&row.category).is_none() {
                return Err(PromptError::UnknownCategory(row.category));
            }
            let shot = ExampleShot {
                context: PromptContext {
                    playlist_name: row.playlist_name,
                    video_name: row.video_name,
                    comment_text: row.comment,
                },
                label: row.label,
                explanation: row.explanation,
            };
            check_context(&shot.context)?;
            shots.entry(row.category).or_default().push(shot);
        }
        for key in rubric.keys() {
            if shots.get(key).is_none_or(Vec::is_empty) {
                return Err(PromptError::MissingShots(key.to_string()));
            }
        }
        Ok(ShotLibrary {
            version: file.version,
            shots,
        })
    }

    pub fn all(&self, category: &str) -> &[ExampleShot] {
        self.shots.get(category).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The first `k` shots of a category, checked against the strategy.
    pub fn select(&self, category: &str, strategy: Strategy, k: usize) -> Result<&[ExampleShot], PromptError> {
        if !strategy.uses_shots() {
            return Ok(&[]);
        }
        let all = self.all(category);
        if all.is_empty() {
            return Err(PromptError::MissingShots(category.to_string()));
        }
        if all.len() < k || k == 0 {
            return Err(PromptError::NotEnoughShots {
                category: category.to_string(),
                available: all.len(),
                requested: k,
            });
        }
        let chosen = &all[..k];
        if strategy == Strategy::KShotReasoning {
            if let Some(index) = chosen
                .iter()
                .position(|s| s.explanation.as_deref().is_none_or(|e| e.trim().is_empty()))
            {
                return Err(PromptError::MissingExplanation {
                    category: category.to_string(),
                    index,
                });
            }
        }
        Ok(chosen)
    }

    /// Checks that every rubric category can supply `k` shots for `strategy`.
    pub fn validate_for(&self, rubric: &Rubric, strategy: Strategy, k: usize) -> Result<(), PromptError> {
        for key in rubric.keys() {
            self.select(key, strategy, k)?;
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.shots).expect("shots serialize");
        sha256_hex(json)
    }
}

/// Everything needed to render prompts for one strategy.
#[derive(Debug, Clone)]
pub struct PromptPlan {
    pub templates: TemplateSet,
    pub shots: ShotLibrary,
    pub strategy: Strategy,
    pub k: usize,
}

impl PromptPlan {
    pub fn new(
        templates: TemplateSet,
        shots: ShotLibrary,
        strategy: Strategy,
        k: usize,
        rubric: &Rubric,
    ) -> Result<Self, PromptError> {
        templates.check_complete(rubric, strategy)?;
        shots.validate_for(rubric, strategy, k)?;
        Ok(PromptPlan {
            templates,
            shots,
            strategy,
            k,
        })
    }

    pub fn shipped(rubric: &Rubric, strategy: Strategy) -> Result<Self, PromptError> {
        PromptPlan::new(
            TemplateSet::shipped(),
            ShotLibrary::shipped(rubric)?,
            strategy,
            DEFAULT_K,
            rubric,
        )
    }

    pub fn render(&self, category: &str, context: &PromptContext) -> Result<RenderedPrompt, PromptError> {
        let shots = self.shots.select(category, self.strategy, self.k)?;
        self.templates.render(category, self.strategy, context, shots)
    }

    /// Digest over the templates and (for shot strategies) the shots in use.
    pub fn digest(&self) -> String {
        let k = self.k.to_string();
        let shots = if self.strategy.uses_shots() {
            self.shots.digest()
        } else {
            String::new()
        };
        fields_digest([
            self.strategy.as_str(),
            &k,
            &self.templates.digest(self.strategy),
            &shots,
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> PromptContext {
        PromptContext {
            playlist_name: "MIT 18.06 Linear Algebra, Spring 2005".into(),
            video_name: "21. Eigenvalues and Eigenvectors".into(),
            comment_text: "Thank you very much! Amazing lectures!".into(),
        }
    }

    #[test]
    fn pedagogy_zero_shot() {
        let prompt = TemplateSet::shipped()
            .render("pedagogy", Strategy::ZeroShot, &ctx(), &[])
            .unwrap();
        assert!(prompt
            .text
            .starts_with("Consider a YouTube comment from the math MIT OCW video below:\n"));
        assert!(prompt.text.contains("mentions the teacher’s instructional method"));
        assert!(prompt.text.ends_with("elaboration, and analogies."));
        assert_eq!(prompt.text.matches("Thank you very much! Amazing lectures!").count(), 1);
    }

    #[test]
    fn gratitude_zero_shot_statement() {
        let prompt = TemplateSet::shipped()
            .render("gratitude", Strategy::ZeroShot, &ctx(), &[])
            .unwrap();
        assert!(prompt
            .text
            .contains("The comment contains the word \"thanks\" or \"thank\"."));
    }

    #[test]
    fn k_shot_has_four_context_blocks() {
        let rubric = Rubric::sight_v1();
        for strategy in [Strategy::KShot, Strategy::KShotReasoning] {
            let plan = PromptPlan::shipped(&rubric, strategy).unwrap();
            for key in rubric.keys() {
                let prompt = plan.render(key, &ctx()).unwrap();
                assert_eq!(prompt.text.matches("Consider a YouTube comment").count(), 4, "{key}");
                assert_eq!(prompt.text.matches("\nLabel: ").count(), 3);
                let cue = if strategy == Strategy::KShot {
                    "\nLabel:"
                } else {
                    "\nExplanation:"
                };
                assert!(prompt.text.ends_with(cue));
            }
        }
    }

    #[test]
    fn shipped_pedagogy_shots() {
        let rubric = Rubric::sight_v1();
        let lib = ShotLibrary::shipped(&rubric).unwrap();
        let shots = lib.select("pedagogy", Strategy::KShot, 3).unwrap();
        assert_eq!(shots.len(), 3);
        assert!(shots[0].label);
        assert!(shots[0]
            .context
            .comment_text
            .contains("showing applications of linear algebra"));
        for key in rubric.keys() {
            assert_eq!(lib.all(key).len(), 3);
        }
    }

    #[test]
    fn library_missing_category() {
        let rubric = Rubric::sight_v1();
        let text = SHIPPED_SHOTS
            .split("[[shot]]")
            .filter(|block| !block.contains("category = \"na\""))
            .collect::<Vec<_>>()
            .join("[[shot]]");
        assert!(matches!(
            ShotLibrary::from_toml_str(&text, &rubric),
            Err(PromptError::MissingShots(k)) if k == "na"
        ));
    }

    #[test]
    fn reasoning_shot_without_explanation() {
        let rubric = Rubric::from_toml_str(
            "version = \"m\"\n[[category]]\nkey = \"a\"\ndisplay_name = \"A\"\nstatement = \"s\"\ntask_question = \"q\"\n",
        )
        .unwrap();
        let lib = ShotLibrary::from_toml_str(
            "[[shot]]\ncategory = \"a\"\nplaylist_name = \"p\"\nvideo_name = \"v\"\ncomment = \"c\"\nlabel = true\n",
            &rubric,
        )
        .unwrap();
        assert!(lib.validate_for(&rubric, Strategy::KShot, 1).is_ok());
        assert!(matches!(
            lib.validate_for(&rubric, Strategy::KShotReasoning, 1),
            Err(PromptError::MissingExplanation { index: 0, .. })
        ));
        assert!(matches!(
            lib.validate_for(&rubric, Strategy::KShot, 3),
            Err(PromptError::NotEnoughShots {
                available: 1,
                requested: 3,
                ..
            })
        ));
    }

    #[test]
    fn one_shot_renders_one_example() {
        let template = Template::parse(
            Strategy::KShot,
            "a",
            "Header.\n\n{examples}\nPlaylist name: {playlistName}\nVideo name: {videoName}\nComment: {comment}\nLabel:\n",
        )
        .unwrap();
        let shot = ExampleShot {
            context: PromptContext {
                playlist_name: "P".into(),
                video_name: "V".into(),
                comment_text: "C".into(),
            },
            label: false,
            explanation: None,
        };
        let prompt = template.render(&ctx(), &[shot]).unwrap();
        assert_eq!(
            prompt.text,
            "Header.\n\nPlaylist name: P\nVideo name: V\nComment: C\nLabel: false\n\nPlaylist name: MIT 18.06 Linear Algebra, Spring 2005\nVideo name: 21. Eigenvalues and Eigenvectors\nComment: Thank you very much! Amazing lectures!\nLabel:"
        );
    }

    #[test]
    fn template_errors() {
        assert!(matches!(
            Template::parse(Strategy::ZeroShot, "a", "Comment: {comment}\nVideo: {videoName}"),
            Err(PromptError::MissingPlaceholder {
                placeholder: "{playlistName}",
                ..
            })
        ));
        assert!(matches!(
            Template::parse(Strategy::KShot, "a", "{playlistName}{videoName}{comment}\nLabel:"),
            Err(PromptError::MalformedTemplate { .. })
        ));
        assert!(matches!(
            Template::parse(
                Strategy::KShotReasoning,
                "a",
                "H\n{examples}\n{playlistName}{videoName}{comment}\nLabel:"
            ),
            Err(PromptError::MalformedTemplate { .. })
        ));
        let zero = TemplateSet::shipped();
        let shot = ShotLibrary::shipped(&Rubric::sight_v1()).unwrap().all("na")[0].clone();
        assert!(matches!(
            zero.render("na", Strategy::ZeroShot, &ctx(), &[shot]),
            Err(PromptError::ShotCountMismatch {
                expected: 0,
                actual: 1,
                ..
            })
        ));
        assert!(matches!(
            zero.render("na", Strategy::KShot, &ctx(), &[]),
            Err(PromptError::ShotCountMismatch { actual: 0, .. })
        ));
        let mut empty = ctx();
        empty.comment_text = " ".into();
        assert!(matches!(
            zero.render("na", Strategy::ZeroShot, &empty, &[]),
            Err(PromptError::EmptyContext("comment_text"))
        ));
    }

    #[test]
    fn substitution_is_single_pass() {
        let mut c = ctx();
        c.comment_text = "I wrote {videoName} and {".into();
        let prompt = TemplateSet::shipped()
            .render("na", Strategy::ZeroShot, &c, &[])
            .unwrap();
        assert!(prompt.text.contains("Comment: I wrote {videoName} and {\n"));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.as_str().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!(Strategy::KShotReasoning.table_label(3), "3-shot-R");
        assert!("multi_class".parse::<Strategy>().is_err());
    }

    #[test]
    fn templates_carry_rubric_wording() {
        let rubric = Rubric::sight_v1();
        let set = TemplateSet::shipped();
        for c in &rubric.categories {
            let zero = set.get(Strategy::ZeroShot, &c.key).unwrap().source();
            assert!(zero.ends_with(&c.statement), "{}", c.key);
            for s in [Strategy::KShot, Strategy::KShotReasoning] {
                let src = set.get(s, &c.key).unwrap().source();
                assert!(src.contains(&format!("\nTask: {}\n", c.task_question)), "{}", c.key);
            }
        }
    }
}
