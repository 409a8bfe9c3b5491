//! The feedback rubric: an ordered set of categories loaded from a data file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;

const SIGHT_V1: &str = include_str!("../assets/rubrics/sight-v1.toml");

/// Deterministic keyword rules a category's definition commits to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeywordRule {
    /// The text contains the word "thank" or "thanks".
    GratitudeKeyword,
    /// The text contains an `@` immediately followed by a username.
    MentionMarker,
}

impl KeywordRule {
    pub fn apply(self, text: &str) -> bool {
        match self {
            KeywordRule::GratitudeKeyword => rule_gratitude(text),
            KeywordRule::MentionMarker => rule_clarification_marker(text),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Category {
    pub key: String,
    /// Short column label used in report tables.
    #[serde(default)]
    pub abbrev: String,
    pub display_name: String,
    /// Human-facing definition shown to annotators.
    #[serde(default)]
    pub description: String,
    /// Zero-shot claim the model judges true or false.
    pub statement: String,
    /// The "Task:" question of the k-shot prompts.
    pub task_question: String,
    /// The prompt asks the opposite question, so parsed labels are flipped.
    #[serde(default, skip_serializing_if = "is_false")]
    pub invert_label: bool,
    #[serde(default, rename = "rule", skip_serializing_if = "Option::is_none")]
    pub deterministic_rule: Option<KeywordRule>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl Category {
    pub fn abbrev(&self) -> &str {
        if self.abbrev.is_empty() {
            &self.key
        } else {
            &self.abbrev
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rubric {
    pub version: String,
    #[serde(alias = "category")]
    pub categories: Vec<Category>,
}

/// On-disk shape: one `[[category]]` table per category.
#[derive(Serialize)]
struct RubricFile<'a> {
    version: &'a str,
    category: &'a [Category],
}

#[derive(Debug, thiserror::Error)]
pub enum RubricError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("rubric parse error: {0}")]
    Parse(String),
    #[error("duplicate category key `{0}`")]
    DuplicateKey(String),
    #[error("category key `{0}` must be a non-empty lowercase identifier")]
    InvalidKey(String),
    #[error("category `{key}`: field `{field}` is empty")]
    EmptyField { key: String, field: &'static str },
    #[error("rubric has no categories")]
    NoCategories,
}

impl Rubric {
    /// The shipped nine-category rubric.
    pub fn sight_v1() -> Rubric {
        Rubric::from_toml_str(SIGHT_V1).expect("shipped rubric is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Rubric, RubricError> {
        let rubric: Rubric = toml::from_str(text).map_err(|e| RubricError::Parse(e.to_string()))?;
        rubric.validate()?;
        Ok(rubric)
    }

    pub fn load(path: &Path) -> Result<Rubric, RubricError> {
        let text = std::fs::read_to_string(path).map_err(|source| RubricError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Rubric::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&RubricFile {
            version: &self.version,
            category: &self.categories,
        })
        .expect("rubric serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), RubricError> {
        std::fs::write(path, self.to_toml_string()).map_err(|source| RubricError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn validate(&self) -> Result<(), RubricError> {
        if self.categories.is_empty() {
            return Err(RubricError::NoCategories);
        }
        let mut seen = BTreeSet::new();
        for c in &self.categories {
            let valid_key = !c.key.is_empty()
                && c.key
                    .chars()
                    .all(|ch| ch.is_ascii_lowercase() || ch.is_ascii_digit() || ch == '_');
            if !valid_key {
                return Err(RubricError::InvalidKey(c.key.clone()));
            }
            if !seen.insert(c.key.as_str()) {
                return Err(RubricError::DuplicateKey(c.key.clone()));
            }
            for (field, value) in [
                ("display_name", &c.display_name),
                ("statement", &c.statement),
                ("task_question", &c.task_question),
            ] {
                if value.trim().is_empty() {
                    return Err(RubricError::EmptyField {
                        key: c.key.clone(),
                        field,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn category(&self, key: &str) -> Option<&Category> {
        self.categories.iter().find(|c| c.key == key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.key.as_str())
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_toml_string())
    }
}

/// True iff `text` contains "thank" or "thanks" as a whole word, ignoring
/// case. Word boundaries are non-letters, so "thankful" does not match.
pub fn rule_gratitude(text: &str) -> bool {
    text.split(|c: char| !c.is_alphabetic())
        .any(|word| word.eq_ignore_ascii_case("thank") || word.eq_ignore_ascii_case("thanks"))
}

/// True iff `text` contains an `@` immediately followed by a non-whitespace
/// character.
pub fn rule_clarification_marker(text: &str) -> bool {
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '@' {
            if let Some(next) = chars.peek() {
                if !next.is_whitespace() {
                    return true;
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn toml_uses_category_tables_and_json_uses_categories() {
        let r = Rubric::sight_v1();
        let toml_text = r.to_toml_string();
        assert!(toml_text.contains("[[category]]"));
        assert_eq!(Rubric::from_toml_str(&toml_text).unwrap(), r);
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["categories"].as_array().unwrap().len(), 9);
        let back: Rubric = serde_json::from_value(json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn shipped_rubric_order() {
        let rubric = Rubric::sight_v1();
        let keys: Vec<_> = rubric.keys().collect();
        assert_eq!(
            keys,
            [
                "general",
                "confusion",
                "pedagogy",
                "setup",
                "personal",
                "clarification",
                "gratitude",
                "nonenglish",
                "na"
            ]
        );
        let abbrevs: Vec<_> = rubric.categories.iter().map(Category::abbrev).collect();
        assert_eq!(
            abbrevs,
            ["gen.", "conf.", "peda.", "set.", "pers.", "clar.", "gra.", "noneng.", "na"]
        );
        let inverted: Vec<_> = rubric
            .categories
            .iter()
            .filter(|c| c.invert_label)
            .map(|c| c.key.as_str())
            .collect();
        assert_eq!(inverted, ["nonenglish"]);
        assert_eq!(
            rubric.category("gratitude").unwrap().deterministic_rule,
            Some(KeywordRule::GratitudeKeyword)
        );
    }

    #[test]
    fn round_trip() {
        let rubric = Rubric::sight_v1();
        assert_eq!(Rubric::from_toml_str(&rubric.to_toml_string()).unwrap(), rubric);
    }

    #[test]
    fn duplicate_key_rejected() {
        let text = r#"
version = "x"
[[category]]
key = "general"
display_name = "A"
statement = "s"
task_question = "q"
[[category]]
key = "general"
display_name = "B"
statement = "s"
task_question = "q"
"#;
        assert!(matches!(Rubric::from_toml_str(text), Err(RubricError::DuplicateKey(k)) if k == "general"));
    }

    #[test]
    fn empty_statement_and_unknown_field() {
        let empty = "version = \"x\"\n[[category]]\nkey = \"a\"\ndisplay_name = \"A\"\nstatement = \" \"\ntask_question = \"q\"\n";
        assert!(matches!(
            Rubric::from_toml_str(empty),
            Err(RubricError::EmptyField { field: "statement", .. })
        ));
        let unknown = "version = \"x\"\n[[category]]\nkey = \"a\"\ndisplay_name = \"A\"\nstatement = \"s\"\ntask_question = \"q\"\ncolour = \"red\"\n";
        match Rubric::from_toml_str(unknown) {
            Err(RubricError::Parse(msg)) => assert!(msg.contains("unknown field"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn custom_two_category_rubric() {
        let text = "version = \"mini\"\n[[category]]\nkey = \"a\"\ndisplay_name = \"A\"\nstatement = \"s\"\ntask_question = \"q\"\n[[category]]\nkey = \"b\"\ndisplay_name = \"B\"\nstatement = \"s\"\ntask_question = \"q\"\n";
        let rubric = Rubric::from_toml_str(text).unwrap();
        assert_eq!(rubric.len(), 2);
        assert_eq!(rubric.categories[1].abbrev(), "b");
    }

    #[test]
    fn gratitude_examples() {
        assert!(rule_gratitude("Thank you very much! Amazing lectures!"));
        assert!(!rule_gratitude("Great teacher."));
        assert!(rule_gratitude("THANKS!!!"));
        assert!(rule_gratitude("ok,thanks"));
        assert!(!rule_gratitude("so thankful"));
        assert!(!rule_gratitude("thanx"));
        assert!(rule_gratitude("thank"));
    }

    #[test]
    fn clarification_examples() {
        assert!(rule_clarification_marker("@[USERNAME] it's the math dragon theorem"));
        assert!(!rule_clarification_marker("email me at @"));
        assert!(!rule_clarification_marker("a @ b"));
        assert!(rule_clarification_marker("x@y"));
    }

    fn gratitude_oracle(text: &str) -> bool {
        let lower: Vec<char> = text.to_lowercase().chars().collect();
        let original: Vec<char> = text.chars().collect();
        if lower.len() != original.len() {
            // Fall back on per-char case folding.
            return rule_gratitude(text);
        }
        for word in ["thanks", "thank"] {
            let w: Vec<char> = word.chars().collect();
            for start in 0..lower.len() {
                if start + w.len() > lower.len() || lower[start..start + w.len()] != w[..] {
                    continue;
                }
                let before_ok = start == 0 || !lower[start - 1].is_alphabetic();
                let end = start + w.len();
                let after_ok = end == lower.len() || !lower[end].is_alphabetic();
                if before_ok && after_ok {
                    return true;
                }
            }
        }
        false
    }

    proptest! {
        #[test]
        fn gratitude_matches_scan_oracle(s in "([tT][hH][aA][nN][kK][sS]?|[a-zA-Z]{1,4}|[ !.,1])*") {
            prop_assert_eq!(rule_gratitude(&s), gratitude_oracle(&s));
        }

        #[test]
        fn marker_matches_regex_oracle(s in "[a-z@ \t\\[\\]]{0,30}") {
            let re = regex::Regex::new(r"@\S").unwrap();
            prop_assert_eq!(rule_clarification_marker(&s), re.is_match(&s));
        }
    }
}
