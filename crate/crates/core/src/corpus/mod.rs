//! Intent-detection corpora: labelled utterances with paired manual and ASR
//! transcripts, JSON-lines persistence and synthetic ASR noise.

mod noise;
pub mod synthetic;

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use noise::{build_candidate_pool, simulate_asr, Candidate, CandidatePool, NoiseModel};

/// Lowercases, strips punctuation (apostrophes are kept) and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Argument(format!("unknown split {other:?}"))),
        }
    }
}

/// Which transcript of an utterance a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenSource {
    Manual,
    Asr,
}

impl TokenSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TokenSource::Manual => "manual",
            TokenSource::Asr => "asr",
        }
    }
}

impl fmt::Display for TokenSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledExample {
    pub id: String,
    pub manual_tokens: Vec<String>,
    pub asr_tokens: Option<Vec<String>>,
    pub intent: String,
}

impl LabeledExample {
    pub fn tokens(&self, source: TokenSource) -> Option<&[String]> {
        match source {
            TokenSource::Manual => Some(&self.manual_tokens),
            TokenSource::Asr => self.asr_tokens.as_deref(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.manual_tokens.is_empty() {
            return Err(Error::Validation(format!("example {}: empty manual transcript", self.id)));
        }
        if matches!(&self.asr_tokens, Some(t) if t.is_empty()) {
            return Err(Error::Validation(format!("example {}: empty asr transcript", self.id)));
        }
        Ok(())
    }
}

/// One line of a dataset file.
#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: String,
    manual: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    asr: Option<String>,
    intent: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    /// Intent labels in first-appearance order; fixes the classifier output index.
    pub intents: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, split: Split) -> Result<Self> {
        let mut ids = HashSet::new();
        let mut intents: Vec<String> = Vec::new();
        for ex in &examples {
            ex.validate()?;
            if !ids.insert(ex.id.as_str()) {
                return Err(Error::Validation(format!("duplicate example id {:?}", ex.id)));
            }
            if !intents.contains(&ex.intent) {
                intents.push(ex.intent.clone());
            }
        }
        Ok(Dataset {
            examples,
            intents,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn has_asr(&self) -> bool {
        self.examples.iter().all(|e| e.asr_tokens.is_some())
    }

    pub fn get(&self, id: &str) -> Option<&LabeledExample> {
        self.examples.iter().find(|e| e.id == id)
    }

    /// Sorted, deduplicated words over both transcripts.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut words: Vec<String> = self
            .examples
            .iter()
            .flat_map(|e| e.manual_tokens.iter().chain(e.asr_tokens.iter().flatten()))
            .cloned()
            .collect();
        words.sort();
        words.dedup();
        words
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for ex in &self.examples {
            let rec = Record {
                id: ex.id.clone(),
                manual: ex.manual_tokens.join(" "),
                asr: ex.asr_tokens.as_ref().map(|t| t.join(" ")),
                intent: ex.intent.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, split: Split, source: &str) -> Result<Self> {
        let mut examples = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(line).map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
            examples.push(LabeledExample {
                id: rec.id,
                manual_tokens: tokenize(&rec.manual),
                asr_tokens: rec.asr.as_deref().map(tokenize),
                intent: rec.intent,
            });
        }
        Dataset::new(examples, split)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }
}

pub fn load_dataset(path: &Path, split: Split) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Dataset::from_jsonl(&text, split, &path.display().to_string())
}

/// Writes to a sibling temp file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TWO: &str = concat!(
        r#"{"id":"u1","manual":"play music","asr":"play music","intent":"PlayMusic"}"#,
        "\n",
        r#"{"id":"u2","manual":"book a table","asr":"hook a table","intent":"BookRestaurant"}"#,
        "\n"
    );

    #[test]
    fn empty_file() {
        let d = Dataset::from_jsonl("", Split::Train, "t").unwrap();
        assert!(d.is_empty());
        assert!(d.intents.is_empty());
    }

    #[test]
    fn two_records_round_trip() {
        let d = Dataset::from_jsonl(TWO, Split::Test, "t").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.intents, ["PlayMusic", "BookRestaurant"]);
        assert_eq!(d.examples[1].asr_tokens.as_deref().unwrap(), ["hook", "a", "table"]);
        assert_eq!(d.to_jsonl(), TWO);
    }

    #[test]
    fn missing_intent_is_a_parse_error_at_that_line() {
        let text = format!("{TWO}{}\n", r#"{"id":"u3","manual":"wake me"}"#);
        match Dataset::from_jsonl(&text, Split::Train, "t") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let empty = r#"{"id":"u1","manual":" !! ","intent":"X"}"#;
        assert!(matches!(Dataset::from_jsonl(empty, Split::Train, "t"), Err(Error::Validation(_))));
        let dup = format!("{TWO}{}", r#"{"id":"u1","manual":"again","intent":"X"}"#);
        assert!(matches!(Dataset::from_jsonl(&dup, Split::Train, "t"), Err(Error::Validation(_))));
    }

    #[test]
    fn tokenization() {
        assert_eq!(tokenize("Play, the SONG!  don't"), ["play", "the", "song", "don't"]);
    }

    #[test]
    fn asr_field_is_optional() {
        let d = Dataset::from_jsonl(r#"{"id":"a","manual":"hi","intent":"X"}"#, Split::Dev, "t").unwrap();
        assert!(d.examples[0].asr_tokens.is_none());
        assert!(!d.to_jsonl().contains("asr"));
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{1,6}"
    }

    proptest! {
        #[test]
        fn serialize_load_round_trip(rows in prop::collection::vec(
            (prop::collection::vec(word(), 1..6), prop::option::of(prop::collection::vec(word(), 1..6)), 0usize..4),
            0..12)) {
            let examples: Vec<_> = rows.into_iter().enumerate().map(|(i, (m, a, k))| LabeledExample {
                id: format!("u{i}"),
                manual_tokens: m,
                asr_tokens: a,
                intent: format!("Intent{k}"),
            }).collect();
            let d = Dataset::new(examples, Split::Train).unwrap();
            let text = d.to_jsonl();
            let back = Dataset::from_jsonl(&text, Split::Train, "p").unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.to_jsonl(), text);
        }
    }
}
