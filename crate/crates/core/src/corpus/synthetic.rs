//! Templated command corpus used for self-contained experiments.
//!
//! Every utterance carries exactly one intent keyword inside carrier phrases
//! shared by all intents. Each intent leans toward a few determiners and
//! suffixes, and every leaning is shared with another intent, so the keyword
//! predicts its neighbours while no carrier word settles the intent.
//! Each keyword has acoustically close distractor words that never occur in
//! the clean transcripts but are available to the noise model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabeledExample, Split};
use crate::error::Result;

pub struct IntentLexicon {
    pub intent: &'static str,
    pub keywords: &'static [&'static str],
    pub distractors: &'static [&'static str],
    pub determiners: &'static [&'static str],
    pub suffixes: &'static [&'static str],
}

pub const LEXICON: &[IntentLexicon] = &[
    IntentLexicon {
        intent: "PlayMusic",
        keywords: &["song", "track", "tune", "band"],
        distractors: &["long", "wrong", "sung", "truck", "trek", "rack", "dune", "tube", "tomb", "banned", "bend", "bond"],
        determiners: &["the", "some"],
        suffixes: &["now", "for me"],
    },
    IntentLexicon {
        intent: "BookRestaurant",
        keywords: &["table", "book", "dinner", "seat"],
        distractors: &["cable", "fable", "label", "hook", "look", "cook", "thinner", "winner", "sinner", "sheet", "heat", "feet"],
        determiners: &["a", "some"],
        suffixes: &["for me", "tonight"],
    },
    IntentLexicon {
        intent: "GetWeather",
        keywords: &["weather", "rain", "snow", "cloud"],
        distractors: &["whether", "feather", "leather", "reign", "train", "lane", "pain", "slow", "know", "show", "loud", "crowd", "clout"],
        determiners: &["the", "my"],
        suffixes: &["tonight", "today"],
    },
    IntentLexicon {
        intent: "SetAlarm",
        keywords: &["alarm", "wake", "timer", "clock"],
        distractors: &["alarms", "alarmed", "lake", "make", "weak", "woke", "tamer", "tiger", "timers", "lock", "block", "flock"],
        determiners: &["my", "a"],
        suffixes: &["today", "now"],
    },
];

const PREFIXES: &[&str] = &["", "please", "can you", "could you", "i want", "i need", "hey", "hey can you", "would you"];
const VERBS: &[&str] = &["", "", "get", "check"];
const DETERMINERS: &[&str] = &["", "the", "a", "my", "some"];
const SUFFIXES: &[&str] = &["", "", "now", "please", "for me", "today", "tonight", "right now", "about now"];
/// Chance that a determiner or suffix slot takes one of the intent's leanings.
const LEANING: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train_size: usize,
    pub dev_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_size: 600,
            dev_size: 200,
            test_size: 200,
            seed: 2022,
        }
    }
}

pub struct SyntheticCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

impl SyntheticCorpus {
    pub fn split(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Every word the generator or the noise model can emit, sorted.
pub fn lexicon_vocabulary() -> Vec<String> {
    let mut words: Vec<String> = LEXICON
        .iter()
        .flat_map(|l| l.keywords.iter().chain(l.distractors.iter()))
        .chain(PREFIXES.iter())
        .chain(VERBS.iter())
        .chain(DETERMINERS.iter())
        .chain(SUFFIXES.iter())
        .flat_map(|p| p.split_whitespace())
        .map(String::from)
        .collect();
    words.sort();
    words.dedup();
    words
}

fn slot<'a>(rng: &mut impl Rng, shared: &[&'a str], leaning: &[&'a str]) -> &'a str {
    let pool = if rng.gen_bool(LEANING) { leaning } else { shared };
    pool.choose(rng).expect("non-empty slot")
}

fn utterance(rng: &mut impl Rng, lex: &IntentLexicon) -> Vec<String> {
    let parts = [
        *PREFIXES.choose(rng).expect("prefixes"),
        *VERBS.choose(rng).expect("verbs"),
        slot(rng, DETERMINERS, lex.determiners),
        *lex.keywords.choose(rng).expect("keywords"),
        slot(rng, SUFFIXES, lex.suffixes),
    ];
    parts
        .iter()
        .flat_map(|p| p.split_whitespace())
        .map(String::from)
        .collect()
}

fn generate_split(rng: &mut ChaCha8Rng, split: Split, n: usize) -> Result<Dataset> {
    // balanced labels in shuffled order
    let mut labels: Vec<usize> = (0..n).map(|i| i % LEXICON.len()).collect();
    labels.shuffle(rng);
    let examples = labels
        .into_iter()
        .enumerate()
        .map(|(i, k)| LabeledExample {
            id: format!("{}-{:05}", split.as_str(), i),
            manual_tokens: utterance(rng, &LEXICON[k]),
            asr_tokens: None,
            intent: LEXICON[k].intent.to_string(),
        })
        .collect();
    Dataset::new(examples, split)
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(SyntheticCorpus {
        train: generate_split(&mut rng, Split::Train, config.train_size)?,
        dev: generate_split(&mut rng, Split::Dev, config.dev_size)?,
        test: generate_split(&mut rng, Split::Test, config.test_size)?,
    })
}
