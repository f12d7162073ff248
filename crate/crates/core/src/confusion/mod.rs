//! Acoustic confusion extraction: word pairs that an ASR system confuses,
//! mined from aligned (manual, ASR) transcripts or from word confusion networks.

mod med;
mod wcn;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{write_atomic, Dataset, TokenSource};
use crate::error::{Error, Result};

pub use med::{alignment_cost, extract_confusions_med, med_align, AlignmentOp};
pub use wcn::{extract_confusions_wcn, load_wcns, save_wcns, simulate_wcn, WordConfusionNetwork, EPSILON};

pub const DEFAULT_POSTERIOR_THRESHOLD: f64 = 0.01;

/// Which token stream an occurrence position indexes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OccurrenceSource {
    Manual,
    Asr,
    /// Bin index of the utterance's confusion network.
    Wcn,
}

impl From<TokenSource> for OccurrenceSource {
    fn from(s: TokenSource) -> Self {
        match s {
            TokenSource::Manual => OccurrenceSource::Manual,
            TokenSource::Asr => OccurrenceSource::Asr,
        }
    }
}

/// One word at one position of one utterance. Field order is the canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Occurrence {
    pub word: String,
    pub utterance_id: String,
    pub position: usize,
    pub source: OccurrenceSource,
}

/// Two acoustically confusable word occurrences, stored in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfusionPair {
    a: Occurrence,
    b: Occurrence,
}

impl ConfusionPair {
    /// Returns `None` when both occurrences carry the same word.
    pub fn new(x: Occurrence, y: Occurrence) -> Option<Self> {
        if x.word == y.word {
            return None;
        }
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Some(ConfusionPair { a, b })
    }

    pub fn a(&self) -> &Occurrence {
        &self.a
    }

    pub fn b(&self) -> &Occurrence {
        &self.b
    }

    pub fn words(&self) -> (&str, &str) {
        (&self.a.word, &self.b.word)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionSet {
    pairs: BTreeSet<ConfusionPair>,
}

impl ConfusionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pair: ConfusionPair) -> bool {
        self.pairs.insert(pair)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ConfusionPair> {
        self.pairs.iter()
    }

    pub fn extend(&mut self, other: ConfusionSet) {
        self.pairs.extend(other.pairs);
    }

    /// Distinct word-type pairs with their occurrence counts.
    pub fn word_pair_counts(&self) -> BTreeMap<(String, String), usize> {
        let mut counts = BTreeMap::new();
        for p in &self.pairs {
            *counts.entry((p.a.word.clone(), p.b.word.clone())).or_insert(0) += 1;
        }
        counts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&serde_json::to_string(p).expect("pair serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str, source: &str) -> Result<Self> {
        let mut set = ConfusionSet::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: ConfusionPair = serde_json::from_str(line).map_err(|e| Error::parse(source, idx + 1, e.to_string()))?;
            let p = ConfusionPair::new(p.a, p.b)
                .ok_or_else(|| Error::parse(source, idx + 1, "confusion pair with identical words"))?;
            set.insert(p);
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, &path.display().to_string())
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

impl FromIterator<ConfusionPair> for ConfusionSet {
    fn from_iter<I: IntoIterator<Item = ConfusionPair>>(iter: I) -> Self {
        ConfusionSet {
            pairs: iter.into_iter().collect(),
        }
    }
}

/// Resolves occurrences back to the sentence they were observed in.
#[derive(Debug, Clone, Default)]
pub struct OccurrenceContexts {
    manual: HashMap<String, Vec<String>>,
    asr: HashMap<String, Vec<String>>,
    wcns: HashMap<String, WordConfusionNetwork>,
}

impl OccurrenceContexts {
    pub fn new(dataset: &Dataset, wcns: &[WordConfusionNetwork]) -> Self {
        let mut ctx = OccurrenceContexts::default();
        for ex in &dataset.examples {
            ctx.manual.insert(ex.id.clone(), ex.manual_tokens.clone());
            if let Some(asr) = &ex.asr_tokens {
                ctx.asr.insert(ex.id.clone(), asr.clone());
            }
        }
        for w in wcns {
            ctx.wcns.insert(w.utterance_id.clone(), w.clone());
        }
        ctx
    }

    /// The token sequence containing `occ` and the index of `occ` within it.
    pub fn sentence(&self, occ: &Occurrence) -> Result<(Vec<String>, usize)> {
        let missing = || Error::Argument(format!("no context for occurrence {occ:?}"));
        match occ.source {
            OccurrenceSource::Manual | OccurrenceSource::Asr => {
                let map = if occ.source == OccurrenceSource::Manual { &self.manual } else { &self.asr };
                let toks = map.get(&occ.utterance_id).ok_or_else(missing)?;
                if toks.get(occ.position) != Some(&occ.word) {
                    return Err(missing());
                }
                Ok((toks.clone(), occ.position))
            }
            OccurrenceSource::Wcn => {
                let wcn = self.wcns.get(&occ.utterance_id).ok_or_else(missing)?;
                wcn.context_with(occ.position, &occ.word).ok_or_else(missing)
            }
        }
    }
}

/// Input available to confusion extractors.
pub struct ExtractionInput<'a> {
    pub dataset: &'a Dataset,
    pub wcns: Option<&'a [WordConfusionNetwork]>,
}

/// A confusion extraction strategy, selected by name from [`ExtractorRegistry`].
pub trait ConfusionExtractor: Send + Sync {
    fn name(&self) -> &'static str;
    fn extract(&self, input: &ExtractionInput<'_>) -> Result<ConfusionSet>;
}

pub struct MedExtractor;

impl ConfusionExtractor for MedExtractor {
    fn name(&self) -> &'static str {
        "med"
    }

    fn extract(&self, input: &ExtractionInput<'_>) -> Result<ConfusionSet> {
        Ok(extract_confusions_med(input.dataset))
    }
}

pub struct WcnExtractor {
    pub posterior_threshold: f64,
}

impl ConfusionExtractor for WcnExtractor {
    fn name(&self) -> &'static str {
        "wcn"
    }

    fn extract(&self, input: &ExtractionInput<'_>) -> Result<ConfusionSet> {
        let wcns = input
            .wcns
            .ok_or_else(|| Error::Config("wcn extraction needs confusion networks (wcn_path)".into()))?;
        extract_confusions_wcn(wcns, self.posterior_threshold)
    }
}

/// Options shared by extractor constructors.
#[derive(Debug, Clone, Copy)]
pub struct ExtractorOptions {
    pub posterior_threshold: f64,
}

impl Default for ExtractorOptions {
    fn default() -> Self {
        ExtractorOptions {
            posterior_threshold: DEFAULT_POSTERIOR_THRESHOLD,
        }
    }
}

type ExtractorCtor = fn(&ExtractorOptions) -> Box<dyn ConfusionExtractor>;

pub struct ExtractorRegistry {
    ctors: BTreeMap<&'static str, ExtractorCtor>,
}

impl ExtractorRegistry {
    pub fn empty() -> Self {
        ExtractorRegistry { ctors: BTreeMap::new() }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("med", |_| Box::new(MedExtractor));
        r.register("wcn", |o| {
            Box::new(WcnExtractor {
                posterior_threshold: o.posterior_threshold,
            })
        });
        r
    }

    pub fn register(&mut self, name: &'static str, ctor: ExtractorCtor) {
        self.ctors.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ctors.keys().copied().collect()
    }

    pub fn build(&self, name: &str, options: &ExtractorOptions) -> Result<Box<dyn ConfusionExtractor>> {
        let ctor = self
            .ctors
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown confusion extraction method {name:?} (known: {:?})", self.names())))?;
        Ok(ctor(options))
    }
}
