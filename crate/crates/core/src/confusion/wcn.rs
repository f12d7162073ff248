use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ConfusionPair, ConfusionSet, Occurrence, OccurrenceSource};
use crate::corpus::{write_atomic, NoiseModel};
use crate::error::{Error, Result};

pub const EPSILON: &str = "<eps>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordConfusionNetwork {
    #[serde(rename = "id")]
    pub utterance_id: String,
    /// Competing (word, posterior) hypotheses per time slot.
    pub bins: Vec<Vec<(String, f64)>>,
}

impl WordConfusionNetwork {
    pub fn new(utterance_id: impl Into<String>, bins: Vec<Vec<(String, f64)>>) -> Result<Self> {
        let w = WordConfusionNetwork {
            utterance_id: utterance_id.into(),
            bins,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, bin) in self.bins.iter().enumerate() {
            if bin.iter().any(|(_, p)| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation(format!("{}: bin {i} has a posterior outside [0,1]", self.utterance_id)));
            }
            if bin.iter().map(|(_, p)| p).sum::<f64>() > 1.0 + 1e-6 {
                return Err(Error::Validation(format!("{}: bin {i} posteriors sum above 1", self.utterance_id)));
            }
        }
        Ok(())
    }

    fn top(bin: &[(String, f64)]) -> Option<&str> {
        let mut best: Option<&(String, f64)> = None;
        for e in bin {
            if best.is_none_or(|b| e.1 > b.1) {
                best = Some(e);
            }
        }
        best.map(|(w, _)| w.as_str())
    }

    /// Highest-posterior path with epsilon slots dropped.
    pub fn best_path(&self) -> Vec<String> {
        self.bins
            .iter()
            .filter_map(|b| Self::top(b))
            .filter(|w| *w != EPSILON)
            .map(String::from)
            .collect()
    }

    /// Best path with `word` forced into slot `bin`, plus that word's token index.
    pub fn context_with(&self, bin: usize, word: &str) -> Option<(Vec<String>, usize)> {
        if bin >= self.bins.len() || word == EPSILON {
            return None;
        }
        let mut tokens = Vec::with_capacity(self.bins.len());
        let mut position = 0;
        for (i, b) in self.bins.iter().enumerate() {
            if i == bin {
                position = tokens.len();
                tokens.push(word.to_string());
            } else if let Some(w) = Self::top(b).filter(|w| *w != EPSILON) {
                tokens.push(w.to_string());
            }
        }
        Some((tokens, position))
    }
}

pub fn load_wcns(path: &Path) -> Result<Vec<WordConfusionNetwork>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w: WordConfusionNetwork = serde_json::from_str(line).map_err(|e| Error::parse(&source, idx + 1, e.to_string()))?;
        w.validate().map_err(|e| Error::parse(&source, idx + 1, e.to_string()))?;
        out.push(w);
    }
    Ok(out)
}

pub fn save_wcns(wcns: &[WordConfusionNetwork], path: &Path) -> Result<()> {
    let mut out = String::new();
    for w in wcns {
        out.push_str(&serde_json::to_string(w)?);
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Every unordered pair of distinct non-epsilon words sharing a bin, both at
/// or above `posterior_threshold`.
pub fn extract_confusions_wcn(wcns: &[WordConfusionNetwork], posterior_threshold: f64) -> Result<ConfusionSet> {
    if !(0.0..=1.0).contains(&posterior_threshold) {
        return Err(Error::Argument(format!("posterior threshold {posterior_threshold} outside [0,1]")));
    }
    let mut set = ConfusionSet::new();
    for wcn in wcns {
        for (t, bin) in wcn.bins.iter().enumerate() {
            let mut words: Vec<&str> = bin
                .iter()
                .filter(|(w, p)| w != EPSILON && *p >= posterior_threshold)
                .map(|(w, _)| w.as_str())
                .collect();
            words.sort_unstable();
            words.dedup();
            for (i, a) in words.iter().enumerate() {
                for b in &words[i + 1..] {
                    let occ = |w: &str| Occurrence {
                        word: w.to_string(),
                        utterance_id: wcn.utterance_id.clone(),
                        position: t,
                        source: OccurrenceSource::Wcn,
                    };
                    if let Some(p) = ConfusionPair::new(occ(a), occ(b)) {
                        set.insert(p);
                    }
                }
            }
        }
    }
    Ok(set)
}

/// Confusion network for a clean transcript, one bin per token.
///
/// With the model's substitution rate a confusable word wins the bin; with the
/// deletion rate epsilon wins. Otherwise the spoken word wins and a sampled
/// competitor keeps part of the remaining mass.
pub fn simulate_wcn(utterance_id: &str, tokens: &[String], model: &NoiseModel, stream: u64) -> WordConfusionNetwork {
    let mut rng = model.rng(stream);
    let mut bins = Vec::with_capacity(tokens.len());
    for tok in tokens {
        let u: f64 = rng.gen();
        let competitor = model.sample_candidate(tok, &mut rng).map(String::from);
        let mut bin = Vec::with_capacity(3);
        if u < model.substitution_rate && competitor.is_some() {
            let top = rng.gen_range(0.45..0.75);
            let spoken = (1.0 - top) * rng.gen_range(0.3..0.9);
            bin.push((competitor.unwrap_or_default(), top));
            bin.push((tok.clone(), spoken));
        } else if u < model.substitution_rate + model.deletion_rate {
            let top = rng.gen_range(0.5..0.8);
            bin.push((EPSILON.to_string(), top));
            bin.push((tok.clone(), 1.0 - top));
        } else {
            let top = rng.gen_range(0.55..0.95);
            bin.push((tok.clone(), top));
            if let Some(c) = competitor {
                bin.push((c, (1.0 - top) * rng.gen_range(0.3..0.9)));
            }
        }
        bins.push(bin);
    }
    WordConfusionNetwork {
        utterance_id: utterance_id.to_string(),
        bins,
    }
}
