use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phonology::{g2p, phoneme_edit_distance, PronDict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub word: String,
    pub weight: f64,
}

/// word -> acoustically confusable vocabulary words.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool(BTreeMap<String, Vec<Candidate>>);

impl CandidatePool {
    pub fn new(map: BTreeMap<String, Vec<Candidate>>) -> Self {
        CandidatePool(map)
    }

    pub fn candidates(&self, word: &str) -> &[Candidate] {
        self.0.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// For every vocabulary word, the other words within `max_phoneme_distance`
/// (stress ignored), weighted `1 / (1 + distance)`.
pub fn build_candidate_pool(vocab: &[String], prons: &PronDict, max_phoneme_distance: usize) -> CandidatePool {
    let mut words = vocab.to_vec();
    words.sort();
    words.dedup();
    let seqs: Vec<_> = words.iter().map(|w| g2p(w, prons)).collect();
    let mut pool = BTreeMap::new();
    for (i, w) in words.iter().enumerate() {
        let mut cands: Vec<(usize, &String)> = words
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(j, other)| (phoneme_edit_distance(&seqs[i], &seqs[j], true), other))
            .filter(|&(d, _)| d <= max_phoneme_distance)
            .collect();
        cands.sort();
        let cands = cands
            .into_iter()
            .map(|(d, word)| Candidate {
                word: word.clone(),
                weight: 1.0 / (1.0 + d as f64),
            })
            .collect();
        pool.insert(w.clone(), cands);
    }
    CandidatePool(pool)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    pub insertion_rate: f64,
    pub candidate_pool: CandidatePool,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(
        substitution_rate: f64,
        deletion_rate: f64,
        insertion_rate: f64,
        candidate_pool: CandidatePool,
        seed: u64,
    ) -> Result<Self> {
        let m = NoiseModel {
            substitution_rate,
            deletion_rate,
            insertion_rate,
            candidate_pool,
            seed,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [self.substitution_rate, self.deletion_rate, self.insertion_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Config("noise rates must lie in [0, 1]".into()));
        }
        if rates.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Config("noise rates must sum to at most 1".into()));
        }
        for (w, cands) in &self.candidate_pool.0 {
            if cands.iter().any(|c| !(c.weight >= 0.0)) {
                return Err(Error::Config(format!("negative candidate weight for {w:?}")));
            }
            if !cands.is_empty() && cands.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
                return Err(Error::Config(format!("candidate weights for {w:?} sum to zero")));
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.substitution_rate == 0.0 && self.deletion_rate == 0.0 && self.insertion_rate == 0.0
    }

    pub(crate) fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub(crate) fn sample_candidate<'a>(&'a self, word: &str, rng: &mut impl Rng) -> Option<&'a str> {
        let cands = self.candidate_pool.candidates(word);
        let total: f64 = cands.iter().map(|c| c.weight).sum();
        if cands.is_empty() || total <= 0.0 {
            return None;
        }
        let mut x = rng.gen::<f64>() * total;
        for c in cands {
            if x < c.weight {
                return Some(&c.word);
            }
            x -= c.weight;
        }
        cands.last().map(|c| c.word.as_str())
    }
}

/// Corrupts a transcript with one substitute/delete/insert/keep event per token.
///
/// `stream` selects an independent random stream so each utterance of a corpus
/// gets its own reproducible noise.
pub fn simulate_asr(tokens: &[String], model: &NoiseModel, stream: u64) -> Vec<String> {
    if model.is_identity() {
        return tokens.to_vec();
    }
    let mut rng = model.rng(stream);
    let vocab: Vec<&str> = model.candidate_pool.words().collect();
    let (sub, del, ins) = (model.substitution_rate, model.deletion_rate, model.insertion_rate);
    let mut out = Vec::with_capacity(tokens.len() + 2);
    for tok in tokens {
        let u: f64 = rng.gen();
        if u < sub {
            match model.sample_candidate(tok, &mut rng) {
                Some(c) => out.push(c.to_string()),
                None => out.push(tok.clone()),
            }
        } else if u < sub + del {
            // dropped
        } else if u < sub + del + ins {
            out.push(tok.clone());
            if !vocab.is_empty() {
                out.push(vocab[rng.gen_range(0..vocab.len())].to_string());
            }
        } else {
            out.push(tok.clone());
        }
    }
    if out.is_empty() {
        if let Some(first) = tokens.first() {
            out.push(first.clone());
        }
    }
    out
}
