//! Word acoustic embeddings from phoneme sequences.
//!
//! Each word's phonemes are embedded, run through a bidirectional LSTM and
//! average pooled into one vector; a sentence is the stack of its word vectors.

use std::collections::HashMap;

use ndarray::{Array1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{uniform, BiLstm, Graph, Grads, Mat, ParamId, ParamStore, Var};
use crate::phonology::{g2p, PhonemeSeq, PhonemeVocab, PronDict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrmConfig {
    pub embed_dim: usize,
    /// Hidden size per direction.
    pub hidden: usize,
}

impl Default for PrmConfig {
    fn default() -> Self {
        PrmConfig {
            embed_dim: 50,
            hidden: 50,
        }
    }
}

/// Handles to the refinement parameters inside a shared [`ParamStore`].
#[derive(Debug, Clone, Copy)]
pub struct Prm {
    pub embed: ParamId,
    pub encoder: BiLstm,
}

impl Prm {
    pub fn new(store: &mut ParamStore, config: &PrmConfig, rng: &mut impl Rng) -> Self {
        let vocab = PhonemeVocab::cmu();
        let mut table = uniform(rng, vocab.len(), config.embed_dim, 0.1);
        table.row_mut(PhonemeVocab::PAD).fill(0.0);
        let embed = store.add("prm.embed", table);
        let encoder = BiLstm::new(store, "prm.lstm", config.embed_dim, config.hidden, rng);
        Prm { embed, encoder }
    }

    pub fn from_store(store: &ParamStore) -> Option<Self> {
        Some(Prm {
            embed: store.id("prm.embed")?,
            encoder: BiLstm::from_store(store, "prm.lstm")?,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    /// `N x 2h` encoding of one word given its phoneme ids.
    pub fn encode_ids(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let x = g.gather(self.embed, ids);
        self.encoder.forward(g, x)
    }

    /// `1 x 2h` average of [`Prm::encode_ids`].
    pub fn word_var(&self, g: &mut Graph, ids: &[usize]) -> Var {
        let h = self.encode_ids(g, ids);
        g.mean_rows(h)
    }

    /// Word vectors for a batch of padded phoneme-id rows. Trailing padding
    /// ids are dropped before encoding.
    pub fn encode_padded(&self, g: &mut Graph, rows: &[Vec<usize>]) -> Vec<Var> {
        rows.iter()
            .map(|r| {
                let n = r.iter().rposition(|&i| i != PhonemeVocab::PAD).map_or(0, |p| p + 1);
                let ids = if n == 0 { &[PhonemeVocab::UNKNOWN][..] } else { &r[..n] };
                self.word_var(g, ids)
            })
            .collect()
    }

    /// Keeps the padding row of the embedding table fixed.
    pub fn mask_grads(&self, grads: &mut Grads) {
        grads.zero_row(self.embed, PhonemeVocab::PAD);
    }
}

/// Caches word -> phoneme ids through grapheme-to-phoneme conversion.
#[derive(Debug, Clone)]
pub struct PhonemeLookup {
    dict: PronDict,
    vocab: PhonemeVocab,
    cache: HashMap<String, Vec<usize>>,
}

impl PhonemeLookup {
    pub fn new(dict: PronDict) -> Self {
        PhonemeLookup {
            dict,
            vocab: PhonemeVocab::cmu(),
            cache: HashMap::new(),
        }
    }

    pub fn ids(&mut self, word: &str) -> &[usize] {
        if !self.cache.contains_key(word) {
            let ids = self.vocab.ids(&g2p(word, &self.dict));
            self.cache.insert(word.to_string(), ids);
        }
        &self.cache[word]
    }

    pub fn sentence_ids<S: AsRef<str>>(&mut self, tokens: &[S]) -> Vec<Vec<usize>> {
        tokens.iter().map(|t| self.ids(t.as_ref()).to_vec()).collect()
    }
}

/// Stacks per-word vectors for several sentences, encoding each distinct
/// word once. Returns one `T x 2h` variable per sentence.
pub fn acoustic_batch(g: &mut Graph, prm: &Prm, sentences: &[&[Vec<usize>]]) -> Vec<Var> {
    let mut slot: HashMap<&[usize], usize> = HashMap::new();
    let mut words: Vec<Var> = Vec::new();
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(sentences.len());
    for s in sentences {
        let r = s
            .iter()
            .map(|ids| {
                *slot.entry(ids.as_slice()).or_insert_with(|| {
                    words.push(prm.word_var(g, ids));
                    words.len() - 1
                })
            })
            .collect();
        rows.push(r);
    }
    if words.is_empty() {
        return Vec::new();
    }
    let table = g.concat_rows(&words);
    rows.iter().map(|r| g.select_rows(table, r)).collect()
}

pub fn encode_word(prm: &Prm, store: &ParamStore, phonemes: &PhonemeSeq) -> Result<Mat> {
    let ids = PhonemeVocab::cmu().ids(phonemes);
    if ids.is_empty() {
        return Err(Error::Argument("cannot encode an empty phoneme sequence".into()));
    }
    let mut g = Graph::new(store);
    let h = prm.encode_ids(&mut g, &ids);
    Ok(g.value(h).clone())
}

pub fn word_acoustic_embedding(h: &Mat) -> Result<Array1<f64>> {
    h.mean_axis(Axis(0))
        .ok_or_else(|| Error::Argument("cannot pool an empty encoding".into()))
}

/// One acoustic row per token, in token order.
pub fn sentence_acoustic<S: AsRef<str>>(tokens: &[S], dict: &PronDict, prm: &Prm, store: &ParamStore) -> Result<Mat> {
    if tokens.is_empty() {
        return Err(Error::Argument("cannot embed an empty token sequence".into()));
    }
    let mut lookup = PhonemeLookup::new(dict.clone());
    let ids = lookup.sentence_ids(tokens);
    let mut g = Graph::new(store);
    let out = acoustic_batch(&mut g, prm, &[ids.as_slice()]);
    Ok(g.value(out[0]).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_gradients;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(cfg: PrmConfig, seed: u64) -> (ParamStore, Prm) {
        let mut store = ParamStore::new();
        let prm = Prm::new(&mut store, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        (store, prm)
    }

    fn seq(s: &str) -> PhonemeSeq {
        PhonemeSeq::parse(s).unwrap()
    }

    #[test]
    fn default_dims() {
        let (store, prm) = setup(PrmConfig::default(), 0);
        let h = encode_word(&prm, &store, &seq("AY1")).unwrap();
        assert_eq!(h.dim(), (1, 100));
        assert!(store.get(prm.embed).row(PhonemeVocab::PAD).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn encoding_is_pure_and_order_sensitive() {
        let (store, prm) = setup(PrmConfig::default(), 1);
        let a = encode_word(&prm, &store, &seq("F AY1 N D")).unwrap();
        assert_eq!(a, encode_word(&prm, &store, &seq("F AY1 N D")).unwrap());
        assert_eq!(a.nrows(), 4);
        let r = encode_word(&prm, &store, &seq("D N AY1 F")).unwrap();
        assert_ne!(a, r);
        let pa = word_acoustic_embedding(&a).unwrap();
        let pr = word_acoustic_embedding(&r).unwrap();
        assert!((&pa - &pr).mapv(f64::abs).sum() > 1e-6);
    }

    #[test]
    fn stress_variants_are_distinct_inputs() {
        let (store, prm) = setup(PrmConfig::default(), 2);
        let a = encode_word(&prm, &store, &seq("F AY1 N D")).unwrap();
        let b = encode_word(&prm, &store, &seq("F AY2 N D")).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn pooling_examples() {
        let one = array![[0.5, -2.0, 3.0]];
        assert_eq!(word_acoustic_embedding(&one).unwrap(), array![0.5, -2.0, 3.0]);
        let same = array![[1.5, 2.0], [1.5, 2.0], [1.5, 2.0]];
        assert_eq!(word_acoustic_embedding(&same).unwrap(), array![1.5, 2.0]);
        let basis = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert_eq!(word_acoustic_embedding(&basis).unwrap(), array![0.5, 0.5, 0.0]);
        assert!(word_acoustic_embedding(&Mat::zeros((0, 3))).is_err());
    }

    #[test]
    fn homophones_share_rows() {
        let dict = PronDict::fixture();
        assert_eq!(dict.get("pair").unwrap()[0], dict.get("pare").unwrap()[0]);
        let (store, prm) = setup(PrmConfig::default(), 3);
        let m = sentence_acoustic(&["pair", "pare", "find"], &dict, &prm, &store).unwrap();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m.row(0), m.row(1));
        assert_ne!(m.row(0), m.row(2));
    }

    #[test]
    fn rows_follow_token_permutations() {
        let dict = PronDict::fixture();
        let (store, prm) = setup(PrmConfig { embed_dim: 8, hidden: 6 }, 4);
        let toks = ["play", "music", "book"];
        let m = sentence_acoustic(&toks, &dict, &prm, &store).unwrap();
        let perm = [2, 0, 1];
        let permuted: Vec<&str> = perm.iter().map(|&i| toks[i]).collect();
        let pm = sentence_acoustic(&permuted, &dict, &prm, &store).unwrap();
        for (r, &i) in perm.iter().enumerate() {
            assert_eq!(pm.row(r), m.row(i));
        }
    }

    #[test]
    fn padding_does_not_change_encoding() {
        let (store, prm) = setup(PrmConfig { embed_dim: 6, hidden: 5 }, 5);
        let v = PhonemeVocab::cmu();
        let word = v.ids(&seq("K UH1 K"));
        let mut padded = word.clone();
        padded.extend([PhonemeVocab::PAD; 3]);
        let mut g = Graph::new(&store);
        let single = prm.word_var(&mut g, &word);
        let batch = prm.encode_padded(&mut g, &[padded, v.ids(&seq("B UH1 K"))]);
        let diff = (g.value(single) - g.value(batch[0])).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
        assert!(diff < 1e-6);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let (store, prm) = setup(PrmConfig::default(), 6);
        let dict = PronDict::fixture();
        assert!(sentence_acoustic(&Vec::<String>::new(), &dict, &prm, &store).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (store, prm) = setup(PrmConfig { embed_dim: 3, hidden: 3 }, 7);
        let v = PhonemeVocab::cmu();
        let s1 = vec![v.ids(&seq("F AY1 N D")), v.ids(&seq("P EY1")), v.ids(&seq("F AY1 N D"))];
        let s2 = vec![v.ids(&seq("B UH1 K"))];
        let target = array![[0.3, -0.2, 0.1, 0.4, 0.0, -0.5]];
        let loss = |st: &ParamStore, grads: Option<&mut Grads>| {
            let mut g = Graph::new(st);
            let out = acoustic_batch(&mut g, &prm, &[s1.as_slice(), s2.as_slice()]);
            let t = g.constant(target.clone());
            let a = g.mean_rows(out[0]);
            let b = g.add(a, out[1]);
            let d = g.sub(b, t);
            let sq = g.square(d);
            let l = g.sum(sq);
            if let Some(gr) = grads {
                g.backward(l, gr);
                prm.mask_grads(gr);
            }
            g.scalar(l)
        };
        let r = check_gradients(&store, loss, 1e-4).unwrap();
        assert!(r.checked > 100);
    }

    proptest! {
        #[test]
        fn pooled_coordinates_within_row_bounds(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 1..6)) {
            let n = rows.len();
            let m = Mat::from_shape_vec((n, 4), rows.concat()).unwrap();
            let p = word_acoustic_embedding(&m).unwrap();
            for j in 0..4 {
                let col = m.column(j);
                let lo = col.fold(f64::INFINITY, |a, &b| a.min(b));
                let hi = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                prop_assert!(p[j] >= lo - 1e-12 && p[j] <= hi + 1e-12);
            }
        }
    }
}
