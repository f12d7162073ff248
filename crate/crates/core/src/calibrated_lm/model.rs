use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{uniform, Graph, Linear, Lstm, Mat, ParamId, ParamStore, Var};

pub const UNK: &str = "<unk>";
pub const CHECKPOINT_KIND: &str = "language-model";

/// Word vocabulary with `<unk>` at id 0; remaining words sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ws: Vec<String> = words.into_iter().map(|w| w.as_ref().to_string()).filter(|w| w != UNK).collect();
        ws.sort();
        ws.dedup();
        let mut all = vec![UNK.to_string()];
        all.extend(ws);
        Self::from_list(all)
    }

    /// Restores a vocabulary from its exact id order.
    pub fn from_list(words: Vec<String>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

/// Two-layer bidirectional LSTM language model.
///
/// Both directions share the token embedding. Position `t` of the forward
/// stream is predicted from the top forward state at `t - 1` (a learned start
/// state at `t = 0`); the backward stream mirrors this with a learned end state.
#[derive(Debug, Clone)]
pub struct BiLm {
    pub vocab: Vocab,
    pub d_e: usize,
    pub d_h: usize,
    pub params: ParamStore,
    ids: BiLmIds,
}

#[derive(Debug, Clone, Copy)]
struct BiLmIds {
    embed: ParamId,
    fwd: [Lstm; 2],
    bwd: [Lstm; 2],
    start: ParamId,
    end: ParamId,
    out_fwd: Linear,
    out_bwd: Linear,
}

/// Graph handles for one encoded sentence.
#[derive(Debug, Clone, Copy)]
pub struct LmVars {
    /// `T x 2 d_h`, forward and backward layer-0 states.
    pub layer0: Var,
    /// `T x 2 d_h`, forward and backward layer-1 states.
    pub layer1: Var,
    /// `1 x 2 d_h`, mean of `layer1` over positions.
    pub sentence: Var,
    pub fwd_logp: Var,
    pub bwd_logp: Var,
    fwd_dist: Var,
    bwd_dist: Var,
}

/// Per-position, per-layer token representations.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenReps {
    pub layers: [Mat; 2],
}

impl TokenReps {
    pub fn get(&self, t: usize, layer: usize) -> Array1<f64> {
        self.layers[layer].row(t).to_owned()
    }

    pub fn len(&self) -> usize {
        self.layers[0].nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRep(pub Array1<f64>);

#[derive(Debug, Clone)]
pub struct LmForward {
    pub reps: TokenReps,
    pub sentence: SentenceRep,
    /// `log p(w_t | w_<t)` of the observed tokens.
    pub fwd_logp: Vec<f64>,
    /// `log p(w_t | w_>t)` of the observed tokens.
    pub bwd_logp: Vec<f64>,
    /// Full forward log-distributions, `T x V`.
    pub fwd_log_dist: Mat,
    pub bwd_log_dist: Mat,
}

impl BiLm {
    pub fn new(vocab: Vocab, d_e: usize, d_h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let v = vocab.len();
        let embed = p.add("embed", uniform(&mut rng, v, d_e, 0.1));
        let fwd = [
            Lstm::new(&mut p, "fwd0", d_e, d_h, &mut rng),
            Lstm::new(&mut p, "fwd1", d_h, d_h, &mut rng),
        ];
        let bwd = [
            Lstm::new(&mut p, "bwd0", d_e, d_h, &mut rng),
            Lstm::new(&mut p, "bwd1", d_h, d_h, &mut rng),
        ];
        let start = p.add("start", uniform(&mut rng, 1, d_h, 0.1));
        let end = p.add("end", uniform(&mut rng, 1, d_h, 0.1));
        let out_fwd = Linear::new(&mut p, "out_fwd", d_h, v, &mut rng);
        let out_bwd = Linear::new(&mut p, "out_bwd", d_h, v, &mut rng);
        BiLm {
            vocab,
            d_e,
            d_h,
            params: p,
            ids: BiLmIds {
                embed,
                fwd,
                bwd,
                start,
                end,
                out_fwd,
                out_bwd,
            },
        }
    }

    /// Rebuilds a model around a parameter store with the standard names.
    pub fn from_params(vocab: Vocab, params: ParamStore) -> Result<Self> {
        let missing = |n: &str| Error::Checkpoint(format!("language model parameter {n:?} missing"));
        let id = |n: &str| params.id(n).ok_or_else(|| missing(n));
        let lstm = |n: &str| Lstm::from_store(&params, n).ok_or_else(|| missing(n));
        let lin = |n: &str| Linear::from_store(&params, n).ok_or_else(|| missing(n));
        let embed = id("embed")?;
        let ids = BiLmIds {
            embed,
            fwd: [lstm("fwd0")?, lstm("fwd1")?],
            bwd: [lstm("bwd0")?, lstm("bwd1")?],
            start: id("start")?,
            end: id("end")?,
            out_fwd: lin("out_fwd")?,
            out_bwd: lin("out_bwd")?,
        };
        let (v, d_e) = params.get(embed).dim();
        if v != vocab.len() {
            return Err(Error::Checkpoint(format!("embedding has {v} rows but vocabulary has {} words", vocab.len())));
        }
        let d_h = ids.fwd[0].hidden;
        Ok(BiLm {
            vocab,
            d_e,
            d_h,
            params,
            ids,
        })
    }

    pub fn to_checkpoint(&self, config: serde_json::Value) -> Checkpoint {
        let meta = serde_json::json!({
            "d_e": self.d_e,
            "d_h": self.d_h,
            "vocab": self.vocab.words(),
            "config": config,
        });
        Checkpoint::new(CHECKPOINT_KIND, meta, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let words: Vec<String> = ck.meta_field("vocab")?;
        let model = BiLm::from_params(Vocab::from_list(words), ck.store()?)?;
        let (d_e, d_h): (usize, usize) = (ck.meta_field("d_e")?, ck.meta_field("d_h")?);
        if (d_e, d_h) != (model.d_e, model.d_h) {
            return Err(Error::Checkpoint(format!(
                "metadata dims {d_e}/{d_h} disagree with tensors {}/{}",
                model.d_e, model.d_h
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path, config: serde_json::Value) -> Result<()> {
        self.to_checkpoint(config).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path, CHECKPOINT_KIND)?)
    }

    pub fn rep_dim(&self) -> usize {
        2 * self.d_h
    }

    /// Records the forward pass for `ids` on `g`.
    pub fn encode(&self, g: &mut Graph, ids: &[usize]) -> LmVars {
        let n = ids.len();
        assert!(n > 0, "empty sentence");
        let x = g.gather(self.ids.embed, ids);
        let f0 = self.ids.fwd[0].forward(g, x, false);
        let f1 = self.ids.fwd[1].forward(g, f0, false);
        let b0 = self.ids.bwd[0].forward(g, x, true);
        let b1 = self.ids.bwd[1].forward(g, b0, true);

        let start = g.param(self.ids.start);
        let fwd_in = if n > 1 {
            let prev = g.slice_rows(f1, 0, n - 1);
            g.concat_rows(&[start, prev])
        } else {
            start
        };
        let end = g.param(self.ids.end);
        let bwd_in = if n > 1 {
            let next = g.slice_rows(b1, 1, n - 1);
            g.concat_rows(&[next, end])
        } else {
            end
        };
        let fl = self.ids.out_fwd.forward(g, fwd_in);
        let fwd_dist = g.log_softmax_rows(fl);
        let bl = self.ids.out_bwd.forward(g, bwd_in);
        let bwd_dist = g.log_softmax_rows(bl);
        let fwd_logp = g.pick_rows(fwd_dist, ids);
        let bwd_logp = g.pick_rows(bwd_dist, ids);

        let layer0 = g.concat_cols(&[f0, b0]);
        let layer1 = g.concat_cols(&[f1, b1]);
        let sentence = g.mean_rows(layer1);
        LmVars {
            layer0,
            layer1,
            sentence,
            fwd_logp,
            bwd_logp,
            fwd_dist,
            bwd_dist,
        }
    }

    /// Calibrated embedding: the layer-1 representation of every token.
    pub fn embed<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Mat> {
        if tokens.is_empty() {
            return Err(Error::Argument("cannot embed an empty token sequence".into()));
        }
        let mut g = Graph::new(&self.params);
        let v = self.encode(&mut g, &self.vocab.ids(tokens));
        Ok(g.value(v.layer1).clone())
    }
}

/// Representations and observed-token log-probabilities of one sentence.
pub fn lm_forward<S: AsRef<str>>(model: &BiLm, tokens: &[S]) -> Result<LmForward> {
    if tokens.is_empty() {
        return Err(Error::Argument("language model input must be non-empty".into()));
    }
    let mut g = Graph::new(&model.params);
    let v = model.encode(&mut g, &model.vocab.ids(tokens));
    let col = |m: &Mat| m.column(0).to_vec();
    Ok(LmForward {
        reps: TokenReps {
            layers: [g.value(v.layer0).clone(), g.value(v.layer1).clone()],
        },
        sentence: SentenceRep(g.value(v.sentence).index_axis(Axis(0), 0).to_owned()),
        fwd_logp: col(g.value(v.fwd_logp)),
        bwd_logp: col(g.value(v.bwd_logp)),
        fwd_log_dist: g.value(v.fwd_dist).clone(),
        bwd_log_dist: g.value(v.bwd_dist).clone(),
    })
}

/// `(1/|x|) sum_t -log p(w_t|w_<t) - log p(w_t|w_>t)`
pub fn task_adaptive_loss(fwd_logp: &[f64], bwd_logp: &[f64]) -> f64 {
    assert_eq!(fwd_logp.len(), bwd_logp.len(), "streams must cover the same positions");
    let n = fwd_logp.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = fwd_logp.iter().zip(bwd_logp).map(|(f, b)| -f - b).sum();
    total / n as f64
}

/// Graph form of [`task_adaptive_loss`] for one encoded sentence.
pub fn task_adaptive_var(g: &mut Graph, vars: &LmVars) -> Var {
    let n = g.shape(vars.fwd_logp).0 as f64;
    let both = g.add(vars.fwd_logp, vars.bwd_logp);
    let s = g.sum(both);
    g.scale(s, -1.0 / n)
}
