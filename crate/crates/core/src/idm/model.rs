use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::nn::{BiLstm, Graph, Linear, Mat, ParamStore, Var};
use crate::prm::{Prm, PrmConfig};

pub const CHECKPOINT_KIND: &str = "intent-classifier";

/// Architecture of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Total recurrent output size and attention model size.
    pub hidden: usize,
    pub heads: usize,
    pub prm: PrmConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: 300,
            heads: 8,
            prm: PrmConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.hidden % 2 != 0 {
            return Err(Error::Config(format!("classifier hidden size must be even and positive, got {}", self.hidden)));
        }
        if self.heads == 0 || self.heads > self.hidden {
            return Err(Error::Config(format!("head count {} must be in 1..={}", self.heads, self.hidden)));
        }
        if self.prm.embed_dim == 0 || self.prm.hidden == 0 {
            return Err(Error::Config("acoustic dims must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Recurrent encoder, multi-head self-attention, max pooling and a softmax
/// head over intents.
#[derive(Debug, Clone)]
pub struct IntentClassifier {
    pub params: ParamStore,
    pub intent_index: Vec<String>,
    pub lm_dim: usize,
    pub use_acoustic: bool,
    pub config: ClassifierConfig,
    pub prm: Option<Prm>,
    encoder: BiLstm,
    query: Linear,
    key: Linear,
    value: Linear,
    merge: Linear,
    out: Linear,
}

/// Inverted dropout applied while training.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

impl Dropout<'_> {
    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        if self.rate <= 0.0 {
            return x;
        }
        let keep = 1.0 - self.rate;
        let (r, c) = g.shape(x);
        let mask = Mat::from_shape_fn((r, c), |_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
        let m = g.constant(mask);
        g.mul(x, m)
    }
}

impl IntentClassifier {
    pub fn new(intent_index: Vec<String>, lm_dim: usize, use_acoustic: bool, config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if intent_index.is_empty() {
            return Err(Error::Argument("classifier needs at least one intent".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let prm = use_acoustic.then(|| Prm::new(&mut p, &config.prm, &mut rng));
        let input = lm_dim + prm.map_or(0, |x| x.output_dim());
        let d = config.hidden;
        let att = config.heads * config.head_dim();
        let encoder = BiLstm::new(&mut p, "enc", input, d / 2, &mut rng);
        let query = Linear::new(&mut p, "att.q", d, att, &mut rng);
        let key = Linear::new(&mut p, "att.k", d, att, &mut rng);
        let value = Linear::new(&mut p, "att.v", d, att, &mut rng);
        let merge = Linear::new(&mut p, "att.o", att, d, &mut rng);
        let out = Linear::new(&mut p, "out", d, intent_index.len(), &mut rng);
        Ok(IntentClassifier {
            params: p,
            intent_index,
            lm_dim,
            use_acoustic,
            config,
            prm,
            encoder,
            query,
            key,
            value,
            merge,
            out,
        })
    }

    fn from_parts(
        params: ParamStore,
        intent_index: Vec<String>,
        lm_dim: usize,
        use_acoustic: bool,
        config: ClassifierConfig,
    ) -> Result<Self> {
        let missing = |n: &str| Error::Checkpoint(format!("classifier parameter {n:?} missing"));
        let lin = |n: &str| Linear::from_store(&params, n).ok_or_else(|| missing(n));
        let prm = if use_acoustic { Some(Prm::from_store(&params).ok_or_else(|| missing("prm"))?) } else { None };
        let m = IntentClassifier {
            encoder: BiLstm::from_store(&params, "enc").ok_or_else(|| missing("enc"))?,
            query: lin("att.q")?,
            key: lin("att.k")?,
            value: lin("att.v")?,
            merge: lin("att.o")?,
            out: lin("out")?,
            prm,
            params,
            intent_index,
            lm_dim,
            use_acoustic,
            config,
        };
        let expected = m.params.get(m.encoder.fwd.w).nrows();
        if expected != m.input_dim() {
            return Err(Error::Checkpoint(format!("encoder expects {expected} inputs, metadata implies {}", m.input_dim())));
        }
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.lm_dim + self.acoustic_dim()
    }

    pub fn acoustic_dim(&self) -> usize {
        self.prm.map_or(0, |p| p.output_dim())
    }

    pub fn num_intents(&self) -> usize {
        self.intent_index.len()
    }

    /// Pooled sentence vector (`1 x hidden`) for a `T x input_dim` feature matrix.
    pub fn pooled(&self, g: &mut Graph, x: Var, mut dropout: Option<&mut Dropout<'_>>) -> Var {
        let h = self.encoder.forward(g, x);
        let q = self.query.forward(g, h);
        let k = self.key.forward(g, h);
        let v = self.value.forward(g, h);
        let hd = self.config.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for i in 0..self.config.heads {
            let qh = g.slice_cols(q, i * hd, hd);
            let kh = g.slice_cols(k, i * hd, hd);
            let vh = g.slice_cols(v, i * hd, hd);
            let s = g.matmul_bt(qh, kh);
            let s = g.scale(s, scale);
            let a = g.softmax_rows(s);
            heads.push(g.matmul(a, vh));
        }
        let cat = g.concat_cols(&heads);
        let mut att = self.merge.forward(g, cat);
        if let Some(d) = dropout.as_deref_mut() {
            att = d.apply(g, att);
        }
        let mut pooled = g.max_rows(att);
        if let Some(d) = dropout {
            pooled = d.apply(g, pooled);
        }
        pooled
    }

    /// Intent logits, `1 x K`.
    pub fn logits(&self, g: &mut Graph, x: Var, dropout: Option<&mut Dropout<'_>>) -> Var {
        let pooled = self.pooled(g, x, dropout);
        self.out.forward(g, pooled)
    }

    /// Probability vector over `intent_index` for one feature matrix.
    pub fn classify(&self, features: &Mat) -> Result<Vec<f64>> {
        if features.nrows() == 0 {
            return Err(Error::Argument("cannot classify an empty feature matrix".into()));
        }
        if features.ncols() != self.input_dim() {
            return Err(Error::Argument(format!(
                "feature width {} does not match classifier input {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        let mut g = Graph::new(&self.params);
        let x = g.constant(features.clone());
        let l = self.logits(&mut g, x, None);
        let p = g.softmax_rows(l);
        Ok(g.value(p).row(0).to_vec())
    }

    pub fn to_checkpoint(&self, train_config: serde_json::Value) -> Checkpoint {
        let meta = serde_json::json!({
            "intent_index": self.intent_index,
            "lm_dim": self.lm_dim,
            "input_dim": self.input_dim(),
            "use_acoustic": self.use_acoustic,
            "architecture": self.config,
            "train_config": train_config,
        });
        Checkpoint::new(CHECKPOINT_KIND, meta, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let m = Self::from_parts(
            ck.store()?,
            ck.meta_field("intent_index")?,
            ck.meta_field("lm_dim")?,
            ck.meta_field("use_acoustic")?,
            ck.meta_field("architecture")?,
        )?;
        let input_dim: usize = ck.meta_field("input_dim")?;
        if input_dim != m.input_dim() {
            return Err(Error::Checkpoint(format!("input_dim {input_dim} disagrees with parameters ({})", m.input_dim())));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path, train_config: serde_json::Value) -> Result<()> {
        self.to_checkpoint(train_config).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path, CHECKPOINT_KIND)?)
    }
}

/// Index of the largest entry; ties resolve to the earliest.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
