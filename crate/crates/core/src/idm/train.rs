use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use super::model::{argmax, ClassifierConfig, Dropout, IntentClassifier};
use crate::calibrated_lm::BiLm;
use crate::corpus::{Dataset, TokenSource};
use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Grads, Mat, Var};
use crate::phonology::PronDict;
use crate::prm::{acoustic_batch, PhonemeLookup};

const EVAL_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub use_acoustic: bool,
    pub dropout: f64,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 3e-4,
            seed: 0,
            use_acoustic: true,
            dropout: 0.1,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Classifier input for one utterance: frozen LM rows and per-word phoneme ids.
#[derive(Debug, Clone)]
pub struct PreparedExample {
    pub id: String,
    pub lm: Mat,
    pub phonemes: Vec<Vec<usize>>,
    pub intent: String,
}

/// Embeds every example of `dataset` under `lm` using the chosen transcript.
pub fn prepare_examples(dataset: &Dataset, source: TokenSource, lm: &BiLm, dict: &PronDict) -> Result<Vec<PreparedExample>> {
    let mut lookup = PhonemeLookup::new(dict.clone());
    let mut cache: HashMap<Vec<String>, Mat> = HashMap::new();
    dataset
        .examples
        .iter()
        .map(|ex| {
            let tokens = ex.tokens(source).ok_or_else(|| {
                Error::Argument(format!("example {} has no {source:?} transcript", ex.id))
            })?;
            if tokens.is_empty() {
                return Err(Error::Argument(format!("example {} has an empty transcript", ex.id)));
            }
            let emb = match cache.get(tokens) {
                Some(m) => m.clone(),
                None => {
                    let m = lm.embed(tokens)?;
                    cache.insert(tokens.to_vec(), m.clone());
                    m
                }
            };
            Ok(PreparedExample {
                id: ex.id.clone(),
                lm: emb,
                phonemes: lookup.sentence_ids(tokens),
                intent: ex.intent.clone(),
            })
        })
        .collect()
}

fn feature_vars(g: &mut Graph, model: &IntentClassifier, batch: &[&PreparedExample]) -> Vec<Var> {
    let acoustic = match &model.prm {
        Some(prm) => {
            let ph: Vec<&[Vec<usize>]> = batch.iter().map(|e| e.phonemes.as_slice()).collect();
            acoustic_batch(g, prm, &ph)
        }
        None => Vec::new(),
    };
    batch
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let lm = g.constant(e.lm.clone());
            match acoustic.get(i) {
                Some(&a) => g.concat_cols(&[lm, a]),
                None => lm,
            }
        })
        .collect()
}

/// Per-token classifier input: calibrated rows, then acoustic rows when the
/// classifier uses them.
pub fn featurize<S: AsRef<str>>(tokens: &[S], lm: &BiLm, model: &IntentClassifier, dict: &PronDict) -> Result<Mat> {
    let emb = lm.embed(tokens)?;
    if emb.ncols() != model.lm_dim {
        return Err(Error::Argument(format!("language model width {} but classifier expects {}", emb.ncols(), model.lm_dim)));
    }
    let ex = PreparedExample {
        id: String::new(),
        lm: emb,
        phonemes: PhonemeLookup::new(dict.clone()).sentence_ids(tokens),
        intent: String::new(),
    };
    let mut g = Graph::new(&model.params);
    let x = feature_vars(&mut g, model, &[&ex]);
    Ok(g.value(x[0]).clone())
}

/// Predicted intent index per example.
pub fn predict(model: &IntentClassifier, examples: &[PreparedExample]) -> Vec<usize> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_CHUNK) {
        let refs: Vec<&PreparedExample> = chunk.iter().collect();
        let mut g = Graph::new(&model.params);
        let xs = feature_vars(&mut g, model, &refs);
        for x in xs {
            let l = model.logits(&mut g, x, None);
            out.push(argmax(g.value(l).row(0).as_slice().expect("contiguous")));
        }
    }
    out
}

pub fn score(model: &IntentClassifier, examples: &[PreparedExample], labels: &[String]) -> Metrics {
    let pred: Vec<&str> = predict(model, examples).into_iter().map(|i| model.intent_index[i].as_str()).collect();
    let gold: Vec<&str> = examples.iter().map(|e| e.intent.as_str()).collect();
    Metrics::from_labels(&gold, &pred, labels)
}

pub fn evaluate(model: &IntentClassifier, dataset: &Dataset, lm: &BiLm, dict: &PronDict, source: TokenSource) -> Result<Metrics> {
    let examples = prepare_examples(dataset, source, lm, dict)?;
    Ok(score(model, &examples, &dataset.intents))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub dev_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: IntentClassifier,
    pub trace: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

/// Trains on manual transcripts and keeps the epoch with the best dev accuracy.
pub fn train(
    train_set: &Dataset,
    dev_set: &Dataset,
    lm: &BiLm,
    dict: &PronDict,
    arch: &ClassifierConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let train_ex = prepare_examples(train_set, TokenSource::Manual, lm, dict)?;
    let dev_ex = prepare_examples(dev_set, TokenSource::Manual, lm, dict)?;
    train_prepared(&train_ex, &dev_ex, &train_set.intents, lm.rep_dim(), arch, config)
}

pub fn train_prepared(
    train_ex: &[PreparedExample],
    dev_ex: &[PreparedExample],
    intents: &[String],
    lm_dim: usize,
    arch: &ClassifierConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_ex.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if intents.len() < 2 {
        log::warn!("training set has a single intent label; the classifier is trivial");
    }
    let mut model = IntentClassifier::new(intents.to_vec(), lm_dim, config.use_acoustic, *arch, config.seed)?;
    let index: HashMap<&str, usize> = intents.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let gold: Vec<usize> = train_ex
        .iter()
        .map(|e| {
            index
                .get(e.intent.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("example {} has intent {:?} outside the label set", e.id, e.intent)))
        })
        .collect::<Result<_>>()?;

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(config.seed);
    drop_rng.set_stream(2);
    let mut opt = Adam::new(&model.params, config.learning_rate).with_clip(config.clip_norm);
    let mut order: Vec<usize> = (0..train_ex.len()).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, crate::nn::ParamStore)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedExample> = chunk.iter().map(|&i| &train_ex[i]).collect();
            let mut grads = Grads::for_store(&model.params);
            {
                let mut g = Graph::new(&model.params);
                let xs = feature_vars(&mut g, &model, &batch);
                let mut dropout = Dropout {
                    rate: config.dropout,
                    rng: &mut drop_rng,
                };
                let mut acc: Option<Var> = None;
                for (x, &i) in xs.into_iter().zip(chunk) {
                    let logits = model.logits(&mut g, x, Some(&mut dropout));
                    if argmax(g.value(logits).row(0).as_slice().expect("contiguous")) == gold[i] {
                        correct += 1;
                    }
                    let lp = g.log_softmax_rows(logits);
                    let nll = g.pick_rows(lp, &[gold[i]]);
                    acc = Some(match acc {
                        Some(a) => g.add(a, nll),
                        None => nll,
                    });
                }
                let total = g.scale(acc.expect("non-empty batch"), -1.0 / chunk.len() as f64);
                loss_sum += g.scalar(total) * chunk.len() as f64;
                g.backward(total, &mut grads);
            }
            if let Some(prm) = &model.prm {
                prm.mask_grads(&mut grads);
            }
            opt.step(&mut model.params, &grads);
        }
        let dev_accuracy = if dev_ex.is_empty() { 0.0 } else { score(&model, dev_ex, intents).accuracy };
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_ex.len() as f64,
            train_accuracy: correct as f64 / train_ex.len() as f64,
            dev_accuracy,
        };
        log::debug!("classifier epoch {epoch} loss={:.4} dev_acc={:.4}", m.train_loss, dev_accuracy);
        trace.push(m);
        if best.as_ref().is_none_or(|(acc, _, _)| dev_accuracy > *acc) {
            best = Some((dev_accuracy, epoch, model.params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(TrainOutcome {
        model,
        trace,
        best_epoch,
    })
}
