use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distance::{ConfusionDistance, DistanceOptions, DistanceRegistry, TripletConfig};
use super::loss::{confusion_loss_var, occurrences_of, sample_negatives, OccurrenceRep, OccurrenceVars, RepTable};
use super::model::{lm_forward, task_adaptive_var, BiLm, LmVars};
use crate::confusion::{ConfusionPair, ConfusionSet, Occurrence, OccurrenceContexts};
use crate::corpus::{write_atomic, Dataset, TokenSource};
use crate::error::{Error, Result};
use crate::nn::{Adam, Graph, Grads, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub distance: String,
    pub triplet: TripletConfig,
    pub seed: u64,
    /// Include the task-adaptive term in the optimised objective.
    pub use_task_adaptive: bool,
    pub clip_norm: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            lambda: 10.0,
            epochs: 10,
            batch_size: 32,
            learning_rate: 1e-4,
            distance: "mse".into(),
            triplet: TripletConfig::default(),
            seed: 0,
            use_task_adaptive: true,
            clip_norm: 5.0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!("lambda must be a finite value >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        self.triplet.validate()
    }

    pub fn build_distance(&self) -> Result<Box<dyn ConfusionDistance>> {
        DistanceRegistry::with_builtins().build(&self.distance, &DistanceOptions { triplet: self.triplet })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub clip_norm: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 32,
            learning_rate: 3e-3,
            seed: 0,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub l_ta: f64,
    pub l_ca: f64,
    pub l_total: f64,
}

pub fn trace_to_jsonl(trace: &[EpochTrace]) -> String {
    let mut out = String::new();
    for t in trace {
        out.push_str(&serde_json::to_string(t).expect("trace serialises"));
        out.push('\n');
    }
    out
}

pub fn save_trace(trace: &[EpochTrace], path: &Path) -> Result<()> {
    write_atomic(path, trace_to_jsonl(trace).as_bytes())
}

/// Mean task-adaptive loss per epoch.
pub fn pretrain_lm(model: &mut BiLm, corpus: &[Vec<String>], config: &PretrainConfig) -> Result<Vec<f64>> {
    let sents: Vec<Vec<usize>> = corpus.iter().filter(|s| !s.is_empty()).map(|s| model.vocab.ids(s)).collect();
    if sents.is_empty() {
        return Err(Error::Argument("pretraining corpus is empty".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut opt = Adam::new(&model.params, config.learning_rate).with_clip(config.clip_norm);
    let mut order: Vec<usize> = (0..sents.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let mut grads = Grads::for_store(&model.params);
            let loss = {
                let mut g = Graph::new(&model.params);
                let l = batch_task_loss(&mut g, model, chunk.iter().map(|&i| sents[i].as_slice()));
                g.backward(l, &mut grads);
                g.scalar(l)
            };
            opt.step(&mut model.params, &grads);
            total += loss;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    Ok(history)
}

fn batch_task_loss<'a>(g: &mut Graph, model: &BiLm, sents: impl Iterator<Item = &'a [usize]>) -> Var {
    let mut acc: Option<Var> = None;
    let mut n = 0;
    for s in sents {
        let vars = model.encode(g, s);
        let l = task_adaptive_var(g, &vars);
        acc = Some(match acc {
            Some(a) => g.add(a, l),
            None => l,
        });
        n += 1;
    }
    match acc {
        Some(a) => g.scale(a, 1.0 / n as f64),
        None => g.scalar_const(0.0),
    }
}

/// Sentences for the task-adaptive term plus the confusion pairs and the
/// contexts that resolve their occurrences.
#[derive(Debug, Clone, Default)]
pub struct CalibrationData {
    pub sentences: Vec<Vec<String>>,
    pub pairs: ConfusionSet,
    pub contexts: OccurrenceContexts,
}

impl CalibrationData {
    /// Task-adaptive sentences are the manual transcripts, followed by the
    /// ASR transcripts when `include_asr` is set and they exist.
    pub fn from_dataset(dataset: &Dataset, pairs: ConfusionSet, contexts: OccurrenceContexts, include_asr: bool) -> Self {
        let mut sentences: Vec<Vec<String>> = dataset.examples.iter().map(|e| e.manual_tokens.clone()).collect();
        if include_asr {
            sentences.extend(dataset.examples.iter().filter_map(|e| e.tokens(TokenSource::Asr).map(<[String]>::to_vec)));
        }
        sentences.retain(|s| !s.is_empty());
        CalibrationData {
            sentences,
            pairs,
            contexts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub l_ta: f64,
    pub l_ca: f64,
    pub l_total: f64,
}

struct Resolved {
    sents: Vec<Vec<usize>>,
    pairs: Vec<ConfusionPair>,
    occ: HashMap<Occurrence, (Vec<usize>, usize)>,
    all_occ: Vec<Occurrence>,
}

fn resolve(model: &BiLm, data: &CalibrationData) -> Result<Resolved> {
    let sents = data.sentences.iter().filter(|s| !s.is_empty()).map(|s| model.vocab.ids(s)).collect();
    let pairs: Vec<ConfusionPair> = data.pairs.iter().cloned().collect();
    let refs: Vec<&ConfusionPair> = pairs.iter().collect();
    let all_occ = occurrences_of(&refs);
    let mut occ = HashMap::with_capacity(all_occ.len());
    for o in &all_occ {
        let (toks, pos) = data.contexts.sentence(o)?;
        occ.insert(o.clone(), (model.vocab.ids(&toks), pos));
    }
    Ok(Resolved {
        sents,
        pairs,
        occ,
        all_occ,
    })
}

struct BatchLoss {
    l_ta: Var,
    l_ca: Var,
    total: Var,
}

fn record_batch(
    g: &mut Graph,
    model: &BiLm,
    r: &Resolved,
    sent_idx: &[usize],
    pairs: &[&ConfusionPair],
    negatives: &[Option<Occurrence>],
    distance: &dyn ConfusionDistance,
    config: &CalibrationConfig,
) -> BatchLoss {
    let l_ta = batch_task_loss(g, model, sent_idx.iter().map(|&i| r.sents[i].as_slice()));
    let mut encoded: HashMap<&[usize], LmVars> = HashMap::new();
    let mut occ_vars = |g: &mut Graph, o: &Occurrence| -> OccurrenceVars {
        let (ids, pos) = &r.occ[o];
        let vars = *encoded.entry(ids.as_slice()).or_insert_with(|| model.encode(g, ids));
        OccurrenceVars {
            layers: [g.row(vars.layer0, *pos), g.row(vars.layer1, *pos)],
            sentence: vars.sentence,
        }
    };
    let terms: Vec<_> = pairs
        .iter()
        .zip(negatives)
        .map(|(p, n)| {
            let a = occ_vars(g, p.a());
            let b = occ_vars(g, p.b());
            let n = n.as_ref().map(|o| occ_vars(g, o));
            (a, b, n)
        })
        .collect();
    let l_ca = confusion_loss_var(g, distance, &terms);
    let weighted = g.scale(l_ca, config.lambda);
    let total = if config.use_task_adaptive { g.add(l_ta, weighted) } else { weighted };
    BatchLoss { l_ta, l_ca, total }
}

/// The three loss terms over all of `data` as a single batch, without
/// updating the model.
pub fn joint_loss(model: &BiLm, data: &CalibrationData, config: &CalibrationConfig) -> Result<LossParts> {
    let distance = config.build_distance()?;
    let r = resolve(model, data)?;
    let refs: Vec<&ConfusionPair> = r.pairs.iter().collect();
    let negatives = if distance.needs_negative() {
        sample_negatives(&refs, &r.all_occ, &[], &mut ChaCha8Rng::seed_from_u64(config.seed))
    } else {
        vec![None; refs.len()]
    };
    let idx: Vec<usize> = (0..r.sents.len()).collect();
    let mut g = Graph::new(&model.params);
    let b = record_batch(&mut g, model, &r, &idx, &refs, &negatives, distance.as_ref(), config);
    Ok(LossParts {
        l_ta: g.scalar(b.l_ta),
        l_ca: g.scalar(b.l_ca),
        l_total: g.scalar(b.total),
    })
}

/// Minimises `L_ta + lambda * L_ca` batch by batch.
///
/// Each batch takes `batch_size` task sentences and as many confusion pairs,
/// drawn from a shuffled stream of the pair set that wraps around as needed.
pub fn joint_finetune(model: &mut BiLm, data: &CalibrationData, config: &CalibrationConfig) -> Result<Vec<EpochTrace>> {
    config.validate()?;
    let distance = config.build_distance()?;
    let r = resolve(model, data)?;
    if r.sents.is_empty() && r.pairs.is_empty() {
        return Err(Error::Argument("calibration data has no sentences and no pairs".into()));
    }
    let mut sent_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pair_rng = ChaCha8Rng::seed_from_u64(config.seed);
    pair_rng.set_stream(1);
    let mut opt = Adam::new(&model.params, config.learning_rate).with_clip(config.clip_norm);

    let mut sent_order: Vec<usize> = (0..r.sents.len()).collect();
    let mut pair_order: Vec<usize> = (0..r.pairs.len()).collect();
    pair_order.shuffle(&mut pair_rng);
    let mut cursor = 0;
    let n_batches = r.sents.len().div_ceil(config.batch_size).max(1);

    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        sent_order.shuffle(&mut sent_rng);
        let (mut s_ta, mut s_ca, mut s_total) = (0.0, 0.0, 0.0);
        for b in 0..n_batches {
            let lo = (b * config.batch_size).min(sent_order.len());
            let hi = ((b + 1) * config.batch_size).min(sent_order.len());
            let sent_idx = &sent_order[lo..hi];
            let want = if sent_idx.is_empty() { config.batch_size } else { sent_idx.len() };
            let mut batch_pairs = Vec::new();
            if !pair_order.is_empty() {
                for _ in 0..want.min(pair_order.len()) {
                    if cursor == pair_order.len() {
                        pair_order.shuffle(&mut pair_rng);
                        cursor = 0;
                    }
                    batch_pairs.push(&r.pairs[pair_order[cursor]]);
                    cursor += 1;
                }
            }
            let negatives = if distance.needs_negative() {
                let pool = occurrences_of(&batch_pairs);
                sample_negatives(&batch_pairs, &pool, &r.all_occ, &mut pair_rng)
            } else {
                vec![None; batch_pairs.len()]
            };
            let mut grads = Grads::for_store(&model.params);
            let (ta, ca, total) = {
                let mut g = Graph::new(&model.params);
                let bl = record_batch(&mut g, model, &r, sent_idx, &batch_pairs, &negatives, distance.as_ref(), config);
                g.backward(bl.total, &mut grads);
                (g.scalar(bl.l_ta), g.scalar(bl.l_ca), g.scalar(bl.total))
            };
            opt.step(&mut model.params, &grads);
            s_ta += ta;
            s_ca += ca;
            s_total += total;
        }
        let n = n_batches as f64;
        trace.push(EpochTrace {
            epoch: epoch + 1,
            l_ta: s_ta / n,
            l_ca: s_ca / n,
            l_total: s_total / n,
        });
        log::debug!("calibration epoch {} l_ta={:.4} l_ca={:.4}", epoch + 1, s_ta / n, s_ca / n);
    }
    Ok(trace)
}

/// Representations of each occurrence under the current weights.
pub fn occurrence_reps<'a>(
    model: &BiLm,
    contexts: &OccurrenceContexts,
    occurrences: impl IntoIterator<Item = &'a Occurrence>,
) -> Result<RepTable> {
    let mut cache: HashMap<Vec<String>, super::model::LmForward> = HashMap::new();
    let mut table = RepTable::new();
    for o in occurrences {
        let (toks, pos) = contexts.sentence(o)?;
        let fwd = match cache.get(&toks) {
            Some(f) => f,
            None => {
                let f = lm_forward(model, &toks)?;
                cache.entry(toks).or_insert(f)
            }
        };
        table.insert(
            o.clone(),
            OccurrenceRep {
                layers: [fwd.reps.layers[0].row(pos).to_owned(), fwd.reps.layers[1].row(pos).to_owned()],
                sentence: fwd.sentence.0.clone(),
            },
        );
    }
    Ok(table)
}
