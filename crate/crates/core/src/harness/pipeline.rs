use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use super::prepare::Prepared;
use crate::calibrated_lm::{
    joint_finetune, pretrain_lm, BiLm, CalibrationConfig, CalibrationData, EpochTrace, Vocab,
};
use crate::confusion::OccurrenceContexts;
use crate::corpus::{write_atomic, TokenSource};
use crate::error::Result;
use crate::idm::{prepare_examples, score, train_prepared, EpochMetrics, Metrics, TrainOutcome};

pub const TEST_MANUAL: &str = "test/manual";
pub const TEST_ASR: &str = "test/asr";

/// One arm of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    /// Finetune the pretrained LM before training the classifier.
    pub calibrate: bool,
    pub calibration: CalibrationConfig,
    pub use_acoustic: bool,
}

impl Variant {
    pub fn full(cfg: &ExperimentConfig) -> Self {
        Variant {
            name: "full".into(),
            calibrate: true,
            calibration: cfg.calibration.clone(),
            use_acoustic: cfg.train.use_acoustic,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }

    /// Pretrained LM only, no acoustic features.
    pub fn uncalibrated(cfg: &ExperimentConfig) -> Self {
        Variant {
            name: "uncalibrated".into(),
            calibrate: false,
            use_acoustic: false,
            ..Self::full(cfg)
        }
    }

    pub fn no_acoustic(cfg: &ExperimentConfig) -> Self {
        Variant {
            use_acoustic: false,
            ..Self::full(cfg).named("no_acoustic")
        }
    }

    pub fn no_confusion_finetune(cfg: &ExperimentConfig) -> Self {
        Self::with_lambda(cfg, 0.0).named("no_confusion_finetune")
    }

    pub fn no_task_adaptive_finetune(cfg: &ExperimentConfig) -> Self {
        let mut v = Self::full(cfg).named("no_task_adaptive_finetune");
        v.calibration.use_task_adaptive = false;
        v
    }

    pub fn with_lambda(cfg: &ExperimentConfig, lambda: f64) -> Self {
        let mut v = Self::full(cfg).named(&format!("lambda-{lambda}"));
        v.calibration.lambda = lambda;
        v
    }

    pub fn with_distance(cfg: &ExperimentConfig, distance: &str) -> Self {
        let mut v = Self::full(cfg).named(distance);
        v.calibration.distance = distance.into();
        v
    }

    /// The configuration this variant actually runs with under `seed`.
    pub fn effective_config(&self, base: &ExperimentConfig, seed: u64) -> ExperimentConfig {
        let mut c = base.clone();
        c.calibration = self.calibration.clone();
        c.calibration.seed = seed;
        c.train.use_acoustic = self.use_acoustic;
        c.train.seed = seed;
        c.lm.pretrain.seed = seed;
        c.seeds = vec![seed];
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub pretrain: Vec<f64>,
    pub calibration: Vec<EpochTrace>,
    pub classifier: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub config_hash: String,
    pub input_hash: String,
    pub confusion_hash: String,
    pub confusion_method: String,
    pub config: ExperimentConfig,
    pub input_dim: usize,
    pub metrics: BTreeMap<String, Metrics>,
    pub traces: Traces,
    pub duration_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return MeanSd { mean: 0.0, sd: 0.0, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    /// metrics block -> measure (accuracy, macro_f1) -> mean and sd over seeds
    pub metrics: BTreeMap<String, BTreeMap<String, MeanSd>>,
}

impl Summary {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let first = &records[0];
        let mut metrics: BTreeMap<String, BTreeMap<String, MeanSd>> = BTreeMap::new();
        for key in first.metrics.keys() {
            let acc: Vec<f64> = records.iter().map(|r| r.metrics[key].accuracy).collect();
            let f1: Vec<f64> = records.iter().map(|r| r.metrics[key].macro_f1).collect();
            let entry = metrics.entry(key.clone()).or_default();
            entry.insert("accuracy".into(), MeanSd::of(&acc));
            entry.insert("macro_f1".into(), MeanSd::of(&f1));
        }
        Summary {
            variant: first.variant.name.clone(),
            config_hash: first.config_hash.clone(),
            seeds: records.iter().map(|r| r.seed).collect(),
            metrics,
        }
    }

    pub fn mean(&self, block: &str, measure: &str) -> f64 {
        self.metrics[block][measure].mean
    }
}

/// Hash of everything that determines a variant's results, seed excluded.
pub fn config_hash(base: &ExperimentConfig, variant: &Variant, input_hash: &str) -> String {
    let mut c = variant.effective_config(base, 0);
    c.seeds.clear();
    c.paths.out = PathBuf::new();
    let text = serde_json::to_string(&(c, variant, input_hash)).expect("serialisable");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Runs variants, sharing pretrained and calibrated language models between
/// variants that would compute identical ones.
pub struct Runner<'a> {
    pub cfg: &'a ExperimentConfig,
    pub data: &'a Prepared,
    vocab: Vocab,
    pretrained: HashMap<u64, (BiLm, Vec<f64>)>,
    calibrated: HashMap<(u64, String), (BiLm, Vec<EpochTrace>)>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig, data: &'a Prepared) -> Self {
        Runner {
            cfg,
            data,
            vocab: lm_vocab(data),
            pretrained: HashMap::new(),
            calibrated: HashMap::new(),
        }
    }

    pub fn pretrained(&mut self, seed: u64) -> Result<&(BiLm, Vec<f64>)> {
        if !self.pretrained.contains_key(&seed) {
            let lm_cfg = &self.cfg.lm;
            let mut lm = BiLm::new(self.vocab.clone(), lm_cfg.d_e, lm_cfg.d_h, seed);
            let corpus: Vec<Vec<String>> = self.data.train.examples.iter().map(|e| e.manual_tokens.clone()).collect();
            let pcfg = crate::calibrated_lm::PretrainConfig { seed, ..lm_cfg.pretrain.clone() };
            let hist = pretrain_lm(&mut lm, &corpus, &pcfg)?;
            self.pretrained.insert(seed, (lm, hist));
        }
        Ok(&self.pretrained[&seed])
    }

    pub fn calibrated(&mut self, seed: u64, calibration: &CalibrationConfig) -> Result<&(BiLm, Vec<EpochTrace>)> {
        let mut c = calibration.clone();
        c.seed = seed;
        let key = (seed, serde_json::to_string(&c).expect("serialisable"));
        if !self.calibrated.contains_key(&key) {
            let mut lm = self.pretrained(seed)?.0.clone();
            let data = calibration_data(self.data);
            let trace = joint_finetune(&mut lm, &data, &c)?;
            self.calibrated.insert(key.clone(), (lm, trace));
        }
        Ok(&self.calibrated[&key])
    }

    /// Language model a variant feeds to the classifier, with its traces.
    pub fn variant_lm(&mut self, variant: &Variant, seed: u64) -> Result<(BiLm, Vec<f64>, Vec<EpochTrace>)> {
        let pre = self.pretrained(seed)?.1.clone();
        if variant.calibrate {
            let (lm, trace) = self.calibrated(seed, &variant.calibration)?;
            Ok((lm.clone(), pre, trace.clone()))
        } else {
            Ok((self.pretrained(seed)?.0.clone(), pre, Vec::new()))
        }
    }

    pub fn run(&mut self, variant: &Variant, seed: u64) -> Result<RunRecord> {
        let start = Instant::now();
        let (lm, pre_trace, cal_trace) = self.variant_lm(variant, seed)?;
        let eff = variant.effective_config(self.cfg, seed);
        let outcome = train_classifier(self.data, &lm, &eff)?;
        let metrics = evaluate_test(self.data, &lm, &outcome)?;
        log::info!(
            "{} seed {seed}: manual acc {:.4}, asr acc {:.4}",
            variant.name,
            metrics[TEST_MANUAL].accuracy,
            metrics[TEST_ASR].accuracy
        );
        Ok(RunRecord {
            variant: variant.clone(),
            seed,
            config_hash: config_hash(self.cfg, variant, &self.data.manifest.input_hash),
            input_hash: self.data.manifest.input_hash.clone(),
            confusion_hash: self.data.manifest.confusion_hash.clone(),
            confusion_method: self.data.manifest.method.clone(),
            config: eff,
            input_dim: outcome.model.input_dim(),
            metrics,
            traces: Traces {
                pretrain: pre_trace,
                calibration: cal_trace,
                classifier: outcome.trace,
                best_epoch: outcome.best_epoch,
            },
            duration_secs: start.elapsed().as_secs_f64(),
        })
    }

    /// Every seed of `seeds` for `variant`, persisted under the output directory.
    pub fn run_seeds(&mut self, variant: &Variant, seeds: &[u64], out: &Path) -> Result<(Vec<RunRecord>, Summary)> {
        let mut records = Vec::with_capacity(seeds.len());
        for &s in seeds {
            let r = self.run(variant, s)?;
            write_record(&r, out)?;
            records.push(r);
        }
        let summary = Summary::from_records(&records);
        write_summary(&summary, out)?;
        Ok((records, summary))
    }
}

/// LM vocabulary: every word of the training split, manual and ASR.
pub fn lm_vocab(data: &Prepared) -> Vocab {
    let words = data
        .train
        .examples
        .iter()
        .flat_map(|e| e.manual_tokens.iter().chain(e.asr_tokens.iter().flatten()));
    Vocab::from_words(words)
}

pub fn calibration_data(data: &Prepared) -> CalibrationData {
    CalibrationData::from_dataset(
        &data.train,
        data.confusions.clone(),
        OccurrenceContexts::new(&data.train, &data.wcns),
        true,
    )
}

pub fn train_classifier(data: &Prepared, lm: &BiLm, eff: &ExperimentConfig) -> Result<TrainOutcome> {
    let train_ex = prepare_examples(&data.train, TokenSource::Manual, lm, &data.dict)?;
    let dev_ex = prepare_examples(&data.dev, TokenSource::Manual, lm, &data.dict)?;
    train_prepared(&train_ex, &dev_ex, &data.train.intents, lm.rep_dim(), &eff.classifier, &eff.train)
}

pub fn evaluate_test(data: &Prepared, lm: &BiLm, outcome: &TrainOutcome) -> Result<BTreeMap<String, Metrics>> {
    let mut metrics = BTreeMap::new();
    for (key, source) in [(TEST_MANUAL, TokenSource::Manual), (TEST_ASR, TokenSource::Asr)] {
        let ex = prepare_examples(&data.test, source, lm, &data.dict)?;
        metrics.insert(key.to_string(), score(&outcome.model, &ex, &data.test.intents));
    }
    Ok(metrics)
}

fn short(hash: &str) -> &str {
    &hash[..12.min(hash.len())]
}

pub fn record_stem(variant: &str, config_hash: &str, seed: u64) -> String {
    format!("{variant}-{}-seed{seed}", short(config_hash))
}

pub fn write_record(r: &RunRecord, out: &Path) -> Result<()> {
    let stem = record_stem(&r.variant.name, &r.config_hash, r.seed);
    write_atomic(&out.join("runs").join(format!("{stem}.json")), serde_json::to_string_pretty(r)?.as_bytes())?;
    write_atomic(&out.join("metrics").join(format!("{stem}.json")), serde_json::to_string_pretty(&r.metrics)?.as_bytes())
}

pub fn write_summary(s: &Summary, out: &Path) -> Result<()> {
    let name = format!("{}-{}-summary.json", s.variant, short(&s.config_hash));
    write_atomic(&out.join("metrics").join(name), serde_json::to_string_pretty(s)?.as_bytes())
}
