use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::confusion::{
    load_wcns, save_wcns, simulate_wcn, ConfusionSet, ExtractionInput, ExtractorOptions, ExtractorRegistry,
    WordConfusionNetwork,
};
use crate::corpus::synthetic::{self, lexicon_vocabulary};
use crate::corpus::{build_candidate_pool, load_dataset, simulate_asr, write_atomic, Dataset, NoiseModel, Split};
use crate::error::{Error, Result};
use crate::phonology::PronDict;

const STREAM_STRIDE: u64 = 1 << 32;
const WCN_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub input_hash: String,
    pub confusion_hash: String,
    pub method: String,
    pub num_pairs: usize,
    pub examples: BTreeMap<String, usize>,
}

/// Corpus, confusion set and dictionary shared by every run of an experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub confusions: ConfusionSet,
    pub wcns: Vec<WordConfusionNetwork>,
    pub dict: PronDict,
    pub manifest: Manifest,
}

impl Prepared {
    pub fn split(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.jsonl", split.as_str()))
}

fn confusion_path(dir: &Path) -> PathBuf {
    dir.join("confusions.jsonl")
}

fn wcn_copy_path(dir: &Path) -> PathBuf {
    dir.join("wcn.jsonl")
}

fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

pub fn load_dict(cfg: &ExperimentConfig) -> Result<PronDict> {
    match &cfg.paths.dict {
        Some(p) => PronDict::load(p),
        None => Ok(PronDict::fixture()),
    }
}

fn stream(split: Split, i: usize) -> u64 {
    let k = match split {
        Split::Train => 0,
        Split::Dev => 1,
        Split::Test => 2,
    };
    k * STREAM_STRIDE + i as u64
}

/// Loads or generates the corpus, fills in missing ASR transcripts with the
/// configured noise, extracts confusions and writes everything under
/// `<out>/prepared`.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<Manifest> {
    cfg.validate()?;
    let dict = load_dict(cfg)?;
    let (mut train, mut dev, mut test) = if cfg.is_synthetic() {
        let c = synthetic::generate(&cfg.corpus)?;
        (c.train, c.dev, c.test)
    } else {
        let p = &cfg.paths;
        let get = |o: &Option<PathBuf>| o.clone().expect("validated");
        (
            load_dataset(&get(&p.train), Split::Train)?,
            load_dataset(&get(&p.dev), Split::Dev)?,
            load_dataset(&get(&p.test), Split::Test)?,
        )
    };

    let mut vocab: Vec<String> = [&train, &dev, &test].iter().flat_map(|d| d.vocabulary()).collect();
    if cfg.is_synthetic() {
        vocab.extend(lexicon_vocabulary());
    }
    vocab.sort();
    vocab.dedup();
    let n = &cfg.noise;
    let pool = build_candidate_pool(&vocab, &dict, n.max_phoneme_distance);
    let noise = NoiseModel::new(n.substitution_rate, n.deletion_rate, n.insertion_rate, pool, n.seed)?;

    let wcns = if cfg.confusion.method == "wcn" {
        let path = cfg.confusion.wcn_path.clone().expect("validated");
        let wcns = if path.exists() {
            load_wcns(&path)?
        } else {
            let sim: Vec<WordConfusionNetwork> = train
                .examples
                .iter()
                .enumerate()
                .map(|(i, ex)| simulate_wcn(&ex.id, &ex.manual_tokens, &noise, WCN_STREAM * STREAM_STRIDE + i as u64))
                .collect();
            save_wcns(&sim, &path)?;
            sim
        };
        let best: BTreeMap<&str, Vec<String>> = wcns.iter().map(|w| (w.utterance_id.as_str(), w.best_path())).collect();
        for ex in &mut train.examples {
            if ex.asr_tokens.is_none() {
                if let Some(b) = best.get(ex.id.as_str()).filter(|b| !b.is_empty()) {
                    ex.asr_tokens = Some(b.clone());
                }
            }
        }
        wcns
    } else {
        Vec::new()
    };

    for ds in [&mut train, &mut dev, &mut test] {
        let split = ds.split;
        for (i, ex) in ds.examples.iter_mut().enumerate() {
            if ex.asr_tokens.is_none() {
                ex.asr_tokens = Some(simulate_asr(&ex.manual_tokens, &noise, stream(split, i)));
            }
        }
    }

    let registry = ExtractorRegistry::with_builtins();
    let extractor = registry.build(
        &cfg.confusion.method,
        &ExtractorOptions {
            posterior_threshold: cfg.confusion.posterior_threshold,
        },
    )?;
    let confusions = extractor.extract(&ExtractionInput {
        dataset: &train,
        wcns: (!wcns.is_empty()).then_some(wcns.as_slice()),
    })?;

    let dir = cfg.prepared_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for ds in [&train, &dev, &test] {
        ds.save(&split_path(&dir, ds.split))?;
    }
    confusions.save(&confusion_path(&dir))?;
    if !wcns.is_empty() {
        save_wcns(&wcns, &wcn_copy_path(&dir))?;
    }
    let manifest = Manifest {
        input_hash: hash_prepared(&dir)?,
        confusion_hash: confusions.content_hash(),
        method: cfg.confusion.method.clone(),
        num_pairs: confusions.len(),
        examples: [&train, &dev, &test].iter().map(|d| (d.split.to_string(), d.len())).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&manifest_path(&dir), text.as_bytes())?;
    log::info!("prepared {} confusion pairs in {}", confusions.len(), dir.display());
    Ok(manifest)
}

fn hash_prepared(dir: &Path) -> Result<String> {
    let mut h = Sha256::new();
    let mut files: Vec<PathBuf> = Split::ALL.iter().map(|s| split_path(dir, *s)).collect();
    files.push(confusion_path(dir));
    let wcn = wcn_copy_path(dir);
    if wcn.exists() {
        files.push(wcn);
    }
    for f in files {
        let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
        h.update(f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default().as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: "run `prepare` with this config first".into(),
        })
    }
}

pub fn load_prepared(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dir = cfg.prepared_dir();
    let mpath = manifest_path(&dir);
    require(&mpath)?;
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.method != cfg.confusion.method {
        return Err(Error::Config(format!(
            "prepared artifacts used confusion method {:?} but the config asks for {:?}; rerun `prepare`",
            manifest.method, cfg.confusion.method
        )));
    }
    let load = |s: Split| -> Result<Dataset> {
        let p = split_path(&dir, s);
        require(&p)?;
        load_dataset(&p, s)
    };
    let (train, dev, test) = (load(Split::Train)?, load(Split::Dev)?, load(Split::Test)?);
    let cpath = confusion_path(&dir);
    require(&cpath)?;
    let confusions = ConfusionSet::load(&cpath)?;
    let wpath = wcn_copy_path(&dir);
    let wcns = if wpath.exists() { load_wcns(&wpath)? } else { Vec::new() };
    if hash_prepared(&dir)? != manifest.input_hash {
        return Err(Error::Validation(format!(
            "prepared files in {} changed since `prepare` wrote them; rerun `prepare`",
            dir.display()
        )));
    }
    Ok(Prepared {
        train,
        dev,
        test,
        confusions,
        wcns,
        dict: load_dict(cfg)?,
        manifest,
    })
}
