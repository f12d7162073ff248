use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrated_lm::{CalibrationConfig, PretrainConfig};
use crate::confusion::DEFAULT_POSTERIOR_THRESHOLD;
use crate::corpus::synthetic::SyntheticConfig;
use crate::error::{Error, Result};
use crate::idm::{ClassifierConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Labelled JSON-lines files; when all are absent a synthetic corpus is generated.
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// CMU-format pronouncing dictionary; the bundled fixture when absent.
    pub dict: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            train: None,
            dev: None,
            test: None,
            dict: None,
            out: PathBuf::from("runs"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub substitution_rate: f64,
    pub deletion_rate: f64,
    pub insertion_rate: f64,
    pub max_phoneme_distance: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            substitution_rate: 0.15,
            deletion_rate: 0.0,
            insertion_rate: 0.0,
            max_phoneme_distance: 1,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfusionConfig {
    /// Registered extractor name, `med` or `wcn`.
    pub method: String,
    pub wcn_path: Option<PathBuf>,
    pub posterior_threshold: f64,
}

impl Default for ConfusionConfig {
    fn default() -> Self {
        ConfusionConfig {
            method: "med".into(),
            wcn_path: None,
            posterior_threshold: DEFAULT_POSTERIOR_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub d_e: usize,
    pub d_h: usize,
    pub pretrain: PretrainConfig,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            d_e: 64,
            d_h: 64,
            pretrain: PretrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub lambdas: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            lambdas: vec![0.1, 1.0, 5.0, 10.0, 15.0, 20.0, 50.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub corpus: SyntheticConfig,
    /// Noise applied to every transcript that lacks an ASR version.
    pub noise: NoiseConfig,
    pub confusion: ConfusionConfig,
    pub lm: LmConfig,
    pub calibration: CalibrationConfig,
    pub classifier: ClassifierConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            paths: PathsConfig::default(),
            corpus: SyntheticConfig::default(),
            noise: NoiseConfig::default(),
            confusion: ConfusionConfig::default(),
            lm: LmConfig::default(),
            calibration: CalibrationConfig::default(),
            classifier: ClassifierConfig::default(),
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
            seeds: vec![1],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        match self.confusion.method.as_str() {
            "med" => {}
            "wcn" => {
                if self.confusion.wcn_path.is_none() {
                    return Err(Error::Config("confusion method \"wcn\" requires confusion.wcn_path".into()));
                }
            }
            other => return Err(Error::Config(format!("unknown confusion method {other:?}; expected \"med\" or \"wcn\""))),
        }
        if !(0.0..=1.0).contains(&self.confusion.posterior_threshold) {
            return Err(Error::Config("confusion.posterior_threshold must lie in [0, 1]".into()));
        }
        let given = [&self.paths.train, &self.paths.dev, &self.paths.test].iter().filter(|p| p.is_some()).count();
        if given != 0 && given != 3 {
            return Err(Error::Config("paths.train, paths.dev and paths.test must be given together".into()));
        }
        if self.lm.d_e == 0 || self.lm.d_h == 0 {
            return Err(Error::Config("lm.d_e and lm.d_h must be positive".into()));
        }
        if self.lm.pretrain.batch_size == 0 {
            return Err(Error::Config("lm.pretrain.batch_size must be positive".into()));
        }
        let n = &self.noise;
        let rates = [n.substitution_rate, n.deletion_rate, n.insertion_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) || rates.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(Error::Config("noise rates must lie in [0, 1] and sum to at most 1".into()));
        }
        self.calibration.validate()?;
        self.calibration.build_distance()?;
        self.classifier.validate()?;
        self.train.validate()?;
        validate_lambdas(&self.sweep.lambdas)?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        Ok(())
    }

    pub fn is_synthetic(&self) -> bool {
        self.paths.train.is_none()
    }

    /// Directory holding prepared corpus and confusion files.
    pub fn prepared_dir(&self) -> PathBuf {
        self.paths.out.join("prepared")
    }
}

pub fn validate_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::Config("lambda list must be non-empty".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Config(format!("lambda must be a finite value >= 0, got {l}")));
    }
    Ok(())
}
