use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{validate_lambdas, ExperimentConfig};
use super::pipeline::{
    calibration_data, evaluate_test, lm_vocab, train_classifier, MeanSd, RunRecord, Runner, Summary, Variant,
    TEST_ASR, TEST_MANUAL,
};
use super::plot::{log_x_line_chart, Series};
use super::prepare::{load_prepared, Prepared};
use crate::calibrated_lm::{joint_finetune, pretrain_lm, save_trace, BiLm, PretrainConfig};
use crate::corpus::write_atomic;
use crate::error::{Error, Result};
use crate::idm::{IntentClassifier, Metrics, TrainOutcome};

/// Records and summaries of a set of variants sharing seeds and inputs.
#[derive(Debug, Clone)]
pub struct Grid {
    pub records: BTreeMap<String, Vec<RunRecord>>,
    pub summaries: BTreeMap<String, Summary>,
}

impl Grid {
    pub fn summary(&self, variant: &str) -> &Summary {
        &self.summaries[variant]
    }
}

fn run_grid(cfg: &ExperimentConfig, data: &Prepared, variants: &[Variant]) -> Result<Grid> {
    let mut runner = Runner::new(cfg, data);
    let mut grid = Grid {
        records: BTreeMap::new(),
        summaries: BTreeMap::new(),
    };
    for v in variants {
        let (recs, summary) = runner.run_seeds(v, &cfg.seeds, &cfg.paths.out)?;
        grid.records.insert(v.name.clone(), recs);
        grid.summaries.insert(v.name.clone(), summary);
    }
    Ok(grid)
}

pub fn cmd_run_full(cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, Summary)> {
    let data = load_prepared(cfg)?;
    let mut runner = Runner::new(cfg, &data);
    runner.run_seeds(&Variant::full(cfg), &cfg.seeds, &cfg.paths.out)
}

/// The uncalibrated baseline, then the full pipeline and its three ablations.
pub fn ablation_variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    vec![
        Variant::uncalibrated(cfg),
        Variant::full(cfg),
        Variant::no_acoustic(cfg),
        Variant::no_confusion_finetune(cfg),
        Variant::no_task_adaptive_finetune(cfg),
    ]
}

pub fn cmd_ablate(cfg: &ExperimentConfig) -> Result<Grid> {
    let data = load_prepared(cfg)?;
    run_grid(cfg, &data, &ablation_variants(cfg))
}

pub const DISTANCES: [&str; 4] = ["mse", "cosine", "l1", "triplet"];

pub fn cmd_compare_losses(cfg: &ExperimentConfig) -> Result<Grid> {
    let data = load_prepared(cfg)?;
    let variants: Vec<Variant> = DISTANCES.iter().map(|d| Variant::with_distance(cfg, d)).collect();
    run_grid(cfg, &data, &variants)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub asr_accuracy: MeanSd,
    pub manual_accuracy: MeanSd,
    pub asr_macro_f1: MeanSd,
    pub manual_macro_f1: MeanSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub seeds: Vec<u64>,
    pub confusion_method: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "lambda,asr_accuracy_mean,asr_accuracy_sd,manual_accuracy_mean,manual_accuracy_sd,asr_macro_f1_mean,manual_macro_f1_mean\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.lambda,
                r.asr_accuracy.mean,
                r.asr_accuracy.sd,
                r.manual_accuracy.mean,
                r.manual_accuracy.sd,
                r.asr_macro_f1.mean,
                r.manual_macro_f1.mean
            ));
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let pick = |f: fn(&SweepRow) -> f64| self.rows.iter().map(|r| (r.lambda, f(r))).collect::<Vec<_>>();
        log_x_line_chart(
            "Accuracy vs lambda",
            "lambda (log scale)",
            "accuracy",
            &[
                Series {
                    name: "ASR test",
                    color: "#d62728",
                    points: pick(|r| r.asr_accuracy.mean),
                },
                Series {
                    name: "manual test",
                    color: "#1f77b4",
                    points: pick(|r| r.manual_accuracy.mean),
                },
            ],
        )
    }
}

pub fn sweep_dir(out: &Path) -> PathBuf {
    out.join("sweep")
}

pub fn cmd_sweep_lambda(cfg: &ExperimentConfig, lambdas: &[f64]) -> Result<(SweepTable, Grid)> {
    validate_lambdas(lambdas)?;
    let data = load_prepared(cfg)?;
    let variants: Vec<Variant> = lambdas.iter().map(|&l| Variant::with_lambda(cfg, l)).collect();
    let grid = run_grid(cfg, &data, &variants)?;
    let rows = variants
        .iter()
        .map(|v| {
            let s = grid.summary(&v.name);
            SweepRow {
                lambda: v.calibration.lambda,
                asr_accuracy: s.metrics[TEST_ASR]["accuracy"],
                manual_accuracy: s.metrics[TEST_MANUAL]["accuracy"],
                asr_macro_f1: s.metrics[TEST_ASR]["macro_f1"],
                manual_macro_f1: s.metrics[TEST_MANUAL]["macro_f1"],
            }
        })
        .collect();
    let table = SweepTable {
        seeds: cfg.seeds.clone(),
        confusion_method: data.manifest.method.clone(),
        rows,
    };
    let dir = sweep_dir(&cfg.paths.out);
    write_atomic(&dir.join("lambda-sweep.json"), serde_json::to_string_pretty(&table)?.as_bytes())?;
    write_atomic(&dir.join("lambda-sweep.csv"), table.to_csv().as_bytes())?;
    write_atomic(&dir.join("lambda-sweep.svg"), table.to_svg().as_bytes())?;
    Ok((table, grid))
}

/// Re-renders the sweep plot from its saved table.
pub fn cmd_plot(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = sweep_dir(&cfg.paths.out);
    let src = dir.join("lambda-sweep.json");
    let text = std::fs::read_to_string(&src).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact {
            path: src.clone(),
            hint: "run `sweep-lambda` first".into(),
        },
        _ => Error::io(&src, e),
    })?;
    let table: SweepTable = serde_json::from_str(&text)?;
    let dst = dir.join("lambda-sweep.svg");
    write_atomic(&dst, table.to_svg().as_bytes())?;
    Ok(dst)
}

fn models_dir(out: &Path) -> PathBuf {
    out.join("models")
}

pub fn pretrained_path(out: &Path, seed: u64) -> PathBuf {
    models_dir(out).join(format!("lm-pretrained-seed{seed}.json"))
}

pub fn calibrated_path(out: &Path, seed: u64) -> PathBuf {
    models_dir(out).join(format!("lm-calibrated-seed{seed}.json"))
}

pub fn classifier_path(out: &Path, seed: u64) -> PathBuf {
    models_dir(out).join(format!("classifier-seed{seed}.json"))
}

fn load_stage<T>(path: &Path, previous: &str, load: impl Fn(&Path) -> Result<T>) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            hint: format!("run `{previous}` with the same config and seed first"),
        });
    }
    load(path)
}

/// Pretrains the language model for one seed and saves its checkpoint.
pub fn cmd_pretrain_lm(cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let data = load_prepared(cfg)?;
    let mut lm = BiLm::new(lm_vocab(&data), cfg.lm.d_e, cfg.lm.d_h, seed);
    let corpus: Vec<Vec<String>> = data.train.examples.iter().map(|e| e.manual_tokens.clone()).collect();
    let pcfg = PretrainConfig { seed, ..cfg.lm.pretrain.clone() };
    let hist = pretrain_lm(&mut lm, &corpus, &pcfg)?;
    let path = pretrained_path(&cfg.paths.out, seed);
    lm.save(&path, serde_json::json!({ "lm": cfg.lm, "pretrain": pcfg, "epoch_loss": hist }))?;
    Ok(path)
}

/// Calibrates the pretrained checkpoint of `seed` and saves the result and its trace.
pub fn cmd_finetune_lm(cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let data = load_prepared(cfg)?;
    let mut lm = load_stage(&pretrained_path(&cfg.paths.out, seed), "pretrain-lm", BiLm::load)?;
    let mut c = cfg.calibration.clone();
    c.seed = seed;
    let trace = joint_finetune(&mut lm, &calibration_data(&data), &c)?;
    let out = &cfg.paths.out;
    save_trace(&trace, &out.join("traces").join(format!("calibration-seed{seed}.jsonl")))?;
    let path = calibrated_path(out, seed);
    lm.save(&path, serde_json::to_value(&c)?)?;
    Ok(path)
}

/// Trains the classifier on top of the calibrated checkpoint of `seed`.
pub fn cmd_train(cfg: &ExperimentConfig, seed: u64) -> Result<PathBuf> {
    let data = load_prepared(cfg)?;
    let lm = load_stage(&calibrated_path(&cfg.paths.out, seed), "finetune-lm", BiLm::load)?;
    let eff = Variant::full(cfg).effective_config(cfg, seed);
    let TrainOutcome { model, trace, .. } = train_classifier(&data, &lm, &eff)?;
    let out = &cfg.paths.out;
    let mut lines = String::new();
    for t in &trace {
        lines.push_str(&serde_json::to_string(t)?);
        lines.push('\n');
    }
    write_atomic(&out.join("traces").join(format!("classifier-seed{seed}.jsonl")), lines.as_bytes())?;
    let path = classifier_path(out, seed);
    model.save(&path, serde_json::to_value(&eff.train)?)?;
    Ok(path)
}

/// Scores the saved classifier of `seed` on manual and ASR test transcripts.
pub fn cmd_eval(cfg: &ExperimentConfig, seed: u64) -> Result<BTreeMap<String, Metrics>> {
    let data = load_prepared(cfg)?;
    let out = &cfg.paths.out;
    let lm = load_stage(&calibrated_path(out, seed), "finetune-lm", BiLm::load)?;
    let model = load_stage(&classifier_path(out, seed), "train", IntentClassifier::load)?;
    let metrics = eval_model(&data, &lm, &model)?;
    write_atomic(
        &out.join("metrics").join(format!("eval-seed{seed}.json")),
        serde_json::to_string_pretty(&metrics)?.as_bytes(),
    )?;
    Ok(metrics)
}

fn eval_model(data: &Prepared, lm: &BiLm, model: &IntentClassifier) -> Result<BTreeMap<String, Metrics>> {
    if model.lm_dim != lm.rep_dim() {
        return Err(Error::Checkpoint(format!(
            "classifier expects {}-wide LM features but the LM produces {}",
            model.lm_dim,
            lm.rep_dim()
        )));
    }
    let outcome = TrainOutcome {
        model: model.clone(),
        trace: Vec::new(),
        best_epoch: 0,
    };
    evaluate_test(data, lm, &outcome)
}
