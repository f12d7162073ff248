//! Experiment orchestration: corpus preparation, the end-to-end pipeline,
//! ablations, distance comparison and the lambda sweep.

mod commands;
mod config;
mod pipeline;
mod plot;
mod prepare;

pub use commands::{
    ablation_variants, calibrated_path, classifier_path, cmd_ablate, cmd_compare_losses, cmd_eval, cmd_finetune_lm,
    cmd_plot, cmd_pretrain_lm, cmd_run_full, cmd_sweep_lambda, cmd_train, pretrained_path, sweep_dir, Grid, SweepRow,
    SweepTable, DISTANCES,
};
pub use config::{
    validate_lambdas, ConfusionConfig, ExperimentConfig, LmConfig, NoiseConfig, PathsConfig, SweepConfig,
};
pub use pipeline::{
    calibration_data, config_hash, evaluate_test, lm_vocab, record_stem, train_classifier, MeanSd, RunRecord, Runner,
    Summary, Traces, Variant, TEST_ASR, TEST_MANUAL,
};
pub use plot::{log_x_line_chart, Series};
pub use prepare::{cmd_prepare, load_dict, load_prepared, Manifest, Prepared};
