//! Self-attentive intent classifier over calibrated and acoustic features.

mod metrics;
mod model;
mod train;

pub use metrics::{ClassMetrics, Metrics};
pub use model::{argmax, ClassifierConfig, Dropout, IntentClassifier, CHECKPOINT_KIND};
pub use train::{
    evaluate, featurize, predict, prepare_examples, score, train, train_prepared, EpochMetrics, PreparedExample,
    TrainConfig, TrainOutcome,
};
