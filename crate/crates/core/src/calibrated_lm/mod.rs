//! Bidirectional LSTM language model calibrated against acoustic confusions.
//!
//! The model is finetuned with its own language-modelling loss plus a
//! confusion loss that pulls together the representations of words an ASR
//! system confuses, then used to embed utterances for the classifier.

mod distance;
mod loss;
mod model;
mod train;

pub use distance::{
    ConfusionDistance, Cosine, DistanceOptions, DistanceRegistry, Mse, Triplet, TripletConfig, L1,
};
pub use loss::{
    confusion_loss, confusion_loss_var, occurrences_of, pair_term, sample_negatives, OccurrenceRep,
    OccurrenceVars, RepTable,
};
pub use model::{
    lm_forward, task_adaptive_loss, task_adaptive_var, BiLm, LmForward, LmVars, SentenceRep, TokenReps, Vocab,
    CHECKPOINT_KIND as LM_CHECKPOINT_KIND, UNK,
};
pub use train::{
    joint_finetune, joint_loss, occurrence_reps, pretrain_lm, save_trace, trace_to_jsonl, CalibrationConfig,
    CalibrationData, EpochTrace, LossParts, PretrainConfig,
};

#[cfg(test)]
mod tests;
