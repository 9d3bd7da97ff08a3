//! Optimization, the train/validate loop and checkpoint serialization.

mod adam;
mod checkpoint;
mod dataset;
mod trainer;

pub use adam::{clip_grad_norm, Adam, AdamConfig, DEFAULT_LR};
pub use checkpoint::{Checkpoint, MAGIC, VERSION};
pub use dataset::{
    encode_classification, encode_groups, flatten_pairs, group_texts, holdout_split, regroup, EncodedGroup,
    LabeledSentence, PairRef, vocab_from_texts,
};
pub use trainer::{
    classification_accuracy, parallel_batches, predict_all, ranking_metrics, score_pairs, train,
    EarlyStopper, EpochRecord, Objective, TrainPlan, TrainReport,
};
