//! Composite loss optimisation, seq2seq pretraining, checkpoints and
//! gradient checking.

mod checkpoint;
mod config;
mod gradcheck;
mod metrics;
mod sgd;
mod trainer;

pub use checkpoint::{
    load_model, read_checkpoint, save_checkpoint, Checkpoint, CheckpointKind, CheckpointMeta, Manifest, RngState, StoredTensor, TensorEntry,
    CHECKPOINT_FORMAT, MANIFEST_FILE, PAYLOAD_FILE, VOCAB_FILE,
};
pub use config::TrainConfig;
pub use gradcheck::{check_gradient, gradient_check, relative_error, GradCheckReport, DEFAULT_EPS};
pub use metrics::{read_metrics, MetricsLog, StepRecord};
pub use sgd::sgd_step;
pub use trainer::{emotion_samples, pretrain_seq2seq, selector_accuracy, train, warm_start, TrainObserver};
