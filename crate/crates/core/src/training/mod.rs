//! Contrastive training: bidirectional batch hinge loss, Adam, the epoch
//! loop with validation-selected checkpointing, and the metrics log.

pub mod adam;
pub mod loss;
pub mod metrics;
pub mod trainer;

pub use adam::{Adam, AdamConfig};
pub use loss::{batch_hinge_loss, hinge_loss_node};
pub use metrics::{write_metrics_csv, METRICS_HEADER};
pub use trainer::{
    batch_loss_only, train, validation_metrics, EpochMetrics, TrainConfig, TrainOutcome, TrainPair,
};
