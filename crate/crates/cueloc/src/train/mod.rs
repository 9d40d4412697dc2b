//! Training harness: configuration, the optimization loop, evaluation
//! metrics, and the checkpoint container.

mod checkpoint;
mod config;
mod metrics;
mod run;

pub use checkpoint::{crc32, Checkpoint, FORMAT_VERSION};
pub use config::{Protocol, TrainConfig};
pub use metrics::{
    evaluate, EvalReport, FixedPredictor, PerfectPredictor, Predictor, SUCCESS_FAR, SUCCESS_NEAR,
};
pub use run::{loss_and_gradients, train, MetricRecord, TrainOutcome};
