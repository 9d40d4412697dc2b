//! Localizer assembly: shared Siamese tower, attention pooling over the
//! adaptation branch, combine-and-score on the target branch, softargmax
//! keypoints, and the output linear head.

mod config;
mod forward;
mod params;

pub use config::{ArchitectureConfig, TowerLayer};
pub use forward::{
    attend_pool, attention_scores, bind_params, combine_and_score, localize, predict,
    tower_forward, BoundParams, Localizer, Trace, TraceValues,
};
pub use params::{Param, ParameterSet};
