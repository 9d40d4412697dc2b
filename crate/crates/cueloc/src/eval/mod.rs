//! Named experiments, the geometric pick-and-place mock, and PNG
//! visualization of the model's attention and score maps.

mod experiments;
mod pickplace;
mod visualize;

pub use experiments::{run_experiment, ExperimentName, ExperimentOutcome, ExperimentSpec};
pub use pickplace::{
    grade_trial, pick_place_mock, PickPlaceOutcome, PickPlaceReport, PickPlaceTrial,
    DEFAULT_GRASP_TOLERANCE, DEFAULT_TRIALS,
};
pub use visualize::{
    attention_peak_px, render_episode, upsample_to_canvas, visualize, Visualization,
    VisualizationFiles,
};
