//! Geometric pick-and-place mock: a grasp at the predicted point succeeds
//! when it lands within the grasp tolerance of the cued object's center.
//!
//! Failure modes mirror a real gripper: a prediction within grasp range of
//! a different object picks that object (`WrongObject`); a prediction out
//! of grasp range of everything collides or closes on air (`Collision`).

use serde::{Deserialize, Serialize};

use crate::parallel::map_indexed;
use crate::scene::{Episode, EpisodeStream};
use crate::train::Predictor;
use crate::{Error, Real, Result};

pub const DEFAULT_TRIALS: usize = 20;
pub const DEFAULT_GRASP_TOLERANCE: Real = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PickPlaceOutcome {
    Success,
    WrongObject,
    Collision,
}

/// One graded grasp attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickPlaceTrial {
    pub episode_index: u64,
    /// Normalized (row, col) prediction.
    pub predicted: [Real; 2],
    pub cued_id: String,
    /// Identity of the object center nearest the prediction.
    pub nearest_id: String,
    /// Normalized L2 distance to the cued center.
    pub distance_to_cued: Real,
    /// Normalized L2 distance to the nearest center.
    pub distance_to_nearest: Real,
    pub outcome: PickPlaceOutcome,
}

/// Trial list plus outcome tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickPlaceReport {
    pub grasp_tolerance: Real,
    pub trials: Vec<PickPlaceTrial>,
    pub successes: usize,
    pub wrong_object: usize,
    pub collisions: usize,
}

impl std::fmt::Display for PickPlaceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}/{} successes, {} wrong-object, {} collisions (grasp tolerance {})",
            self.successes,
            self.trials.len(),
            self.wrong_object,
            self.collisions,
            self.grasp_tolerance
        )
    }
}

/// Grade one prediction against an episode's target scene.
pub fn grade_trial(
    episode: &Episode,
    episode_index: u64,
    predicted: [Real; 2],
    grasp_tolerance: Real,
) -> PickPlaceTrial {
    let canvas = episode.target.width();
    let denom = (canvas - 1).max(1) as Real;
    let mut nearest: Option<(usize, Real)> = None;
    for (i, obj) in episode.meta.target.objects.iter().enumerate() {
        // Placements are (x = col, y = row); predictions are (row, col).
        let d = ((predicted[0] - obj.y / denom).powi(2)
            + (predicted[1] - obj.x / denom).powi(2))
        .sqrt();
        if nearest.map_or(true, |(_, best)| d < best) {
            nearest = Some((i, d));
        }
    }
    let (nearest_idx, distance_to_nearest) =
        nearest.expect("target scenes always hold objects");
    let cued = &episode.meta.target.objects[0];
    let distance_to_cued = ((predicted[0] - cued.y / denom).powi(2)
        + (predicted[1] - cued.x / denom).powi(2))
    .sqrt();
    let outcome = if nearest_idx == 0 && distance_to_cued <= grasp_tolerance {
        PickPlaceOutcome::Success
    } else if nearest_idx != 0 && distance_to_nearest <= grasp_tolerance {
        PickPlaceOutcome::WrongObject
    } else {
        PickPlaceOutcome::Collision
    };
    PickPlaceTrial {
        episode_index,
        predicted,
        cued_id: cued.id.clone(),
        nearest_id: episode.meta.target.objects[nearest_idx].id.clone(),
        distance_to_cued,
        distance_to_nearest,
        outcome,
    }
}

/// Run `n` grasp trials on episodes `start..start + n` of a stream.
pub fn pick_place_mock(
    predictor: &dyn Predictor,
    stream: &EpisodeStream,
    start: u64,
    n: usize,
    grasp_tolerance: Real,
    workers: usize,
) -> Result<PickPlaceReport> {
    if n == 0 {
        return Err(Error::contract("pick_place_mock", "need at least one trial"));
    }
    if !(grasp_tolerance > 0.0) {
        return Err(Error::contract("pick_place_mock", "grasp tolerance must be positive"));
    }
    let results = map_indexed(n, workers, |i| {
        let index = start + i as u64;
        let episode = stream.episode(index)?;
        let predicted = predictor.predict(&episode)?;
        Ok::<_, Error>(grade_trial(&episode, index, predicted, grasp_tolerance))
    });
    let mut trials = Vec::with_capacity(n);
    for r in results {
        trials.push(r?);
    }
    let count = |o: PickPlaceOutcome| trials.iter().filter(|t| t.outcome == o).count();
    Ok(PickPlaceReport {
        grasp_tolerance,
        successes: count(PickPlaceOutcome::Success),
        wrong_object: count(PickPlaceOutcome::WrongObject),
        collisions: count(PickPlaceOutcome::Collision),
        trials,
    })
}
