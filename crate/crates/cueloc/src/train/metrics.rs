//! Evaluation metrics and the predictor abstraction.
//!
//! The per-episode error is the squared L2 distance between the predicted
//! and true normalized (row, col) positions; `mse` averages it over
//! episodes, and the per-axis RMS percentage is `sqrt(mse / 2)`.

use serde::{Deserialize, Serialize};

use crate::model::Localizer;
use crate::parallel::map_indexed;
use crate::scene::{Episode, EpisodeStream};
use crate::{Error, Real, Result};

/// Success thresholds on the normalized L2 error.
pub const SUCCESS_NEAR: Real = 0.10;
pub const SUCCESS_FAR: Real = 0.15;

/// Anything that maps an episode to a normalized (row, col) point.
pub trait Predictor: Sync {
    fn predict(&self, episode: &Episode) -> Result<[Real; 2]>;
}

impl Predictor for Localizer {
    fn predict(&self, episode: &Episode) -> Result<[Real; 2]> {
        self.predict_point(&episode.adapt_tensor(), &episode.target_tensor())
    }
}

/// Oracle stub: answers with the true label.
pub struct PerfectPredictor;

impl Predictor for PerfectPredictor {
    fn predict(&self, episode: &Episode) -> Result<[Real; 2]> {
        Ok(episode.label_rc())
    }
}

/// Stub that ignores the episode and answers a fixed point.
pub struct FixedPredictor(pub [Real; 2]);

impl FixedPredictor {
    /// Canvas center.
    pub fn center() -> Self {
        FixedPredictor([0.5, 0.5])
    }

    /// Canvas corner; farther from every object center than any grasp
    /// tolerance because sprites cannot touch the border pixel.
    pub fn corner() -> Self {
        FixedPredictor([0.0, 0.0])
    }
}

impl Predictor for FixedPredictor {
    fn predict(&self, _: &Episode) -> Result<[Real; 2]> {
        Ok(self.0)
    }
}

/// Aggregate localization metrics over a fixed episode set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Number of episodes evaluated.
    pub episodes: usize,
    /// Mean squared L2 error in normalized coordinates.
    pub mse: Real,
    /// Per-axis RMS as a fraction of the canvas: sqrt(mse / 2).
    pub pct: Real,
    /// Fraction of episodes with L2 error <= 0.10.
    pub success_at_10: Real,
    /// Fraction of episodes with L2 error <= 0.15.
    pub success_at_15: Real,
    /// Episode indices whose L2 error exceeded 0.15.
    pub failures: Vec<u64>,
}

impl EvalReport {
    /// Compute the metrics from prediction/label pairs; `ids[i]` names
    /// episode `i` in the failure list.
    pub fn from_pairs(pairs: &[([Real; 2], [Real; 2])], ids: &[u64]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::contract("evaluate", "need at least one episode"));
        }
        if ids.len() != pairs.len() {
            return Err(Error::contract(
                "evaluate",
                format!("{} pairs but {} episode ids", pairs.len(), ids.len()),
            ));
        }
        let mut sum_sq = 0.0;
        let mut near = 0usize;
        let mut far = 0usize;
        let mut failures = Vec::new();
        for (&(pred, label), &id) in pairs.iter().zip(ids) {
            let sq = (pred[0] - label[0]).powi(2) + (pred[1] - label[1]).powi(2);
            sum_sq += sq;
            let dist = sq.sqrt();
            if dist <= SUCCESS_NEAR {
                near += 1;
            }
            if dist <= SUCCESS_FAR {
                far += 1;
            } else {
                failures.push(id);
            }
        }
        let n = pairs.len();
        let mse = sum_sq / n as Real;
        Ok(EvalReport {
            episodes: n,
            mse,
            pct: (mse / 2.0).sqrt(),
            success_at_10: near as Real / n as Real,
            success_at_15: far as Real / n as Real,
            failures,
        })
    }
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "n={} mse={:.6} pct={:.4} success@10%={:.3} success@15%={:.3}",
            self.episodes, self.mse, self.pct, self.success_at_10, self.success_at_15
        )
    }
}

/// Run a frozen predictor over episodes `start..start + n` of a stream.
///
/// Episodes fan out to `workers` threads; metrics reduce in episode order,
/// so the report is identical at any worker count.
pub fn evaluate(
    predictor: &dyn Predictor,
    stream: &EpisodeStream,
    start: u64,
    n: usize,
    workers: usize,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::contract("evaluate", "need at least one episode"));
    }
    let results = map_indexed(n, workers, |i| {
        let index = start + i as u64;
        let ep = stream.episode(index)?;
        let pred = predictor.predict(&ep)?;
        Ok::<_, Error>((pred, ep.label_rc()))
    });
    let mut pairs = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for (i, r) in results.into_iter().enumerate() {
        pairs.push(r?);
        ids.push(start + i as u64);
    }
    EvalReport::from_pairs(&pairs, &ids)
}
