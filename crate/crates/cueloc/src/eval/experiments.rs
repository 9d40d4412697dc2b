//! Named evaluation experiments: each fixes a protocol, a cue, and pass
//! thresholds, and evaluates a trained model on held-out test-split
//! episodes.

use serde::{Deserialize, Serialize};

use crate::scene::CueKind;
use crate::train::{evaluate, EvalReport, Predictor, Protocol, TrainConfig};
use crate::{Error, Real, Result};

/// The five standard experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    /// Glyphs, centered red dot.
    OmniglotBase,
    /// Glyphs, red dot with 33% jitter.
    OmniglotJitter,
    /// Glyphs, green marker above the object.
    OmniglotGreen,
    /// Shapes, full color pool; test split is unseen shapes x unseen colors.
    ShapesFull,
    /// Shapes, truncated color pool (overfitting probe; directional check
    /// against shapes-full, no absolute bound).
    ShapesTruncated,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 5] = [
        ExperimentName::OmniglotBase,
        ExperimentName::OmniglotJitter,
        ExperimentName::OmniglotGreen,
        ExperimentName::ShapesFull,
        ExperimentName::ShapesTruncated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::OmniglotBase => "omniglot-base",
            ExperimentName::OmniglotJitter => "omniglot-jitter",
            ExperimentName::OmniglotGreen => "omniglot-green",
            ExperimentName::ShapesFull => "shapes-full",
            ExperimentName::ShapesTruncated => "shapes-truncated",
        }
    }
}

impl std::str::FromStr for ExperimentName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment '{s}' (expected one of: {})",
                    ExperimentName::ALL.map(|n| n.as_str()).join(", ")
                ))
            })
    }
}

/// Protocol, cue, and pass thresholds of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub protocol: Protocol,
    pub cue: CueKind,
    pub jitter: Real,
    /// Held-out episodes to evaluate.
    pub eval_episodes: usize,
    /// Largest acceptable test mse.
    pub max_mse: Real,
    /// Smallest acceptable success rate at the 15% threshold.
    pub min_success_at_15: Real,
}

impl ExperimentSpec {
    /// Standard desk-scale spec for a named experiment. The glyph
    /// experiments default to the built-in corpus; switch `protocol` to
    /// [`Protocol::Omniglot`] when the real dataset is on disk.
    pub fn by_name(name: ExperimentName) -> Self {
        let (protocol, cue, jitter) = match name {
            ExperimentName::OmniglotBase => (Protocol::SyntheticGlyphs, CueKind::RedDot, 0.0),
            ExperimentName::OmniglotJitter => (Protocol::SyntheticGlyphs, CueKind::RedDot, 0.33),
            ExperimentName::OmniglotGreen => (Protocol::SyntheticGlyphs, CueKind::GreenMarker, 0.0),
            ExperimentName::ShapesFull => (Protocol::Shapes, CueKind::RedDot, 0.0),
            ExperimentName::ShapesTruncated => {
                (Protocol::ShapesTruncated, CueKind::RedDot, 0.0)
            }
        };
        // Bounds relaxed from the full-scale reference results to desk
        // scale. The jitter bound is twice the base bound, mirroring the
        // "at most doubles the error" expectation; the truncated-color
        // variant is judged only relative to shapes-full, so it carries no
        // absolute bound.
        let (max_mse, min_success) = match name {
            ExperimentName::OmniglotJitter => (0.04, 0.0),
            ExperimentName::ShapesTruncated => (Real::INFINITY, 0.0),
            _ => (0.02, 0.85),
        };
        ExperimentSpec {
            name,
            protocol,
            cue,
            jitter,
            eval_episodes: 256,
            max_mse,
            min_success_at_15: min_success,
        }
    }

    /// Desk-scale training configuration for this experiment.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::desk(self.protocol, self.cue, self.jitter, seed);
        cfg.stop_at_val_mse = Some(0.008);
        cfg
    }
}

/// Report plus the threshold verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub spec: ExperimentSpec,
    pub eval_seed: u64,
    pub report: EvalReport,
    pub passed: bool,
}

/// Evaluate a frozen model on `spec.eval_episodes` test-split episodes.
pub fn run_experiment(
    spec: &ExperimentSpec,
    predictor: &dyn Predictor,
    train_cfg: &TrainConfig,
    eval_seed: u64,
    workers: usize,
) -> Result<ExperimentOutcome> {
    let source = train_cfg.build_source()?;
    let stream = train_cfg.test_stream(source, eval_seed)?;
    let report = evaluate(predictor, &stream, 0, spec.eval_episodes, workers)?;
    let passed = report.mse <= spec.max_mse && report.success_at_15 >= spec.min_success_at_15;
    Ok(ExperimentOutcome { spec: spec.clone(), eval_seed, report, passed })
}
