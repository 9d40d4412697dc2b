//! Training configuration: which protocol to train on, scene geometry,
//! architecture, optimizer settings, and budgets. The JSON schema is strict:
//! unknown keys are rejected.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autograd::AdamConfig;
use crate::model::ArchitectureConfig;
use crate::scene::{
    CueKind, EpisodeStream, GlyphStore, SceneConfig, ShapeStore, ShapeVariant, Split, StreamSource,
};
use crate::rng::{derive_seed, labels};
use crate::{Error, Real, Result};

/// Object corpus a run trains and evaluates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Handwritten characters from an on-disk corpus in the published
    /// alphabet/character directory layout.
    Omniglot,
    /// Built-in procedurally generated glyph corpus with the same 50-alphabet
    /// structure; needs no external data.
    SyntheticGlyphs,
    /// Colored convex shapes, full 12-shape x 64-color pool.
    Shapes,
    /// Colored shapes from the truncated 48-color pool (overfitting probe).
    ShapesTruncated,
}

impl std::str::FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omniglot" => Ok(Protocol::Omniglot),
            "synthetic-glyphs" | "synthetic_glyphs" => Ok(Protocol::SyntheticGlyphs),
            "shapes" => Ok(Protocol::Shapes),
            "shapes-truncated" | "shapes_truncated" => Ok(Protocol::ShapesTruncated),
            other => Err(Error::Config(format!(
                "unknown protocol '{other}' (expected omniglot | synthetic-glyphs | shapes | shapes-truncated)"
            ))),
        }
    }
}

fn default_batch() -> usize {
    8
}

fn default_steps() -> u64 {
    20_000
}

fn default_eval_interval() -> u64 {
    500
}

fn default_eval_episodes() -> usize {
    64
}

fn default_data_seed() -> u64 {
    2024
}

/// Everything one training run depends on. Serializable so a run manifest
/// reproduces the run bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub protocol: Protocol,
    /// Corpus root for [`Protocol::Omniglot`]; ignored otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omniglot_root: Option<PathBuf>,
    /// Square canvas side in pixels.
    pub canvas: usize,
    pub cue: CueKind,
    /// Cue-center jitter as a fraction of object size (red dot only).
    #[serde(default)]
    pub jitter: Real,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Maximum number of optimizer steps.
    #[serde(default = "default_steps")]
    pub steps: u64,
    /// Validation cadence in steps.
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
    /// Validation set size.
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Master seed for initialization and the training stream.
    pub seed: u64,
    /// Seed for the procedurally generated corpora; fixed independently of
    /// `seed` so different training seeds see the same identity splits.
    #[serde(default = "default_data_seed")]
    pub data_seed: u64,
    /// Stop early once validation mse reaches this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_at_val_mse: Option<Real>,
}

impl TrainConfig {
    /// Desk-scale defaults for a protocol: 64 px canvas, half-width
    /// architecture.
    pub fn desk(protocol: Protocol, cue: CueKind, jitter: Real, seed: u64) -> Self {
        TrainConfig {
            protocol,
            omniglot_root: None,
            canvas: 64,
            cue,
            jitter,
            architecture: ArchitectureConfig::desk(),
            adam: AdamConfig::default(),
            batch_size: default_batch(),
            steps: default_steps(),
            eval_interval: default_eval_interval(),
            eval_episodes: default_eval_episodes(),
            seed,
            data_seed: default_data_seed(),
            stop_at_val_mse: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.adam.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {} must be > 0", self.adam.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval interval must be >= 1".into()));
        }
        if self.architecture.input_size != self.canvas {
            return Err(Error::Config(format!(
                "architecture input size {} does not match canvas {}",
                self.architecture.input_size, self.canvas
            )));
        }
        self.architecture.validate()?;
        self.scene_config().map(|_| ())
    }

    pub fn scene_config(&self) -> Result<SceneConfig> {
        SceneConfig::for_canvas(self.canvas, self.cue, self.jitter)
    }

    /// Load the object corpus this config trains on.
    pub fn build_source(&self) -> Result<StreamSource> {
        match self.protocol {
            Protocol::Omniglot => {
                let root = self.omniglot_root.as_ref().ok_or_else(|| {
                    Error::ingestion(
                        PathBuf::from("(omniglot root unset)"),
                        "pass --omniglot-root or set the OMNIGLOT_ROOT environment variable",
                    )
                })?;
                Ok(StreamSource::Glyphs(Arc::new(GlyphStore::load_omniglot(root)?)))
            }
            Protocol::SyntheticGlyphs => {
                Ok(StreamSource::Glyphs(Arc::new(GlyphStore::synthetic(self.data_seed))))
            }
            Protocol::Shapes => Ok(StreamSource::Shapes(Arc::new(ShapeStore::generate(
                ShapeVariant::Full,
                self.data_seed,
            )))),
            Protocol::ShapesTruncated => Ok(StreamSource::Shapes(Arc::new(ShapeStore::generate(
                ShapeVariant::Truncated,
                self.data_seed,
            )))),
        }
    }

    /// Training stream: train-split identities keyed by the run seed.
    pub fn train_stream(&self, source: StreamSource) -> Result<EpisodeStream> {
        EpisodeStream::new(source, Split::Train, self.scene_config()?, self.seed)
    }

    /// Validation stream: train-split identities, but a seed stream the
    /// training loop never draws from.
    pub fn validation_stream(&self, source: StreamSource) -> Result<EpisodeStream> {
        let seed = derive_seed(self.seed, labels::VALIDATION, 0);
        EpisodeStream::new(source, Split::Train, self.scene_config()?, seed)
    }

    /// Held-out evaluation stream over the test split.
    pub fn test_stream(&self, source: StreamSource, eval_seed: u64) -> Result<EpisodeStream> {
        EpisodeStream::new(source, Split::Test, self.scene_config()?, eval_seed)
    }
}
