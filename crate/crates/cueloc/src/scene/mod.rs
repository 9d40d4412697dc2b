//! Synthetic scene generation: object corpora (glyphs, colored shapes),
//! episode composition with visual cues, deterministic index-addressed
//! episode streams, and on-disk archives.

pub mod archive;
pub mod compose;
pub mod glyphs;
pub mod raster;
pub mod shapes;
pub mod stream;

use serde::{Deserialize, Serialize};

pub use compose::{
    compose_adaptation, compose_target, CueKind, CueMeta, CueSpec, Episode, EpisodeMeta,
    PlacementPx, SceneConfig, SceneMeta, SceneObject, CANVAS_BG, CUE_GREEN, CUE_RED,
};
pub use glyphs::{GlyphStore, INSTANCES_PER_CHARACTER};
pub use raster::{Rgb8Image, Sprite};
pub use shapes::{ShapeStore, ShapeVariant};
pub use stream::{EpisodeStream, StreamSource};

/// Identity split: background identities are for training, evaluation
/// identities are never seen during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(crate::Error::Config(format!(
                "unknown split '{other}' (expected train | test)"
            ))),
        }
    }
}
