//! On-disk episode archives: one directory per episode holding the two PNGs
//! and a JSON metadata file. Because composition happens in 8-bit pixel
//! space, a written episode reads back bit-identical, so training from an
//! archive equals training from the live stream.

use std::fs;
use std::path::{Path, PathBuf};

use super::compose::{Episode, EpisodeMeta};
use super::raster::Rgb8Image;
use super::stream::EpisodeStream;
use crate::{Error, Result};

pub const ADAPT_FILE: &str = "adapt.png";
pub const TARGET_FILE: &str = "target.png";
pub const META_FILE: &str = "meta.json";

/// Directory of episode `index` under an archive root.
pub fn episode_dir(root: &Path, index: u64) -> PathBuf {
    root.join(format!("episode_{index:05}"))
}

/// Write one episode; creates the directory if needed.
pub fn write_episode(root: &Path, index: u64, episode: &Episode) -> Result<()> {
    let dir = episode_dir(root, index);
    fs::create_dir_all(&dir)?;
    episode.adapt.save_png(&dir.join(ADAPT_FILE))?;
    episode.target.save_png(&dir.join(TARGET_FILE))?;
    let json = serde_json::to_string_pretty(&episode.meta)?;
    fs::write(dir.join(META_FILE), json)?;
    Ok(())
}

/// Read one episode back.
pub fn read_episode(root: &Path, index: u64) -> Result<Episode> {
    let dir = episode_dir(root, index);
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path)
        .map_err(|e| Error::ingestion(&meta_path, e.to_string()))?;
    let meta: EpisodeMeta = serde_json::from_str(&text)
        .map_err(|e| Error::ingestion(&meta_path, e.to_string()))?;
    let adapt = Rgb8Image::load_png(&dir.join(ADAPT_FILE))?;
    let target = Rgb8Image::load_png(&dir.join(TARGET_FILE))?;
    Ok(Episode { adapt, target, meta })
}

/// Number of consecutive episodes present, counting from index 0.
pub fn count_episodes(root: &Path) -> u64 {
    let mut n = 0;
    while episode_dir(root, n).join(META_FILE).is_file() {
        n += 1;
    }
    n
}

/// Generate episodes `0..count` from a stream and write them under `root`.
pub fn write_archive(root: &Path, stream: &EpisodeStream, count: u64) -> Result<()> {
    for i in 0..count {
        write_episode(root, i, &stream.episode(i)?)?;
    }
    Ok(())
}
