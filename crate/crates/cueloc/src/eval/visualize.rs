//! PNG rendering of model internals: the attention map over the adaptation
//! image, per-map keypoints and the final prediction over the target image,
//! and raw grids of the attention and score maps.
//!
//! The attention map lives on the valid-convolution feature grid, so
//! feature pixel (i, j) is drawn at image pixel (i + off, j + off) with
//! `off = (receptive_field - 1) / 2`, nearest-neighbor upsampled.

use std::path::{Path, PathBuf};

use crate::autograd::Tensor;
use crate::model::Localizer;
use crate::scene::{Episode, Rgb8Image};
use crate::{Error, Real, Result};

/// Map an image pixel back to the feature-grid cell whose receptive-field
/// center is nearest, clamped at the borders.
fn image_to_feature(image_idx: usize, offset: usize, feature_len: usize) -> usize {
    image_idx.saturating_sub(offset).min(feature_len - 1)
}

/// Nearest-neighbor upsample of a single-channel feature map to the canvas,
/// aligning each feature cell with its receptive-field center.
pub fn upsample_to_canvas(map: &[Real], fh: usize, fw: usize, canvas: usize, offset: usize) -> Vec<Real> {
    let mut out = vec![0.0; canvas * canvas];
    for r in 0..canvas {
        let i = image_to_feature(r, offset, fh);
        for c in 0..canvas {
            let j = image_to_feature(c, offset, fw);
            out[r * canvas + c] = map[i * fw + j];
        }
    }
    out
}

fn heat_overlay(base: &Rgb8Image, weights: &[Real]) -> Rgb8Image {
    let mut img = base.clone();
    let peak = weights.iter().cloned().fold(0.0, Real::max);
    if peak <= 0.0 {
        return img;
    }
    for y in 0..img.height() {
        for x in 0..img.width() {
            let w = 0.6 * weights[y * img.width() + x] / peak;
            img.blend_pixel(x, y, [1.0, 0.1, 0.1], w);
        }
    }
    img
}

fn draw_cross(img: &mut Rgb8Image, cx: i64, cy: i64, arm: i64, color: [Real; 3]) {
    for d in -arm..=arm {
        for (x, y) in [(cx + d, cy), (cx, cy + d)] {
            if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
                img.blend_pixel(x as usize, y as usize, color, 1.0);
            }
        }
    }
}

/// Render a `[C, H, W]` map stack as a tiled grayscale grid, each tile
/// normalized independently, 1 px separators.
fn tile_grid(maps: &Tensor, scale: usize) -> Rgb8Image {
    let (c, h, w) = (maps.shape()[0], maps.shape()[1], maps.shape()[2]);
    let cols = (c as f64).sqrt().ceil() as usize;
    let rows = c.div_ceil(cols);
    let (tw, th) = (w * scale + 1, h * scale + 1);
    let mut img = Rgb8Image::filled(cols * tw + 1, rows * th + 1, [40, 40, 40]);
    for k in 0..c {
        let tile = &maps.data()[k * h * w..][..h * w];
        let lo = tile.iter().cloned().fold(Real::INFINITY, Real::min);
        let hi = tile.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let (x0, y0) = ((k % cols) * tw + 1, (k / cols) * th + 1);
        for i in 0..h {
            for j in 0..w {
                let v = (tile[i * w + j] - lo) / span;
                for dy in 0..scale {
                    for dx in 0..scale {
                        img.blend_pixel(x0 + j * scale + dx, y0 + i * scale + dy, [v, v, v], 1.0);
                    }
                }
            }
        }
    }
    img
}

/// Paths of the files one visualization writes.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualizationFiles {
    pub adapt_attention: PathBuf,
    pub target_prediction: PathBuf,
    pub alpha_grid: PathBuf,
    pub score_grid: PathBuf,
}

/// Rendered internals of one episode, before any file is written.
pub struct Visualization {
    pub adapt_attention: Rgb8Image,
    pub target_prediction: Rgb8Image,
    pub alpha_grid: Rgb8Image,
    pub score_grid: Rgb8Image,
    /// The attention weights that were overlaid, prior to colorization.
    pub alpha: Tensor,
}

/// Run the model on one episode and render its internals.
pub fn render_episode(localizer: &Localizer, episode: &Episode) -> Result<Visualization> {
    let values = localizer.predict_values(&episode.adapt_tensor(), &episode.target_tensor())?;
    let canvas = episode.adapt.width();
    let offset = (localizer.config.receptive_field() - 1) / 2;
    let (fh, fw) = (values.alpha.shape()[1], values.alpha.shape()[2]);

    let up = upsample_to_canvas(values.alpha.data(), fh, fw, canvas, offset);
    let adapt_attention = heat_overlay(&episode.adapt, &up);

    let mut target_prediction = episode.target.clone();
    // Keypoints are normalized over the feature grid; map through the
    // receptive-field centers.
    for kp in values.keypoints.data().chunks_exact(2) {
        let y = kp[0] * (fh - 1) as Real + offset as Real;
        let x = kp[1] * (fw - 1) as Real + offset as Real;
        draw_cross(&mut target_prediction, x.round() as i64, y.round() as i64, 1, [0.2, 0.4, 1.0]);
    }
    // The final prediction is trained against canvas-normalized labels.
    let denom = (canvas - 1) as Real;
    draw_cross(
        &mut target_prediction,
        (values.prediction[1] * denom).round() as i64,
        (values.prediction[0] * denom).round() as i64,
        3,
        [1.0, 0.0, 0.0],
    );

    Ok(Visualization {
        adapt_attention,
        target_prediction,
        alpha_grid: tile_grid(&values.alpha, 4),
        score_grid: tile_grid(&values.score_maps, 2),
        alpha: values.alpha,
    })
}

/// Render one episode and write the PNG set into `out_dir`.
pub fn visualize(
    localizer: &Localizer,
    episode: &Episode,
    out_dir: &Path,
    stem: &str,
) -> Result<VisualizationFiles> {
    std::fs::create_dir_all(out_dir)?;
    let rendered = render_episode(localizer, episode)?;
    let files = VisualizationFiles {
        adapt_attention: out_dir.join(format!("{stem}_adapt_attention.png")),
        target_prediction: out_dir.join(format!("{stem}_target_prediction.png")),
        alpha_grid: out_dir.join(format!("{stem}_alpha.png")),
        score_grid: out_dir.join(format!("{stem}_score_maps.png")),
    };
    rendered.adapt_attention.save_png(&files.adapt_attention)?;
    rendered.target_prediction.save_png(&files.target_prediction)?;
    rendered.alpha_grid.save_png(&files.alpha_grid)?;
    rendered.score_grid.save_png(&files.score_grid)?;
    Ok(files)
}

/// Image-pixel position of the attention peak: the hot feature cell drawn
/// at its receptive-field center.
pub fn attention_peak_px(alpha: &Tensor, offset: usize) -> Result<(usize, usize)> {
    let w = alpha.shape()[2];
    let data = alpha.data();
    let mut best = 0;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    if !data[best].is_finite() {
        return Err(Error::contract("attention_peak", "attention map is not finite"));
    }
    Ok((best / w + offset, best % w + offset))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::ArchitectureConfig;
    use crate::model::ParameterSet;
    use crate::scene::{CueKind, EpisodeStream, GlyphStore, SceneConfig, Split, StreamSource};

    fn tiny_localizer(seed: u64) -> Localizer {
        let cfg = ArchitectureConfig::tiny();
        let params = ParameterSet::init(&cfg, seed).unwrap();
        Localizer::new(cfg, params)
    }

    fn tiny_episode(index: u64) -> Episode {
        let store = Arc::new(GlyphStore::synthetic_sized(2, 50, 2));
        let cfg = SceneConfig::for_canvas(24, CueKind::RedDot, 0.0).unwrap();
        let stream =
            EpisodeStream::new(StreamSource::Glyphs(store), Split::Train, cfg, 12).unwrap();
        stream.episode(index).unwrap()
    }

    #[test]
    fn alpha_sums_to_one_before_colorization() {
        let vis = render_episode(&tiny_localizer(1), &tiny_episode(0)).unwrap();
        let sum: Real = vis.alpha.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "alpha sums to {sum}");
    }

    #[test]
    fn corner_bright_map_renders_at_valid_conv_offset() {
        // A map hot at feature (0, 0) must land at image pixel (off, off),
        // and its upsampled plateau must cover the receptive-field corner.
        let (fh, fw, canvas, off) = (16, 16, 24, 4);
        let mut map = vec![0.0; fh * fw];
        map[0] = 1.0;
        let up = upsample_to_canvas(&map, fh, fw, canvas, off);
        let alpha = Tensor::new(vec![1, fh, fw], map).unwrap();
        assert_eq!(attention_peak_px(&alpha, off).unwrap(), (off, off));
        for r in 0..canvas {
            for c in 0..canvas {
                let hot = r <= off && c <= off;
                assert_eq!(up[r * canvas + c] > 0.0, hot, "pixel ({r}, {c})");
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_and_leaves_inputs_alone() {
        let loc = tiny_localizer(3);
        let ep = tiny_episode(1);
        let before = ep.clone();
        let a = render_episode(&loc, &ep).unwrap();
        let b = render_episode(&loc, &ep).unwrap();
        assert_eq!(ep, before, "episode must not be mutated");
        assert_eq!(a.adapt_attention, b.adapt_attention);
        assert_eq!(a.target_prediction, b.target_prediction);
        assert_eq!(a.alpha_grid, b.alpha_grid);
        assert_eq!(a.score_grid, b.score_grid);
    }

    #[test]
    fn files_written_and_bit_stable() {
        let dir = tempfile::tempdir().unwrap();
        let loc = tiny_localizer(4);
        let ep = tiny_episode(2);
        let files = visualize(&loc, &ep, dir.path(), "ep2").unwrap();
        let first = std::fs::read(&files.adapt_attention).unwrap();
        for f in [
            &files.adapt_attention,
            &files.target_prediction,
            &files.alpha_grid,
            &files.score_grid,
        ] {
            assert!(f.is_file(), "{} missing", f.display());
        }
        visualize(&loc, &ep, dir.path(), "ep2").unwrap();
        assert_eq!(std::fs::read(&files.adapt_attention).unwrap(), first);
    }

    #[test]
    fn overlay_changes_only_where_attention_lands() {
        let ep = tiny_episode(3);
        let canvas = ep.adapt.width();
        let mut weights = vec![0.0; canvas * canvas];
        weights[5 * canvas + 7] = 1.0;
        let out = heat_overlay(&ep.adapt, &weights);
        let mut diffs = 0;
        for y in 0..canvas {
            for x in 0..canvas {
                if out.pixel(x, y) != ep.adapt.pixel(x, y) {
                    assert_eq!((x, y), (7, 5));
                    diffs += 1;
                }
            }
        }
        assert_eq!(diffs, 1);
    }
}
