//! Software rasterization in 8-bit RGB.
//!
//! All geometry uses (x, y) = (column, row) pixel coordinates with pixel
//! centers at integers. Coverage is estimated on a fixed 4x4 subsample grid
//! and blending happens in u8 space, so a scene composes to identical bytes
//! on every platform and a PNG round-trip is lossless.

use std::path::Path;

use crate::autograd::Tensor;
use crate::{Error, Real, Result};

/// Subsamples per axis for coverage estimation.
const SUB: usize = 4;

/// Subsample center offsets within one pixel.
fn sub_offsets() -> [Real; SUB] {
    let mut offs = [0.0; SUB];
    for (s, o) in offs.iter_mut().enumerate() {
        *o = (s as Real + 0.5) / SUB as Real - 0.5;
    }
    offs
}

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8Image {
    w: usize,
    h: usize,
    data: Vec<u8>,
}

impl Rgb8Image {
    pub fn filled(w: usize, h: usize, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(3 * w * h);
        for _ in 0..w * h {
            data.extend_from_slice(&rgb);
        }
        Rgb8Image { w, h, data }
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.w + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Alpha-blend a color (components in [0, 1]) over one pixel.
    pub fn blend_pixel(&mut self, x: usize, y: usize, color: [Real; 3], alpha: Real) {
        if alpha <= 0.0 || x >= self.w || y >= self.h {
            return;
        }
        let a = alpha.min(1.0);
        let i = (y * self.w + x) * 3;
        for c in 0..3 {
            let bg = self.data[i + c] as Real;
            self.data[i + c] = (bg * (1.0 - a) + color[c] * 255.0 * a).round() as u8;
        }
    }

    /// Blend a sprite with its top-left corner at integer (x0, y0).
    pub fn blend_sprite(&mut self, x0: i64, y0: i64, sprite: &Sprite) {
        for sy in 0..sprite.size {
            for sx in 0..sprite.size {
                let a = sprite.alpha[sy * sprite.size + sx];
                let (x, y) = (x0 + sx as i64, y0 + sy as i64);
                if a > 0.0 && x >= 0 && y >= 0 {
                    self.blend_pixel(x as usize, y as usize, sprite.color, a);
                }
            }
        }
    }

    /// Blend a filled disc centered at float (cx, cy) with antialiased edges.
    pub fn blend_disc(&mut self, cx: Real, cy: Real, radius: Real, color: [Real; 3]) {
        let offs = sub_offsets();
        let r2 = radius * radius;
        let x_lo = (cx - radius - 1.0).floor().max(0.0) as usize;
        let y_lo = (cy - radius - 1.0).floor().max(0.0) as usize;
        let x_hi = ((cx + radius + 1.0).ceil() as usize).min(self.w.saturating_sub(1));
        let y_hi = ((cy + radius + 1.0).ceil() as usize).min(self.h.saturating_sub(1));
        for y in y_lo..=y_hi.min(self.h - 1) {
            for x in x_lo..=x_hi.min(self.w - 1) {
                let mut hits = 0;
                for oy in offs {
                    for ox in offs {
                        let dx = x as Real + ox - cx;
                        let dy = y as Real + oy - cy;
                        if dx * dx + dy * dy <= r2 {
                            hits += 1;
                        }
                    }
                }
                if hits > 0 {
                    self.blend_pixel(x, y, color, hits as Real / (SUB * SUB) as Real);
                }
            }
        }
    }

    /// True if any pixel matches `rgb` in every channel within `tol` levels.
    pub fn contains_color(&self, rgb: [u8; 3], tol: u8) -> bool {
        self.data.chunks_exact(3).any(|p| {
            p.iter()
                .zip(rgb)
                .all(|(&a, b)| (a as i16 - b as i16).unsigned_abs() <= tol as u16)
        })
    }

    /// Planes-first float tensor, values in [0, 1].
    pub fn to_tensor(&self) -> Tensor {
        let mut data = vec![0.0; 3 * self.h * self.w];
        for y in 0..self.h {
            for x in 0..self.w {
                for c in 0..3 {
                    data[(c * self.h + y) * self.w + x] =
                        self.data[(y * self.w + x) * 3 + c] as Real / 255.0;
                }
            }
        }
        Tensor::new(vec![3, self.h, self.w], data).expect("sizes agree")
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img: image::RgbImage =
            image::ImageBuffer::from_raw(self.w as u32, self.h as u32, self.data.clone())
                .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(Error::from)
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::ingestion(path, format!("cannot decode image: {e}")))?
            .to_rgb8();
        Ok(Rgb8Image {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.into_raw(),
        })
    }
}

/// A square single-color stamp with per-pixel coverage in [0, 1].
#[derive(Debug, Clone)]
pub struct Sprite {
    pub size: usize,
    pub color: [Real; 3],
    pub alpha: Vec<Real>,
}

impl Sprite {
    pub fn blank(size: usize, color: [Real; 3]) -> Self {
        Sprite { size, color, alpha: vec![0.0; size * size] }
    }
}

/// Distance from point p to segment ab.
fn dist_to_segment(p: (Real, Real), a: (Real, Real), b: (Real, Real)) -> Real {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 { ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (dx, dy) = (wx - t * vx, wy - t * vy);
    (dx * dx + dy * dy).sqrt()
}

/// Stamp round-capped strokes into a sprite's alpha channel. Polyline
/// coordinates are in sprite pixels.
pub fn rasterize_strokes(sprite: &mut Sprite, strokes: &[Vec<(Real, Real)>], half_width: Real) {
    let offs = sub_offsets();
    let n = sprite.size;
    for y in 0..n {
        for x in 0..n {
            let mut hits = 0;
            for oy in offs {
                for ox in offs {
                    let p = (x as Real + ox, y as Real + oy);
                    let inside = strokes.iter().any(|poly| {
                        poly.windows(2)
                            .any(|seg| dist_to_segment(p, seg[0], seg[1]) <= half_width)
                            || (poly.len() == 1 && dist_to_segment(p, poly[0], poly[0]) <= half_width)
                    });
                    if inside {
                        hits += 1;
                    }
                }
            }
            let a = hits as Real / (SUB * SUB) as Real;
            let cell = &mut sprite.alpha[y * n + x];
            *cell = cell.max(a);
        }
    }
}

/// Even-odd point-in-polygon test.
fn point_in_polygon(p: (Real, Real), poly: &[(Real, Real)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        if (y1 > p.1) != (y2 > p.1) {
            let x_cross = x1 + (p.1 - y1) / (y2 - y1) * (x2 - x1);
            if p.0 < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Fill a simple polygon (sprite pixel coordinates) into the alpha channel.
pub fn rasterize_polygon(sprite: &mut Sprite, poly: &[(Real, Real)]) {
    let offs = sub_offsets();
    let n = sprite.size;
    for y in 0..n {
        for x in 0..n {
            let mut hits = 0;
            for oy in offs {
                for ox in offs {
                    if point_in_polygon((x as Real + ox, y as Real + oy), poly) {
                        hits += 1;
                    }
                }
            }
            let a = hits as Real / (SUB * SUB) as Real;
            let cell = &mut sprite.alpha[y * n + x];
            *cell = cell.max(a);
        }
    }
}

/// Area-weighted box resampling of a u8 alpha mask to a square sprite
/// channel with values in [0, 1].
pub fn box_resample(src: &[u8], sw: usize, sh: usize, dst_size: usize) -> Vec<Real> {
    assert_eq!(src.len(), sw * sh);
    let mut out = vec![0.0; dst_size * dst_size];
    let sx_per = sw as Real / dst_size as Real;
    let sy_per = sh as Real / dst_size as Real;
    for dy in 0..dst_size {
        let y0 = dy as Real * sy_per;
        let y1 = y0 + sy_per;
        for dx in 0..dst_size {
            let x0 = dx as Real * sx_per;
            let x1 = x0 + sx_per;
            let mut acc = 0.0;
            let mut area = 0.0;
            let mut sy = y0.floor() as usize;
            while (sy as Real) < y1 && sy < sh {
                let wy = (y1.min(sy as Real + 1.0) - y0.max(sy as Real)).max(0.0);
                let mut sx = x0.floor() as usize;
                while (sx as Real) < x1 && sx < sw {
                    let wx = (x1.min(sx as Real + 1.0) - x0.max(sx as Real)).max(0.0);
                    acc += wy * wx * src[sy * sw + sx] as Real / 255.0;
                    area += wy * wx;
                    sx += 1;
                }
                sy += 1;
            }
            out[dy * dst_size + dx] = if area > 0.0 { acc / area } else { 0.0 };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blend_full_alpha_replaces_pixel() {
        let mut img = Rgb8Image::filled(4, 4, [204, 204, 204]);
        img.blend_pixel(1, 2, [1.0, 0.0, 0.0], 1.0);
        assert_eq!(img.pixel(1, 2), [255, 0, 0]);
        assert_eq!(img.pixel(0, 0), [204, 204, 204]);
    }

    #[test]
    fn disc_center_saturated_and_symmetric() {
        let mut img = Rgb8Image::filled(11, 11, [204, 204, 204]);
        img.blend_disc(5.0, 5.0, 3.0, [1.0, 0.0, 0.0]);
        assert_eq!(img.pixel(5, 5), [255, 0, 0]);
        for (a, b) in [((3, 5), (7, 5)), ((5, 3), (5, 7)), ((4, 4), (6, 6))] {
            assert_eq!(img.pixel(a.0, a.1), img.pixel(b.0, b.1), "{a:?} vs {b:?}");
        }
        assert_eq!(img.pixel(0, 0), [204, 204, 204], "far corner untouched");
    }

    #[test]
    fn contains_color_detects_cue() {
        let mut img = Rgb8Image::filled(8, 8, [204, 204, 204]);
        assert!(!img.contains_color([255, 0, 0], 40));
        img.blend_disc(4.0, 4.0, 1.5, [1.0, 0.0, 0.0]);
        assert!(img.contains_color([255, 0, 0], 40));
    }

    #[test]
    fn tensor_conversion_matches_bytes() {
        let mut img = Rgb8Image::filled(3, 2, [0, 51, 102]);
        img.blend_pixel(2, 1, [1.0, 1.0, 1.0], 1.0);
        let t = img.to_tensor();
        assert_eq!(t.shape(), [3, 2, 3]);
        assert!((t.at3(0, 0, 0) - 0.0).abs() < 1e-12);
        assert!((t.at3(1, 0, 0) - 51.0 / 255.0).abs() < 1e-12);
        assert!((t.at3(2, 1, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn png_round_trip_bit_exact() {
        let mut img = Rgb8Image::filled(9, 7, [204, 204, 204]);
        img.blend_disc(3.5, 2.5, 2.0, [0.2, 0.9, 0.4]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        img.save_png(&path).unwrap();
        let back = Rgb8Image::load_png(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn strokes_cover_their_path() {
        let mut sp = Sprite::blank(9, [0.1, 0.1, 0.1]);
        rasterize_strokes(&mut sp, &[vec![(1.0, 4.0), (7.0, 4.0)]], 1.2);
        assert!(sp.alpha[4 * 9 + 4] > 0.9, "on the stroke");
        assert!(sp.alpha[0] < 0.05, "corner clear");
    }

    #[test]
    fn polygon_fill_square() {
        let mut sp = Sprite::blank(8, [0.5, 0.2, 0.2]);
        rasterize_polygon(&mut sp, &[(1.0, 1.0), (6.0, 1.0), (6.0, 6.0), (1.0, 6.0)]);
        assert!(sp.alpha[3 * 8 + 3] == 1.0, "interior full");
        assert!(sp.alpha[0] == 0.0, "outside empty");
        // Symmetry across the square's diagonal.
        assert!((sp.alpha[2 * 8 + 5] - sp.alpha[5 * 8 + 2]).abs() < 1e-12);
    }

    #[test]
    fn resample_constant_mask_stays_constant() {
        let src = vec![128u8; 12 * 12];
        let out = box_resample(&src, 12, 12, 5);
        for v in out {
            assert!((v - 128.0 / 255.0).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_preserves_mean_roughly() {
        // Left half ink, right half blank; downscale keeps the mean.
        let mut src = vec![0u8; 20 * 20];
        for y in 0..20 {
            for x in 0..10 {
                src[y * 20 + x] = 255;
            }
        }
        let out = box_resample(&src, 20, 20, 7);
        let mean: Real = out.iter().sum::<Real>() / out.len() as Real;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
    }
}
