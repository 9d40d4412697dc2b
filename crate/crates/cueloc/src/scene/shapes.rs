//! Colored-shape corpus: 12 procedural silhouettes, 8 for training and 4
//! for testing, crossed with disjoint train/test color lists. An object
//! identity is one (shape, color) pair; instances vary by in-plane rotation.

use rand::Rng;

use super::raster::{rasterize_polygon, Sprite};
use super::Split;
use crate::rng::{stream_rng, labels, Prng};
use crate::Real;

const NUM_SHAPES: usize = 12;
const TRAIN_SHAPES: usize = 8;
const FULL_TRAIN_COLORS: usize = 384;
const FULL_TEST_COLORS: usize = 128;
const TRUNC_TRAIN_COLORS: usize = 48;
const TRUNC_TEST_COLORS: usize = 12;

/// Full protocol (384/128 colors) or the color-starved variant (48/12).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeVariant {
    Full,
    Truncated,
}

/// Immutable shape/color corpus. The truncated variant uses prefixes of the
/// full variant's color lists, so the same seed gives nested stores.
#[derive(Debug, Clone)]
pub struct ShapeStore {
    /// 12 outlines in unit coordinates around (0.5, 0.5).
    outlines: Vec<Vec<(Real, Real)>>,
    train_colors: Vec<[Real; 3]>,
    test_colors: Vec<[Real; 3]>,
}

impl ShapeStore {
    pub fn generate(variant: ShapeVariant, seed: u64) -> Self {
        let outlines = (0..NUM_SHAPES)
            .map(|i| {
                let mut rng = stream_rng(seed, labels::SHAPES, i as u64);
                sample_outline(&mut rng, 4 + i % 4)
            })
            .collect();
        let mut color_rng = stream_rng(seed, labels::SHAPES, NUM_SHAPES as u64);
        let mut all = Vec::with_capacity(FULL_TRAIN_COLORS + FULL_TEST_COLORS);
        while all.len() < FULL_TRAIN_COLORS + FULL_TEST_COLORS {
            let c = sample_color(&mut color_rng, &all);
            all.push(c);
        }
        let (n_train, n_test) = match variant {
            ShapeVariant::Full => (FULL_TRAIN_COLORS, FULL_TEST_COLORS),
            ShapeVariant::Truncated => (TRUNC_TRAIN_COLORS, TRUNC_TEST_COLORS),
        };
        ShapeStore {
            outlines,
            train_colors: all[..n_train].to_vec(),
            test_colors: all[FULL_TRAIN_COLORS..FULL_TRAIN_COLORS + n_test].to_vec(),
        }
    }

    fn colors(&self, split: Split) -> &[[Real; 3]] {
        match split {
            Split::Train => &self.train_colors,
            Split::Test => &self.test_colors,
        }
    }

    fn shape_range(&self, split: Split) -> std::ops::Range<usize> {
        match split {
            Split::Train => 0..TRAIN_SHAPES,
            Split::Test => TRAIN_SHAPES..NUM_SHAPES,
        }
    }

    /// shape count x color count for the split.
    pub fn num_identities(&self, split: Split) -> usize {
        self.shape_range(split).len() * self.colors(split).len()
    }

    fn locate(&self, split: Split, identity: usize) -> (usize, [Real; 3]) {
        let ncol = self.colors(split).len();
        let shape = self.shape_range(split).start + identity / ncol;
        (shape, self.colors(split)[identity % ncol])
    }

    pub fn identity_name(&self, split: Split, identity: usize) -> String {
        let ncol = self.colors(split).len();
        let (shape, _) = self.locate(split, identity);
        format!("shape{shape:02}_color{:03}", identity % ncol)
    }

    pub fn identity_color(&self, split: Split, identity: usize) -> [Real; 3] {
        self.locate(split, identity).1
    }

    /// Rasterize one instance, rotated by `angle` radians.
    pub fn render(&self, split: Split, identity: usize, angle: Real, px: usize) -> Sprite {
        let (shape, color) = self.locate(split, identity);
        let (sin, cos) = angle.sin_cos();
        let poly: Vec<(Real, Real)> = self.outlines[shape]
            .iter()
            .map(|&(x, y)| {
                let (cx, cy) = (x - 0.5, y - 0.5);
                (
                    (cx * cos - cy * sin + 0.5) * px as Real,
                    (cx * sin + cy * cos + 0.5) * px as Real,
                )
            })
            .collect();
        let mut sprite = Sprite::blank(px, color);
        rasterize_polygon(&mut sprite, &poly);
        sprite
    }
}

/// Star-shaped polygon: sorted jittered angles with random radii. Extent is
/// capped so every rotation stays inside the unit box.
fn sample_outline(rng: &mut Prng, n_vertices: usize) -> Vec<(Real, Real)> {
    let n = n_vertices as Real;
    (0..n_vertices)
        .map(|i| {
            let theta =
                std::f64::consts::TAU as Real * (i as Real + 0.35 * (rng.gen::<Real>() - 0.5)) / n;
            let r = 0.30 + 0.18 * rng.gen::<Real>();
            (0.5 + r * theta.cos(), 0.5 + r * theta.sin())
        })
        .collect()
}

/// A color far from the cue colors, from any gray (canvas and ink), and
/// from all colors already chosen.
fn sample_color(rng: &mut Prng, existing: &[[Real; 3]]) -> [Real; 3] {
    const RED: [Real; 3] = [1.0, 0.0, 0.0];
    const GREEN: [Real; 3] = [0.0, 1.0, 0.0];
    for _ in 0..100_000 {
        let c = [
            0.05 + 0.90 * rng.gen::<Real>(),
            0.05 + 0.90 * rng.gen::<Real>(),
            0.05 + 0.90 * rng.gen::<Real>(),
        ];
        let max = c[0].max(c[1]).max(c[2]);
        let min = c[0].min(c[1]).min(c[2]);
        let ok = dist2(c, RED) > 0.35 * 0.35
            && dist2(c, GREEN) > 0.35 * 0.35
            && (max - min) > 0.12
            && existing.iter().all(|&e| dist2(c, e) > 0.035 * 0.035);
        if ok {
            return c;
        }
    }
    unreachable!("color space cannot be exhausted by 512 samples");
}

fn dist2(a: [Real; 3], b: [Real; 3]) -> Real {
    (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_store_counts() {
        let s = ShapeStore::generate(ShapeVariant::Full, 3);
        assert_eq!(s.num_identities(Split::Train), 3072);
        assert_eq!(s.num_identities(Split::Test), 512);
    }

    #[test]
    fn truncated_store_counts() {
        let s = ShapeStore::generate(ShapeVariant::Truncated, 3);
        assert_eq!(s.num_identities(Split::Train), 384);
        assert_eq!(s.num_identities(Split::Test), 48);
    }

    #[test]
    fn same_seed_identical_different_seed_not() {
        let a = ShapeStore::generate(ShapeVariant::Full, 9);
        let b = ShapeStore::generate(ShapeVariant::Full, 9);
        assert_eq!(a.train_colors, b.train_colors);
        assert_eq!(a.outlines, b.outlines);
        let c = ShapeStore::generate(ShapeVariant::Full, 10);
        assert_ne!(a.train_colors, c.train_colors);
    }

    #[test]
    fn color_splits_disjoint_and_far_from_cues() {
        let s = ShapeStore::generate(ShapeVariant::Full, 4);
        for &tc in &s.train_colors {
            for &ec in &s.test_colors {
                assert!(dist2(tc, ec) > 0.0, "shared color across splits");
            }
        }
        for c in s.train_colors.iter().chain(&s.test_colors) {
            assert!(dist2(*c, [1.0, 0.0, 0.0]) > 0.1, "near cue red: {c:?}");
            assert!(dist2(*c, [0.0, 1.0, 0.0]) > 0.1, "near cue green: {c:?}");
            let (max, min) = (
                c[0].max(c[1]).max(c[2]),
                c[0].min(c[1]).min(c[2]),
            );
            assert!(max - min > 0.1, "near gray: {c:?}");
        }
    }

    #[test]
    fn truncated_colors_are_prefixes_of_full() {
        let full = ShapeStore::generate(ShapeVariant::Full, 5);
        let trunc = ShapeStore::generate(ShapeVariant::Truncated, 5);
        assert_eq!(&full.train_colors[..48], trunc.train_colors.as_slice());
        assert_eq!(&full.test_colors[..12], trunc.test_colors.as_slice());
    }

    #[test]
    fn train_and_test_shapes_disjoint() {
        let s = ShapeStore::generate(ShapeVariant::Full, 6);
        let train: Vec<usize> = s.shape_range(Split::Train).collect();
        let test: Vec<usize> = s.shape_range(Split::Test).collect();
        assert!(train.iter().all(|i| !test.contains(i)));
        assert_eq!(train.len() + test.len(), NUM_SHAPES);
    }

    #[test]
    fn render_covers_and_rotates() {
        let s = ShapeStore::generate(ShapeVariant::Full, 7);
        let a = s.render(Split::Train, 0, 0.0, 17);
        let cover: Real = a.alpha.iter().sum::<Real>() / (17.0 * 17.0);
        assert!(cover > 0.15 && cover < 0.95, "coverage {cover}");
        let b = s.render(Split::Train, 0, 0.7, 17);
        assert_ne!(a.alpha, b.alpha, "rotation changes the raster");
        let c = s.render(Split::Train, 0, 0.0, 17);
        assert_eq!(a.alpha, c.alpha, "same angle renders identically");
    }
}
