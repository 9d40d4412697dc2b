//! Index-addressed episode streams. Episode `i` of a stream depends only on
//! (master seed, i), so batches can be generated in any order or in
//! parallel and training can resume mid-stream with identical data.

use std::sync::Arc;

use rand::Rng;

use super::compose::{compose_adaptation, compose_target, Episode, EpisodeMeta, SceneConfig, SceneObject};
use super::glyphs::{GlyphStore, INSTANCES_PER_CHARACTER};
use super::shapes::ShapeStore;
use super::Split;
use crate::rng::{derive_seed, labels, Prng};
use crate::{Error, Real, Result};
use rand_chacha::rand_core::SeedableRng;

/// Which corpus a stream draws object identities from.
#[derive(Clone)]
pub enum StreamSource {
    Glyphs(Arc<GlyphStore>),
    Shapes(Arc<ShapeStore>),
}

impl StreamSource {
    fn num_identities(&self, split: Split) -> usize {
        match self {
            StreamSource::Glyphs(s) => s.num_identities(split),
            StreamSource::Shapes(s) => s.num_identities(split),
        }
    }

    fn identity_name(&self, split: Split, id: usize) -> String {
        match self {
            StreamSource::Glyphs(s) => s.identity_name(split, id),
            StreamSource::Shapes(s) => s.identity_name(split, id),
        }
    }

    /// Render a fresh instance, drawing instance variation from `rng`.
    fn render(&self, split: Split, id: usize, px: usize, rng: &mut Prng) -> SceneObject {
        let sprite = match self {
            StreamSource::Glyphs(s) => {
                let instance = rng.gen_range(0..INSTANCES_PER_CHARACTER);
                s.render(split, id, instance, px)
            }
            StreamSource::Shapes(s) => {
                let angle = std::f64::consts::TAU as Real * rng.gen::<Real>();
                s.render(split, id, angle, px)
            }
        };
        SceneObject { id: self.identity_name(split, id), sprite }
    }
}

/// Deterministic sequence of episodes over one corpus split.
#[derive(Clone)]
pub struct EpisodeStream {
    source: StreamSource,
    split: Split,
    cfg: SceneConfig,
    master_seed: u64,
}

impl EpisodeStream {
    pub fn new(
        source: StreamSource,
        split: Split,
        cfg: SceneConfig,
        master_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = source.num_identities(split);
        if n < 4 {
            return Err(Error::Generation(format!(
                "split holds {n} identities; episodes need 4 distinct"
            )));
        }
        Ok(EpisodeStream { source, split, cfg, master_seed })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// Generate episode `index`. Same (seed, config, index) always yields
    /// bit-identical images and metadata.
    pub fn episode(&self, index: u64) -> Result<Episode> {
        let seed = derive_seed(self.master_seed, labels::EPISODE, index);
        let mut rng = Prng::seed_from_u64(seed);
        let n = self.source.num_identities(self.split);
        let px = self.cfg.object_px;

        // Four distinct identities; the first is cued.
        let picked = rand::seq::index::sample(&mut rng, n, 4);
        let ids: Vec<usize> = picked.iter().collect();
        let cued_id = ids[0];

        let adapt_objs: Vec<SceneObject> = ids
            .iter()
            .map(|&id| self.source.render(self.split, id, px, &mut rng))
            .collect();
        let (adapt_img, adapt_meta, cue_meta) =
            compose_adaptation(&adapt_objs, 0, &self.cfg, &mut rng)?;

        // Target: a fresh instance of the cued identity plus three
        // distractors, each drawn either from the adaptation distractors or
        // fresh from the split, never the cued identity.
        let mut target_objs = vec![self.source.render(self.split, cued_id, px, &mut rng)];
        for _ in 0..3 {
            let id = if rng.gen_bool(0.5) {
                ids[rng.gen_range(1..4)]
            } else {
                loop {
                    let d = rng.gen_range(0..n);
                    if d != cued_id {
                        break d;
                    }
                }
            };
            target_objs.push(self.source.render(self.split, id, px, &mut rng));
        }
        let (target_img, target_meta, label) = compose_target(&target_objs, &self.cfg, &mut rng)?;

        Ok(Episode {
            adapt: adapt_img,
            target: target_img,
            meta: EpisodeMeta {
                seed,
                cued: self.source.identity_name(self.split, cued_id),
                label_x: label[0],
                label_y: label[1],
                cue: cue_meta,
                adapt: adapt_meta,
                target: target_meta,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::compose::CueKind;
    use crate::scene::shapes::ShapeVariant;

    fn glyph_stream(seed: u64, split: Split) -> EpisodeStream {
        let store = Arc::new(GlyphStore::synthetic_sized(1, 50, 2));
        let cfg = SceneConfig::for_canvas(64, CueKind::RedDot, 0.0).unwrap();
        EpisodeStream::new(StreamSource::Glyphs(store), split, cfg, seed).unwrap()
    }

    #[test]
    fn equal_seeds_identical_streams() {
        let a = glyph_stream(42, Split::Train);
        let b = glyph_stream(42, Split::Train);
        for i in [0u64, 1, 7, 100] {
            let ea = a.episode(i).unwrap();
            let eb = b.episode(i).unwrap();
            assert_eq!(ea, eb, "episode {i}");
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = glyph_stream(42, Split::Train);
        let b = glyph_stream(43, Split::Train);
        let mut any_diff = false;
        for i in 0..5 {
            if a.episode(i).unwrap() != b.episode(i).unwrap() {
                any_diff = true;
                break;
            }
        }
        assert!(any_diff);
    }

    #[test]
    fn cued_identity_absent_from_distractors() {
        let s = glyph_stream(9, Split::Test);
        for i in 0..20 {
            let ep = s.episode(i).unwrap();
            let cued = &ep.meta.cued;
            assert_eq!(&ep.meta.target.objects[0].id, cued);
            for d in &ep.meta.target.objects[1..] {
                assert_ne!(&d.id, cued, "episode {i}: cued identity repeated");
            }
            assert_eq!(&ep.meta.adapt.objects[0].id, cued);
        }
    }

    #[test]
    fn train_test_identities_disjoint() {
        let train = glyph_stream(5, Split::Train);
        let test = glyph_stream(5, Split::Test);
        let mut train_ids = std::collections::BTreeSet::new();
        let mut test_ids = std::collections::BTreeSet::new();
        for i in 0..20 {
            for p in &train.episode(i).unwrap().meta.adapt.objects {
                train_ids.insert(p.id.clone());
            }
            for p in &test.episode(i).unwrap().meta.adapt.objects {
                test_ids.insert(p.id.clone());
            }
        }
        assert!(train_ids.is_disjoint(&test_ids));
    }

    #[test]
    fn labels_match_metadata_exactly() {
        let s = glyph_stream(11, Split::Train);
        for i in 0..10 {
            let ep = s.episode(i).unwrap();
            let denom = (s.config().canvas - 1) as Real;
            assert_eq!(ep.meta.label_x, ep.meta.target.objects[0].x / denom);
            assert_eq!(ep.meta.label_y, ep.meta.target.objects[0].y / denom);
            let rc = ep.label_rc();
            assert_eq!(rc, [ep.meta.label_y, ep.meta.label_x]);
        }
    }

    #[test]
    fn shape_stream_runs_both_splits() {
        let store = Arc::new(ShapeStore::generate(ShapeVariant::Truncated, 2));
        let cfg = SceneConfig::for_canvas(64, CueKind::RedDot, 0.0).unwrap();
        for split in [Split::Train, Split::Test] {
            let s = EpisodeStream::new(StreamSource::Shapes(store.clone()), split, cfg, 3).unwrap();
            let ep = s.episode(0).unwrap();
            assert_eq!(ep.adapt.width(), 64);
            assert!(ep.meta.cued.starts_with("shape"));
        }
    }

    #[test]
    fn adaptation_has_cue_target_does_not() {
        let s = glyph_stream(13, Split::Train);
        for i in 0..10 {
            let ep = s.episode(i).unwrap();
            assert!(ep.adapt.contains_color([255, 0, 0], 2), "episode {i} cue missing");
            assert!(!ep.target.contains_color([255, 0, 0], 40), "episode {i} target cue");
        }
    }
}
