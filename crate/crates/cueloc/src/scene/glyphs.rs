//! Handwritten-character corpus: either ingested from the published
//! 50-alphabet dataset layout on disk, or procedurally generated stroke
//! glyphs with the same structure (50 alphabets, 20 instances per
//! character) for fully self-contained runs.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use super::raster::{box_resample, rasterize_strokes, Sprite};
use super::Split;
use crate::rng::{derive_seed, labels, normal, stream_rng, Prng};
use crate::{Error, Real, Result};

/// Every character comes in exactly this many handwritten instances.
pub const INSTANCES_PER_CHARACTER: usize = 20;

/// Ink color for rendered glyphs (dark gray on the light canvas).
pub const INK: [Real; 3] = [26.0 / 255.0, 26.0 / 255.0, 26.0 / 255.0];

const BACKGROUND_ALPHABETS: usize = 40;
const TOTAL_ALPHABETS: usize = 50;

/// Grayscale coverage mask, 255 = full ink.
#[derive(Debug, Clone)]
struct Mask {
    w: usize,
    h: usize,
    alpha: Vec<u8>,
}

/// Procedural character: jittered instances of a fixed set of strokes.
#[derive(Debug, Clone)]
struct Archetype {
    /// Control polylines in unit glyph coordinates.
    strokes: Vec<Vec<(Real, Real)>>,
    /// Stroke width as a fraction of the glyph side.
    width: Real,
    /// Instance jitter is derived from this seed and the instance index.
    seed: u64,
}

#[derive(Debug, Clone)]
enum CharSource {
    Loaded(Vec<Mask>),
    Synthetic(Archetype),
}

#[derive(Debug, Clone)]
struct Character {
    name: String,
    source: CharSource,
}

#[derive(Debug, Clone)]
struct Alphabet {
    name: String,
    characters: Vec<Character>,
}

/// All alphabets plus the background/evaluation split over (alphabet,
/// character) identities. Immutable after construction.
#[derive(Debug, Clone)]
pub struct GlyphStore {
    alphabets: Vec<Alphabet>,
    background: Vec<(usize, usize)>,
    evaluation: Vec<(usize, usize)>,
}

impl GlyphStore {
    /// Procedural corpus with the published structure: 50 alphabets, the
    /// first 40 (by name) forming the background split.
    pub fn synthetic(seed: u64) -> Self {
        Self::synthetic_sized(seed, TOTAL_ALPHABETS, 16)
    }

    /// Procedural corpus with a custom shape; alphabet count must still be
    /// 50 to survive [`GlyphStore::load_omniglot`] after export. Small
    /// character counts keep tests fast.
    pub fn synthetic_sized(seed: u64, n_alphabets: usize, chars_per_alphabet: usize) -> Self {
        let mut alphabets = Vec::with_capacity(n_alphabets);
        for a in 0..n_alphabets {
            let mut characters = Vec::with_capacity(chars_per_alphabet);
            for c in 0..chars_per_alphabet {
                let char_seed =
                    derive_seed(seed, labels::GLYPHS, (a * chars_per_alphabet + c) as u64);
                characters.push(Character {
                    name: format!("character{c:02}"),
                    source: CharSource::Synthetic(Archetype::generate(char_seed)),
                });
            }
            alphabets.push(Alphabet { name: format!("alphabet_{a:02}"), characters });
        }
        Self::with_split(alphabets)
    }

    /// Ingest the published directory layout: either `root/<alphabet>/
    /// <character>/<image>.png`, or the same nested under `images_*`
    /// subdirectories which are pooled. Alphabets are sorted by name; the
    /// first 40 become the background split, the remaining 10 evaluation.
    pub fn load_omniglot(root: &Path) -> Result<Self> {
        let top = list_dirs(root)?;
        if top.is_empty() {
            return Err(Error::ingestion(root, "no alphabet directories"));
        }
        let mut alphabet_dirs: Vec<PathBuf> = Vec::new();
        let pooled = top.iter().any(|d| {
            d.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("images_"))
        });
        if pooled {
            for d in &top {
                alphabet_dirs.extend(list_dirs(d)?);
            }
        } else {
            alphabet_dirs = top;
        }
        alphabet_dirs.sort();
        if alphabet_dirs.len() != TOTAL_ALPHABETS {
            return Err(Error::ingestion(
                root,
                format!("expected {TOTAL_ALPHABETS} alphabets, found {}", alphabet_dirs.len()),
            ));
        }
        let mut alphabets = Vec::with_capacity(alphabet_dirs.len());
        for adir in &alphabet_dirs {
            let mut char_dirs = list_dirs(adir)?;
            if char_dirs.is_empty() {
                return Err(Error::ingestion(adir, "alphabet has no character directories"));
            }
            char_dirs.sort();
            let mut characters = Vec::with_capacity(char_dirs.len());
            for cdir in &char_dirs {
                let mut files: Vec<PathBuf> = fs::read_dir(cdir)
                    .map_err(|e| Error::ingestion(cdir, e.to_string()))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
                    .collect();
                files.sort();
                if files.len() != INSTANCES_PER_CHARACTER {
                    return Err(Error::ingestion(
                        cdir,
                        format!(
                            "expected {INSTANCES_PER_CHARACTER} instances, found {}",
                            files.len()
                        ),
                    ));
                }
                let mut masks = Vec::with_capacity(files.len());
                for f in &files {
                    masks.push(load_mask(f)?);
                }
                characters.push(Character {
                    name: dir_name(cdir),
                    source: CharSource::Loaded(masks),
                });
            }
            alphabets.push(Alphabet { name: dir_name(adir), characters });
        }
        Ok(Self::with_split(alphabets))
    }

    fn with_split(alphabets: Vec<Alphabet>) -> Self {
        let cut = BACKGROUND_ALPHABETS.min(alphabets.len());
        let mut background = Vec::new();
        let mut evaluation = Vec::new();
        for (a, alphabet) in alphabets.iter().enumerate() {
            let bucket = if a < cut { &mut background } else { &mut evaluation };
            for c in 0..alphabet.characters.len() {
                bucket.push((a, c));
            }
        }
        GlyphStore { alphabets, background, evaluation }
    }

    /// Render every glyph into the published on-disk layout (grayscale
    /// PNGs, ink black on white) so it can be re-ingested.
    pub fn export_layout(&self, root: &Path, px: usize) -> Result<()> {
        for alphabet in &self.alphabets {
            for (ci, ch) in alphabet.characters.iter().enumerate() {
                let dir = root.join(&alphabet.name).join(&ch.name);
                fs::create_dir_all(&dir)?;
                for inst in 0..INSTANCES_PER_CHARACTER {
                    let alpha = ch.instance_alpha(inst, px);
                    let mut img = image::GrayImage::new(px as u32, px as u32);
                    for (i, p) in img.pixels_mut().enumerate() {
                        p.0 = [255 - (alpha[i] * 255.0).round() as u8];
                    }
                    let path = dir.join(format!("{ci:04}_{inst:02}.png"));
                    img.save_with_format(&path, image::ImageFormat::Png)?;
                }
            }
        }
        Ok(())
    }

    pub fn num_alphabets(&self) -> usize {
        self.alphabets.len()
    }

    pub fn split_alphabet_count(&self, split: Split) -> usize {
        match split {
            Split::Train => BACKGROUND_ALPHABETS.min(self.alphabets.len()),
            Split::Test => self.alphabets.len().saturating_sub(BACKGROUND_ALPHABETS),
        }
    }

    fn ids(&self, split: Split) -> &[(usize, usize)] {
        match split {
            Split::Train => &self.background,
            Split::Test => &self.evaluation,
        }
    }

    /// Number of character identities in a split.
    pub fn num_identities(&self, split: Split) -> usize {
        self.ids(split).len()
    }

    pub fn identity_name(&self, split: Split, identity: usize) -> String {
        let (a, c) = self.ids(split)[identity];
        format!("{}/{}", self.alphabets[a].name, self.alphabets[a].characters[c].name)
    }

    /// Render one instance of a character at the given sprite size.
    pub fn render(&self, split: Split, identity: usize, instance: usize, px: usize) -> Sprite {
        let (a, c) = self.ids(split)[identity];
        let alpha = self.alphabets[a].characters[c].instance_alpha(instance, px);
        Sprite { size: px, color: INK, alpha }
    }
}

impl Character {
    fn instance_alpha(&self, instance: usize, px: usize) -> Vec<Real> {
        match &self.source {
            CharSource::Loaded(masks) => {
                let m = &masks[instance % masks.len()];
                box_resample(&m.alpha, m.w, m.h, px)
            }
            CharSource::Synthetic(arch) => arch.render(instance, px),
        }
    }
}

impl Archetype {
    fn generate(seed: u64) -> Self {
        let mut rng = stream_rng(seed, labels::GLYPHS, 0);
        let n_strokes = rng.gen_range(2..=4usize);
        let mut strokes = Vec::with_capacity(n_strokes);
        for _ in 0..n_strokes {
            // Resample degenerate (too short) strokes a bounded number of
            // times; the fallback of keeping a short stroke is harmless.
            let mut stroke = sample_stroke(&mut rng);
            for _ in 0..8 {
                if polyline_length(&stroke) >= 0.35 {
                    break;
                }
                stroke = sample_stroke(&mut rng);
            }
            strokes.push(stroke);
        }
        let width = 0.08 + 0.06 * rng.gen::<Real>();
        Archetype { strokes, width, seed }
    }

    /// Deterministic per-instance jitter: point noise, rotation, scale.
    fn render(&self, instance: usize, px: usize) -> Vec<Real> {
        let mut rng = stream_rng(self.seed, labels::GLYPHS, 1 + instance as u64);
        let angle = 0.3 * (rng.gen::<Real>() - 0.5);
        let scale = 0.85 + 0.2 * rng.gen::<Real>();
        let (sin, cos) = angle.sin_cos();
        let jittered: Vec<Vec<(Real, Real)>> = self
            .strokes
            .iter()
            .map(|poly| {
                poly.iter()
                    .map(|&(x, y)| {
                        let (jx, jy) = (x + 0.03 * normal(&mut rng), y + 0.03 * normal(&mut rng));
                        // Rotate and scale about the glyph center.
                        let (cx, cy) = (jx - 0.5, jy - 0.5);
                        let rx = scale * (cx * cos - cy * sin) + 0.5;
                        let ry = scale * (cx * sin + cy * cos) + 0.5;
                        (rx.clamp(0.02, 0.98) * px as Real, ry.clamp(0.02, 0.98) * px as Real)
                    })
                    .collect()
            })
            .collect();
        let mut sprite = Sprite::blank(px, INK);
        let half_width = 0.5 * self.width * px as Real;
        rasterize_strokes(&mut sprite, &jittered, half_width.max(0.45));
        sprite.alpha
    }
}

fn sample_stroke(rng: &mut Prng) -> Vec<(Real, Real)> {
    let n_pts = rng.gen_range(2..=4usize);
    (0..n_pts)
        .map(|_| (0.15 + 0.7 * rng.gen::<Real>(), 0.15 + 0.7 * rng.gen::<Real>()))
        .collect()
}

fn polyline_length(poly: &[(Real, Real)]) -> Real {
    poly.windows(2)
        .map(|s| ((s[1].0 - s[0].0).powi(2) + (s[1].1 - s[0].1).powi(2)).sqrt())
        .sum()
}

fn list_dirs(path: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::ingestion(path, e.to_string()))?;
        if entry.file_type().map_err(|e| Error::ingestion(path, e.to_string()))?.is_dir() {
            dirs.push(entry.path());
        }
    }
    Ok(dirs)
}

fn dir_name(path: &Path) -> String {
    path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string()
}

fn load_mask(path: &Path) -> Result<Mask> {
    let img = image::open(path)
        .map_err(|e| Error::ingestion(path, format!("cannot decode image: {e}")))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    // Published glyphs are black ink on white background.
    let alpha = img.into_raw().iter().map(|&v| 255 - v).collect();
    Ok(Mask { w, h, alpha })
}
