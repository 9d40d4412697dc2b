//! Episode composition: place object sprites at non-overlapping positions
//! on a light-gray canvas, render the cue onto the adaptation image, and
//! derive the normalized label from the cued placement in the target image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::raster::{Rgb8Image, Sprite};
use crate::autograd::Tensor;
use crate::rng::Prng;
use crate::{Error, Real, Result};

/// Canvas background level (light gray).
pub const CANVAS_BG: [u8; 3] = [204, 204, 204];
/// Cue colors, saturated so no object color can imitate them.
pub const CUE_RED: [Real; 3] = [1.0, 0.0, 0.0];
pub const CUE_GREEN: [Real; 3] = [0.0, 1.0, 0.0];

/// Reference canvas the pixel constants are stated for.
const REF_CANVAS: Real = 150.0;
const REF_OBJECT: Real = 40.0;
const REF_DOT_RADIUS: Real = 3.0;
const REF_MARKER_GAP: Real = 2.0;

const PLACEMENT_RETRIES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    RedDot,
    GreenMarker,
}

impl std::str::FromStr for CueKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" | "red_dot" => Ok(CueKind::RedDot),
            "green" | "green_marker" => Ok(CueKind::GreenMarker),
            other => Err(Error::Config(format!("unknown cue kind '{other}'"))),
        }
    }
}

/// How the cue is drawn on the adaptation image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueSpec {
    pub kind: CueKind,
    /// Dot radius in pixels (red-dot cue).
    pub radius: Real,
    /// Center displacement bound as a fraction of object size, per axis.
    pub jitter: Real,
}

impl CueSpec {
    /// Cue scaled for a canvas side length; the red dot keeps the 3 px /
    /// 150 px proportion with a 1 px floor.
    pub fn new(kind: CueKind, jitter: Real, canvas: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&jitter) {
            return Err(Error::Config(format!("cue jitter {jitter} outside [0, 1)")));
        }
        let radius = (REF_DOT_RADIUS * canvas as Real / REF_CANVAS).max(1.0);
        Ok(CueSpec { kind, radius, jitter })
    }
}

/// Canvas and sprite geometry for one protocol configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Square canvas side in pixels.
    pub canvas: usize,
    /// Square object sprite side in pixels.
    pub object_px: usize,
    pub cue: CueSpec,
}

impl SceneConfig {
    /// Standard geometry: objects keep the 40 px / 150 px proportion.
    pub fn for_canvas(canvas: usize, kind: CueKind, jitter: Real) -> Result<Self> {
        let object_px = ((REF_OBJECT * canvas as Real / REF_CANVAS).round() as usize).max(8);
        let cfg = SceneConfig { canvas, object_px, cue: CueSpec::new(kind, jitter, canvas)? };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.object_px == 0 || self.canvas < self.object_px {
            return Err(Error::Config(format!(
                "canvas {} cannot hold {} px objects",
                self.canvas, self.object_px
            )));
        }
        Ok(())
    }

    /// Green-marker disc radius: the disc is half the object size across.
    pub fn marker_radius(&self) -> Real {
        self.object_px as Real / 4.0
    }

    /// Gap between the marker disc and the object bounding box.
    pub fn marker_gap(&self) -> Real {
        (REF_MARKER_GAP * self.canvas as Real / REF_CANVAS).max(1.0)
    }
}

/// One identity-tagged sprite ready for placement.
pub struct SceneObject {
    pub id: String,
    pub sprite: Sprite,
}

/// Placed object: identity plus bounding-box center in pixel coordinates
/// (x = column, y = row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPx {
    pub id: String,
    pub x: Real,
    pub y: Real,
    pub size: usize,
}

impl PlacementPx {
    /// Top-left corner (column, row).
    pub fn top_left(&self) -> (i64, i64) {
        let half = (self.size - 1) as Real / 2.0;
        ((self.x - half).round() as i64, (self.y - half).round() as i64)
    }
}

/// Objects of one composed image; index 0 is always the cued object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub objects: Vec<PlacementPx>,
}

/// Cue as rendered: kind plus center position in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueMeta {
    pub kind: CueKind,
    pub x: Real,
    pub y: Real,
}

/// Everything needed to reproduce or audit one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    /// Stream-derived seed this episode was generated from.
    pub seed: u64,
    /// Cued identity (same as `adapt.objects[0].id` and
    /// `target.objects[0].id`).
    pub cued: String,
    /// Normalized target-image label: cued bounding-box center over
    /// (canvas - 1), x = column axis.
    pub label_x: Real,
    pub label_y: Real,
    pub cue: CueMeta,
    pub adapt: SceneMeta,
    pub target: SceneMeta,
}

/// One adaptation/target pair with its label and metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub adapt: Rgb8Image,
    pub target: Rgb8Image,
    pub meta: EpisodeMeta,
}

impl Episode {
    /// Loss label: normalized (row, col), matching the network output order.
    pub fn label_rc(&self) -> [Real; 2] {
        [self.meta.label_y, self.meta.label_x]
    }

    pub fn label_tensor(&self) -> Tensor {
        Tensor::new(vec![2], self.label_rc().to_vec()).expect("fixed shape")
    }

    pub fn adapt_tensor(&self) -> Tensor {
        self.adapt.to_tensor()
    }

    pub fn target_tensor(&self) -> Tensor {
        self.target.to_tensor()
    }
}

/// Integer exclusion rectangle (row, col, height, width).
#[derive(Clone, Copy)]
struct Rect {
    r: i64,
    c: i64,
    h: i64,
    w: i64,
}

impl Rect {
    fn overlaps(&self, o: &Rect) -> bool {
        !(self.r + self.h <= o.r
            || o.r + o.h <= self.r
            || self.c + self.w <= o.c
            || o.c + o.w <= self.c)
    }
}

/// Sample a top-left corner for a `size` sprite whose exclusion zone
/// (inflated by `pad` on all sides plus `pad_top` extra above) fits the
/// canvas and misses all existing zones. Returns (top-left, zone).
fn place(
    canvas: usize,
    size: usize,
    pad: usize,
    pad_top: usize,
    existing: &[Rect],
    rng: &mut Prng,
) -> Result<((usize, usize), Rect)> {
    let lo_r = pad + pad_top;
    let lo_c = pad;
    let hi_r = canvas.checked_sub(size + pad).filter(|&h| h >= lo_r);
    let hi_c = canvas.checked_sub(size + pad).filter(|&h| h >= lo_c);
    let (hi_r, hi_c) = match (hi_r, hi_c) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Generation(format!(
                "canvas {canvas} too small for a {size} px object with {pad}+{pad_top} px of cue clearance"
            )))
        }
    };
    for _ in 0..PLACEMENT_RETRIES {
        let r0 = rng.gen_range(lo_r..=hi_r);
        let c0 = rng.gen_range(lo_c..=hi_c);
        let zone = Rect {
            r: r0 as i64 - (pad + pad_top) as i64,
            c: c0 as i64 - pad as i64,
            h: (size + 2 * pad + pad_top) as i64,
            w: (size + 2 * pad) as i64,
        };
        if existing.iter().all(|e| !zone.overlaps(e)) {
            return Ok(((r0, c0), zone));
        }
    }
    Err(Error::Generation(format!(
        "no free position for a {size} px object after {PLACEMENT_RETRIES} attempts"
    )))
}

fn center_of(r0: usize, c0: usize, size: usize) -> (Real, Real) {
    let half = (size - 1) as Real / 2.0;
    (c0 as Real + half, r0 as Real + half)
}

fn require_four(objects: &[SceneObject], op: &'static str) -> Result<()> {
    if objects.len() != 4 {
        return Err(Error::contract(op, format!("expected 4 objects, got {}", objects.len())));
    }
    Ok(())
}

/// Compose the adaptation image: the cued object is placed first with
/// enough clearance that its cue can never leave the canvas or touch
/// another object, then the three distractors. Returns the image, the
/// placements (cued first), and the rendered cue.
pub fn compose_adaptation(
    objects: &[SceneObject],
    cued: usize,
    cfg: &SceneConfig,
    rng: &mut Prng,
) -> Result<(Rgb8Image, SceneMeta, CueMeta)> {
    require_four(objects, "compose_adaptation")?;
    cfg.validate()?;
    if cued >= objects.len() {
        return Err(Error::contract("compose_adaptation", format!("cued index {cued}")));
    }
    {
        let mut ids: Vec<&str> = objects.iter().map(|o| o.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != objects.len() {
            return Err(Error::contract("compose_adaptation", "object identities must be distinct"));
        }
    }
    let s = cfg.object_px;
    // Clearance beyond the cued bounding box that the cue can reach: the
    // jittered dot usually stays inside the box (max displacement plus
    // radius under the half-size), the marker always extends above it.
    let (pad, pad_top) = match cfg.cue.kind {
        CueKind::RedDot => {
            let reach = (cfg.cue.jitter * s as Real).floor() + cfg.cue.radius;
            let overhang = (reach - (s as Real - 1.0) / 2.0).max(0.0);
            (overhang.ceil() as usize, 0)
        }
        CueKind::GreenMarker => (0, (cfg.marker_gap() + 2.0 * cfg.marker_radius()).ceil() as usize),
    };

    let mut img = Rgb8Image::filled(cfg.canvas, cfg.canvas, CANVAS_BG);
    let mut zones: Vec<Rect> = Vec::with_capacity(4);
    let mut placements: Vec<PlacementPx> = Vec::with_capacity(4);

    let ((r0, c0), zone) = place(cfg.canvas, s, pad, pad_top, &zones, rng)?;
    zones.push(zone);
    let (cx, cy) = center_of(r0, c0, s);
    img.blend_sprite(c0 as i64, r0 as i64, &objects[cued].sprite);
    placements.push(PlacementPx { id: objects[cued].id.clone(), x: cx, y: cy, size: s });

    for (i, obj) in objects.iter().enumerate() {
        if i == cued {
            continue;
        }
        let ((r0, c0), zone) = place(cfg.canvas, s, 0, 0, &zones, rng)?;
        zones.push(zone);
        let (x, y) = center_of(r0, c0, s);
        img.blend_sprite(c0 as i64, r0 as i64, &obj.sprite);
        placements.push(PlacementPx { id: obj.id.clone(), x, y, size: s });
    }

    let cue = match cfg.cue.kind {
        CueKind::RedDot => {
            let (mut dx, mut dy) = (0.0, 0.0);
            // Displacement bound in whole pixels so a 0.33 jitter on a
            // 40 px object moves the dot by at most 13 px per axis.
            let bound = (cfg.cue.jitter * s as Real).floor();
            if bound > 0.0 {
                dx = bound * (2.0 * rng.gen::<Real>() - 1.0);
                dy = bound * (2.0 * rng.gen::<Real>() - 1.0);
            }
            let (x, y) = (cx + dx, cy + dy);
            img.blend_disc(x, y, cfg.cue.radius, CUE_RED);
            CueMeta { kind: CueKind::RedDot, x, y }
        }
        CueKind::GreenMarker => {
            let y = r0 as Real - cfg.marker_gap() - cfg.marker_radius();
            img.blend_disc(cx, y, cfg.marker_radius(), CUE_GREEN);
            CueMeta { kind: CueKind::GreenMarker, x: cx, y }
        }
    };

    Ok((img, SceneMeta { objects: placements }, cue))
}

/// Compose the target image: no cue is rendered, the cued object (index 0)
/// is placed like any other. Returns the image, placements (cued first),
/// and the normalized (x, y) label of the cued center.
pub fn compose_target(
    objects: &[SceneObject],
    cfg: &SceneConfig,
    rng: &mut Prng,
) -> Result<(Rgb8Image, SceneMeta, [Real; 2])> {
    require_four(objects, "compose_target")?;
    cfg.validate()?;
    let s = cfg.object_px;
    let mut img = Rgb8Image::filled(cfg.canvas, cfg.canvas, CANVAS_BG);
    let mut zones: Vec<Rect> = Vec::with_capacity(objects.len());
    let mut placements: Vec<PlacementPx> = Vec::with_capacity(objects.len());
    for obj in objects {
        let ((r0, c0), zone) = place(cfg.canvas, s, 0, 0, &zones, rng)?;
        zones.push(zone);
        let (x, y) = center_of(r0, c0, s);
        img.blend_sprite(c0 as i64, r0 as i64, &obj.sprite);
        placements.push(PlacementPx { id: obj.id.clone(), x, y, size: s });
    }
    let denom = (cfg.canvas - 1) as Real;
    let label = [placements[0].x / denom, placements[0].y / denom];
    Ok((img, SceneMeta { objects: placements }, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{labels, stream_rng};

    fn gray_objects(n: usize, s: usize) -> Vec<SceneObject> {
        (0..n)
            .map(|i| {
                let mut sprite = Sprite::blank(s, [0.2, 0.2, 0.5]);
                sprite.alpha.fill(1.0);
                SceneObject { id: format!("obj{i}"), sprite }
            })
            .collect()
    }

    fn cfg(kind: CueKind, jitter: Real) -> SceneConfig {
        SceneConfig::for_canvas(64, kind, jitter).unwrap()
    }

    fn bboxes_disjoint(meta: &SceneMeta) -> bool {
        let rects: Vec<Rect> = meta
            .objects
            .iter()
            .map(|p| {
                let (c, r) = p.top_left();
                Rect { r, c, h: p.size as i64, w: p.size as i64 }
            })
            .collect();
        rects
            .iter()
            .enumerate()
            .all(|(i, a)| rects.iter().skip(i + 1).all(|b| !a.overlaps(b)))
    }

    #[test]
    fn adaptation_boxes_disjoint_many_seeds() {
        let cfg = cfg(CueKind::RedDot, 0.33);
        for seed in 0..30 {
            let mut rng = stream_rng(seed, labels::EPISODE, 0);
            let objs = gray_objects(4, cfg.object_px);
            let (_, meta, _) = compose_adaptation(&objs, 0, &cfg, &mut rng).unwrap();
            assert!(bboxes_disjoint(&meta), "seed {seed}");
            assert_eq!(meta.objects.len(), 4);
            assert_eq!(meta.objects[0].id, "obj0", "cued listed first");
        }
    }

    #[test]
    fn zero_jitter_dot_sits_on_center() {
        let cfg = cfg(CueKind::RedDot, 0.0);
        let mut rng = stream_rng(3, labels::EPISODE, 0);
        let objs = gray_objects(4, cfg.object_px);
        let (img, meta, cue) = compose_adaptation(&objs, 0, &cfg, &mut rng).unwrap();
        assert_eq!(cue.x, meta.objects[0].x);
        assert_eq!(cue.y, meta.objects[0].y);
        assert!(img.contains_color([255, 0, 0], 2), "dot rendered");
    }

    #[test]
    fn jitter_bound_is_respected() {
        let cfg = SceneConfig { canvas: 150, object_px: 40, cue: CueSpec::new(CueKind::RedDot, 0.33, 150).unwrap() };
        for seed in 0..50 {
            let mut rng = stream_rng(seed, labels::EPISODE, 1);
            let objs = gray_objects(4, 40);
            let (_, meta, cue) = compose_adaptation(&objs, 0, &cfg, &mut rng).unwrap();
            let (dx, dy) = (cue.x - meta.objects[0].x, cue.y - meta.objects[0].y);
            assert!(dx.abs() <= 13.0 && dy.abs() <= 13.0, "seed {seed}: ({dx}, {dy})");
        }
    }

    #[test]
    fn green_marker_above_bbox_with_gap() {
        let cfg = cfg(CueKind::GreenMarker, 0.0);
        let mut rng = stream_rng(5, labels::EPISODE, 0);
        let objs = gray_objects(4, cfg.object_px);
        let (img, meta, cue) = compose_adaptation(&objs, 0, &cfg, &mut rng).unwrap();
        let top_row = meta.objects[0].y - (cfg.object_px - 1) as Real / 2.0;
        let expect_y = top_row - cfg.marker_gap() - cfg.marker_radius();
        assert!((cue.y - expect_y).abs() < 1e-9);
        assert_eq!(cue.x, meta.objects[0].x);
        assert!(cue.y - cfg.marker_radius() >= -0.5, "marker inside canvas");
        assert!(img.contains_color([0, 255, 0], 2));
    }

    #[test]
    fn target_has_no_cue_and_exact_label() {
        let cfg = cfg(CueKind::RedDot, 0.33);
        let mut rng = stream_rng(6, labels::EPISODE, 2);
        let objs = gray_objects(4, cfg.object_px);
        let (img, meta, label) = compose_target(&objs, &cfg, &mut rng).unwrap();
        assert!(!img.contains_color([255, 0, 0], 40), "no red cue pixels");
        assert!(!img.contains_color([0, 255, 0], 40), "no green cue pixels");
        assert!(bboxes_disjoint(&meta));
        let denom = (cfg.canvas - 1) as Real;
        assert_eq!(label[0], meta.objects[0].x / denom);
        assert_eq!(label[1], meta.objects[0].y / denom);
        assert!(label.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn impossible_layout_is_generation_error() {
        let tiny = SceneConfig { canvas: 20, object_px: 17, cue: CueSpec::new(CueKind::RedDot, 0.0, 20).unwrap() };
        let mut rng = stream_rng(7, labels::EPISODE, 0);
        let objs = gray_objects(4, 17);
        assert!(matches!(
            compose_adaptation(&objs, 0, &tiny, &mut rng),
            Err(Error::Generation(_))
        ));
    }

    #[test]
    fn duplicate_identities_rejected() {
        let cfg = cfg(CueKind::RedDot, 0.0);
        let mut objs = gray_objects(4, cfg.object_px);
        objs[2].id = objs[0].id.clone();
        let mut rng = stream_rng(8, labels::EPISODE, 0);
        assert!(compose_adaptation(&objs, 0, &cfg, &mut rng).is_err());
    }
}
