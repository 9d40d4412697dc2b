use crate::autograd::{Tape, Tensor, ValId};
use crate::model::config::{ArchitectureConfig, TowerLayer};
use crate::model::params::{layer_specs, ParameterSet};
use crate::{Error, Real, Result};

/// Tape handles for every parameter of one forward graph.
///
/// The tower handles are registered once and used for both the adaptation
/// and the target image, which is what makes the two branches share weights
/// by construction.
pub struct BoundParams {
    /// One id per [`ParameterSet`] entry, in canonical order.
    pub all: Vec<ValId>,
    tower: Vec<(ValId, ValId)>,
    attention: Vec<(ValId, ValId)>,
    scorer: Vec<(ValId, ValId)>,
    head: (ValId, ValId),
}

/// Register a parameter set as tape leaves, verifying that names and shapes
/// match the architecture's canonical layout.
pub fn bind_params(
    tape: &mut Tape,
    config: &ArchitectureConfig,
    params: &ParameterSet,
) -> Result<BoundParams> {
    let specs = layer_specs(config);
    let entries = params.entries();
    if entries.len() != 2 * specs.len() {
        return Err(Error::Config(format!(
            "parameter set has {} entries, architecture expects {}",
            entries.len(),
            2 * specs.len()
        )));
    }
    let mut all = Vec::with_capacity(entries.len());
    let mut tower = Vec::new();
    let mut attention = Vec::new();
    let mut scorer = Vec::new();
    let mut head = None;
    for (li, spec) in specs.iter().enumerate() {
        let (w, b) = (&entries[2 * li], &entries[2 * li + 1]);
        let expect_w = format!("{}.weight", spec.name);
        let expect_b = format!("{}.bias", spec.name);
        if w.name != expect_w || b.name != expect_b {
            return Err(Error::Config(format!(
                "parameter entries ({}, {}) do not match architecture layer ({expect_w}, {expect_b})",
                w.name, b.name
            )));
        }
        if w.tensor.shape() != spec.weight_shape.as_slice()
            || b.tensor.shape() != [spec.weight_shape[0]]
        {
            return Err(Error::Config(format!(
                "layer {} has shape {:?}, architecture expects {:?}",
                spec.name,
                w.tensor.shape(),
                spec.weight_shape
            )));
        }
        let wid = tape.leaf(&w.tensor)?;
        let bid = tape.leaf(&b.tensor)?;
        all.push(wid);
        all.push(bid);
        let pair = (wid, bid);
        if spec.name.starts_with("tower.") {
            tower.push(pair);
        } else if spec.name.starts_with("attention.") {
            attention.push(pair);
        } else if spec.name.starts_with("scorer.") {
            scorer.push(pair);
        } else {
            head = Some(pair);
        }
    }
    Ok(BoundParams {
        all,
        tower,
        attention,
        scorer,
        head: head.expect("layer_specs always ends with the output head"),
    })
}

/// Apply a stack of 1x1 convolutions, ReLU between layers but not after the
/// last one.
fn conv1x1_stack(tape: &mut Tape, layers: &[(ValId, ValId)], input: ValId) -> Result<ValId> {
    let mut cur = input;
    for (i, (w, b)) in layers.iter().enumerate() {
        cur = tape.conv1x1(cur, *w, *b)?;
        if i + 1 < layers.len() {
            cur = tape.relu(cur)?;
        }
    }
    Ok(cur)
}

/// Shared tower: image `3 x H x W` to features `C_f x H' x W'`. Accepts any
/// input at least as large as the receptive field (fully convolutional).
pub fn tower_forward(
    tape: &mut Tape,
    config: &ArchitectureConfig,
    bound: &BoundParams,
    image: ValId,
) -> Result<ValId> {
    let mut cur = image;
    let mut convs = bound.tower.iter();
    for layer in &config.tower {
        match layer {
            TowerLayer::Conv { relu, .. } => {
                let (w, b) = convs.next().expect("bind_params matched the layer list");
                cur = tape.conv2d_valid(cur, *w, *b)?;
                if *relu {
                    cur = tape.relu(cur)?;
                }
            }
            TowerLayer::Stack3x3 => cur = tape.stack3x3(cur)?,
        }
    }
    Ok(cur)
}

/// Pixel-wise attention scores over an adaptation feature map; single
/// output channel.
pub fn attention_scores(tape: &mut Tape, bound: &BoundParams, features: ValId) -> Result<ValId> {
    conv1x1_stack(tape, &bound.attention, features)
}

/// Normalize scores over the grid and pool the feature map under them.
/// Returns (normalized attention map, pooled feature vector).
pub fn attend_pool(
    tape: &mut Tape,
    features: ValId,
    scores: ValId,
) -> Result<(ValId, ValId)> {
    let alpha = tape.spatial_softmax(scores, 1.0)?;
    let pooled = tape.weighted_pool(features, alpha)?;
    Ok((alpha, pooled))
}

/// Similarity score maps: the pooled cue vector is multiplied into every
/// pixel of the target feature map, then the bottleneck scorer turns each
/// product vector into k per-pixel scores.
pub fn combine_and_score(
    tape: &mut Tape,
    bound: &BoundParams,
    pooled: ValId,
    target_features: ValId,
) -> Result<ValId> {
    let product = tape.broadcast_mul(pooled, target_features)?;
    conv1x1_stack(tape, &bound.scorer, product)
}

/// Score maps to prediction: per-map softargmax keypoints, flattened and
/// passed through the output linear layer. Returns
/// (per-map probability maps, keypoints `k x 2`, prediction `2`).
pub fn localize(
    tape: &mut Tape,
    bound: &BoundParams,
    score_maps: ValId,
) -> Result<(ValId, ValId, ValId)> {
    let (probs, keypoints) = tape.softargmax_with_probs(score_maps, 1.0)?;
    let k = tape.shape(keypoints)[0];
    let flat = tape.reshape(keypoints, vec![2 * k])?;
    let (w, b) = bound.head;
    let prediction = tape.linear(w, flat, b)?;
    Ok((probs, keypoints, prediction))
}

/// Tape handles for every intermediate of one end-to-end pass.
pub struct Trace {
    pub adapt_features: ValId,
    pub target_features: ValId,
    pub attention: ValId,
    /// Normalized attention map over the adaptation features; sums to 1.
    pub alpha: ValId,
    pub pooled: ValId,
    pub score_maps: ValId,
    /// Per-map softmax of the score maps; each channel sums to 1.
    pub map_probs: ValId,
    /// k softargmax keypoints, normalized (row, col) per row.
    pub keypoints: ValId,
    /// Final normalized (row, col) prediction.
    pub prediction: ValId,
}

/// Full pipeline on an already-bound tape: tower on both images, attention
/// pooling on the adaptation branch, combine-and-score on the target branch,
/// softargmax localization.
pub fn predict(
    tape: &mut Tape,
    config: &ArchitectureConfig,
    bound: &BoundParams,
    adapt: &Tensor,
    target: &Tensor,
) -> Result<Trace> {
    let adapt_id = tape.leaf(adapt)?;
    let target_id = tape.leaf(target)?;
    let adapt_features = tower_forward(tape, config, bound, adapt_id)?;
    let target_features = tower_forward(tape, config, bound, target_id)?;
    let attention = attention_scores(tape, bound, adapt_features)?;
    let (alpha, pooled) = attend_pool(tape, adapt_features, attention)?;
    let score_maps = combine_and_score(tape, bound, pooled, target_features)?;
    let (map_probs, keypoints, prediction) = localize(tape, bound, score_maps)?;
    Ok(Trace {
        adapt_features,
        target_features,
        attention,
        alpha,
        pooled,
        score_maps,
        map_probs,
        keypoints,
        prediction,
    })
}

/// A config plus parameters, ready for inference.
#[derive(Debug, Clone)]
pub struct Localizer {
    pub config: ArchitectureConfig,
    pub params: ParameterSet,
}

/// Owned copies of the visualization-relevant intermediates.
pub struct TraceValues {
    pub alpha: Tensor,
    pub score_maps: Tensor,
    pub map_probs: Tensor,
    pub keypoints: Tensor,
    /// Normalized (row, col).
    pub prediction: [Real; 2],
}

impl Localizer {
    pub fn new(config: ArchitectureConfig, params: ParameterSet) -> Self {
        Localizer { config, params }
    }

    /// One inference pass; returns the normalized (row, col) prediction.
    pub fn predict_point(&self, adapt: &Tensor, target: &Tensor) -> Result<[Real; 2]> {
        Ok(self.predict_values(adapt, target)?.prediction)
    }

    /// One inference pass keeping the intermediates.
    pub fn predict_values(&self, adapt: &Tensor, target: &Tensor) -> Result<TraceValues> {
        let mut tape = Tape::new();
        let bound = bind_params(&mut tape, &self.config, &self.params)?;
        let trace = predict(&mut tape, &self.config, &bound, adapt, target)?;
        let pred = tape.value(trace.prediction);
        Ok(TraceValues {
            alpha: tape.tensor(trace.alpha),
            score_maps: tape.tensor(trace.score_maps),
            map_probs: tape.tensor(trace.map_probs),
            keypoints: tape.tensor(trace.keypoints),
            prediction: [pred[0], pred[1]],
        })
    }
}
