use crate::autograd::Tensor;
use crate::model::config::{ArchitectureConfig, TowerLayer};
use crate::rng::{labels, stream_rng};
use crate::{Error, Real, Result};

/// One named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
}

/// All learnable tensors of the localizer, in a fixed canonical order:
/// tower convolutions, attention head, bottleneck scorer, output head; each
/// layer contributing weight then bias. Optimizer state, checkpoints, and
/// tape binding all rely on this order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    entries: Vec<Param>,
}

/// Weight/bias description of one learnable layer.
pub(crate) struct LayerSpec {
    pub name: String,
    pub weight_shape: Vec<usize>,
    pub fan_in: usize,
}

/// Learnable layers of the network in canonical order. The final attention
/// layer has one output channel and the final scorer layer `num_maps`; the
/// output head maps the flattened 2k keypoint vector to 2 coordinates.
pub(crate) fn layer_specs(config: &ArchitectureConfig) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut c = config.input_channels;
    for (idx, layer) in config.tower.iter().enumerate() {
        match layer {
            TowerLayer::Conv { kernel, out_channels, .. } => {
                specs.push(LayerSpec {
                    name: format!("tower.{idx}"),
                    weight_shape: vec![*out_channels, c, *kernel, *kernel],
                    fan_in: c * kernel * kernel,
                });
                c = *out_channels;
            }
            TowerLayer::Stack3x3 => c = 9 * c,
        }
    }
    for (head, hidden, last) in [
        ("attention", &config.attention_hidden, 1),
        ("scorer", &config.scorer_hidden, config.num_maps),
    ] {
        let mut c = config.feature_channels();
        for (idx, width) in hidden.iter().chain(std::iter::once(&last)).enumerate() {
            specs.push(LayerSpec {
                name: format!("{head}.{idx}"),
                weight_shape: vec![*width, c, 1, 1],
                fan_in: c,
            });
            c = *width;
        }
    }
    specs.push(LayerSpec {
        name: "head".into(),
        weight_shape: vec![2, 2 * config.num_maps],
        fan_in: 2 * config.num_maps,
    });
    specs
}

impl ParameterSet {
    /// Deterministic initialization: fan-in-scaled Gaussian weights
    /// (std = sqrt(2 / fan_in)), zero biases, and an output head fixed to
    /// the mean of the k keypoints so the untrained prediction is already a
    /// valid coordinate.
    pub fn init(config: &ArchitectureConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, labels::INIT, 0);
        let k = config.num_maps;
        let mut entries = Vec::new();
        for spec in layer_specs(config) {
            let out = spec.weight_shape[0];
            let weight = if spec.name == "head" {
                let mut data = vec![0.0; 2 * 2 * k];
                for t in 0..k {
                    data[2 * t] = 1.0 / k as Real;
                    data[2 * k + 2 * t + 1] = 1.0 / k as Real;
                }
                Tensor::new(spec.weight_shape.clone(), data)?
            } else {
                let std = (2.0 / spec.fan_in as Real).sqrt();
                Tensor::randn(spec.weight_shape.clone(), std, &mut rng)
            };
            entries.push(Param { name: format!("{}.weight", spec.name), tensor: weight });
            entries.push(Param {
                name: format!("{}.bias", spec.name),
                tensor: Tensor::zeros(vec![out]),
            });
        }
        Ok(ParameterSet { entries })
    }

    /// Rebuild from named tensors (checkpoint load); order is taken as-is
    /// and verified against the architecture at bind time.
    pub fn from_entries(entries: Vec<Param>) -> Self {
        ParameterSet { entries }
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|p| p.name == name).map(|p| &mut p.tensor)
    }

    /// Index of a named entry, for wiring optimizer state to tensors.
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::Config(format!("parameter set has no entry '{name}'")))
    }

    /// Total scalar count.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Largest elementwise difference to another set with identical layout.
    pub fn max_abs_diff(&self, other: &ParameterSet) -> Result<Real> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::shape(
                "param_diff",
                format!("{} vs {} entries", self.entries.len(), other.entries.len()),
            ));
        }
        let mut worst: Real = 0.0;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.tensor.shape() != b.tensor.shape() {
                return Err(Error::shape(
                    "param_diff",
                    format!("entry mismatch: {} vs {}", a.name, b.name),
                ));
            }
            worst = worst.max(a.tensor.max_abs_diff(&b.tensor));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_bit_identical() {
        let cfg = ArchitectureConfig::tiny();
        let a = ParameterSet::init(&cfg, 99).unwrap();
        let b = ParameterSet::init(&cfg, 99).unwrap();
        assert_eq!(a.max_abs_diff(&b).unwrap(), 0.0);
        let c = ParameterSet::init(&cfg, 100).unwrap();
        assert!(a.max_abs_diff(&c).unwrap() > 0.0);
    }

    #[test]
    fn biases_zero_at_init() {
        let params = ParameterSet::init(&ArchitectureConfig::tiny(), 5).unwrap();
        for p in params.entries() {
            if p.name.ends_with(".bias") {
                assert!(p.tensor.data().iter().all(|&v| v == 0.0), "{}", p.name);
            }
        }
    }

    #[test]
    fn fan_in_scaled_weight_std() {
        // The largest layer of the full network has enough samples for the
        // empirical std to sit within 20% of sqrt(2 / fan_in).
        let cfg = ArchitectureConfig::full();
        let params = ParameterSet::init(&cfg, 7).unwrap();
        let w = params.get("tower.3.weight").unwrap();
        let fan_in = w.shape()[1];
        let n = w.numel() as Real;
        let mean: Real = w.data().iter().sum::<Real>() / n;
        let var: Real = w.data().iter().map(|&v| (v - mean) * (v - mean)).sum::<Real>() / n;
        let expect = (2.0 / fan_in as Real).sqrt();
        assert!(
            (var.sqrt() - expect).abs() < 0.2 * expect,
            "std {} vs {expect}",
            var.sqrt()
        );
    }

    #[test]
    fn head_averages_keypoints() {
        let cfg = ArchitectureConfig::tiny();
        let k = cfg.num_maps;
        let params = ParameterSet::init(&cfg, 1).unwrap();
        let w = params.get("head.weight").unwrap();
        assert_eq!(w.shape(), [2, 2 * k]);
        // Row 0 picks every even keypoint slot, row 1 every odd one.
        let sum0: Real = (0..k).map(|t| w.data()[2 * t]).sum();
        let sum1: Real = (0..k).map(|t| w.data()[2 * k + 2 * t + 1]).sum();
        assert!((sum0 - 1.0).abs() < 1e-12 && (sum1 - 1.0).abs() < 1e-12);
        let cross: Real = (0..k).map(|t| w.data()[2 * t + 1].abs() + w.data()[2 * k + 2 * t].abs()).sum();
        assert_eq!(cross, 0.0);
    }

    #[test]
    fn canonical_entry_order() {
        let params = ParameterSet::init(&ArchitectureConfig::tiny(), 3).unwrap();
        let names: Vec<&str> = params.entries().iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "tower.0.weight", "tower.0.bias",
                "tower.1.weight", "tower.1.bias",
                "tower.3.weight", "tower.3.bias",
                "tower.4.weight", "tower.4.bias",
                "attention.0.weight", "attention.0.bias",
                "attention.1.weight", "attention.1.bias",
                "scorer.0.weight", "scorer.0.bias",
                "scorer.1.weight", "scorer.1.bias",
                "head.weight", "head.bias",
            ]
        );
    }
}
