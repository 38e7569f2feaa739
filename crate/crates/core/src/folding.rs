//! The fold transformation: `f` images are stacked along the channel
//! dimension, the batch shrinks to `N / f`, and every layer width grows by
//! `sqrt(f)`.
//!
//! Interior convolutions and dense layers then perform the same FLOPs while
//! moving `1 / sqrt(f)` of the activation bytes and `f` times the weight bytes.
//! The first weight-bearing layer sees `C * f` input channels, so its FLOPs
//! change; a trailing dense classifier keeps its output width (one prediction
//! vector per stacked group). Both deviations are reported per layer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{network_cost, CostError, CostSummary, LayerKind, LayerSpec, NetworkSpec};
use crate::roofline::{attainable_flops, is_compute_bound, DeviceSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FoldingError {
    #[error("fold factor must be at least 1")]
    ZeroFactor,
    #[error("width rounding multiple must be at least 1")]
    ZeroMultiple,
    #[error("batch {batch} is not divisible by fold factor {factor}")]
    IndivisibleBatch { batch: u64, factor: u32 },
    #[error("sqrt({0}) is not an integer; enable width rounding to fold by it")]
    NonSquareFactor(u32),
    #[error(transparent)]
    Cost(#[from] CostError),
}

pub type Result<T> = std::result::Result<T, FoldingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldingConfig {
    pub factor: u32,
    /// When set, scaled widths are rounded half-up to a multiple of this value
    /// (and non-square factors become legal). When unset, `sqrt(factor)` must
    /// be an integer.
    pub round_to: Option<u32>,
}

impl FoldingConfig {
    pub fn new(factor: u32) -> Result<Self> {
        if factor == 0 {
            return Err(FoldingError::ZeroFactor);
        }
        Ok(Self { factor, round_to: None })
    }

    pub fn with_rounding(mut self, multiple: u32) -> Result<Self> {
        if multiple == 0 {
            return Err(FoldingError::ZeroMultiple);
        }
        self.round_to = Some(multiple);
        Ok(self)
    }

    fn exact_sqrt(&self) -> Option<u64> {
        let f = u64::from(self.factor);
        let root = f.isqrt();
        (root * root == f).then_some(root)
    }

    /// Width after scaling by `sqrt(factor)` and optional rounding.
    pub fn scale_width(&self, width: u64) -> Result<u64> {
        match (self.exact_sqrt(), self.round_to) {
            (Some(root), None) => Ok(width * root),
            (None, None) => Err(FoldingError::NonSquareFactor(self.factor)),
            (Some(root), Some(m)) => {
                let m = u64::from(m);
                let scaled = width * root;
                Ok(((2 * scaled + m) / (2 * m)).max(1) * m)
            }
            (None, Some(m)) => {
                let m = f64::from(m);
                let scaled = width as f64 * f64::from(self.factor).sqrt();
                Ok(((scaled / m + 0.5).floor().max(1.0) * m) as u64)
            }
        }
    }
}

/// Position of a layer relative to the fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    /// Up to and including the first weight-bearing layer (sees stacked input).
    Stem,
    /// Both input and output widths scale by sqrt(f).
    Interior,
    /// Trailing dense classifier and anything after it.
    Head,
}

/// Roles of each layer in `net`.
pub fn layer_roles(net: &NetworkSpec) -> Vec<LayerRole> {
    let first_weight = net.layers.iter().position(LayerSpec::has_weights);
    let last_weight = net.layers.iter().rposition(LayerSpec::has_weights);
    let head =
        last_weight.filter(|&i| matches!(net.layers[i].kind, LayerKind::Dense { .. }) && Some(i) != first_weight);
    (0..net.layers.len())
        .map(|i| match (first_weight, head) {
            (Some(stem), _) if i <= stem => LayerRole::Stem,
            (None, _) => LayerRole::Stem,
            (_, Some(h)) if i >= h => LayerRole::Head,
            _ => LayerRole::Interior,
        })
        .collect()
}

/// Folds `net` running at `batch`, returning the folded network and its batch.
pub fn fold_network(net: &NetworkSpec, batch: u64, cfg: &FoldingConfig) -> Result<(NetworkSpec, u64)> {
    let factor = u64::from(cfg.factor);
    if batch == 0 || !batch.is_multiple_of(factor) {
        return Err(FoldingError::IndivisibleBatch { batch, factor: cfg.factor });
    }
    let shapes = net.shape_chain(1)?;
    let roles = layer_roles(net);
    let is_head_dense = |i: usize| roles[i] == LayerRole::Head && net.layers[i].has_weights();

    let mut width = net.input.c * factor;
    let mut layers = Vec::with_capacity(net.layers.len());
    for (i, layer) in net.layers.iter().enumerate() {
        let mut folded = layer.clone();
        match &mut folded.kind {
            LayerKind::Conv2d { in_channels, out_channels, .. } => {
                *in_channels = width;
                if !is_head_dense(i) {
                    *out_channels = cfg.scale_width(*out_channels)?;
                }
                width = *out_channels;
            }
            LayerKind::DepthwiseConv2d { in_channels, out_channels, .. } => {
                *in_channels = width;
                *out_channels = width;
            }
            LayerKind::Dense { in_features, out_features, .. } => {
                *in_features = width * shapes[i].h * shapes[i].w;
                if !is_head_dense(i) {
                    *out_features = cfg.scale_width(*out_features)?;
                }
                width = *out_features;
            }
            LayerKind::GlobalPool | LayerKind::Elementwise => {}
        }
        layers.push(folded);
    }

    let mut input = net.input;
    input.c *= factor;
    let name = if cfg.factor == 1 { net.name.clone() } else { format!("{}-folded-f{}", net.name, cfg.factor) };
    Ok((NetworkSpec::new(name, input, net.scalar_width, layers), batch / factor))
}

fn ratio<T: Scalar>(after: u64, before: u64) -> Option<T> {
    (before > 0).then(|| T::from_count(after) / T::from_count(before))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LayerFold<T = f64> {
    pub index: usize,
    pub role: LayerRole,
    pub flops_ratio: Option<T>,
    pub activation_bytes_ratio: Option<T>,
    pub weight_bytes_ratio: Option<T>,
}

/// Folded-over-original ratios summed over interior weight-bearing (conv and
/// dense) layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct InteriorRatios<T = f64> {
    pub flops_ratio: T,
    pub activation_bytes_ratio: T,
    pub weight_bytes_ratio: T,
    pub intensity_ratio: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FoldingReport<T = f64> {
    pub factor: u32,
    pub original: CostSummary<T>,
    pub folded: CostSummary<T>,
    pub folded_net: NetworkSpec,
    pub flops_ratio: T,
    pub bytes_ratio: T,
    pub intensity_ratio: T,
    pub layers: Vec<LayerFold<T>>,
    /// `None` when the network has no interior weight-bearing layer.
    pub interior: Option<InteriorRatios<T>>,
}

/// Roofline-modeled (not measured) effect of folding on one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModeledFold<T = f64> {
    pub throughput_before: T,
    pub throughput_after: T,
    pub utilization_before: T,
    pub utilization_after: T,
    pub compute_bound_before: bool,
    pub compute_bound_after: bool,
}

impl<T: Scalar> FoldingReport<T> {
    /// Images/sec and utilization bounds before and after folding; each folded
    /// input carries `factor` images.
    pub fn modeled_on(&self, device: &DeviceSpec<T>) -> ModeledFold<T> {
        let before = attainable_flops(self.original.aggregate_intensity, device);
        let after = attainable_flops(self.folded.aggregate_intensity, device);
        ModeledFold {
            throughput_before: before / self.original.flops_per_image,
            throughput_after: after * T::from_count(u64::from(self.factor)) / self.folded.flops_per_image,
            utilization_before: before / device.peak_flops_per_sec,
            utilization_after: after / device.peak_flops_per_sec,
            compute_bound_before: is_compute_bound(self.original.aggregate_intensity, device),
            compute_bound_after: is_compute_bound(self.folded.aggregate_intensity, device),
        }
    }
}

pub fn folding_report<T: Scalar>(net: &NetworkSpec, batch: u64, cfg: &FoldingConfig) -> Result<FoldingReport<T>> {
    let (folded_net, folded_batch) = fold_network(net, batch, cfg)?;
    let original = network_cost::<T>(net, batch)?;
    let folded = network_cost::<T>(&folded_net, folded_batch)?;
    let roles = layer_roles(net);

    let layers = roles
        .iter()
        .enumerate()
        .map(|(i, &role)| {
            let (a, b) = (&original.per_layer[i], &folded.per_layer[i]);
            LayerFold {
                index: i,
                role,
                flops_ratio: ratio(b.flops, a.flops),
                activation_bytes_ratio: ratio(b.activation_bytes(), a.activation_bytes()),
                weight_bytes_ratio: ratio(b.weight_bytes, a.weight_bytes),
            }
        })
        .collect();

    let interior = {
        let sum = |costs: &CostSummary<T>, pick: fn(&crate::cost_model::LayerCost) -> u64| -> u64 {
            costs
                .per_layer
                .iter()
                .zip(&roles)
                .filter(|(_, &r)| r == LayerRole::Interior)
                .filter(|(c, _)| c.weight_bytes > 0)
                .map(|(c, _)| pick(c))
                .sum()
        };
        let flops = (sum(&original, |c| c.flops), sum(&folded, |c| c.flops));
        let act = (sum(&original, |c| c.activation_bytes()), sum(&folded, |c| c.activation_bytes()));
        let weights = (sum(&original, |c| c.weight_bytes), sum(&folded, |c| c.weight_bytes));
        let bytes = (act.0 + weights.0, act.1 + weights.1);
        match (ratio::<T>(flops.1, flops.0), ratio::<T>(act.1, act.0), ratio::<T>(weights.1, weights.0)) {
            (Some(flops_ratio), Some(activation_bytes_ratio), Some(weight_bytes_ratio)) => {
                let before = T::from_count(flops.0) / T::from_count(bytes.0);
                let after = T::from_count(flops.1) / T::from_count(bytes.1);
                Some(InteriorRatios {
                    flops_ratio,
                    activation_bytes_ratio,
                    weight_bytes_ratio,
                    intensity_ratio: after / before,
                })
            }
            _ => None,
        }
    };

    Ok(FoldingReport {
        factor: cfg.factor,
        flops_ratio: T::from_count(folded.total_flops) / T::from_count(original.total_flops),
        bytes_ratio: T::from_count(folded.total_bytes) / T::from_count(original.total_bytes),
        intensity_ratio: folded.aggregate_intensity / original.aggregate_intensity,
        original,
        folded,
        folded_net,
        layers,
        interior,
    })
}
