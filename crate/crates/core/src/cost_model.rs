//! Layer-level FLOP and memory-traffic accounting for CNN inference.
//!
//! Every layer is charged for reading its input activations, reading its
//! weights and writing its output activations; intermediate activations always
//! round-trip through memory between layers. A multiply-accumulate counts as
//! two FLOPs. Activations flagged as fused into the preceding layer cost
//! nothing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("layer {layer}: expected {expected} input channels/features, found {found}")]
    ChannelMismatch { layer: usize, expected: u64, found: u64 },
    #[error("layer {layer}: {reason}")]
    InvalidLayer { layer: usize, reason: String },
    #[error("invalid tensor shape: {0}")]
    InvalidShape(String),
    #[error("unsupported scalar width {0} bytes (expected 1, 2, 4 or 8)")]
    InvalidScalarWidth(u8),
    #[error("empty network")]
    EmptyNetwork,
    #[error("batch size must be at least 1")]
    InvalidBatch,
    #[error("batch sweep needs at least one batch size")]
    EmptySweep,
    #[error("arithmetic intensity is undefined when no bytes are transferred")]
    UndefinedIntensity,
}

impl CostError {
    fn at_layer(self, index: usize) -> Self {
        match self {
            CostError::ChannelMismatch { expected, found, .. } => {
                CostError::ChannelMismatch { layer: index, expected, found }
            }
            CostError::InvalidLayer { reason, .. } => CostError::InvalidLayer { layer: index, reason },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CostError>;

/// Activation tensor shape in NCHW order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub n: u64,
    pub c: u64,
    pub h: u64,
    pub w: u64,
}

impl TensorShape {
    pub fn new(n: u64, c: u64, h: u64, w: u64) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(CostError::InvalidShape(format!("({n},{c},{h},{w}) has a zero dimension")));
        }
        Ok(Self { n, c, h, w })
    }

    pub fn elements(&self) -> u64 {
        self.n * self.c * self.h * self.w
    }

    /// Elements of one image (C*H*W).
    pub fn per_image(&self) -> u64 {
        self.c * self.h * self.w
    }
}

/// Bytes per stored scalar (2 for FP16, 4 for FP32).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ScalarWidth(u8);

impl ScalarWidth {
    pub const FP16: ScalarWidth = ScalarWidth(2);
    pub const FP32: ScalarWidth = ScalarWidth(4);

    pub fn new(bytes: u8) -> Result<Self> {
        match bytes {
            1 | 2 | 4 | 8 => Ok(Self(bytes)),
            other => Err(CostError::InvalidScalarWidth(other)),
        }
    }

    pub fn bytes(self) -> u64 {
        u64::from(self.0)
    }
}

impl TryFrom<u8> for ScalarWidth {
    type Error = CostError;

    fn try_from(value: u8) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ScalarWidth> for u8 {
    fn from(value: ScalarWidth) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d {
        in_channels: u64,
        out_channels: u64,
        kernel_h: u64,
        kernel_w: u64,
        #[serde(default = "one")]
        stride: u64,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        bias: bool,
    },
    DepthwiseConv2d {
        in_channels: u64,
        out_channels: u64,
        kernel_h: u64,
        kernel_w: u64,
        #[serde(default = "one")]
        stride: u64,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        bias: bool,
    },
    Dense {
        in_features: u64,
        out_features: u64,
        #[serde(default)]
        bias: bool,
    },
    GlobalPool,
    Elementwise,
}

/// One layer of a network description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default)]
    pub fused_activation: bool,
}

impl LayerSpec {
    pub fn conv2d(in_channels: u64, out_channels: u64, kernel: u64, stride: u64, padding: Padding) -> Self {
        Self {
            kind: LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel_h: kernel,
                kernel_w: kernel,
                stride,
                padding,
                bias: false,
            },
            fused_activation: false,
        }
    }

    pub fn depthwise_conv2d(channels: u64, kernel: u64, stride: u64, padding: Padding) -> Self {
        Self {
            kind: LayerKind::DepthwiseConv2d {
                in_channels: channels,
                out_channels: channels,
                kernel_h: kernel,
                kernel_w: kernel,
                stride,
                padding,
                bias: false,
            },
            fused_activation: false,
        }
    }

    pub fn dense(in_features: u64, out_features: u64) -> Self {
        Self { kind: LayerKind::Dense { in_features, out_features, bias: false }, fused_activation: false }
    }

    pub fn global_pool() -> Self {
        Self { kind: LayerKind::GlobalPool, fused_activation: false }
    }

    pub fn elementwise() -> Self {
        Self { kind: LayerKind::Elementwise, fused_activation: false }
    }

    pub fn fused(mut self) -> Self {
        self.fused_activation = true;
        self
    }

    pub fn with_bias(mut self) -> Self {
        match &mut self.kind {
            LayerKind::Conv2d { bias, .. }
            | LayerKind::DepthwiseConv2d { bias, .. }
            | LayerKind::Dense { bias, .. } => *bias = true,
            LayerKind::GlobalPool | LayerKind::Elementwise => {}
        }
        self
    }

    /// Declared input width, or `None` for layers that pass channels through.
    pub fn in_width(&self) -> Option<u64> {
        match self.kind {
            LayerKind::Conv2d { in_channels, .. } | LayerKind::DepthwiseConv2d { in_channels, .. } => Some(in_channels),
            LayerKind::Dense { in_features, .. } => Some(in_features),
            LayerKind::GlobalPool | LayerKind::Elementwise => None,
        }
    }

    /// Declared output width, or `None` for layers that pass channels through.
    pub fn out_width(&self) -> Option<u64> {
        match self.kind {
            LayerKind::Conv2d { out_channels, .. } | LayerKind::DepthwiseConv2d { out_channels, .. } => {
                Some(out_channels)
            }
            LayerKind::Dense { out_features, .. } => Some(out_features),
            LayerKind::GlobalPool | LayerKind::Elementwise => None,
        }
    }

    pub fn has_weights(&self) -> bool {
        matches!(self.kind, LayerKind::Conv2d { .. } | LayerKind::DepthwiseConv2d { .. } | LayerKind::Dense { .. })
    }

    /// Checks the per-layer invariants that do not depend on the input shape.
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Err(CostError::InvalidLayer { layer: 0, reason: reason.to_string() });
        match self.kind {
            LayerKind::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride, .. }
            | LayerKind::DepthwiseConv2d { in_channels, out_channels, kernel_h, kernel_w, stride, .. } => {
                if in_channels == 0 || out_channels == 0 {
                    return invalid("channel counts must be at least 1");
                }
                if kernel_h == 0 || kernel_w == 0 {
                    return invalid("kernel dimensions must be at least 1");
                }
                if stride == 0 {
                    return invalid("stride must be at least 1");
                }
                if matches!(self.kind, LayerKind::DepthwiseConv2d { .. }) && in_channels != out_channels {
                    return invalid("depthwise convolution requires in_channels == out_channels");
                }
            }
            LayerKind::Dense { in_features, out_features, .. } => {
                if in_features == 0 || out_features == 0 {
                    return invalid("feature counts must be at least 1");
                }
            }
            LayerKind::GlobalPool | LayerKind::Elementwise => {}
        }
        Ok(())
    }

    fn parameter_count(&self) -> u64 {
        match self.kind {
            LayerKind::Conv2d { in_channels, out_channels, kernel_h, kernel_w, bias, .. } => {
                in_channels * out_channels * kernel_h * kernel_w + if bias { out_channels } else { 0 }
            }
            LayerKind::DepthwiseConv2d { out_channels, kernel_h, kernel_w, bias, .. } => {
                out_channels * kernel_h * kernel_w + if bias { out_channels } else { 0 }
            }
            LayerKind::Dense { in_features, out_features, bias } => {
                in_features * out_features + if bias { out_features } else { 0 }
            }
            LayerKind::GlobalPool | LayerKind::Elementwise => 0,
        }
    }
}

fn spatial_out(input: u64, kernel: u64, stride: u64, padding: Padding) -> Result<u64> {
    match padding {
        Padding::Same => Ok(input.div_ceil(stride)),
        Padding::Valid => {
            if kernel > input {
                return Err(CostError::InvalidLayer {
                    layer: 0,
                    reason: format!("kernel {kernel} exceeds input extent {input} under valid padding"),
                });
            }
            Ok((input - kernel) / stride + 1)
        }
    }
}

/// Shape produced by `layer` on `input`.
///
/// Errors name layer index 0; the network-level functions rewrite it to the
/// layer's position.
pub fn output_shape(layer: &LayerSpec, input: TensorShape) -> Result<TensorShape> {
    layer.validate()?;
    match layer.kind {
        LayerKind::Conv2d { in_channels, out_channels, kernel_h, kernel_w, stride, padding, .. }
        | LayerKind::DepthwiseConv2d { in_channels, out_channels, kernel_h, kernel_w, stride, padding, .. } => {
            if input.c != in_channels {
                return Err(CostError::ChannelMismatch { layer: 0, expected: in_channels, found: input.c });
            }
            Ok(TensorShape {
                n: input.n,
                c: out_channels,
                h: spatial_out(input.h, kernel_h, stride, padding)?,
                w: spatial_out(input.w, kernel_w, stride, padding)?,
            })
        }
        LayerKind::Dense { in_features, out_features, .. } => {
            let found = input.per_image();
            if found != in_features {
                return Err(CostError::ChannelMismatch { layer: 0, expected: in_features, found });
            }
            Ok(TensorShape { n: input.n, c: out_features, h: 1, w: 1 })
        }
        LayerKind::GlobalPool => Ok(TensorShape { h: 1, w: 1, ..input }),
        LayerKind::Elementwise => Ok(input),
    }
}

/// FLOPs and bytes moved by one layer at one batch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LayerCost {
    pub flops: u64,
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
}

impl LayerCost {
    pub fn total_bytes(&self) -> u64 {
        self.input_bytes + self.weight_bytes + self.output_bytes
    }

    pub fn activation_bytes(&self) -> u64 {
        self.input_bytes + self.output_bytes
    }
}

pub fn layer_cost(layer: &LayerSpec, input: TensorShape, width: ScalarWidth) -> Result<LayerCost> {
    let output = output_shape(layer, input)?;
    let bytes = width.bytes();
    let weight_bytes = layer.parameter_count() * bytes;
    let activation = |flops| LayerCost {
        flops,
        input_bytes: input.elements() * bytes,
        weight_bytes,
        output_bytes: output.elements() * bytes,
    };

    let cost = match layer.kind {
        LayerKind::Conv2d { in_channels, kernel_h, kernel_w, bias, .. } => {
            let macs = output.elements() * in_channels * kernel_h * kernel_w;
            activation(2 * macs + if bias { output.elements() } else { 0 })
        }
        LayerKind::DepthwiseConv2d { kernel_h, kernel_w, bias, .. } => {
            let macs = output.elements() * kernel_h * kernel_w;
            activation(2 * macs + if bias { output.elements() } else { 0 })
        }
        LayerKind::Dense { in_features, out_features, bias } => {
            let macs = input.n * in_features * out_features;
            activation(2 * macs + if bias { input.n * out_features } else { 0 })
        }
        LayerKind::GlobalPool => activation(input.elements()),
        LayerKind::Elementwise if layer.fused_activation => LayerCost::default(),
        LayerKind::Elementwise => activation(input.elements()),
    };
    Ok(cost)
}

/// Per-image input resolution of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub c: u64,
    pub h: u64,
    pub w: u64,
}

/// A CNN as an ordered chain of layers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    #[serde(rename = "scalar_bytes")]
    pub scalar_width: ScalarWidth,
    pub input: ImageShape,
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn new(name: impl Into<String>, input: ImageShape, scalar_width: ScalarWidth, layers: Vec<LayerSpec>) -> Self {
        Self { name: name.into(), scalar_width, input, layers }
    }

    pub fn input_shape(&self, batch: u64) -> Result<TensorShape> {
        if batch == 0 {
            return Err(CostError::InvalidBatch);
        }
        TensorShape::new(batch, self.input.c, self.input.h, self.input.w)
    }

    /// Input shape of every layer followed by the network's output shape.
    pub fn shape_chain(&self, batch: u64) -> Result<Vec<TensorShape>> {
        if self.layers.is_empty() {
            return Err(CostError::EmptyNetwork);
        }
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut current = self.input_shape(batch)?;
        shapes.push(current);
        for (i, layer) in self.layers.iter().enumerate() {
            current = output_shape(layer, current).map_err(|e| e.at_layer(i))?;
            shapes.push(current);
        }
        Ok(shapes)
    }

    /// Checks that the shape chain is well defined end to end.
    pub fn validate(&self) -> Result<()> {
        self.shape_chain(1).map(|_| ())
    }
}

/// Anything with a FLOP count and a byte count.
pub trait Traffic {
    fn flops(&self) -> u64;
    fn bytes(&self) -> u64;
}

impl Traffic for LayerCost {
    fn flops(&self) -> u64 {
        self.flops
    }

    fn bytes(&self) -> u64 {
        self.total_bytes()
    }
}

impl<T: Scalar> Traffic for CostSummary<T> {
    fn flops(&self) -> u64 {
        self.total_flops
    }

    fn bytes(&self) -> u64 {
        self.total_bytes
    }
}

/// FLOPs per byte moved.
pub fn arithmetic_intensity<T: Scalar>(cost: &impl Traffic) -> Result<T> {
    match cost.bytes() {
        0 => Err(CostError::UndefinedIntensity),
        bytes => Ok(T::from_count(cost.flops()) / T::from_count(bytes)),
    }
}

/// Whole-network cost at one batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary<T = f64> {
    pub batch: u64,
    pub per_layer: Vec<LayerCost>,
    pub total_flops: u64,
    pub total_bytes: u64,
    pub aggregate_intensity: T,
    pub flops_per_image: T,
}

impl<T: Scalar> CostSummary<T> {
    pub fn input_bytes(&self) -> u64 {
        self.per_layer.iter().map(|l| l.input_bytes).sum()
    }

    pub fn weight_bytes(&self) -> u64 {
        self.per_layer.iter().map(|l| l.weight_bytes).sum()
    }

    pub fn output_bytes(&self) -> u64 {
        self.per_layer.iter().map(|l| l.output_bytes).sum()
    }

    pub fn activation_bytes(&self) -> u64 {
        self.input_bytes() + self.output_bytes()
    }
}

pub fn network_cost<T: Scalar>(net: &NetworkSpec, batch: u64) -> Result<CostSummary<T>> {
    let shapes = net.shape_chain(batch)?;
    let per_layer = net
        .layers
        .iter()
        .zip(&shapes)
        .enumerate()
        .map(|(i, (layer, &input))| layer_cost(layer, input, net.scalar_width).map_err(|e| e.at_layer(i)))
        .collect::<Result<Vec<_>>>()?;
    let total_flops = per_layer.iter().map(|l| l.flops).sum();
    let total_bytes = per_layer.iter().map(LayerCost::total_bytes).sum();
    if total_bytes == 0 {
        return Err(CostError::UndefinedIntensity);
    }
    Ok(CostSummary {
        batch,
        per_layer,
        total_flops,
        total_bytes,
        aggregate_intensity: T::from_count(total_flops) / T::from_count(total_bytes),
        flops_per_image: T::from_count(total_flops) / T::from_count(batch),
    })
}

/// Aggregate intensity across batch sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSweep<T = f64> {
    pub points: Vec<(u64, T)>,
    /// Limit as batch grows without bound: FLOPs per image over activation
    /// bytes per image. `None` when the network moves no activation bytes.
    pub asymptote: Option<T>,
}

pub fn batch_sweep<T: Scalar>(net: &NetworkSpec, batches: &[u64]) -> Result<BatchSweep<T>> {
    if batches.is_empty() {
        return Err(CostError::EmptySweep);
    }
    let points = batches
        .iter()
        .map(|&b| network_cost::<T>(net, b).map(|s| (b, s.aggregate_intensity)))
        .collect::<Result<Vec<_>>>()?;
    // Activation traffic and FLOPs are linear in batch, so batch 1 gives the per-image terms.
    let single = network_cost::<T>(net, 1)?;
    let asymptote = match single.activation_bytes() {
        0 => None,
        bytes => Some(T::from_count(single.total_flops) / T::from_count(bytes)),
    };
    Ok(BatchSweep { points, asymptote })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_conv() -> LayerSpec {
        LayerSpec::conv2d(3, 8, 3, 1, Padding::Same)
    }

    fn toy_net() -> NetworkSpec {
        NetworkSpec::new("toyconv", ImageShape { c: 3, h: 32, w: 32 }, ScalarWidth::FP16, vec![toy_conv()])
    }

    /// Counts multiply-accumulates by walking the loop nest of a dense
    /// (zero-padded) convolution.
    fn conv_macs_by_enumeration(shape: TensorShape, cout: u64, k: u64, stride: u64) -> u64 {
        let out_h = shape.h.div_ceil(stride);
        let out_w = shape.w.div_ceil(stride);
        let mut macs = 0;
        for _n in 0..shape.n {
            for _co in 0..cout {
                for _oh in 0..out_h {
                    for _ow in 0..out_w {
                        for _ci in 0..shape.c {
                            for _kh in 0..k {
                                for _kw in 0..k {
                                    macs += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
        macs
    }

    /// Enumerates output positions a stride-s window visits under same padding.
    fn positions(extent: u64, stride: u64) -> u64 {
        (0..extent).step_by(stride as usize).count() as u64
    }

    #[test]
    fn same_padding_preserves_spatial_dims() {
        let out = output_shape(&toy_conv(), TensorShape::new(1, 3, 32, 32).unwrap()).unwrap();
        assert_eq!(out, TensorShape::new(1, 8, 32, 32).unwrap());
    }

    #[test]
    fn strided_same_padding_halves() {
        let layer = LayerSpec::conv2d(3, 8, 3, 2, Padding::Same);
        let out = output_shape(&layer, TensorShape::new(1, 3, 32, 32).unwrap()).unwrap();
        assert_eq!((out.h, out.w), (positions(32, 2), positions(32, 2)));
        assert_eq!(out, TensorShape::new(1, 8, 16, 16).unwrap());
    }

    #[test]
    fn valid_padding_shrinks() {
        let layer = LayerSpec::conv2d(3, 8, 3, 1, Padding::Valid);
        let out = output_shape(&layer, TensorShape::new(1, 3, 32, 32).unwrap()).unwrap();
        assert_eq!((out.h, out.w), (30, 30));
        let too_big = LayerSpec::conv2d(3, 8, 5, 1, Padding::Valid);
        assert!(output_shape(&too_big, TensorShape::new(1, 3, 4, 4).unwrap()).is_err());
    }

    #[test]
    fn global_pool_collapses_spatial() {
        let out = output_shape(&LayerSpec::global_pool(), TensorShape::new(4, 64, 7, 7).unwrap()).unwrap();
        assert_eq!(out, TensorShape::new(4, 64, 1, 1).unwrap());
    }

    #[test]
    fn channel_mismatch_names_layer() {
        let net = NetworkSpec::new(
            "bad",
            ImageShape { c: 3, h: 8, w: 8 },
            ScalarWidth::FP16,
            vec![toy_conv(), LayerSpec::conv2d(16, 8, 3, 1, Padding::Same)],
        );
        assert_eq!(
            network_cost::<f64>(&net, 1).unwrap_err(),
            CostError::ChannelMismatch { layer: 1, expected: 16, found: 8 }
        );
    }

    #[test]
    fn invalid_layers_rejected() {
        let dw = LayerSpec {
            kind: LayerKind::DepthwiseConv2d {
                in_channels: 4,
                out_channels: 8,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
                padding: Padding::Same,
                bias: false,
            },
            fused_activation: false,
        };
        assert!(dw.validate().is_err());
        assert!(LayerSpec::conv2d(3, 8, 3, 0, Padding::Same).validate().is_err());
        assert!(LayerSpec::dense(0, 2).validate().is_err());
        assert!(TensorShape::new(1, 0, 1, 1).is_err());
        assert!(ScalarWidth::new(3).is_err());
    }

    #[test]
    fn toy_conv_cost_matches_closed_form_and_enumeration() {
        let input = TensorShape::new(1, 3, 32, 32).unwrap();
        let cost = layer_cost(&toy_conv(), input, ScalarWidth::FP16).unwrap();
        assert_eq!(cost.flops, 2 * conv_macs_by_enumeration(input, 8, 3, 1));
        assert_eq!(cost, LayerCost { flops: 442_368, input_bytes: 6144, weight_bytes: 432, output_bytes: 16_384 });
        assert_eq!(cost.total_bytes(), 22_960);
    }

    #[test]
    fn dense_cost() {
        let cost =
            layer_cost(&LayerSpec::dense(4, 2), TensorShape::new(1, 4, 1, 1).unwrap(), ScalarWidth::FP16).unwrap();
        assert_eq!(cost, LayerCost { flops: 16, input_bytes: 8, weight_bytes: 16, output_bytes: 4 });
    }

    #[test]
    fn dense_flattens_spatial_input() {
        let out = output_shape(&LayerSpec::dense(4 * 2 * 2, 10), TensorShape::new(3, 4, 2, 2).unwrap()).unwrap();
        assert_eq!(out, TensorShape::new(3, 10, 1, 1).unwrap());
    }

    #[test]
    fn fused_elementwise_is_free() {
        let cost =
            layer_cost(&LayerSpec::elementwise().fused(), TensorShape::new(1, 8, 32, 32).unwrap(), ScalarWidth::FP16)
                .unwrap();
        assert_eq!(cost, LayerCost::default());
    }

    #[test]
    fn unfused_elementwise_and_pool_conventions() {
        let input = TensorShape::new(2, 8, 4, 4).unwrap();
        let ew = layer_cost(&LayerSpec::elementwise(), input, ScalarWidth::FP32).unwrap();
        assert_eq!(ew, LayerCost { flops: 256, input_bytes: 1024, weight_bytes: 0, output_bytes: 1024 });
        let pool = layer_cost(&LayerSpec::global_pool(), input, ScalarWidth::FP32).unwrap();
        assert_eq!(pool, LayerCost { flops: 256, input_bytes: 1024, weight_bytes: 0, output_bytes: 64 });
    }

    #[test]
    fn bias_adds_weights_and_flops() {
        let input = TensorShape::new(1, 3, 32, 32).unwrap();
        let plain = layer_cost(&toy_conv(), input, ScalarWidth::FP16).unwrap();
        let biased = layer_cost(&toy_conv().with_bias(), input, ScalarWidth::FP16).unwrap();
        assert_eq!(biased.weight_bytes - plain.weight_bytes, 8 * 2);
        assert_eq!(biased.flops - plain.flops, 8 * 32 * 32);
    }

    #[test]
    fn network_intensity() {
        let summary = network_cost::<f64>(&toy_net(), 1).unwrap();
        assert_relative_eq!(summary.aggregate_intensity, 442_368.0 / 22_960.0);
        assert_relative_eq!(summary.aggregate_intensity, 19.27, epsilon = 5e-3);
        assert_relative_eq!(arithmetic_intensity::<f64>(&summary).unwrap(), summary.aggregate_intensity);
        let as_f32 = network_cost::<f32>(&toy_net(), 1).unwrap();
        assert_relative_eq!(as_f32.aggregate_intensity, 19.266_9_f32, epsilon = 1e-4);
    }

    #[test]
    fn empty_network_rejected() {
        let net = NetworkSpec::new("empty", ImageShape { c: 3, h: 8, w: 8 }, ScalarWidth::FP16, vec![]);
        assert_eq!(network_cost::<f64>(&net, 1).unwrap_err(), CostError::EmptyNetwork);
        assert_eq!(network_cost::<f64>(&toy_net(), 0).unwrap_err(), CostError::InvalidBatch);
    }

    #[test]
    fn batch_doubling() {
        let one = network_cost::<f64>(&toy_net(), 1).unwrap();
        let two = network_cost::<f64>(&toy_net(), 2).unwrap();
        assert_eq!(two.total_flops, 2 * one.total_flops);
        assert_eq!(two.weight_bytes(), one.weight_bytes());
        assert_eq!(two.activation_bytes(), 2 * one.activation_bytes());
    }

    #[test]
    fn intensity_spot_values() {
        let c = LayerCost { flops: 100, input_bytes: 20, weight_bytes: 10, output_bytes: 20 };
        assert_eq!(arithmetic_intensity::<f64>(&c).unwrap(), 2.0);
        let zero_flops = LayerCost { flops: 0, input_bytes: 10, weight_bytes: 0, output_bytes: 0 };
        assert_eq!(arithmetic_intensity::<f64>(&zero_flops).unwrap(), 0.0);
        assert_eq!(arithmetic_intensity::<f64>(&LayerCost::default()), Err(CostError::UndefinedIntensity));
    }

    #[test]
    fn sweep_increases_toward_asymptote() {
        let sweep = batch_sweep::<f64>(&toy_net(), &[1, 2, 4, 8]).unwrap();
        for pair in sweep.points.windows(2) {
            assert!(pair[1].1 > pair[0].1);
        }
        let asymptote = sweep.asymptote.unwrap();
        assert_relative_eq!(asymptote, 442_368.0 / 22_528.0);
        let far = network_cost::<f64>(&toy_net(), 1_000_000).unwrap();
        assert!(far.aggregate_intensity < asymptote);
        assert_relative_eq!(far.aggregate_intensity, asymptote, max_relative = 1e-6);
    }

    #[test]
    fn weightless_sweep_is_flat() {
        let net = NetworkSpec::new(
            "relu",
            ImageShape { c: 8, h: 4, w: 4 },
            ScalarWidth::FP16,
            vec![LayerSpec::elementwise()],
        );
        let sweep = batch_sweep::<f64>(&net, &[1, 2, 4, 8]).unwrap();
        assert!(sweep.points.iter().all(|&(_, i)| i == sweep.points[0].1));
        assert_eq!(sweep.asymptote, Some(sweep.points[0].1));
        assert_eq!(batch_sweep::<f64>(&net, &[]).unwrap_err(), CostError::EmptySweep);
    }

    #[test]
    fn network_json_uses_documented_field_names() {
        let json = r#"{
            "name": "toyconv",
            "scalar_bytes": 2,
            "input": {"c": 3, "h": 32, "w": 32},
            "layers": [
                {"kind": "conv2d", "in_channels": 3, "out_channels": 8, "kernel_h": 3, "kernel_w": 3,
                 "stride": 1, "padding": "same", "fused_activation": true},
                {"kind": "global_pool"},
                {"kind": "dense", "in_features": 8, "out_features": 10, "bias": true}
            ]
        }"#;
        let net: NetworkSpec = serde_json::from_str(json).unwrap();
        assert_eq!(net.scalar_width, ScalarWidth::FP16);
        assert_eq!(net.layers[0], toy_conv().fused());
        assert_eq!(net.layers[2], LayerSpec::dense(8, 10).with_bias());
        let back: NetworkSpec = serde_json::from_str(&serde_json::to_string(&net).unwrap()).unwrap();
        assert_eq!(back, net);
        assert!(
            serde_json::from_str::<NetworkSpec>(&json.replace("\"scalar_bytes\": 2", "\"scalar_bytes\": 3")).is_err()
        );
    }
}
