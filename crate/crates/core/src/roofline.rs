//! Roofline evaluation: compute-to-memory-bandwidth ratio, attainable
//! FLOPs/sec, and utilization from measured throughput.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{network_cost, CostError, NetworkSpec};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RooflineError {
    #[error("device {name}: {field} must be positive and finite")]
    InvalidDevice { name: String, field: &'static str },
    #[error("flops per image must be positive")]
    NonPositiveFlops,
    #[error("throughput must be non-negative and finite")]
    InvalidThroughput,
    #[error("network performs no FLOPs; throughput is unbounded")]
    ZeroWork,
    #[error(transparent)]
    Cost(#[from] CostError),
}

pub type Result<T> = std::result::Result<T, RooflineError>;

/// Measured peak FP16 Tensor Core throughput of the V100 used for the survey.
pub const V100_FP16_PEAK_FLOPS: f64 = 100e12;
/// FP16 compute-to-memory-bandwidth ratio of the V100.
pub const V100_FP16_CMR: f64 = 139.0;
pub const V100_FP16_PRESET: &str = "v100-fp16";

/// Peak compute and memory bandwidth of an accelerator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DeviceSpec<T = f64> {
    pub name: String,
    pub peak_flops_per_sec: T,
    pub mem_bandwidth_bytes_per_sec: T,
}

impl<T: Scalar> DeviceSpec<T> {
    pub fn new(name: impl Into<String>, peak_flops_per_sec: T, mem_bandwidth_bytes_per_sec: T) -> Result<Self> {
        let spec = Self { name: name.into(), peak_flops_per_sec, mem_bandwidth_bytes_per_sec };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v: T, field| {
            if v.is_finite() && v > T::zero() {
                Ok(())
            } else {
                Err(RooflineError::InvalidDevice { name: self.name.clone(), field })
            }
        };
        check(self.peak_flops_per_sec, "peak_flops_per_sec")?;
        check(self.mem_bandwidth_bytes_per_sec, "mem_bandwidth_bytes_per_sec")
    }

    /// V100 in FP16 with peak 100 TFLOPs/sec. The bandwidth is back-derived as
    /// peak / 139 so the ratio lands on the published CMR.
    pub fn v100_fp16() -> Self {
        let peak = T::lit(V100_FP16_PEAK_FLOPS);
        Self {
            name: V100_FP16_PRESET.to_string(),
            peak_flops_per_sec: peak,
            mem_bandwidth_bytes_per_sec: peak / T::lit(V100_FP16_CMR),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            V100_FP16_PRESET => Some(Self::v100_fp16()),
            _ => None,
        }
    }

    pub fn cmr(&self) -> T {
        cmr(self)
    }
}

pub fn cmr<T: Scalar>(device: &DeviceSpec<T>) -> T {
    device.peak_flops_per_sec / device.mem_bandwidth_bytes_per_sec
}

/// Strictly above the ridge point.
pub fn is_compute_bound<T: Scalar>(intensity: T, device: &DeviceSpec<T>) -> bool {
    debug_assert!(intensity >= T::zero(), "negative arithmetic intensity");
    intensity > cmr(device)
}

pub fn attainable_flops<T: Scalar>(intensity: T, device: &DeviceSpec<T>) -> T {
    debug_assert!(intensity >= T::zero(), "negative arithmetic intensity");
    device.peak_flops_per_sec.min(intensity * device.mem_bandwidth_bytes_per_sec)
}

/// Optimistic upper bound on images/sec: the network's aggregate intensity
/// placed on the roofline, divided by its per-image FLOPs.
pub fn predicted_throughput<T: Scalar>(net: &NetworkSpec, batch: u64, device: &DeviceSpec<T>) -> Result<T> {
    let cost = network_cost::<T>(net, batch)?;
    if cost.total_flops == 0 {
        return Err(RooflineError::ZeroWork);
    }
    Ok(attainable_flops(cost.aggregate_intensity, device) / cost.flops_per_image)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct UtilizationEstimate<T = f64> {
    pub achieved_flops_per_sec: T,
    /// Achieved over peak. Not clamped: values above 1 signal inconsistent inputs.
    pub utilization_fraction: T,
    /// Known only when the estimate came from an arithmetic intensity.
    pub compute_bound: Option<bool>,
}

impl<T: Scalar> UtilizationEstimate<T> {
    pub fn exceeds_peak(&self) -> bool {
        self.utilization_fraction > T::one()
    }
}

/// Utilization from a throughput measurement: images/sec times FLOPs per image
/// over the device peak.
pub fn utilization_from_throughput<T: Scalar>(
    throughput: T,
    flops_per_image: T,
    device: &DeviceSpec<T>,
) -> Result<UtilizationEstimate<T>> {
    if !(throughput.is_finite() && throughput >= T::zero()) {
        return Err(RooflineError::InvalidThroughput);
    }
    if !(flops_per_image.is_finite() && flops_per_image > T::zero()) {
        return Err(RooflineError::NonPositiveFlops);
    }
    let achieved = throughput * flops_per_image;
    Ok(UtilizationEstimate {
        achieved_flops_per_sec: achieved,
        utilization_fraction: achieved / device.peak_flops_per_sec,
        compute_bound: None,
    })
}

/// Roofline-predicted utilization at a given intensity; never exceeds 1.
pub fn utilization_from_intensity<T: Scalar>(intensity: T, device: &DeviceSpec<T>) -> UtilizationEstimate<T> {
    let achieved = attainable_flops(intensity, device);
    UtilizationEstimate {
        achieved_flops_per_sec: achieved,
        utilization_fraction: achieved / device.peak_flops_per_sec,
        compute_bound: Some(is_compute_bound(intensity, device)),
    }
}
