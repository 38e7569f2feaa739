//! Analytical GPU-utilization toolkit for CNN inference.
//!
//! - [`cost_model`]: per-layer FLOPs and memory traffic, arithmetic intensity.
//! - [`roofline`]: device ridge point, attainable FLOPs/sec, utilization.
//! - [`folding`]: the fold transformation (batch / f, channels * f, widths * sqrt(f)).
//! - [`pareto`]: two-dimensional frontiers and hypervolume.
//! - [`search_space`]: tabular NAS spaces, synthetic or loaded from CSV.
//! - [`nas_search`]: simulated sample-based NAS and approximate filtering.
//! - [`io`]: file formats shared with the command-line tool.
//!
//! The numeric routines are generic over [`Scalar`] (`f32`/`f64`); the
//! aliases below fix the scalar to `f64` (or `f32` with the `32` suffix).

pub mod cost_model;
pub mod error;
pub mod folding;
pub mod io;
pub mod nas_search;
pub mod pareto;
pub mod roofline;
pub mod scalar;
pub mod search_space;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CostSummary = cost_model::CostSummary<f64>;
pub type CostSummary32 = cost_model::CostSummary<f32>;
pub type BatchSweep = cost_model::BatchSweep<f64>;
pub type DeviceSpec = roofline::DeviceSpec<f64>;
pub type DeviceSpec32 = roofline::DeviceSpec<f32>;
pub type UtilizationEstimate = roofline::UtilizationEstimate<f64>;
pub type UtilizationEstimate32 = roofline::UtilizationEstimate<f32>;
pub type FoldingReport = folding::FoldingReport<f64>;
pub type FoldingReport32 = folding::FoldingReport<f32>;
pub type MetricPoint = pareto::MetricPoint<f64>;
pub type ParetoFrontier = pareto::ParetoFrontier<f64>;
