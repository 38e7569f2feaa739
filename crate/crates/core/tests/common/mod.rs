#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::Rng;
use utilscope::cost_model::{ImageShape, LayerSpec, NetworkSpec, Padding, ScalarWidth};
use utilscope::pareto::MetricPoint;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

/// Quadratic reference: keep every point no other point dominates.
pub fn brute_force_frontier<T: PartialOrd>(points: &[MetricPoint<T>]) -> BTreeSet<String> {
    points
        .iter()
        .filter(|p| !points.iter().any(|q| q.x >= p.x && q.y >= p.y && (q.x > p.x || q.y > p.y)))
        .map(|p| p.id.clone())
        .collect()
}

/// Random points; half the sets live on a small integer grid so ties and
/// duplicates are common.
pub fn random_points(rng: &mut impl Rng, max_len: usize) -> Vec<MetricPoint<f64>> {
    let n = rng.random_range(1..=max_len);
    let grid = rng.random_bool(0.5);
    (0..n)
        .map(|i| {
            let (x, y) = if grid {
                (f64::from(rng.random_range(0..8)), f64::from(rng.random_range(0..8)))
            } else {
                (rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3))
            };
            MetricPoint::new(format!("p{i}"), x, y)
        })
        .collect()
}

/// A conv stack with an optional interior dense layer and a dense classifier.
/// Widths are even so folding by 4 (widths doubled) stays exact.
pub fn random_net(rng: &mut impl Rng) -> NetworkSpec {
    let side = 4 * rng.random_range(2..=16u64);
    let input = ImageShape { c: 3, h: side, w: side };
    let mut layers = Vec::new();
    let mut prev = input.c;
    for _ in 0..rng.random_range(2..=6) {
        let out = 2 * rng.random_range(2..=48u64);
        let k = [1, 3, 5][rng.random_range(0..3)];
        let mut layer = LayerSpec::conv2d(prev, out, k, 1, Padding::Same);
        if rng.random_bool(0.5) {
            layer = layer.fused();
        }
        layers.push(layer);
        prev = out;
    }
    layers.push(LayerSpec::global_pool());
    if rng.random_bool(0.5) {
        let hidden = 2 * rng.random_range(2..=32u64);
        layers.push(LayerSpec::dense(prev, hidden).fused());
        prev = hidden;
    }
    layers.push(LayerSpec::dense(prev, rng.random_range(2..=100)).with_bias());
    NetworkSpec::new("random", input, ScalarWidth::FP16, layers)
}
