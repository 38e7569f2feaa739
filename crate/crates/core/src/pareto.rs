//! Two-dimensional Pareto frontiers (both axes maximized) and hypervolume.
//!
//! A point is dominated when another point is at least as good on both axes
//! and strictly better on one. Points with identical coordinates do not
//! dominate each other, so exact ties are all kept. Minimized metrics are
//! handled by negating them before building points.
//!
//! The routines only need `PartialOrd` (plus ring operations for the
//! hypervolume), so they work for floats as well as exact rationals.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};

use num_traits::Num;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParetoError {
    #[error("cannot compute a frontier of an empty point set")]
    Empty,
    #[error("point {0} has a coordinate that cannot be ordered (NaN?)")]
    Unordered(String),
    #[error("reference point is not dominated by point {0}")]
    ReferenceNotDominated(String),
    #[error("duplicate model name {0}")]
    DuplicateName(String),
    #[error("frontiers use different axes: ({0}) vs ({1})")]
    AxisMismatch(String, String),
}

pub type Result<T> = std::result::Result<T, ParetoError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint<T = f64> {
    pub id: String,
    pub x: T,
    pub y: T,
}

impl<T> MetricPoint<T> {
    pub fn new(id: impl Into<String>, x: T, y: T) -> Self {
        Self { id: id.into(), x, y }
    }
}

impl<T: PartialOrd> MetricPoint<T> {
    /// Weak dominance with strict improvement on at least one axis.
    pub fn dominates(&self, other: &Self) -> bool {
        self.x >= other.x && self.y >= other.y && (self.x > other.x || self.y > other.y)
    }

    fn is_ordered(&self) -> bool {
        self.x.partial_cmp(&self.x).is_some() && self.y.partial_cmp(&self.y).is_some()
    }
}

/// Non-dominated subset of a point set, sorted by ascending `x` (ties by id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFrontier<T = f64> {
    pub metric_x: String,
    pub metric_y: String,
    pub points: Vec<MetricPoint<T>>,
}

impl<T> ParetoFrontier<T> {
    pub fn named(mut self, metric_x: impl Into<String>, metric_y: impl Into<String>) -> Self {
        self.metric_x = metric_x.into();
        self.metric_y = metric_y.into();
        self
    }

    pub fn members(&self) -> BTreeSet<&str> {
        self.points.iter().map(|p| p.id.as_str()).collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.points.iter().any(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check_same_axes<U>(&self, other: &ParetoFrontier<U>) -> Result<()> {
        if self.metric_x != other.metric_x || self.metric_y != other.metric_y {
            return Err(ParetoError::AxisMismatch(
                format!("{}, {}", self.metric_x, self.metric_y),
                format!("{}, {}", other.metric_x, other.metric_y),
            ));
        }
        Ok(())
    }
}

fn cmp<T: PartialOrd>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("coordinates were checked to be ordered")
}

/// Indices (ascending) of the non-dominated points.
///
/// Sweeps the points by descending `x`, tracking the best `y` seen among
/// strictly larger `x`; runs in O(n log n).
pub fn frontier_indices<T: PartialOrd>(points: &[MetricPoint<T>]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(ParetoError::Empty);
    }
    if let Some(p) = points.iter().find(|p| !p.is_ordered()) {
        return Err(ParetoError::Unordered(p.id.clone()));
    }

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| cmp(&points[b].x, &points[a].x).then_with(|| cmp(&points[b].y, &points[a].y)));

    let mut keep = Vec::new();
    let mut best_right: Option<&T> = None;
    let mut start = 0;
    while start < order.len() {
        let x = &points[order[start]].x;
        let end = start + order[start..].iter().take_while(|&&i| points[i].x == *x).count();
        // Group is sorted by descending y, so its first element holds the group max.
        let group_max = &points[order[start]].y;
        if best_right.is_none_or(|b| group_max > b) {
            keep.extend(order[start..end].iter().copied().filter(|&i| points[i].y == *group_max));
            best_right = Some(group_max);
        }
        start = end;
    }
    keep.sort_unstable();
    Ok(keep)
}

/// Non-dominated subset of `points`, with placeholder axis names `x`/`y`.
pub fn frontier<T: PartialOrd + Clone>(points: &[MetricPoint<T>]) -> Result<ParetoFrontier<T>> {
    let mut members: Vec<MetricPoint<T>> = frontier_indices(points)?.into_iter().map(|i| points[i].clone()).collect();
    members.sort_by(|a, b| cmp(&a.x, &b.x).then_with(|| a.id.cmp(&b.id)));
    Ok(ParetoFrontier { metric_x: "x".to_string(), metric_y: "y".to_string(), points: members })
}

/// Frontier maintained incrementally as points arrive.
///
/// Re-inserting an id that is already a member leaves the frontier unchanged.
#[derive(Debug, Clone)]
pub struct RunningFrontier<T = f64> {
    metric_x: String,
    metric_y: String,
    members: Vec<MetricPoint<T>>,
}

impl<T: PartialOrd + Clone> RunningFrontier<T> {
    pub fn new(metric_x: impl Into<String>, metric_y: impl Into<String>) -> Self {
        Self { metric_x: metric_x.into(), metric_y: metric_y.into(), members: Vec::new() }
    }

    /// Adds `point` if no member dominates it, evicting members it dominates.
    /// Returns whether the point is on the frontier afterwards.
    pub fn insert(&mut self, point: MetricPoint<T>) -> bool {
        if self.members.iter().any(|m| m.id == point.id) {
            return true;
        }
        if self.members.iter().any(|m| m.dominates(&point)) {
            return false;
        }
        self.members.retain(|m| !point.dominates(m));
        self.members.push(point);
        true
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> BTreeSet<&str> {
        self.members.iter().map(|p| p.id.as_str()).collect()
    }

    pub fn to_frontier(&self) -> ParetoFrontier<T> {
        let mut points = self.members.clone();
        points.sort_by(|a, b| cmp(&a.x, &b.x).then_with(|| a.id.cmp(&b.id)));
        ParetoFrontier { metric_x: self.metric_x.clone(), metric_y: self.metric_y.clone(), points }
    }
}

/// Area dominated by `points` and bounded below by `reference`.
///
/// Every point must weakly dominate the reference. Dominated input points are
/// allowed and contribute nothing.
pub fn hypervolume<T>(points: &[MetricPoint<T>], reference: &MetricPoint<T>) -> Result<T>
where
    T: Num + PartialOrd + Clone,
{
    if let Some(p) = points.iter().find(|p| !(p.x >= reference.x && p.y >= reference.y)) {
        return Err(ParetoError::ReferenceNotDominated(p.id.clone()));
    }
    if points.is_empty() {
        return Ok(T::zero());
    }
    let mut front: Vec<&MetricPoint<T>> = frontier_indices(points)?.into_iter().map(|i| &points[i]).collect();
    front.sort_by(|a, b| cmp(&a.x, &b.x));

    // Ascending x means descending y along the frontier: a staircase of strips.
    let mut area = T::zero();
    let mut left = reference.x.clone();
    for p in front {
        area = area + (p.x.clone() - left) * (p.y.clone() - reference.y.clone());
        left = p.x.clone();
    }
    Ok(area)
}

/// One row of a measured model survey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredModelRecord {
    pub name: String,
    /// Top-1 accuracy in percent.
    pub accuracy: f64,
    /// Images per second.
    pub throughput: f64,
    pub tflops_per_sec: f64,
}

impl MeasuredModelRecord {
    /// Fraction of a 100 TFLOPs/sec peak.
    pub fn utilization(&self) -> f64 {
        self.tflops_per_sec / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierMembership {
    pub name: String,
    pub on_tput_acc: bool,
    pub on_util_acc: bool,
    pub on_tput_util: bool,
}

impl FrontierMembership {
    pub fn on_all_three(&self) -> bool {
        self.on_tput_acc && self.on_util_acc && self.on_tput_util
    }
}

/// Membership of every model in the throughput-accuracy,
/// utilization-accuracy and throughput-utilization frontiers.
pub fn frontier_membership(table: &[MeasuredModelRecord]) -> Result<Vec<FrontierMembership>> {
    let mut seen = HashSet::new();
    if let Some(dup) = table.iter().find(|r| !seen.insert(r.name.as_str())) {
        return Err(ParetoError::DuplicateName(dup.name.clone()));
    }
    let flags = |x: fn(&MeasuredModelRecord) -> f64, y: fn(&MeasuredModelRecord) -> f64| -> Result<Vec<bool>> {
        let points: Vec<_> = table.iter().map(|r| MetricPoint::new(r.name.clone(), x(r), y(r))).collect();
        let mut on = vec![false; table.len()];
        for i in frontier_indices(&points)? {
            on[i] = true;
        }
        Ok(on)
    };
    let tput_acc = flags(|r| r.throughput, |r| r.accuracy)?;
    let util_acc = flags(MeasuredModelRecord::utilization, |r| r.accuracy)?;
    let tput_util = flags(|r| r.throughput, MeasuredModelRecord::utilization)?;
    Ok(table
        .iter()
        .enumerate()
        .map(|(i, r)| FrontierMembership {
            name: r.name.clone(),
            on_tput_acc: tput_acc[i],
            on_util_acc: util_acc[i],
            on_tput_util: tput_util[i],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    fn pts(coords: &[(f64, f64)]) -> Vec<MetricPoint<f64>> {
        coords.iter().enumerate().map(|(i, &(x, y))| MetricPoint::new(format!("p{i}"), x, y)).collect()
    }

    #[test]
    fn mutually_non_dominated() {
        let f = frontier(&pts(&[(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)])).unwrap();
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn dominated_point_dropped() {
        let f = frontier(&pts(&[(1.0, 1.0), (2.0, 2.0)])).unwrap();
        assert_eq!(f.members(), BTreeSet::from(["p1"]));
    }

    #[test]
    fn survey_triple() {
        let points = vec![
            MetricPoint::new("tresnet_m", 8444.73, 83.08),
            MetricPoint::new("gernet_m", 12411.49, 80.73),
            MetricPoint::new("seresnet50", 6059.46, 80.27),
        ];
        assert_eq!(frontier(&points).unwrap().members(), BTreeSet::from(["gernet_m", "tresnet_m"]));
    }

    #[test]
    fn ties_are_kept_but_equal_axis_with_worse_other_is_not() {
        let f = frontier(&pts(&[(2.0, 2.0), (2.0, 2.0), (2.0, 1.0), (1.0, 2.0)])).unwrap();
        assert_eq!(f.members(), BTreeSet::from(["p0", "p1"]));
    }

    #[test]
    fn empty_and_nan_rejected() {
        assert_eq!(frontier::<f64>(&[]).unwrap_err(), ParetoError::Empty);
        assert!(matches!(frontier(&pts(&[(1.0, f64::NAN)])), Err(ParetoError::Unordered(_))));
    }

    #[test]
    fn running_frontier_evicts_and_dedups() {
        let mut rf = RunningFrontier::new("x", "y");
        assert!(rf.insert(MetricPoint::new("a", 1.0, 1.0)));
        assert!(rf.insert(MetricPoint::new("b", 0.5, 2.0)));
        assert!(!rf.insert(MetricPoint::new("c", 0.5, 0.5)));
        assert!(rf.insert(MetricPoint::new("d", 2.0, 2.0)));
        assert_eq!(rf.members(), BTreeSet::from(["d"]));
        assert!(rf.insert(MetricPoint::new("d", 2.0, 2.0)));
        assert_eq!(rf.len(), 1);
    }

    /// Counts unit cells of an integer grid covered by at least one rectangle.
    fn raster_area(points: &[(i64, i64)], reference: (i64, i64)) -> i64 {
        let max_x = points.iter().map(|p| p.0).max().unwrap_or(reference.0);
        let max_y = points.iter().map(|p| p.1).max().unwrap_or(reference.1);
        let mut cells = 0;
        for cx in reference.0..max_x {
            for cy in reference.1..max_y {
                if points.iter().any(|&(x, y)| cx < x && cy < y) {
                    cells += 1;
                }
            }
        }
        cells
    }

    #[test]
    fn hypervolume_spot_values() {
        let origin = MetricPoint::new("ref", 0.0, 0.0);
        assert_eq!(hypervolume(&pts(&[(2.0, 2.0)]), &origin).unwrap(), 4.0);
        assert_eq!(hypervolume(&pts(&[(1.0, 3.0), (3.0, 1.0)]), &origin).unwrap(), 5.0);
        assert_eq!(raster_area(&[(1, 3), (3, 1)], (0, 0)), 5);
        assert_eq!(hypervolume::<f64>(&[], &origin).unwrap(), 0.0);
        assert!(matches!(hypervolume(&pts(&[(1.0, -1.0)]), &origin), Err(ParetoError::ReferenceNotDominated(_))));
    }

    #[test]
    fn hypervolume_matches_raster_on_integer_sets() {
        let sets: [&[(i64, i64)]; 4] = [
            &[(5, 1), (4, 2), (1, 6), (3, 3), (2, 2)],
            &[(7, 7)],
            &[(1, 1), (1, 1), (6, 2), (2, 6)],
            &[(3, 9), (9, 3), (5, 5), (8, 4), (4, 8), (6, 6)],
        ];
        for set in sets {
            let points: Vec<_> = set
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| MetricPoint::new(i.to_string(), Ratio::from_integer(x), Ratio::from_integer(y)))
                .collect();
            let hv =
                hypervolume(&points, &MetricPoint::new("r", Ratio::from_integer(0), Ratio::from_integer(0))).unwrap();
            assert_eq!(hv, Ratio::from_integer(raster_area(set, (0, 0))));
        }
    }

    #[test]
    fn exact_rational_frontier() {
        let third = Ratio::new(1i64, 3);
        let points = vec![
            MetricPoint::new("a", third, Ratio::from_integer(1)),
            MetricPoint::new("b", Ratio::new(2, 6), Ratio::from_integer(1)),
            MetricPoint::new("c", Ratio::new(1, 4), Ratio::from_integer(2)),
        ];
        assert_eq!(frontier(&points).unwrap().len(), 3);
        let hv = hypervolume(&points, &MetricPoint::new("r", Ratio::from_integer(0), Ratio::from_integer(0))).unwrap();
        assert_eq!(hv, Ratio::new(1, 4) * 2 + (third - Ratio::new(1, 4)));
    }

    #[test]
    fn membership_rejects_duplicates() {
        let row = MeasuredModelRecord { name: "m".into(), accuracy: 1.0, throughput: 1.0, tflops_per_sec: 1.0 };
        assert_eq!(frontier_membership(&[row.clone(), row]).unwrap_err(), ParetoError::DuplicateName("m".into()));
    }

    #[test]
    fn axis_mismatch_detected() {
        let a = frontier(&pts(&[(1.0, 1.0)])).unwrap().named("throughput", "accuracy");
        let b = frontier(&pts(&[(1.0, 1.0)])).unwrap().named("throughput", "utilization");
        assert!(a.check_same_axes(&b).is_err());
        assert!(a.check_same_axes(&a).is_ok());
    }
}
