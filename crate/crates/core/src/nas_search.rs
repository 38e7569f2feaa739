//! Simulated sample-based NAS over a tabular space.
//!
//! Each iteration samples an architecture, looks up its accuracy and
//! throughput, ranks it with `acc/100 * (tput/goal)^w`, charges simulated time
//! and updates a running accuracy-throughput frontier. The approximate-filter
//! variant instead measures throughput and a cheap proxy (utilization or
//! FLOPs) for every candidate, keeps the throughput-proxy frontier, and only
//! pays for accuracy on that shortlist.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pareto::{frontier, hypervolume, MetricPoint, ParetoError, ParetoFrontier, RunningFrontier};
use crate::scalar::Scalar;
use crate::search_space::{ArchId, Candidate, TabularSpace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("rank needs positive throughput and goal, got {throughput} and {goal}")]
    NonPositiveRate { throughput: f64, goal: f64 },
    #[error("accuracy {0} is outside [0, 100]")]
    AccuracyRange(f64),
    #[error("search space is empty")]
    EmptySpace,
    #[error("budget {budget} cannot cover the proxy phase; at least {required} time units are needed")]
    BudgetTooSmall { budget: f64, required: f64 },
    #[error("hypervolume of the reference frontier is zero")]
    DegenerateReference,
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

pub type Result<T> = std::result::Result<T, SearchError>;

/// Ranking reward: `accuracy / 100 * (throughput / goal)^w`.
pub fn rank<T: Scalar>(accuracy: T, throughput: T, goal: T, w: T) -> Result<T> {
    if !(throughput > T::zero() && goal > T::zero()) {
        return Err(SearchError::NonPositiveRate { throughput: throughput.as_f64(), goal: goal.as_f64() });
    }
    if !(accuracy >= T::zero() && accuracy <= T::lit(100.0)) {
        return Err(SearchError::AccuracyRange(accuracy.as_f64()));
    }
    Ok(accuracy / T::lit(100.0) * (throughput / goal).powf(w))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerKind {
    /// Uniform without replacement.
    Random,
    /// Per-layer categorical policy trained with REINFORCE.
    Reinforce { learning_rate: f64, baseline_decay: f64 },
}

impl SamplerKind {
    pub fn reinforce_default() -> Self {
        SamplerKind::Reinforce { learning_rate: 0.01, baseline_decay: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Simulated time budget.
    pub time_budget: f64,
    /// Simulated cost of one accuracy evaluation.
    pub eval_time_acc: f64,
    /// Simulated cost of one throughput (or proxy) evaluation.
    pub eval_time_tput: f64,
    pub goal_tput: f64,
    pub weight: f64,
    pub sampler: SamplerKind,
    pub seed: u64,
    /// Accuracy and throughput evaluations of one sample overlap in time.
    pub parallel_evals: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            time_budget: 110_000.0,
            eval_time_acc: 100.0,
            eval_time_tput: 1.0,
            goal_tput: 175_000.0,
            weight: 0.07,
            sampler: SamplerKind::Random,
            seed: 0,
            parallel_evals: true,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.to_string()));
        if !(self.time_budget.is_finite() && self.time_budget > 0.0) {
            return bad("time budget must be positive");
        }
        if !(self.eval_time_tput.is_finite() && self.eval_time_tput > 0.0) {
            return bad("throughput evaluation time must be positive");
        }
        if !(self.eval_time_acc.is_finite() && self.eval_time_acc >= self.eval_time_tput) {
            return bad("accuracy evaluation time must be at least the throughput evaluation time");
        }
        if !(self.goal_tput.is_finite() && self.goal_tput > 0.0) {
            return bad("throughput goal must be positive");
        }
        if !self.weight.is_finite() {
            return bad("weight must be finite");
        }
        if let SamplerKind::Reinforce { learning_rate, baseline_decay } = self.sampler {
            if !(learning_rate.is_finite() && learning_rate > 0.0) {
                return bad("learning rate must be positive");
            }
            if !(0.0..1.0).contains(&baseline_decay) {
                return bad("baseline decay must lie in [0, 1)");
            }
        }
        Ok(())
    }

    /// Simulated time charged per sample.
    pub fn step_time(&self) -> f64 {
        if self.parallel_evals {
            self.eval_time_acc.max(self.eval_time_tput)
        } else {
            self.eval_time_acc + self.eval_time_tput
        }
    }

    fn rank(&self, c: &Candidate) -> f64 {
        rank(c.accuracy, c.throughput, self.goal_tput, self.weight).expect("table candidates are validated")
    }
}

/// Chooses the next architecture and optionally learns from its reward.
pub trait Sampler {
    /// `None` once the sampler cannot produce a new architecture.
    fn sample(&mut self, space: &TabularSpace) -> Option<ArchId>;

    fn observe(&mut self, _arch: &ArchId, _reward: f64) {}

    fn describe(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
}

/// Uniform sampling without replacement (a lazily drawn Fisher-Yates shuffle).
#[derive(Debug, Clone)]
pub struct RandomSampler {
    rng: ChaCha8Rng,
    order: Option<Vec<ArchId>>,
    next: usize,
}

impl RandomSampler {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), order: None, next: 0 }
    }
}

impl Sampler for RandomSampler {
    fn sample(&mut self, space: &TabularSpace) -> Option<ArchId> {
        let order = self.order.get_or_insert_with(|| space.candidates.keys().cloned().collect());
        if self.next >= order.len() {
            return None;
        }
        let pick = self.rng.random_range(self.next..order.len());
        order.swap(self.next, pick);
        self.next += 1;
        Some(order[self.next - 1].clone())
    }

    fn describe(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("sampler".to_string(), "random".to_string())])
    }
}

/// Independent softmax policy per layer over channel choices, updated with
/// `logits += lr * advantage * (onehot(choice) - softmax)` where the advantage
/// is the reward minus an exponential moving average baseline.
///
/// Samples with replacement; revisited architectures are evaluated (and
/// charged) again.
#[derive(Debug, Clone)]
pub struct ReinforceSampler {
    rng: ChaCha8Rng,
    choices: Vec<u32>,
    logits: Vec<Vec<f64>>,
    learning_rate: f64,
    baseline_decay: f64,
    baseline: f64,
}

const MAX_REJECTIONS: usize = 10_000;

impl ReinforceSampler {
    pub fn new(seed: u64, learning_rate: f64, baseline_decay: f64, layer_count: usize, choices: &[u32]) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            choices: choices.to_vec(),
            logits: vec![vec![0.0; choices.len()]; layer_count],
            learning_rate,
            baseline_decay,
            baseline: 0.0,
        }
    }

    pub fn for_space(seed: u64, learning_rate: f64, baseline_decay: f64, space: &TabularSpace) -> Self {
        Self::new(seed, learning_rate, baseline_decay, space.layer_count, &space.channel_choices)
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn probabilities(&self, layer: usize) -> Vec<f64> {
        let row = &self.logits[layer];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / total).collect()
    }

    fn choice_indices(&self, arch: &ArchId) -> Option<Vec<usize>> {
        if arch.channels().len() != self.logits.len() {
            return None;
        }
        arch.channels().iter().map(|c| self.choices.iter().position(|x| x == c)).collect()
    }

    /// Probability of drawing `arch` in one joint sample.
    pub fn joint_probability(&self, arch: &ArchId) -> f64 {
        match self.choice_indices(arch) {
            Some(idx) => idx.iter().enumerate().map(|(layer, &i)| self.probabilities(layer)[i]).product(),
            None => 0.0,
        }
    }

    /// One policy-gradient step on `arch` with the given advantage.
    pub fn policy_step(&mut self, arch: &ArchId, advantage: f64) {
        let Some(idx) = self.choice_indices(arch) else { return };
        for (layer, &chosen) in idx.iter().enumerate() {
            let probs = self.probabilities(layer);
            for (k, logit) in self.logits[layer].iter_mut().enumerate() {
                let indicator = if k == chosen { 1.0 } else { 0.0 };
                *logit += self.learning_rate * advantage * (indicator - probs[k]);
            }
        }
    }

    fn draw(&mut self) -> ArchId {
        let mut channels = Vec::with_capacity(self.logits.len());
        for layer in 0..self.logits.len() {
            let probs = self.probabilities(layer);
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            channels.push(self.choices[pick]);
        }
        ArchId::new(channels).expect("channel choices are positive")
    }
}

impl Sampler for ReinforceSampler {
    fn sample(&mut self, space: &TabularSpace) -> Option<ArchId> {
        // Tables need not cover the full product; redraw until a listed arch comes up.
        (0..MAX_REJECTIONS).map(|_| self.draw()).find(|a| space.get(a).is_some())
    }

    fn observe(&mut self, arch: &ArchId, reward: f64) {
        let advantage = reward - self.baseline;
        self.policy_step(arch, advantage);
        self.baseline = self.baseline_decay * self.baseline + (1.0 - self.baseline_decay) * reward;
    }

    fn describe(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("sampler".to_string(), "reinforce".to_string()),
            ("learning_rate".to_string(), self.learning_rate.to_string()),
            ("baseline_decay".to_string(), self.baseline_decay.to_string()),
        ])
    }
}

pub fn random_sampler(seed: u64) -> RandomSampler {
    RandomSampler::new(seed)
}

pub fn reinforce_sampler(seed: u64, learning_rate: f64, baseline_decay: f64, space: &TabularSpace) -> ReinforceSampler {
    ReinforceSampler::for_space(seed, learning_rate, baseline_decay, space)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Simulated time once this sample's evaluations finished.
    pub sim_time: f64,
    pub arch: ArchId,
    pub accuracy: f64,
    pub throughput: f64,
    pub rank: f64,
    /// Whether the sample entered the running frontier when it arrived.
    pub on_frontier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub rows: Vec<TraceRow>,
    /// Throughput-accuracy frontier over everything evaluated.
    pub frontier: ParetoFrontier,
    pub n_acc_evals: usize,
    pub n_tput_evals: usize,
    pub sim_time: f64,
    /// The sampler ran out of architectures before the budget did.
    pub exhausted: bool,
    pub metadata: BTreeMap<String, String>,
}

fn accuracy_point(c: &Candidate) -> MetricPoint {
    MetricPoint::new(c.arch.to_string(), c.throughput, c.accuracy)
}

fn empty_frontier() -> ParetoFrontier {
    ParetoFrontier { metric_x: "throughput".into(), metric_y: "accuracy".into(), points: Vec::new() }
}

/// Runs the sampling loop with the sampler named in `cfg`.
pub fn run_search(space: &TabularSpace, cfg: &SearchConfig) -> Result<SearchTrace> {
    match cfg.sampler {
        SamplerKind::Random => run_search_with(space, cfg, &mut RandomSampler::new(cfg.seed)),
        SamplerKind::Reinforce { learning_rate, baseline_decay } => run_search_with(
            space,
            cfg,
            &mut ReinforceSampler::for_space(cfg.seed, learning_rate, baseline_decay, space),
        ),
    }
}

/// Runs the sampling loop until the next sample would overrun the budget.
pub fn run_search_with(space: &TabularSpace, cfg: &SearchConfig, sampler: &mut dyn Sampler) -> Result<SearchTrace> {
    cfg.validate()?;
    if space.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    let step = cfg.step_time();
    let mut running = RunningFrontier::new("throughput", "accuracy");
    let mut rows = Vec::new();
    let mut time = 0.0;
    let mut exhausted = false;

    while time + step <= cfg.time_budget {
        let Some(arch) = sampler.sample(space) else {
            exhausted = true;
            break;
        };
        let candidate = space.get(&arch).expect("samplers only return listed architectures");
        let reward = cfg.rank(candidate);
        time += step;
        let on_frontier = running.insert(accuracy_point(candidate));
        sampler.observe(&arch, reward);
        rows.push(TraceRow {
            step: rows.len(),
            sim_time: time,
            arch,
            accuracy: candidate.accuracy,
            throughput: candidate.throughput,
            rank: reward,
            on_frontier,
        });
    }

    let mut metadata = sampler.describe();
    metadata.insert("seed".into(), cfg.seed.to_string());
    metadata.insert("step_time".into(), step.to_string());
    Ok(SearchTrace {
        frontier: if running.is_empty() { empty_frontier() } else { running.to_frontier() },
        n_acc_evals: rows.len(),
        n_tput_evals: rows.len(),
        sim_time: time,
        exhausted,
        metadata,
        rows,
    })
}

/// Cheap stand-in for accuracy in approximate filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proxy {
    Utilization,
    Flops,
}

impl Proxy {
    pub fn value(self, c: &Candidate) -> f64 {
        match self {
            Proxy::Utilization => c.utilization,
            Proxy::Flops => c.flops_per_input,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Proxy::Utilization => "utilization",
            Proxy::Flops => "flops",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterResult {
    pub proxy: Proxy,
    /// Throughput-proxy frontier over the whole space.
    pub proxy_frontier: ParetoFrontier,
    /// Shortlisted candidates that received an accuracy evaluation, in order.
    pub evaluated: Vec<Candidate>,
    /// Throughput-accuracy frontier over `evaluated`.
    pub final_frontier: ParetoFrontier,
    pub rows: Vec<TraceRow>,
    pub time_spent: f64,
    pub n_tput_evals: usize,
    pub n_acc_evals: usize,
    /// The budget ran out before the whole shortlist was evaluated.
    pub truncated: bool,
}

/// Two-phase search: throughput and proxy on every candidate, then accuracy
/// on the throughput-proxy frontier in descending proxy order while the budget
/// lasts.
pub fn approximate_filter_search(space: &TabularSpace, cfg: &SearchConfig, proxy: Proxy) -> Result<FilterResult> {
    cfg.validate()?;
    if space.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    let phase_one = space.len() as f64 * cfg.eval_time_tput;
    if phase_one > cfg.time_budget {
        return Err(SearchError::BudgetTooSmall { budget: cfg.time_budget, required: phase_one });
    }

    let measure = |c: &Candidate| MetricPoint::new(c.arch.to_string(), c.throughput, proxy.value(c));
    let proxy_points: Vec<MetricPoint> = if cfg.parallel_evals {
        space.candidates.par_iter().map(|(_, c)| measure(c)).collect()
    } else {
        space.iter().map(measure).collect()
    };
    let proxy_frontier = frontier(&proxy_points)?.named("throughput", proxy.name());

    let mut shortlist: Vec<&Candidate> = proxy_frontier
        .points
        .iter()
        .map(|p| space.get(&p.id.parse().expect("ids come from ArchId")).expect("listed"))
        .collect();
    shortlist.sort_by(|a, b| proxy.value(b).total_cmp(&proxy.value(a)).then_with(|| a.arch.cmp(&b.arch)));

    let mut time = phase_one;
    let mut running = RunningFrontier::new("throughput", "accuracy");
    let mut rows = Vec::new();
    let mut evaluated = Vec::new();
    for c in &shortlist {
        if time + cfg.eval_time_acc > cfg.time_budget {
            break;
        }
        time += cfg.eval_time_acc;
        let on_frontier = running.insert(accuracy_point(c));
        rows.push(TraceRow {
            step: rows.len(),
            sim_time: time,
            arch: c.arch.clone(),
            accuracy: c.accuracy,
            throughput: c.throughput,
            rank: cfg.rank(c),
            on_frontier,
        });
        evaluated.push((*c).clone());
    }

    Ok(FilterResult {
        proxy,
        truncated: evaluated.len() < shortlist.len(),
        final_frontier: if running.is_empty() { empty_frontier() } else { running.to_frontier() },
        n_tput_evals: space.len(),
        n_acc_evals: evaluated.len(),
        proxy_frontier,
        evaluated,
        rows,
        time_spent: time,
    })
}

/// Throughput-accuracy frontier over the entire space.
pub fn true_frontier(space: &TabularSpace) -> Result<ParetoFrontier> {
    let points: Vec<MetricPoint> = space.iter().map(accuracy_point).collect();
    Ok(frontier(&points)?.named("throughput", "accuracy"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct FrontierComparison<T = f64> {
    pub hypervolume_a: T,
    pub hypervolume_b: T,
    /// `hypervolume_a / hypervolume_b`.
    pub hypervolume_ratio: T,
    /// Largest shortfall in `y` of a point of `a` below `b`'s staircase at the
    /// same or larger `x`.
    pub max_gap: T,
}

pub fn compare_frontiers<T: Scalar>(
    a: &ParetoFrontier<T>,
    b: &ParetoFrontier<T>,
    reference: &MetricPoint<T>,
) -> Result<FrontierComparison<T>> {
    a.check_same_axes(b)?;
    let hypervolume_a = hypervolume(&a.points, reference)?;
    let hypervolume_b = hypervolume(&b.points, reference)?;
    if hypervolume_b == T::zero() {
        return Err(SearchError::DegenerateReference);
    }
    let max_gap = a
        .points
        .iter()
        .map(|p| {
            let best = b.points.iter().filter(|q| q.x >= p.x).map(|q| q.y).fold(T::neg_infinity(), T::max);
            if best > p.y {
                best - p.y
            } else {
                T::zero()
            }
        })
        .fold(T::zero(), T::max);
    Ok(FrontierComparison { hypervolume_ratio: hypervolume_a / hypervolume_b, hypervolume_a, hypervolume_b, max_gap })
}

/// Shuffles a copy of the space's ids; handy for order-independence checks.
pub fn shuffled_ids(space: &TabularSpace, seed: u64) -> Vec<ArchId> {
    let mut ids: Vec<ArchId> = space.candidates.keys().cloned().collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}
