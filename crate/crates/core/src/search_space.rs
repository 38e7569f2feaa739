//! Tabular NAS search spaces in the style of a channel-width ("size") space:
//! a fixed topology whose architectures differ only in per-layer channels.
//!
//! Spaces come either from a benchmark CSV or from a synthetic oracle that
//! costs each architecture with [`cost_model`](crate::cost_model), places it on
//! the roofline, and draws an accuracy that grows with log FLOPs. The published
//! size space is quoted at 32767 networks while 8^5 = 32768; the synthetic
//! space enumerates all 32768.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost_model::{network_cost, CostError, ImageShape, LayerSpec, NetworkSpec, Padding, ScalarWidth};
use crate::roofline::{predicted_throughput, DeviceSpec, RooflineError};

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error("channel choices must be non-empty")]
    EmptyChoices,
    #[error("layer count must be at least 1")]
    NoLayers,
    #[error("duplicate channel choice {0}")]
    DuplicateChoice(u32),
    #[error("invalid architecture id {0:?}")]
    InvalidArch(String),
    #[error("line {line}, column {column}: {message}")]
    Row { line: u64, column: String, message: String },
    #[error("expected header `arch,accuracy,throughput,flops_per_input`, found `{0}`")]
    Header(String),
    #[error("table has no rows")]
    Empty,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Roofline(#[from] RooflineError),
}

pub type Result<T> = std::result::Result<T, SpaceError>;

/// Per-layer channel counts identifying an architecture. Written as
/// channels joined by `:` (e.g. `8:24:64:16:32`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ArchId(Vec<u32>);

impl ArchId {
    pub fn new(channels: Vec<u32>) -> Result<Self> {
        if channels.is_empty() || channels.contains(&0) {
            return Err(SpaceError::InvalidArch(format!("{channels:?}")));
        }
        Ok(Self(channels))
    }

    pub fn channels(&self) -> &[u32] {
        &self.0
    }
}

impl fmt::Display for ArchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for ArchId {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self> {
        let channels = s
            .split(':')
            .map(|part| part.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| SpaceError::InvalidArch(s.to_string()))?;
        Self::new(channels).map_err(|_| SpaceError::InvalidArch(s.to_string()))
    }
}

impl TryFrom<String> for ArchId {
    type Error = SpaceError;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<ArchId> for String {
    fn from(value: ArchId) -> Self {
        value.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub arch: ArchId,
    /// Percent, in [0, 100].
    pub accuracy: f64,
    /// Inputs per second.
    pub throughput: f64,
    pub flops_per_input: f64,
    /// throughput * flops_per_input / device peak.
    pub utilization: f64,
}

impl Candidate {
    pub fn new(arch: ArchId, accuracy: f64, throughput: f64, flops_per_input: f64, device: &DeviceSpec) -> Self {
        let utilization = throughput * flops_per_input / device.peak_flops_per_sec;
        Self { arch, accuracy, throughput, flops_per_input, utilization }
    }

    fn check(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.accuracy.is_finite() && (0.0..=100.0).contains(&self.accuracy)) {
            return Err(("accuracy", format!("{} is outside [0, 100]", self.accuracy)));
        }
        if !(self.throughput.is_finite() && self.throughput > 0.0) {
            return Err(("throughput", format!("{} must be positive", self.throughput)));
        }
        if !(self.flops_per_input.is_finite() && self.flops_per_input > 0.0) {
            return Err(("flops_per_input", format!("{} must be positive", self.flops_per_input)));
        }
        Ok(())
    }
}

/// Every architecture of a channel-width space as lexicographically ordered ids.
pub fn enumerate_size_space(layer_count: usize, channel_choices: &[u32]) -> Result<Vec<ArchId>> {
    let choices = normalized_choices(channel_choices)?;
    if layer_count == 0 {
        return Err(SpaceError::NoLayers);
    }
    let total = choices.len().pow(layer_count as u32);
    let mut ids = Vec::with_capacity(total);
    let mut digits = vec![0usize; layer_count];
    for _ in 0..total {
        ids.push(ArchId(digits.iter().map(|&d| choices[d]).collect()));
        // Odometer increment, last layer fastest.
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < choices.len() {
                break;
            }
            *d = 0;
        }
    }
    Ok(ids)
}

fn normalized_choices(choices: &[u32]) -> Result<Vec<u32>> {
    if choices.is_empty() {
        return Err(SpaceError::EmptyChoices);
    }
    let mut sorted = choices.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(SpaceError::DuplicateChoice(w[0]));
    }
    if sorted[0] == 0 {
        return Err(SpaceError::InvalidArch("channel choice 0".to_string()));
    }
    Ok(sorted)
}

/// A search space whose metrics are table lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSpace {
    pub layer_count: usize,
    pub channel_choices: Vec<u32>,
    pub candidates: BTreeMap<ArchId, Candidate>,
    pub device: DeviceSpec,
}

impl TabularSpace {
    /// Builds a space from candidates, inferring the layer count and channel
    /// choices and recomputing utilization against `device`.
    pub fn from_candidates(device: DeviceSpec, candidates: impl IntoIterator<Item = Candidate>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut layer_count = None;
        for (i, mut c) in candidates.into_iter().enumerate() {
            let line = i as u64 + 1;
            let len = c.arch.channels().len();
            if *layer_count.get_or_insert(len) != len {
                return Err(SpaceError::Row {
                    line,
                    column: "arch".into(),
                    message: format!("{} has {len} layers, expected {}", c.arch, layer_count.unwrap()),
                });
            }
            c.check().map_err(|(column, message)| SpaceError::Row { line, column: column.into(), message })?;
            c.utilization = c.throughput * c.flops_per_input / device.peak_flops_per_sec;
            if map.contains_key(&c.arch) {
                return Err(SpaceError::Row { line, column: "arch".into(), message: format!("duplicate {}", c.arch) });
            }
            map.insert(c.arch.clone(), c);
        }
        let layer_count = layer_count.ok_or(SpaceError::Empty)?;
        let mut channel_choices: Vec<u32> = map.keys().flat_map(|a| a.channels().iter().copied()).collect();
        channel_choices.sort_unstable();
        channel_choices.dedup();
        Ok(Self { layer_count, channel_choices, candidates: map, device })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, arch: &ArchId) -> Option<&Candidate> {
        self.candidates.get(arch)
    }

    /// Candidates in architecture order.
    pub fn iter(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.values()
    }
}

/// Knobs of the synthetic benchmark oracle. Recorded alongside outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub layer_count: usize,
    pub channel_choices: Vec<u32>,
    /// Accuracy (%) = intercept + slope * ln(FLOPs per input) + noise.
    pub accuracy_intercept: f64,
    pub accuracy_slope: f64,
    pub noise_sigma: f64,
    /// Fraction of the roofline bound the simulated kernels reach.
    pub efficiency: f64,
    /// Batch size at which throughput is modeled.
    pub batch: u64,
    pub input: ImageShape,
    pub classes: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            layer_count: 5,
            channel_choices: vec![8, 16, 24, 32, 40, 48, 56, 64],
            accuracy_intercept: 51.0,
            accuracy_slope: 2.25,
            noise_sigma: 1.0,
            efficiency: 0.6,
            batch: 256,
            input: ImageShape { c: 3, h: 32, w: 32 },
            classes: 10,
        }
    }
}

impl SyntheticConfig {
    /// Network instantiating `arch`: a 3x3 conv per searchable layer (stride 2
    /// on every second layer after the first), global pooling and a classifier.
    pub fn template(&self, arch: &ArchId) -> NetworkSpec {
        let mut layers = Vec::with_capacity(arch.channels().len() + 2);
        let mut prev = self.input.c;
        for (i, &c) in arch.channels().iter().enumerate() {
            let stride = if i > 0 && i % 2 == 0 { 2 } else { 1 };
            layers.push(LayerSpec::conv2d(prev, u64::from(c), 3, stride, Padding::Same).fused());
            prev = u64::from(c);
        }
        layers.push(LayerSpec::global_pool());
        layers.push(LayerSpec::dense(prev, self.classes).with_bias());
        NetworkSpec::new(format!("size-{arch}"), self.input, ScalarWidth::FP16, layers)
    }
}

/// SplitMix64 finalizer; stable across platforms and releases.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn noise_seed(arch: &ArchId, seed: u64) -> u64 {
    arch.channels().iter().fold(mix(seed), |h, &c| mix(h ^ u64::from(c)))
}

/// Deterministic stand-in for benchmark lookups. Noise is keyed by
/// `(arch, seed)` only, so evaluation order never matters and the seed never
/// moves FLOPs or throughput.
pub fn synthetic_oracle(arch: &ArchId, seed: u64, cfg: &SyntheticConfig, device: &DeviceSpec) -> Result<Candidate> {
    let net = cfg.template(arch);
    let flops_per_input = network_cost::<f64>(&net, 1)?.flops_per_image;
    let throughput = cfg.efficiency * predicted_throughput(&net, cfg.batch, device)?;
    let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(noise_seed(arch, seed)));
    let accuracy =
        (cfg.accuracy_intercept + cfg.accuracy_slope * flops_per_input.ln() + cfg.noise_sigma * z).clamp(0.0, 100.0);
    Ok(Candidate::new(arch.clone(), accuracy, throughput, flops_per_input, device))
}

/// Evaluates the synthetic oracle over the whole enumerated space (in parallel).
pub fn synthetic_space(cfg: &SyntheticConfig, seed: u64, device: &DeviceSpec) -> Result<TabularSpace> {
    let ids = enumerate_size_space(cfg.layer_count, &cfg.channel_choices)?;
    let candidates =
        ids.par_iter().map(|arch| synthetic_oracle(arch, seed, cfg, device)).collect::<Result<Vec<_>>>()?;
    TabularSpace::from_candidates(device.clone(), candidates)
}

const TABLE_HEADER: [&str; 4] = ["arch", "accuracy", "throughput", "flops_per_input"];

/// Parses a benchmark table (`arch,accuracy,throughput,flops_per_input`).
pub fn parse_table(reader: impl Read, device: &DeviceSpec) -> Result<TabularSpace> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(TABLE_HEADER) {
        return Err(SpaceError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut candidates = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|e| SpaceError::Row {
                line,
                column: TABLE_HEADER[i].into(),
                message: format!("{:?}: {e}", &record[i]),
            })
        };
        let arch: ArchId = record[0].parse().map_err(|_| SpaceError::Row {
            line,
            column: "arch".into(),
            message: format!("{:?}", &record[0]),
        })?;
        let c = Candidate::new(arch, field(1)?, field(2)?, field(3)?, device);
        c.check().map_err(|(column, message)| SpaceError::Row { line, column: column.into(), message })?;
        candidates.push((line, c));
    }
    // Re-number row errors from from_candidates with file line numbers.
    let lines: Vec<u64> = candidates.iter().map(|(l, _)| *l).collect();
    TabularSpace::from_candidates(device.clone(), candidates.into_iter().map(|(_, c)| c)).map_err(|e| match e {
        SpaceError::Row { line, column, message } => {
            SpaceError::Row { line: lines[line as usize - 1], column, message }
        }
        other => other,
    })
}

pub fn load_table(path: impl AsRef<Path>, device: &DeviceSpec) -> Result<TabularSpace> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|source| SpaceError::Io { path: path.display().to_string(), source })?;
    parse_table(file, device)
}

/// Writes the benchmark table; floats use shortest round-trip formatting so a
/// saved table loads back identically.
pub fn write_table(space: &TabularSpace, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TABLE_HEADER)?;
    for c in space.iter() {
        w.write_record([
            c.arch.to_string(),
            c.accuracy.to_string(),
            c.throughput.to_string(),
            c.flops_per_input.to_string(),
        ])?;
    }
    w.flush().map_err(|source| SpaceError::Io { path: "<table>".into(), source })?;
    Ok(())
}

pub fn save_table(space: &TabularSpace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file =
        std::fs::File::create(path).map_err(|source| SpaceError::Io { path: path.display().to_string(), source })?;
    write_table(space, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> DeviceSpec {
        DeviceSpec::v100_fp16()
    }

    #[test]
    fn enumeration_sizes_and_order() {
        let default = SyntheticConfig::default();
        let all = enumerate_size_space(5, &default.channel_choices).unwrap();
        assert_eq!(all.len(), 32_768);
        assert_eq!(all[0].to_string(), "8:8:8:8:8");
        assert_eq!(all[1].to_string(), "8:8:8:8:16");
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        let one = enumerate_size_space(1, &[16, 8]).unwrap();
        assert_eq!(one, vec![ArchId(vec![8]), ArchId(vec![16])]);
        assert_eq!(enumerate_size_space(2, &[8]).unwrap(), vec![ArchId(vec![8, 8])]);
        assert!(matches!(enumerate_size_space(2, &[]), Err(SpaceError::EmptyChoices)));
        assert!(matches!(enumerate_size_space(2, &[8, 8]), Err(SpaceError::DuplicateChoice(8))));
        assert!(matches!(enumerate_size_space(0, &[8]), Err(SpaceError::NoLayers)));
    }

    #[test]
    fn arch_id_text_form() {
        let id: ArchId = "8:24:64:16:32".parse().unwrap();
        assert_eq!(id.channels(), &[8, 24, 64, 16, 32]);
        assert_eq!(id.to_string(), "8:24:64:16:32");
        assert!("8::16".parse::<ArchId>().is_err());
        assert!("8:0".parse::<ArchId>().is_err());
        assert!("".parse::<ArchId>().is_err());
    }

    #[test]
    fn oracle_is_deterministic_and_seed_only_moves_accuracy() {
        let cfg = SyntheticConfig::default();
        let arch: ArchId = "8:24:64:16:32".parse().unwrap();
        let a = synthetic_oracle(&arch, 7, &cfg, &device()).unwrap();
        assert_eq!(a, synthetic_oracle(&arch, 7, &cfg, &device()).unwrap());
        let b = synthetic_oracle(&arch, 8, &cfg, &device()).unwrap();
        assert_eq!((a.flops_per_input, a.throughput), (b.flops_per_input, b.throughput));
        assert_ne!(a.accuracy, b.accuracy);
        assert!(a.utilization <= cfg.efficiency + 1e-12);
    }

    #[test]
    fn widest_arch_has_most_flops() {
        let cfg = SyntheticConfig { channel_choices: vec![8, 32, 64], ..SyntheticConfig::default() };
        let space = synthetic_space(&cfg, 0, &device()).unwrap();
        let widest = space.get(&ArchId(vec![64; 5])).unwrap();
        assert!(space.iter().all(|c| c.flops_per_input <= widest.flops_per_input));
    }

    #[test]
    fn load_three_rows() {
        let csv = "arch,accuracy,throughput,flops_per_input\n8:8,90.5,1000,2e6\n8:16,91,900,3e6\n16:16,92,800,4e6\n";
        let space = parse_table(csv.as_bytes(), &device()).unwrap();
        assert_eq!(space.len(), 3);
        assert_eq!(space.layer_count, 2);
        assert_eq!(space.channel_choices, vec![8, 16]);
        let c = space.get(&"8:16".parse().unwrap()).unwrap();
        assert_eq!(c.utilization, 900.0 * 3e6 / 100e12);
    }

    #[test]
    fn load_rejects_bad_rows_with_line_numbers() {
        let csv = "arch,accuracy,throughput,flops_per_input\n8:8,90,1000,2e6\n8:16,101,900,3e6\n";
        match parse_table(csv.as_bytes(), &device()) {
            Err(SpaceError::Row { line, column, .. }) => assert_eq!((line, column.as_str()), (3, "accuracy")),
            other => panic!("unexpected {other:?}"),
        }
        let bad_num = "arch,accuracy,throughput,flops_per_input\n8:8,90,fast,2e6\n";
        assert!(matches!(parse_table(bad_num.as_bytes(), &device()), Err(SpaceError::Row { line: 2, .. })));
        let dup = "arch,accuracy,throughput,flops_per_input\n8:8,90,1,2\n8:8,91,1,2\n";
        assert!(matches!(parse_table(dup.as_bytes(), &device()), Err(SpaceError::Row { line: 3, .. })));
        let ragged = "arch,accuracy,throughput,flops_per_input\n8:8,90,1,2\n8,91,1,2\n";
        assert!(matches!(parse_table(ragged.as_bytes(), &device()), Err(SpaceError::Row { line: 3, .. })));
        assert!(matches!(parse_table("a,b\n".as_bytes(), &device()), Err(SpaceError::Header(_))));
        assert!(matches!(
            parse_table("arch,accuracy,throughput,flops_per_input\n".as_bytes(), &device()),
            Err(SpaceError::Empty)
        ));
    }

    #[test]
    fn save_then_load_is_identity() {
        let cfg = SyntheticConfig { layer_count: 3, channel_choices: vec![8, 24, 40], ..SyntheticConfig::default() };
        let space = synthetic_space(&cfg, 3, &device()).unwrap();
        let mut buf = Vec::new();
        write_table(&space, &mut buf).unwrap();
        let back = parse_table(buf.as_slice(), &device()).unwrap();
        assert_eq!(back, space);
    }
}
