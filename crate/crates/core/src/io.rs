//! File formats: network and device JSON, survey and frontier CSV, search
//! traces, and the 6-significant-digit number format used in reports.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cost_model::NetworkSpec;
use crate::error::{Error, Result};
use crate::nas_search::TraceRow;
use crate::pareto::{frontier, FrontierMembership, MeasuredModelRecord, MetricPoint, ParetoFrontier};
use crate::roofline::DeviceSpec;

/// Environment variable naming a directory of extra `<name>.json` devices.
pub const DEVICE_DIR_ENV: &str = "UTILSCOPE_DEVICE_DIR";

pub const SURVEY_HEADER: [&str; 4] = ["name", "accuracy", "throughput", "tflops_per_sec"];
pub const TRACE_HEADER: [&str; 7] = ["step", "sim_time", "arch", "accuracy", "throughput", "rank", "on_frontier"];

/// `%g` with 6 significant digits.
pub fn fmt_g(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        trim_zeros(format!("{x:.*}", (5 - exp) as usize))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa.to_string()), exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn format_err(path: &Path, message: impl ToString) -> Error {
    Error::Format { path: path.display().to_string(), message: message.to_string() }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(BufReader::new(open(path)?)).map_err(|e| {
        if e.is_io() {
            Error::Io { path: path.display().to_string(), source: e.into() }
        } else {
            format_err(path, e)
        }
    })
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let net: NetworkSpec = read_json(path.as_ref())?;
    net.validate()?;
    Ok(net)
}

pub fn save_network(net: &NetworkSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, net).map_err(|e| format_err(path, e))?;
    writeln!(file).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

pub fn load_device(path: impl AsRef<Path>) -> Result<DeviceSpec> {
    let device: DeviceSpec = read_json(path.as_ref())?;
    device.validate()?;
    Ok(device)
}

/// Resolves `--device`: a preset name, then a file path, then
/// `$UTILSCOPE_DEVICE_DIR/<name>.json`.
pub fn resolve_device(name: &str) -> Result<DeviceSpec> {
    if let Some(d) = DeviceSpec::preset(name) {
        return Ok(d);
    }
    let path = Path::new(name);
    if path.is_file() {
        return load_device(path);
    }
    if let Some(dir) = std::env::var_os(DEVICE_DIR_ENV) {
        let candidate: PathBuf = Path::new(&dir).join(format!("{name}.json"));
        if candidate.is_file() {
            return load_device(candidate);
        }
    }
    Err(format_err(path, format!("unknown device (not a preset, a file, or an entry in ${DEVICE_DIR_ENV})")))
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(format_err(
            path,
            format!(
                "line 1: expected header `{}`, found `{}`",
                expected.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io { path: path.display().to_string(), source },
            _ => unreachable!(),
        }
    } else {
        format_err(path, e)
    }
}

fn parse_field(path: &Path, record: &csv::StringRecord, header: &[&str], i: usize) -> Result<f64> {
    let line = record.position().map_or(0, |p| p.line());
    let value: f64 = record[i]
        .parse()
        .map_err(|e| format_err(path, format!("line {line}, column {}: {:?}: {e}", header[i], &record[i])))?;
    if !value.is_finite() {
        return Err(format_err(path, format!("line {line}, column {}: not finite", header[i])));
    }
    Ok(value)
}

/// Reads a measured-model survey (`name,accuracy,throughput,tflops_per_sec`).
/// `path` only labels errors.
pub fn read_survey(reader: impl Read, path: impl AsRef<Path>) -> Result<Vec<MeasuredModelRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &SURVEY_HEADER)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record[0].is_empty() {
            return Err(format_err(path, format!("line {line}, column name: empty")));
        }
        let row = MeasuredModelRecord {
            name: record[0].to_string(),
            accuracy: parse_field(path, &record, &SURVEY_HEADER, 1)?,
            throughput: parse_field(path, &record, &SURVEY_HEADER, 2)?,
            tflops_per_sec: parse_field(path, &record, &SURVEY_HEADER, 3)?,
        };
        if !(0.0..=100.0).contains(&row.accuracy) {
            return Err(format_err(path, format!("line {line}, column accuracy: {} outside [0, 100]", row.accuracy)));
        }
        if row.throughput <= 0.0 || row.tflops_per_sec < 0.0 {
            return Err(format_err(path, format!("line {line}: throughput must be positive, TFLOPs/sec non-negative")));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_err(path, "no rows"));
    }
    Ok(rows)
}

pub fn load_survey(path: impl AsRef<Path>) -> Result<Vec<MeasuredModelRecord>> {
    let path = path.as_ref();
    read_survey(open(path)?, path)
}

fn mark(on: bool) -> &'static str {
    if on {
        "X"
    } else {
        "-"
    }
}

/// Survey rows with utilization and `X`/`-` marks for the three frontiers.
pub fn write_membership(
    records: &[MeasuredModelRecord],
    membership: &[FrontierMembership],
    writer: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let label = Path::new("<membership>");
    w.write_record([
        "name",
        "accuracy",
        "throughput",
        "tflops_per_sec",
        "utilization",
        "tput_acc",
        "util_acc",
        "tput_util",
    ])
    .map_err(|e| csv_err(label, e))?;
    for (r, m) in records.iter().zip(membership) {
        w.write_record([
            r.name.clone(),
            fmt_g(r.accuracy),
            fmt_g(r.throughput),
            fmt_g(r.tflops_per_sec),
            fmt_g(r.utilization()),
            mark(m.on_tput_acc).into(),
            mark(m.on_util_acc).into(),
            mark(m.on_tput_util).into(),
        ])
        .map_err(|e| csv_err(label, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: label.display().to_string(), source })
}

pub fn write_trace(rows: &[TraceRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let label = Path::new("<trace>");
    w.write_record(TRACE_HEADER).map_err(|e| csv_err(label, e))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            fmt_g(r.sim_time),
            r.arch.to_string(),
            fmt_g(r.accuracy),
            fmt_g(r.throughput),
            fmt_g(r.rank),
            r.on_frontier.to_string(),
        ])
        .map_err(|e| csv_err(label, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: label.display().to_string(), source })
}

/// Frontier CSV with header `id,<metric_x>,<metric_y>`.
pub fn write_frontier(f: &ParetoFrontier, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let label = Path::new("<frontier>");
    w.write_record(["id", f.metric_x.as_str(), f.metric_y.as_str()]).map_err(|e| csv_err(label, e))?;
    for p in &f.points {
        w.write_record([p.id.clone(), fmt_g(p.x), fmt_g(p.y)]).map_err(|e| csv_err(label, e))?;
    }
    w.flush().map_err(|source| Error::Io { path: label.display().to_string(), source })
}

/// Reads a frontier CSV. Dominated rows are dropped so the result is a
/// frontier even if the file was edited by hand.
pub fn read_frontier(reader: impl Read, path: impl AsRef<Path>) -> Result<ParetoFrontier> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.len() != 3 || &header[0] != "id" {
        return Err(format_err(path, "line 1: expected header `id,<metric_x>,<metric_y>`"));
    }
    let names = [&header[0], &header[1], &header[2]];
    let mut points = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        points.push(MetricPoint::new(
            record[0].to_string(),
            parse_field(path, &record, &names, 1)?,
            parse_field(path, &record, &names, 2)?,
        ));
    }
    Ok(frontier(&points).map_err(|e| format_err(path, e))?.named(&header[1], &header[2]))
}

pub fn load_frontier(path: impl AsRef<Path>) -> Result<ParetoFrontier> {
    let path = path.as_ref();
    read_frontier(open(path)?, path)
}

/// Provenance written next to every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command_line: Vec<String>,
    /// Hex digest of the effective configuration.
    pub config_digest: String,
    pub seed: Option<u64>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

/// Current time in seconds since the Unix epoch.
pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Sidecar path `<artifact>.manifest.json`.
pub fn manifest_path(artifact: impl AsRef<Path>) -> PathBuf {
    let mut s = artifact.as_ref().as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn save_manifest(manifest: &RunManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = create(path)?;
    serde_json::to_writer_pretty(&mut file, manifest).map_err(|e| format_err(path, e))?;
    writeln!(file).map_err(|source| Error::Io { path: path.display().to_string(), source })
}
