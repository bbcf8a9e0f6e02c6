//! Reading cycles from disk.
//!
//! Two layouts are accepted:
//!
//! * a two-column CSV (`time_s,pressure`) holding one cycle, with `t0` and
//!   `period` given either in a `# t0=0.36 period=1.0` comment line or in a
//!   sidecar `<stem>.meta.json`;
//! * a JSON batch `{"records": [{"id", "dt", "t0", "period", "samples"}, ..]}`
//!   (`sampling_rate` may replace `dt`).
//!
//! A directory is read as every CSV and JSON batch inside it, in name order.
//! Problems with a single record reject that record only.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, PipelineResult};
use crate::model::SampledCycle;

/// Largest tolerated deviation of a timestamp from the uniform grid, as a
/// fraction of the sampling interval.
pub const JITTER_TOL: f64 = 1e-6;

pub const META_SUFFIX: &str = ".meta.json";
pub const TRUTH_SUFFIX: &str = ".truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "json" => Some(Self::Json),
            _ => None,
        }
    }
}

/// Cycle timing and labels that travel next to a CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CycleMeta {
    pub t0: Option<f64>,
    pub period: Option<f64>,
    pub id: Option<String>,
    pub subject: Option<String>,
    pub interval: Option<String>,
}

/// One record of a JSON batch, as written by the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_rate: Option<f64>,
    pub t0: f64,
    pub period: f64,
    pub samples: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchFile {
    pub records: Vec<BatchRecord>,
}

/// A validated cycle ready for extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub id: String,
    pub cycle: SampledCycle,
    pub sampling_rate: f64,
    /// The `t0` that was asked for, before snapping to a sample.
    pub requested_t0: f64,
    /// Snapped minus requested `t0`, in seconds.
    pub t0_rounding: f64,
    pub subject: Option<String>,
    pub interval: Option<String>,
}

impl CycleRecord {
    /// Batch form with the snapped timing, so re-ingesting reproduces the
    /// same cycle exactly.
    pub fn to_batch_record(&self) -> BatchRecord {
        let g = self.cycle.geometry();
        BatchRecord {
            id: self.id.clone(),
            dt: Some(g.dt),
            sampling_rate: None,
            t0: g.t0(),
            period: g.period(),
            samples: self.cycle.samples().to_vec(),
            subject: self.subject.clone(),
            interval: self.interval.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub records: Vec<CycleRecord>,
    pub rejected: Vec<Rejection>,
    /// SHA-256 over every byte read, in read order.
    pub sha256: String,
}

/// Builds a record from uniformly sampled pressures, snapping `t0` to the
/// nearest sample.
pub fn build_record(
    id: &str,
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
    period: f64,
    meta: &CycleMeta,
) -> Result<CycleRecord, String> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(format!("sampling interval must be positive, got {dt}"));
    }
    if !(t0.is_finite() && period.is_finite() && 0.0 < t0 && t0 < period) {
        return Err(format!("need 0 < t0 < period, got t0={t0}, period={period}"));
    }
    let k = (t0 / dt).round();
    let n = k as usize + 1;
    if samples.len() < n {
        return Err(format!(
            "{} samples cannot hold a systole of {n} samples",
            samples.len()
        ));
    }
    let m = samples.len() - n;
    let span = (n - 1 + m) as f64 * dt;
    if (span - period).abs() > dt * (1.0 + 1e-9) {
        return Err(format!(
            "samples span {span} s but period is {period} s (dt = {dt})"
        ));
    }
    if n < SampledCycle::MIN_SEGMENT || m < SampledCycle::MIN_SEGMENT {
        return Err(format!(
            "segments need at least {} samples each, got n={n}, m={m}",
            SampledCycle::MIN_SEGMENT
        ));
    }
    let cycle = SampledCycle::new(samples, dt, n).map_err(|e| e.to_string())?;
    Ok(CycleRecord {
        id: id.to_string(),
        cycle,
        sampling_rate: 1.0 / dt,
        requested_t0: t0,
        t0_rounding: k * dt - t0,
        subject: meta.subject.clone(),
        interval: meta.interval.clone(),
    })
}

fn merge_meta(header: CycleMeta, sidecar: Option<CycleMeta>) -> Result<CycleMeta, String> {
    let Some(side) = sidecar else { return Ok(header) };
    fn pick<T: PartialEq + std::fmt::Debug>(name: &str, a: Option<T>, b: Option<T>) -> Result<Option<T>, String> {
        match (a, b) {
            (Some(x), Some(y)) if x != y => Err(format!("{name} differs between header ({x:?}) and sidecar ({y:?})")),
            (a, b) => Ok(a.or(b)),
        }
    }
    Ok(CycleMeta {
        t0: pick("t0", header.t0, side.t0)?,
        period: pick("period", header.period, side.period)?,
        id: pick("id", header.id, side.id)?,
        subject: pick("subject", header.subject, side.subject)?,
        interval: pick("interval", header.interval, side.interval)?,
    })
}

fn parse_header(line: &str, meta: &mut CycleMeta) -> Result<(), String> {
    for token in line.split(|c: char| c.is_whitespace() || c == ',') {
        let Some((key, value)) = token.split_once('=') else { continue };
        let number = || {
            value
                .parse::<f64>()
                .map_err(|_| format!("header value {key}={value} is not a number"))
        };
        match key {
            "t0" => meta.t0 = Some(number()?),
            "period" | "T" => meta.period = Some(number()?),
            "id" => meta.id = Some(value.to_string()),
            "subject" => meta.subject = Some(value.to_string()),
            "interval" => meta.interval = Some(value.to_string()),
            _ => {}
        }
    }
    Ok(())
}

/// Parses one CSV cycle. `default_id` is used when no `id=` header is given.
pub fn parse_csv(default_id: &str, text: &str, sidecar: Option<CycleMeta>) -> Result<CycleRecord, String> {
    let mut header = CycleMeta::default();
    let mut times = Vec::new();
    let mut pressures = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            parse_header(comment, &mut header)?;
            continue;
        }
        let fields: Vec<&str> = if line.contains(',') {
            line.split(',').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 2 {
            return Err(format!("line {}: expected 2 columns, got {}", lineno + 1, fields.len()));
        }
        let t = fields[0].parse::<f64>();
        let p = fields[1].parse::<f64>();
        match (t, p) {
            (Ok(t), Ok(p)) if t.is_finite() && p.is_finite() => {
                times.push(t);
                pressures.push(p);
            }
            // A column-name row before any data.
            (Err(_), Err(_)) if times.is_empty() => {}
            (Ok(_), _) => {
                return Err(format!("line {}: non-numeric pressure '{}'", lineno + 1, fields[1]))
            }
            _ => return Err(format!("line {}: non-numeric time '{}'", lineno + 1, fields[0])),
        }
    }
    let meta = merge_meta(header, sidecar)?;
    let id = meta.id.clone().unwrap_or_else(|| default_id.to_string());
    let (Some(t0), Some(period)) = (meta.t0, meta.period) else {
        return Err("t0 and period are required (header line or sidecar)".into());
    };
    if times.len() < 2 {
        return Err(format!("only {} data rows", times.len()));
    }
    let rows = times.len();
    let dt = (times[rows - 1] - times[0]) / (rows - 1) as f64;
    if !(dt > 0.0) {
        return Err("timestamps are not increasing".into());
    }
    let jitter = times
        .iter()
        .enumerate()
        .map(|(i, &t)| (t - times[0] - i as f64 * dt).abs())
        .fold(0.0_f64, f64::max)
        / dt;
    if jitter > JITTER_TOL {
        return Err(format!("non-uniform timestamps (relative jitter {jitter:.3e})"));
    }
    build_record(&id, pressures, dt, t0, period, &meta).map_err(|e| format!("{id}: {e}"))
}

/// Parses a JSON batch. Records that fail to decode or validate are
/// rejected individually; a file that is not a batch at all is an error.
pub fn parse_batch(text: &str) -> Result<(Vec<CycleRecord>, Vec<Rejection>), String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        serde_json::Value::Object(mut map) => match map.remove("records") {
            Some(serde_json::Value::Array(items)) => items,
            _ => return Err("expected a \"records\" array".into()),
        },
        _ => return Err("expected a JSON object or array".into()),
    };
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    for (index, item) in items.into_iter().enumerate() {
        let fallback_id = item
            .get("id")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .unwrap_or_else(|| format!("#{index}"));
        let parsed = serde_json::from_value::<BatchRecord>(item)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                let dt = match (r.dt, r.sampling_rate) {
                    (Some(dt), _) => dt,
                    (None, Some(fs)) => 1.0 / fs,
                    (None, None) => return Err("dt or sampling_rate is required".into()),
                };
                let meta = CycleMeta {
                    subject: r.subject.clone(),
                    interval: r.interval.clone(),
                    ..CycleMeta::default()
                };
                build_record(&r.id, r.samples, dt, r.t0, r.period, &meta)
            });
        match parsed {
            Ok(record) => records.push(record),
            Err(reason) => rejected.push(Rejection { id: fallback_id, reason }),
        }
    }
    Ok((records, rejected))
}

struct Reader {
    hasher: Sha256,
}

impl Reader {
    fn read(&mut self, path: &Path) -> PipelineResult<String> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        self.hasher.update(&bytes);
        String::from_utf8(bytes).map_err(|_| PipelineError::parse(path, "file is not UTF-8"))
    }

    fn read_file(
        &mut self,
        path: &Path,
        format: InputFormat,
    ) -> PipelineResult<(Vec<CycleRecord>, Vec<Rejection>)> {
        let text = self.read(path)?;
        match format {
            InputFormat::Json => parse_batch(&text).map_err(|e| PipelineError::parse(path, e)),
            InputFormat::Csv => {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("cycle");
                let sidecar_path = path.with_file_name(format!("{stem}{META_SUFFIX}"));
                let sidecar = if sidecar_path.is_file() {
                    let text = self.read(&sidecar_path)?;
                    Some(
                        serde_json::from_str::<CycleMeta>(&text)
                            .map_err(|e| PipelineError::parse(&sidecar_path, e.to_string()))?,
                    )
                } else {
                    None
                };
                Ok(match parse_csv(stem, &text, sidecar) {
                    Ok(record) => (vec![record], vec![]),
                    Err(reason) => (vec![], vec![Rejection { id: stem.to_string(), reason }]),
                })
            }
        }
    }
}

fn is_sidecar(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.ends_with(META_SUFFIX) || n.ends_with(TRUTH_SUFFIX))
}

/// Reads a file or a directory of files. `format` forces the parser for a
/// single file and filters the files of a directory; otherwise it is taken
/// from the extension.
pub fn ingest(path: &Path, format: Option<InputFormat>) -> PipelineResult<IngestReport> {
    let mut reader = Reader { hasher: Sha256::new() };
    let mut records = Vec::new();
    let mut rejected = Vec::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| PipelineError::io(path, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && !is_sidecar(p))
            .collect();
        files.sort();
        for file in files {
            let Some(detected) = InputFormat::from_path(&file) else { continue };
            if format.is_some_and(|f| f != detected) {
                continue;
            }
            match reader.read_file(&file, detected) {
                Ok((r, j)) => {
                    records.extend(r);
                    rejected.extend(j);
                }
                // Inside a directory an unreadable batch is one more rejection.
                Err(PipelineError::Parse { path, message }) => rejected.push(Rejection {
                    id: path.display().to_string(),
                    reason: message,
                }),
                Err(e) => return Err(e),
            }
        }
    } else {
        let format = format.or_else(|| InputFormat::from_path(path)).ok_or_else(|| {
            PipelineError::Config(format!(
                "cannot tell the format of {}; pass --format",
                path.display()
            ))
        })?;
        let (r, j) = reader.read_file(path, format)?;
        records = r;
        rejected = j;
    }

    let mut seen = HashSet::new();
    let mut unique = Vec::with_capacity(records.len());
    for record in records {
        if seen.insert(record.id.clone()) {
            unique.push(record);
        } else {
            rejected.push(Rejection {
                id: record.id,
                reason: "duplicate id".into(),
            });
        }
    }
    let digest = reader.hasher.finalize();
    let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(IngestReport {
        records: unique,
        rejected,
        sha256,
    })
}

/// Writes a batch in the layout [`parse_batch`] reads.
pub fn write_batch(path: &Path, records: &[BatchRecord]) -> PipelineResult<()> {
    let file = BatchFile {
        records: records.to_vec(),
    };
    let text = serde_json::to_string(&file).map_err(|e| PipelineError::parse(path, e.to_string()))?;
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}
