//! Running extraction over a batch and the line-delimited output format.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ingest::{CycleRecord, IngestReport, Rejection};
use super::{PipelineError, PipelineResult};
use crate::error::IfError;
use crate::model::{CycleGeometry, FreqPair, SampledCycle};
use crate::search::{
    brute_force_if, compare_algorithms, fast_if, Algorithm, GridConfig, Lobe, SearchConfig, SearchOutcome,
};

/// Mean absolute IF difference tolerated by `compare`, in rad/s.
pub const DEFAULT_THRESHOLD: f64 = 0.0475;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Fast,
    Brute,
    Compare,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchConfig {
    pub search: SearchConfig,
    pub grid: GridConfig,
    pub threshold: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            grid: GridConfig::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Extraction result for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub algorithm: Algorithm,
    pub omega1: f64,
    pub omega2: f64,
    pub bpm1: f64,
    pub bpm2: f64,
    pub u1: f64,
    pub u2: f64,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub pbar: f64,
    pub objective: f64,
    pub normalized_objective: f64,
    pub converged: bool,
    pub flat: bool,
    pub evals: usize,
    pub wall_ms: f64,
    pub lobe: Lobe,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ResultRecord {
    pub fn from_outcome(id: &str, outcome: &SearchOutcome) -> Self {
        let p = &outcome.params;
        Self {
            id: id.to_string(),
            algorithm: outcome.algorithm,
            omega1: outcome.freqs.omega1,
            omega2: outcome.freqs.omega2,
            bpm1: FreqPair::to_bpm(outcome.freqs.omega1),
            bpm2: FreqPair::to_bpm(outcome.freqs.omega2),
            u1: outcome.u1,
            u2: outcome.u2,
            a1: p.a1,
            b1: p.b1,
            a2: p.a2,
            b2: p.b2,
            pbar: p.pbar,
            objective: outcome.objective,
            normalized_objective: outcome.normalized_objective,
            converged: outcome.converged,
            flat: outcome.flat,
            evals: outcome.evals,
            wall_ms: outcome.wall.as_secs_f64() * 1e3,
            lobe: outcome.lobe,
            warnings: outcome.warnings.clone(),
        }
    }
}

/// A record whose extraction failed. Unconverged searches carry their best
/// point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub id: String,
    pub algorithm: Algorithm,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_effort: Option<BestEffort>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestEffort {
    pub u1: f64,
    pub u2: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub objective: f64,
}

impl FailureRecord {
    fn new(id: &str, algorithm: Algorithm, error: &IfError, geometry: &CycleGeometry) -> Self {
        let best_effort = match *error {
            IfError::NotConverged { u1, u2, objective } => {
                let f = FreqPair::from_dimensionless(u1, u2, geometry);
                Some(BestEffort {
                    u1,
                    u2,
                    omega1: f.omega1,
                    omega2: f.omega2,
                    objective,
                })
            }
            _ => None,
        };
        Self {
            id: id.to_string(),
            algorithm,
            error: error.to_string(),
            best_effort,
        }
    }
}

/// Per-cycle disagreement between the two algorithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub id: String,
    pub abs_diff_omega1: f64,
    pub abs_diff_omega2: f64,
    pub abs_diff_u1: f64,
    pub abs_diff_u2: f64,
    pub time_ratio: f64,
    /// Fast objective at or below the grid optimum.
    pub fast_not_worse: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub compared: usize,
    pub failed: usize,
    pub mean_abs_diff_omega1: f64,
    pub mean_abs_diff_omega2: f64,
    pub max_mean_abs_diff: f64,
    pub mean_abs_diff_u1: f64,
    pub mean_abs_diff_u2: f64,
    pub median_time_ratio: f64,
    pub fast_not_worse: usize,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub mode: Mode,
    pub accepted: usize,
    pub succeeded: usize,
    pub failed: usize,
    pub rejected: Vec<Rejection>,
    pub input_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<ComparisonSummary>,
}

/// One line of batch output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutputLine {
    Result(ResultRecord),
    Failure(FailureRecord),
    Comparison(ComparisonRecord),
    Summary(BatchSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub lines: Vec<OutputLine>,
}

impl BatchOutput {
    pub fn summary(&self) -> &BatchSummary {
        match self.lines.last() {
            Some(OutputLine::Summary(s)) => s,
            _ => unreachable!("batch output always ends with its summary"),
        }
    }

    pub fn results(&self) -> impl Iterator<Item = &ResultRecord> {
        self.lines.iter().filter_map(|l| match l {
            OutputLine::Result(r) => Some(r),
            _ => None,
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &FailureRecord> {
        self.lines.iter().filter_map(|l| match l {
            OutputLine::Failure(f) => Some(f),
            _ => None,
        })
    }
}

fn extract(record: &CycleRecord, algorithm: Algorithm, config: &BatchConfig) -> OutputLine {
    let outcome = match algorithm {
        Algorithm::Fast => fast_if(&record.cycle, &config.search),
        Algorithm::Brute => brute_force_if(&record.cycle, &config.grid).map(|(o, _)| o),
    };
    match outcome {
        Ok(o) => OutputLine::Result(ResultRecord::from_outcome(&record.id, &o)),
        Err(e) => OutputLine::Failure(FailureRecord::new(&record.id, algorithm, &e, &record.cycle.geometry())),
    }
}

/// Runs one mode over every accepted record.
///
/// `fast` and `brute` fan records out over the rayon pool and keep input
/// order. `compare` runs the records one at a time so the timing ratio is not
/// distorted by contention, emitting both results and a comparison line per
/// record. The output always ends with a summary line.
pub fn run_batch(input: &IngestReport, mode: Mode, config: &BatchConfig) -> PipelineResult<BatchOutput> {
    config.search.validate()?;
    if mode == Mode::Compare && !(config.threshold.is_finite() && config.threshold > 0.0) {
        return Err(PipelineError::Config(format!(
            "threshold must be positive, got {}",
            config.threshold
        )));
    }
    let records = &input.records;
    let mut lines: Vec<OutputLine> = Vec::with_capacity(records.len() * 3 + 1);
    let mut comparison = None;
    match mode {
        Mode::Fast | Mode::Brute => {
            let algorithm = if mode == Mode::Fast {
                Algorithm::Fast
            } else {
                Algorithm::Brute
            };
            lines = records.par_iter().map(|r| extract(r, algorithm, config)).collect();
        }
        Mode::Compare if !records.is_empty() => {
            let cycles: Vec<SampledCycle> = records.iter().map(|r| r.cycle.clone()).collect();
            let report = compare_algorithms(&cycles, &config.grid, &config.search, config.threshold)?;
            for (row, record) in report.cycles.iter().zip(records) {
                let id = &record.id;
                let g = record.cycle.geometry();
                let mut push = |algorithm, outcome: &Option<SearchOutcome>| match outcome {
                    Some(o) => lines.push(OutputLine::Result(ResultRecord::from_outcome(id, o))),
                    None => {
                        let error = row.error.clone().unwrap_or_default();
                        let e = rerun_error(&record.cycle, algorithm, config).unwrap_or(IfError::InvalidConfig(error));
                        lines.push(OutputLine::Failure(FailureRecord::new(id, algorithm, &e, &g)));
                    }
                };
                push(Algorithm::Fast, &row.fast);
                push(Algorithm::Brute, &row.brute);
                if let (Some(f), Some(b), Some(dw), Some(du), Some(ratio)) =
                    (&row.fast, &row.brute, row.abs_diff_omega, row.abs_diff_u, row.time_ratio)
                {
                    lines.push(OutputLine::Comparison(ComparisonRecord {
                        id: id.clone(),
                        abs_diff_omega1: dw.0,
                        abs_diff_omega2: dw.1,
                        abs_diff_u1: du.0,
                        abs_diff_u2: du.1,
                        time_ratio: ratio,
                        fast_not_worse: f.objective <= b.objective,
                    }));
                }
            }
            comparison = Some(ComparisonSummary {
                compared: report.compared,
                failed: report.failed,
                mean_abs_diff_omega1: report.mean_abs_diff_omega1,
                mean_abs_diff_omega2: report.mean_abs_diff_omega2,
                max_mean_abs_diff: report.max_mean_abs_diff,
                mean_abs_diff_u1: report.mean_abs_diff_u1,
                mean_abs_diff_u2: report.mean_abs_diff_u2,
                median_time_ratio: report.median_time_ratio,
                fast_not_worse: report.fast_not_worse,
                threshold: report.threshold,
                pass: report.pass,
            });
        }
        Mode::Compare => {}
    }
    let failed = lines.iter().filter(|l| matches!(l, OutputLine::Failure(_))).count();
    let failed_records = if mode == Mode::Compare {
        comparison.as_ref().map_or(0, |c| c.failed)
    } else {
        failed
    };
    lines.push(OutputLine::Summary(BatchSummary {
        mode,
        accepted: records.len(),
        succeeded: records.len() - failed_records,
        failed: failed_records,
        rejected: input.rejected.clone(),
        input_sha256: input.sha256.clone(),
        comparison,
    }));
    Ok(BatchOutput { lines })
}

// The comparison report keeps only error text; recover the typed error so
// the failure line can carry a best-effort point.
fn rerun_error(cycle: &SampledCycle, algorithm: Algorithm, config: &BatchConfig) -> Option<IfError> {
    match algorithm {
        Algorithm::Fast => fast_if(cycle, &config.search).err(),
        Algorithm::Brute => brute_force_if(cycle, &config.grid).err(),
    }
}

pub fn write_jsonl<W: Write>(mut out: W, lines: &[OutputLine]) -> std::io::Result<()> {
    for line in lines {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> std::io::Result<Vec<OutputLine>> {
    let mut lines = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        lines.push(serde_json::from_str(&line)?);
    }
    Ok(lines)
}
