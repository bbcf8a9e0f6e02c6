//! Plain-text export of objective grids for external heat-map tools.
//!
//! ```text
//! # objective grid
//! # id c0
//! # geometry dt=0.002 t0=0.36 period=1
//! # minimizer i=12 j=40 u1=.. u2=.. omega1=.. omega2=.. P=..
//! # node gamma1 k1=1 k2=1 u1=1 u2=1
//! # omega1 <rad/s per row>
//! # omega2 <rad/s per column>
//! u1\u2 <u2 per column>
//! <u1> <P> <P> ...
//! ```
//!
//! Values that could not be computed are written as `inf`. Numbers use the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::CycleRecord;
use super::{PipelineError, PipelineResult};
use crate::objective::NodeBranch;
use crate::search::{brute_force_if, GridConfig, ObjectiveGrid, SearchOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridNode {
    pub branch: NodeBranch,
    pub k1: i64,
    pub k2: i64,
    pub u1: f64,
    pub u2: f64,
}

/// A grid file read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFile {
    pub id: String,
    pub dt: f64,
    pub t0: f64,
    pub period: f64,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    /// Row-major, rows along `u1`.
    pub values: Vec<f64>,
    pub argmin: (usize, usize),
    pub min_objective: f64,
    pub nodes: Vec<GridNode>,
}

impl GridFile {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.u2.len() + j]
    }
}

fn branch_name(b: NodeBranch) -> &'static str {
    match b {
        NodeBranch::Gamma1 => "gamma1",
        NodeBranch::Gamma2 => "gamma2",
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Renders a grid in the text layout described in the module docs.
pub fn render_grid(record: &CycleRecord, outcome: &SearchOutcome, grid: &ObjectiveGrid) -> String {
    let g = record.cycle.geometry();
    let mut s = String::new();
    let (i, j) = grid.argmin;
    let _ = writeln!(s, "# objective grid");
    let _ = writeln!(s, "# id {}", record.id);
    let _ = writeln!(s, "# geometry dt={} t0={} period={}", g.dt, g.t0(), g.period());
    let _ = writeln!(
        s,
        "# minimizer i={i} j={j} u1={} u2={} omega1={} omega2={} P={}",
        grid.u1[i], grid.u2[j], grid.omega1[i], grid.omega2[j], outcome.objective
    );
    for node in &grid.nodes {
        let (u1, u2) = node.dimensionless();
        let _ = writeln!(
            s,
            "# node {} k1={} k2={} u1={u1} u2={u2}",
            branch_name(node.branch),
            node.k1,
            node.k2
        );
    }
    let _ = writeln!(s, "# omega1 {}", join(&grid.omega1));
    let _ = writeln!(s, "# omega2 {}", join(&grid.omega2));
    let _ = writeln!(s, "u1\\u2 {}", join(&grid.u2));
    for (row, u1) in grid.u1.iter().enumerate() {
        let start = row * grid.u2.len();
        let _ = writeln!(s, "{u1} {}", join(&grid.values[start..start + grid.u2.len()]));
    }
    s
}

/// Evaluates the grid for one record and writes it to `path`.
pub fn export_grid(
    record: &CycleRecord,
    config: &GridConfig,
    path: &Path,
) -> PipelineResult<(SearchOutcome, ObjectiveGrid)> {
    let (outcome, grid) = brute_force_if(&record.cycle, config)?;
    let text = render_grid(record, &outcome, &grid);
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))?;
    Ok((outcome, grid))
}

fn fields(rest: &str) -> impl Iterator<Item = (&str, &str)> {
    rest.split_whitespace().filter_map(|t| t.split_once('='))
}

fn numbers(rest: &str) -> Result<Vec<f64>, String> {
    rest.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| format!("bad number '{t}'")))
        .collect()
}

fn parse_grid(text: &str) -> Result<GridFile, String> {
    let mut out = GridFile {
        id: String::new(),
        dt: f64::NAN,
        t0: f64::NAN,
        period: f64::NAN,
        u1: Vec::new(),
        u2: Vec::new(),
        omega1: Vec::new(),
        omega2: Vec::new(),
        values: Vec::new(),
        argmin: (0, 0),
        min_objective: f64::NAN,
        nodes: Vec::new(),
    };
    let num = |k: &str, v: &str| v.parse::<f64>().map_err(|_| format!("bad {k}={v}"));
    let idx = |k: &str, v: &str| v.parse::<usize>().map_err(|_| format!("bad {k}={v}"));
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            let (key, rest) = comment.split_once(' ').unwrap_or((comment, ""));
            match key {
                "id" => out.id = rest.trim().to_string(),
                "geometry" => {
                    for (k, v) in fields(rest) {
                        match k {
                            "dt" => out.dt = num(k, v)?,
                            "t0" => out.t0 = num(k, v)?,
                            "period" => out.period = num(k, v)?,
                            _ => {}
                        }
                    }
                }
                "minimizer" => {
                    for (k, v) in fields(rest) {
                        match k {
                            "i" => out.argmin.0 = idx(k, v)?,
                            "j" => out.argmin.1 = idx(k, v)?,
                            "P" => out.min_objective = num(k, v)?,
                            _ => {}
                        }
                    }
                }
                "node" => {
                    let (branch, rest) = rest.split_once(' ').ok_or("truncated node line")?;
                    let branch = match branch {
                        "gamma1" => NodeBranch::Gamma1,
                        "gamma2" => NodeBranch::Gamma2,
                        other => return Err(format!("unknown node branch '{other}'")),
                    };
                    let mut node = GridNode {
                        branch,
                        k1: 0,
                        k2: 0,
                        u1: f64::NAN,
                        u2: f64::NAN,
                    };
                    for (k, v) in fields(rest) {
                        let int = || v.parse::<i64>().map_err(|_| format!("bad {k}={v}"));
                        match k {
                            "k1" => node.k1 = int()?,
                            "k2" => node.k2 = int()?,
                            "u1" => node.u1 = num(k, v)?,
                            "u2" => node.u2 = num(k, v)?,
                            _ => {}
                        }
                    }
                    out.nodes.push(node);
                }
                "omega1" => out.omega1 = numbers(rest)?,
                "omega2" => out.omega2 = numbers(rest)?,
                _ => {}
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("u1\\u2") {
            out.u2 = numbers(rest)?;
            continue;
        }
        let row = numbers(line)?;
        if row.len() != out.u2.len() + 1 {
            return Err(format!(
                "row has {} values, expected {}",
                row.len() - 1,
                out.u2.len()
            ));
        }
        out.u1.push(row[0]);
        out.values.extend_from_slice(&row[1..]);
    }
    if out.u1.is_empty() || out.u2.is_empty() {
        return Err("no grid rows".into());
    }
    if out.argmin.0 >= out.u1.len() || out.argmin.1 >= out.u2.len() {
        return Err("minimizer index outside the grid".into());
    }
    Ok(out)
}

/// Reads a grid written by [`export_grid`].
pub fn read_grid(path: &Path) -> PipelineResult<GridFile> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    parse_grid(&text).map_err(|e| PipelineError::parse(path, e))
}
