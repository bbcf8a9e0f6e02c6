//! Outer minimisation of `P` over the frequency pair.
//!
//! All searches work in the dimensionless coordinates
//! `u1 = w1 T0 / pi`, `u2 = w2 (T - T0) / pi`, so step sizes and tolerances
//! do not depend on the cycle length. Conversion to rad/s happens when an
//! outcome is assembled.
//!
//! * [`brute_force_if`] evaluates `P` on a uniform grid and takes the argmin.
//! * [`compass_search`] is the coordinate pattern search: try `+e1, -e1, +e2,
//!   -e2` in that order, take the first strict improvement, halve the step
//!   after a sweep without one, stop once the step drops below tolerance.
//! * [`fast_if`] runs the compass search from several starts (by default one
//!   in each lobe of the objective) and keeps the best.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IfError, Result};
use crate::model::{CycleGeometry, Domain, FreqPair, ModelParams, SampledCycle};
use crate::objective::{enumerate_nodes, normalized_objective, objective_p, solve_inner, LatticeNode};

/// Default brute-force mesh, `0.02 pi` rad/s.
pub const DEFAULT_MESH: f64 = 0.02 * PI;

/// Half-width of the excluded disc around each lattice node.
pub const NODE_EXCLUSION_RADIUS: f64 = 0.02;

/// The two starting points used by default, one per lobe.
pub const DEFAULT_GUESSES: [(f64, f64); 2] = [(1.0, 2.0), (1.0, 0.9)];

/// Which side of `u2 = 1` a minimiser lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lobe {
    Upper,
    Lower,
}

impl Lobe {
    pub fn of(u2: f64) -> Self {
        if u2 > 1.0 {
            Lobe::Upper
        } else {
            Lobe::Lower
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Fast,
    Brute,
}

/// Step-size schedule of a single compass search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompassConfig {
    pub delta0: f64,
    pub delta_tol: f64,
    pub max_evals: usize,
}

impl CompassConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tol > 0.0 && self.delta0 > self.delta_tol && self.delta0.is_finite()) {
            return Err(IfError::InvalidConfig(format!(
                "need step0 > tol > 0 (step0 = {}, tol = {})",
                self.delta0, self.delta_tol
            )));
        }
        if self.max_evals == 0 {
            return Err(IfError::InvalidConfig("max_evals must be at least 1".into()));
        }
        Ok(())
    }
}

/// One accepted iterate. `step` is the step length in force when the point
/// was reached (the initial step for the start point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub u1: f64,
    pub u2: f64,
    pub objective: f64,
    pub step: f64,
}

/// Result of one compass search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompassResult {
    pub u1: f64,
    pub u2: f64,
    pub objective: f64,
    /// Start point followed by every accepted move.
    pub trace: Vec<TracePoint>,
    /// Step length after the final halving.
    pub final_step: f64,
    pub evals: usize,
    pub converged: bool,
}

const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// Compass search on `objective(u1, u2)`.
///
/// Points rejected by `admissible` count as non-improving and cost no
/// evaluation. Iterates live on the dyadic lattice `start + delta0 * k / 2^l`,
/// tracked in integers, so repeated moves do not accumulate rounding drift.
/// Stops unconverged once `max_evals` evaluations have been spent.
pub fn compass_search<F, A>(
    mut objective: F,
    start: (f64, f64),
    config: &CompassConfig,
    admissible: A,
) -> Result<CompassResult>
where
    F: FnMut(f64, f64) -> f64,
    A: Fn(f64, f64) -> bool,
{
    config.validate()?;
    if !admissible(start.0, start.1) {
        return Err(IfError::InvalidConfig(format!(
            "start ({}, {}) is not admissible",
            start.0, start.1
        )));
    }
    let mut level: i32 = 0;
    let (mut i1, mut i2) = (0_i64, 0_i64);
    let step_at = |level: i32| config.delta0 * 0.5_f64.powi(level);
    let point = |i1: i64, i2: i64, level: i32| {
        let scale = config.delta0 * 0.5_f64.powi(level);
        (start.0 + scale * i1 as f64, start.1 + scale * i2 as f64)
    };

    let mut fx = objective(start.0, start.1);
    let mut evals = 1;
    let mut trace = vec![TracePoint {
        u1: start.0,
        u2: start.1,
        objective: fx,
        step: config.delta0,
    }];

    let converged = 'outer: loop {
        let mut moved = false;
        for (d1, d2) in DIRECTIONS {
            let (c1, c2) = point(i1 + d1, i2 + d2, level);
            if !admissible(c1, c2) {
                continue;
            }
            if evals >= config.max_evals {
                break 'outer false;
            }
            let fc = objective(c1, c2);
            evals += 1;
            if fc < fx {
                i1 += d1;
                i2 += d2;
                fx = fc;
                trace.push(TracePoint {
                    u1: c1,
                    u2: c2,
                    objective: fc,
                    step: step_at(level),
                });
                moved = true;
                break;
            }
        }
        if !moved {
            level += 1;
            i1 *= 2;
            i2 *= 2;
            if step_at(level) < config.delta_tol {
                break true;
            }
        }
    };

    let (u1, u2) = point(i1, i2, level);
    Ok(CompassResult {
        u1,
        u2,
        objective: fx,
        trace,
        final_step: step_at(level),
        evals,
        converged,
    })
}

/// True when `(u1, u2)` lies strictly outside every node disc.
fn outside_nodes(nodes: &[LatticeNode], radius: f64, u1: f64, u2: f64) -> bool {
    nodes.iter().all(|n| {
        let (a, b) = n.dimensionless();
        (a - u1).hypot(b - u2) > radius
    })
}

/// Lattice nodes that can influence admissibility within `domain`.
fn nodes_near(geometry: &CycleGeometry, domain: &Domain, radius: f64) -> Vec<LatticeNode> {
    let grown = Domain {
        u1_min: (domain.u1_min - radius).max(f64::MIN_POSITIVE),
        u1_max: domain.u1_max + radius,
        u2_min: (domain.u2_min - radius).max(f64::MIN_POSITIVE),
        u2_max: domain.u2_max + radius,
    };
    enumerate_nodes(geometry.t0(), geometry.period(), &grown)
}

/// Multi-start compass search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub domain: Domain,
    /// Initial dimensionless step.
    pub delta0: f64,
    /// Dimensionless step tolerance.
    pub delta_tol: f64,
    /// Deterministic starting points.
    pub guesses: Vec<(f64, f64)>,
    /// Extra uniform random starts, drawn outside the node discs.
    pub random_guesses: usize,
    pub seed: u64,
    pub max_evals: usize,
    pub node_exclusion_radius: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            domain: Domain::default(),
            delta0: 0.1,
            delta_tol: 0.001,
            guesses: DEFAULT_GUESSES.to_vec(),
            random_guesses: 0,
            seed: 0,
            max_evals: 10_000,
            node_exclusion_radius: NODE_EXCLUSION_RADIUS,
        }
    }
}

impl SearchConfig {
    fn compass(&self) -> CompassConfig {
        CompassConfig {
            delta0: self.delta0,
            delta_tol: self.delta_tol,
            max_evals: self.max_evals,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.compass().validate()?;
        if !(self.node_exclusion_radius >= 0.0) {
            return Err(IfError::InvalidConfig("node exclusion radius must be >= 0".into()));
        }
        if self.guesses.is_empty() && self.random_guesses == 0 {
            return Err(IfError::InvalidConfig("no starting points".into()));
        }
        Ok(())
    }

    /// Every start for `geometry`: the fixed guesses followed by the seeded
    /// random ones.
    pub fn starts(&self, geometry: &CycleGeometry) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let nodes = nodes_near(geometry, &self.domain, self.node_exclusion_radius);
        let ok = |u1: f64, u2: f64| outside_nodes(&nodes, self.node_exclusion_radius, u1, u2);
        for &(u1, u2) in &self.guesses {
            if !self.domain.contains(u1, u2) || !ok(u1, u2) {
                return Err(IfError::InvalidConfig(format!(
                    "guess ({u1}, {u2}) is outside the domain or inside a node disc"
                )));
            }
        }
        let mut starts = self.guesses.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let d = &self.domain;
        let mut attempts = 0;
        while starts.len() < self.guesses.len() + self.random_guesses {
            attempts += 1;
            if attempts > 1000 * (self.random_guesses + 1) {
                return Err(IfError::InvalidConfig(
                    "could not draw random guesses outside the node discs".into(),
                ));
            }
            let u1 = d.u1_min + (d.u1_max - d.u1_min) * rng.random::<f64>();
            let u2 = d.u2_min + (d.u2_max - d.u2_min) * rng.random::<f64>();
            if ok(u1, u2) {
                starts.push((u1, u2));
            }
        }
        Ok(starts)
    }
}

/// Compass trace of one start of [`fast_if`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub start: (f64, f64),
    pub result: CompassResult,
}

/// Per-cycle result of either algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub algorithm: Algorithm,
    pub freqs: FreqPair,
    pub u1: f64,
    pub u2: f64,
    /// Full parameter set at the optimum, `a1`, `a2` recovered by elimination.
    pub params: ModelParams,
    pub objective: f64,
    pub normalized_objective: f64,
    /// Empty for brute force.
    pub starts: Vec<StartTrace>,
    pub winning_start: Option<usize>,
    pub evals: usize,
    pub wall: Duration,
    pub converged: bool,
    pub lobe: Lobe,
    /// The objective was flat over every candidate; the argmin is the first
    /// point in scan order.
    pub flat: bool,
    pub warnings: Vec<String>,
}

fn objective_at(cycle: &SampledCycle) -> impl Fn(f64, f64) -> f64 + '_ {
    let g = cycle.geometry();
    move |u1, u2| objective_p(&FreqPair::from_dimensionless(u1, u2, &g), cycle)
}

/// Multi-start compass search. Every start runs to completion; the winner is
/// the converged start with the lowest objective (earliest start on ties).
pub fn fast_if(cycle: &SampledCycle, config: &SearchConfig) -> Result<SearchOutcome> {
    let clock = Instant::now();
    let g = cycle.geometry();
    let starts = config.starts(&g)?;
    let nodes = nodes_near(&g, &config.domain, config.node_exclusion_radius);
    let radius = config.node_exclusion_radius;
    let domain = config.domain;
    let admissible = |u1: f64, u2: f64| domain.contains(u1, u2) && outside_nodes(&nodes, radius, u1, u2);
    let compass = config.compass();

    let mut traces = Vec::with_capacity(starts.len());
    for &start in &starts {
        let result = compass_search(objective_at(cycle), start, &compass, admissible)?;
        traces.push(StartTrace { start, result });
    }
    let evals = traces.iter().map(|t| t.result.evals).sum();

    let pick = |converged_only: bool| {
        traces
            .iter()
            .enumerate()
            .filter(|(_, t)| !converged_only || t.result.converged)
            .min_by(|(_, a), (_, b)| a.result.objective.total_cmp(&b.result.objective))
            .map(|(i, _)| i)
    };
    let Some(best) = pick(true) else {
        let i = pick(false).expect("at least one start");
        let r = &traces[i].result;
        return Err(IfError::NotConverged {
            u1: r.u1,
            u2: r.u2,
            objective: r.objective,
        });
    };
    let (u1, u2) = (traces[best].result.u1, traces[best].result.u2);
    let freqs = FreqPair::from_dimensionless(u1, u2, &g);
    let sol = solve_inner(&freqs, cycle)?;
    let mut warnings = Vec::new();
    let unconverged = traces.iter().filter(|t| !t.result.converged).count();
    if unconverged > 0 {
        warnings.push(format!("{unconverged} start(s) hit the evaluation cap"));
    }
    Ok(SearchOutcome {
        algorithm: Algorithm::Fast,
        freqs,
        u1,
        u2,
        params: sol.params(),
        objective: sol.objective,
        normalized_objective: normalized_objective(sol.objective, cycle),
        starts: traces,
        winning_start: Some(best),
        evals,
        wall: clock.elapsed(),
        converged: true,
        lobe: Lobe::of(u2),
        flat: false,
        warnings,
    })
}

/// Region covered by a brute-force grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridDomain {
    /// Rectangle in `(u1, u2)`.
    Dimensionless(Domain),
    /// The square `0 < w1, w2 <= c` in rad/s, meshed as `w = l c / r`.
    Square { c: f64 },
}

/// Grid spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mesh {
    RadPerSec(f64),
    Dimensionless(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub domain: GridDomain,
    pub mesh: Mesh,
    /// Let cells inside node discs win the argmin.
    pub include_nodes: bool,
    pub node_exclusion_radius: f64,
    /// Grids above this many points are refused.
    pub max_points: usize,
    /// Evaluate rows on the rayon pool.
    pub parallel: bool,
}

/// Grids above this size are evaluated but flagged.
pub const GRID_WARN_POINTS: usize = 1_000_000;

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            domain: GridDomain::Dimensionless(Domain::default()),
            mesh: Mesh::RadPerSec(DEFAULT_MESH),
            include_nodes: false,
            node_exclusion_radius: NODE_EXCLUSION_RADIUS,
            max_points: 20_000_000,
            parallel: false,
        }
    }
}

fn arange(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|l| lo + l as f64 * step).collect()
}

impl GridConfig {
    /// Grid axes in rad/s for a cycle.
    pub fn axes(&self, geometry: &CycleGeometry) -> Result<(Vec<f64>, Vec<f64>)> {
        let (t0, td) = (geometry.t0(), geometry.diastole());
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let (w1, w2) = match (self.domain, self.mesh) {
            (GridDomain::Dimensionless(d), mesh) => {
                d.validate()?;
                match mesh {
                    Mesh::RadPerSec(h) if positive(h) => (
                        arange(d.u1_min * PI / t0, d.u1_max * PI / t0, h),
                        arange(d.u2_min * PI / td, d.u2_max * PI / td, h),
                    ),
                    Mesh::Dimensionless(h) if positive(h) => (
                        arange(d.u1_min, d.u1_max, h).into_iter().map(|u| u * PI / t0).collect(),
                        arange(d.u2_min, d.u2_max, h).into_iter().map(|u| u * PI / td).collect(),
                    ),
                    _ => return Err(IfError::InvalidConfig(format!("mesh must be positive, got {mesh:?}"))),
                }
            }
            (GridDomain::Square { c }, Mesh::RadPerSec(h)) if positive(c) && positive(h) => {
                let r = (c / h).round().max(1.0) as usize;
                let axis: Vec<f64> = (1..=r).map(|l| l as f64 * c / r as f64).collect();
                (axis.clone(), axis)
            }
            _ => {
                return Err(IfError::InvalidConfig(
                    "square grids need a positive bound and a rad/s mesh".into(),
                ))
            }
        };
        let points = w1.len().saturating_mul(w2.len());
        if points > self.max_points {
            return Err(IfError::GridTooLarge {
                points,
                limit: self.max_points,
            });
        }
        Ok((w1, w2))
    }
}

/// Dense objective values over a grid, row `i` holding `w1[i]` against
/// every `w2[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveGrid {
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Row-major `omega1.len() x omega2.len()`; `+inf` where the inner solve
    /// was refused.
    pub values: Vec<f64>,
    /// Cells inside a node disc.
    pub near_node: Vec<bool>,
    pub nodes: Vec<LatticeNode>,
    /// `(i, j)` of the selected minimum.
    pub argmin: (usize, usize),
}

impl ObjectiveGrid {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.omega2.len() + j]
    }
}

/// Exhaustive evaluation of `P` on a grid.
///
/// Cells inside node discs are evaluated but only compete for the argmin
/// when `include_nodes` is set. Ties (within `1e-13 ||f||^2`) resolve to the
/// lowest `(u1, u2)` in lexicographic order.
pub fn brute_force_if(cycle: &SampledCycle, grid: &GridConfig) -> Result<(SearchOutcome, ObjectiveGrid)> {
    let clock = Instant::now();
    let g = cycle.geometry();
    let (w1, w2) = grid.axes(&g)?;
    let mut warnings = Vec::new();
    let points = w1.len() * w2.len();
    if points > GRID_WARN_POINTS {
        warnings.push(format!("large grid: {points} points"));
    }
    let u1: Vec<f64> = w1.iter().map(|w| w * g.t0() / PI).collect();
    let u2: Vec<f64> = w2.iter().map(|w| w * g.diastole() / PI).collect();
    let nodes = nodes_near(
        &g,
        &Domain {
            u1_min: u1[0],
            u1_max: *u1.last().unwrap(),
            u2_min: u2[0],
            u2_max: *u2.last().unwrap(),
        },
        grid.node_exclusion_radius,
    );

    let row = |i: usize| -> Vec<f64> {
        w2.iter()
            .map(|&b| objective_p(&FreqPair { omega1: w1[i], omega2: b }, cycle))
            .collect()
    };
    let rows: Vec<Vec<f64>> = if grid.parallel {
        (0..w1.len()).into_par_iter().map(row).collect()
    } else {
        (0..w1.len()).map(row).collect()
    };
    let values: Vec<f64> = rows.concat();
    let near_node: Vec<bool> = u1
        .iter()
        .flat_map(|&a| {
            u2.iter()
                .map(|&b| !outside_nodes(&nodes, grid.node_exclusion_radius, a, b))
                .collect::<Vec<_>>()
        })
        .collect();

    let candidate = |k: usize| values[k].is_finite() && (grid.include_nodes || !near_node[k]);
    let (lo, hi) = (0..values.len())
        .filter(|&k| candidate(k))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), k| {
            (lo.min(values[k]), hi.max(values[k]))
        });
    if !lo.is_finite() {
        return Err(IfError::InvalidConfig("no admissible finite grid point".into()));
    }
    let tie = 1e-13 * cycle.energy().max(f64::MIN_POSITIVE);
    let k = (0..values.len())
        .find(|&k| candidate(k) && values[k] <= lo + tie)
        .expect("minimum exists");
    let flat = hi - lo <= tie;
    if flat {
        warnings.push("flat objective: every grid point ties".into());
    }
    let argmin = (k / w2.len(), k % w2.len());
    let freqs = FreqPair {
        omega1: w1[argmin.0],
        omega2: w2[argmin.1],
    };
    let sol = solve_inner(&freqs, cycle)?;
    let (bu1, bu2) = (u1[argmin.0], u2[argmin.1]);
    let outcome = SearchOutcome {
        algorithm: Algorithm::Brute,
        freqs,
        u1: bu1,
        u2: bu2,
        params: sol.params(),
        objective: sol.objective,
        normalized_objective: normalized_objective(sol.objective, cycle),
        starts: Vec::new(),
        winning_start: None,
        evals: values.len(),
        wall: clock.elapsed(),
        converged: true,
        lobe: Lobe::of(bu2),
        flat,
        warnings,
    };
    let grid = ObjectiveGrid {
        omega1: w1,
        omega2: w2,
        u1,
        u2,
        values,
        near_node,
        nodes,
        argmin,
    };
    Ok((outcome, grid))
}

/// Side-by-side result for one cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleComparison {
    pub index: usize,
    pub brute: Option<SearchOutcome>,
    pub fast: Option<SearchOutcome>,
    pub error: Option<String>,
    /// `|w_fast - w_brute|` in rad/s.
    pub abs_diff_omega: Option<(f64, f64)>,
    pub abs_diff_u: Option<(f64, f64)>,
    /// Brute-force time over fast time.
    pub time_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub cycles: Vec<CycleComparison>,
    pub compared: usize,
    pub failed: usize,
    pub mean_abs_diff_omega1: f64,
    pub mean_abs_diff_omega2: f64,
    /// The larger of the two per-frequency means, in rad/s.
    pub max_mean_abs_diff: f64,
    pub mean_abs_diff_u1: f64,
    pub mean_abs_diff_u2: f64,
    pub median_time_ratio: f64,
    /// Cycles where the fast objective did not exceed the grid optimum.
    pub fast_not_worse: usize,
    pub threshold: f64,
    pub pass: bool,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 0 {
        0.5 * (values[mid - 1] + values[mid])
    } else {
        values[mid]
    }
}

/// Runs both algorithms on every cycle and summarises their disagreement.
/// Cycles are processed one after another so that timings are not skewed by
/// contention.
pub fn compare_algorithms(
    cycles: &[SampledCycle],
    grid: &GridConfig,
    config: &SearchConfig,
    threshold: f64,
) -> Result<ComparisonReport> {
    if cycles.is_empty() {
        return Err(IfError::InvalidConfig("nothing to compare".into()));
    }
    let mut rows = Vec::with_capacity(cycles.len());
    for (index, cycle) in cycles.iter().enumerate() {
        let brute = brute_force_if(cycle, grid).map(|(o, _)| o);
        let fast = fast_if(cycle, config);
        let row = match (brute, fast) {
            (Ok(b), Ok(f)) => CycleComparison {
                index,
                abs_diff_omega: Some((
                    (f.freqs.omega1 - b.freqs.omega1).abs(),
                    (f.freqs.omega2 - b.freqs.omega2).abs(),
                )),
                abs_diff_u: Some(((f.u1 - b.u1).abs(), (f.u2 - b.u2).abs())),
                time_ratio: Some(b.wall.as_secs_f64() / f.wall.as_secs_f64().max(1e-9)),
                brute: Some(b),
                fast: Some(f),
                error: None,
            },
            (b, f) => CycleComparison {
                index,
                error: Some(
                    [b.as_ref().err(), f.as_ref().err()]
                        .iter()
                        .flatten()
                        .map(|e| e.to_string())
                        .collect::<Vec<_>>()
                        .join("; "),
                ),
                brute: b.ok(),
                fast: f.ok(),
                abs_diff_omega: None,
                abs_diff_u: None,
                time_ratio: None,
            },
        };
        rows.push(row);
    }
    let ok: Vec<&CycleComparison> = rows.iter().filter(|r| r.error.is_none()).collect();
    let compared = ok.len();
    let mean = |f: &dyn Fn(&CycleComparison) -> f64| {
        if compared == 0 {
            f64::NAN
        } else {
            ok.iter().map(|r| f(r)).sum::<f64>() / compared as f64
        }
    };
    let m1 = mean(&|r| r.abs_diff_omega.unwrap().0);
    let m2 = mean(&|r| r.abs_diff_omega.unwrap().1);
    let mu1 = mean(&|r| r.abs_diff_u.unwrap().0);
    let mu2 = mean(&|r| r.abs_diff_u.unwrap().1);
    let mut ratios: Vec<f64> = ok.iter().map(|r| r.time_ratio.unwrap()).collect();
    let fast_not_worse = ok
        .iter()
        .filter(|r| r.fast.as_ref().unwrap().objective <= r.brute.as_ref().unwrap().objective)
        .count();
    let failed = rows.len() - compared;
    let max_mean = m1.max(m2);
    Ok(ComparisonReport {
        compared,
        failed,
        mean_abs_diff_omega1: m1,
        mean_abs_diff_omega2: m2,
        max_mean_abs_diff: max_mean,
        mean_abs_diff_u1: mu1,
        mean_abs_diff_u2: mu2,
        median_time_ratio: median(&mut ratios),
        fast_not_worse,
        threshold,
        pass: failed == 0 && max_mean <= threshold,
        cycles: rows,
    })
}
