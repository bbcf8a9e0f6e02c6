//! Deterministic synthetic batches with ground truth.
//!
//! A generation spec is a JSON object whose `kind` selects the source:
//!
//! ```json
//! {"kind": "random_model", "noise": 0.01, "amplitude": [10, 30]}
//! {"kind": "model", "params": {"a1": .., "b1": .., "a2": .., "b2": .., "pbar": .., "omega1": .., "omega2": ..}}
//! {"kind": "harmonic_series", "series": {"pbar": .., "damping_ratio": .., "systolic_terms": [..], "diastolic_terms": [..]}}
//! ```
//!
//! `geometry` (`dt`, `t0`, `period`), `noise` and `id_prefix` are optional
//! for every kind. Noise is relative: its standard deviation is `noise`
//! times the RMS of the clean cycle about its mean.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ingest::{write_batch, BatchRecord, TRUTH_SUFFIX};
use super::{PipelineError, PipelineResult};
use crate::error::{IfError, Result};
use crate::model::{
    synthesize_appendix_cycle, synthesize_cycle, CycleGeometry, Domain, FreqPair, HarmonicSeriesSpec,
    ModelParams, SampledCycle, CONSTRAINT_TOL,
};
use crate::objective::reduce_constraints;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub dt: f64,
    pub t0: f64,
    pub period: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            dt: 0.002,
            t0: 0.36,
            period: 1.0,
        }
    }
}

impl GeometrySpec {
    /// Sample counts for this timing; `t0` and `period` are rounded to the
    /// sample grid.
    pub fn geometry(&self) -> Result<CycleGeometry> {
        let bad = || IfError::InvalidConfig(format!("invalid geometry {self:?}"));
        if !(self.dt > 0.0 && self.t0 > 0.0 && self.period > self.t0 && self.period.is_finite()) {
            return Err(bad());
        }
        let k0 = (self.t0 / self.dt).round() as usize;
        let k = (self.period / self.dt).round() as usize;
        if k <= k0 {
            return Err(bad());
        }
        CycleGeometry::new(self.dt, k0 + 1, k - k0)
    }
}

/// Model cycles with random frequencies and envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomModelSpec {
    /// Frequencies are drawn uniformly from this rectangle in `(u1, u2)`.
    pub domain: Domain,
    /// Minimum dimensionless distance of a draw from every lattice node.
    pub node_clearance: f64,
    /// Range of the larger of the two segment amplitudes.
    pub amplitude: [f64; 2],
    pub pbar: f64,
}

impl Default for RandomModelSpec {
    fn default() -> Self {
        Self {
            domain: Domain::default(),
            node_clearance: 0.05,
            amplitude: [10.0, 30.0],
            pbar: 90.0,
        }
    }
}

impl RandomModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let [lo, hi] = self.amplitude;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(IfError::InvalidConfig(format!("amplitude range {lo}..{hi} is empty or non-positive")));
        }
        if !(self.node_clearance >= 0.0 && self.node_clearance.is_finite() && self.pbar.is_finite()) {
            return Err(IfError::InvalidConfig("node clearance and pbar must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Synthesis {
    RandomModel(RandomModelSpec),
    Model { params: ModelParams },
    HarmonicSeries { series: HarmonicSeriesSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSpec {
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
    #[serde(flatten)]
    pub synthesis: Synthesis,
}

fn default_prefix() -> String {
    "cycle".into()
}

/// Generating parameters of one synthetic cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    /// For harmonic series, the first systolic and diastolic term
    /// frequencies.
    pub omega1: f64,
    pub omega2: f64,
    pub u1: f64,
    pub u2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    pub noise_sigma: f64,
}

/// Dimensionless distance from `(u1, u2)` to the closest lattice node with
/// positive coordinates (both odd or both even).
pub fn node_distance(u1: f64, u2: f64) -> f64 {
    let mut best = f64::INFINITY;
    let (c1, c2) = (u1.round() as i64, u2.round() as i64);
    for k1 in (c1 - 1).max(1)..=c1 + 1 {
        for k2 in (c2 - 1).max(1)..=c2 + 1 {
            if (k1 - k2) % 2 == 0 {
                best = best.min((u1 - k1 as f64).hypot(u2 - k2 as f64));
            }
        }
    }
    best
}

/// Draws a constraint-satisfying model: frequencies uniform in the domain
/// away from nodes, `(b1, b2)` along a uniform random direction, and the
/// whole envelope scaled so the larger segment amplitude lands uniformly in
/// the amplitude range.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    geometry: &CycleGeometry,
    spec: &RandomModelSpec,
) -> Result<ModelParams> {
    spec.validate()?;
    let d = spec.domain;
    for _ in 0..100_000 {
        let u1 = rng.random_range(d.u1_min..=d.u1_max);
        let u2 = rng.random_range(d.u2_min..=d.u2_max);
        if node_distance(u1, u2) < spec.node_clearance {
            continue;
        }
        let freqs = FreqPair::from_dimensionless(u1, u2, geometry);
        let theta = rng.random_range(0.0..TAU);
        let (b1, b2) = (theta.cos(), theta.sin());
        let (a1, a2) = reduce_constraints(&freqs, b1, b2, geometry.t0(), geometry.period())?;
        let envelope = a1.hypot(b1).max(a2.hypot(b2));
        let scale = rng.random_range(spec.amplitude[0]..=spec.amplitude[1]) / envelope;
        return Ok(ModelParams {
            a1: a1 * scale,
            b1: b1 * scale,
            a2: a2 * scale,
            b2: b2 * scale,
            pbar: spec.pbar,
            omega1: freqs.omega1,
            omega2: freqs.omega2,
        });
    }
    Err(IfError::InvalidConfig(format!(
        "no frequency pair in {d:?} keeps {} away from the nodes",
        spec.node_clearance
    )))
}

/// RMS of a cycle about its mean.
pub fn cycle_rms(cycle: &SampledCycle) -> f64 {
    (cycle.total_variance() / cycle.samples().len() as f64).sqrt()
}

/// Model cycle with Gaussian noise of `relative_noise` times the clean RMS.
/// Returns the cycle and the absolute noise level used.
pub fn noisy_model_cycle(
    params: &ModelParams,
    geometry: CycleGeometry,
    relative_noise: f64,
    seed: u64,
) -> Result<(SampledCycle, f64)> {
    let clean = synthesize_cycle(params, geometry, 0.0, 0)?;
    let sigma = relative_noise * cycle_rms(&clean);
    Ok((synthesize_cycle(params, geometry, sigma, seed)?, sigma))
}

fn add_noise(cycle: SampledCycle, relative_noise: f64, seed: u64) -> Result<(SampledCycle, f64)> {
    let sigma = relative_noise * cycle_rms(&cycle);
    if sigma == 0.0 {
        return Ok((cycle, 0.0));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| IfError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = cycle.samples().iter().map(|v| v + normal.sample(&mut rng)).collect();
    Ok((SampledCycle::new(samples, cycle.dt(), cycle.n())?, sigma))
}

/// Produces `count` records and their ground truth. Identical inputs give
/// identical output.
pub fn generate(spec: &GenerateSpec, count: usize, seed: u64) -> Result<(Vec<BatchRecord>, Vec<TruthRecord>)> {
    if count == 0 {
        return Err(IfError::InvalidConfig("count must be at least 1".into()));
    }
    if !(spec.noise.is_finite() && spec.noise >= 0.0) {
        return Err(IfError::InvalidConfig(format!("noise must be non-negative, got {}", spec.noise)));
    }
    let g = spec.geometry.geometry()?;
    match &spec.synthesis {
        Synthesis::RandomModel(r) => r.validate()?,
        Synthesis::Model { params } => params.check_constraints(&g, CONSTRAINT_TOL)?,
        Synthesis::HarmonicSeries { series } => series.validate()?,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = (count - 1).to_string().len();
    let mut records = Vec::with_capacity(count);
    let mut truth = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("{}{:0width$}", spec.id_prefix, i);
        let (cycle, sigma, freqs, params) = match &spec.synthesis {
            Synthesis::RandomModel(r) => {
                let p = random_model(&mut rng, &g, r)?;
                let (c, sigma) = noisy_model_cycle(&p, g, spec.noise, rng.random())?;
                (c, sigma, p.freqs(), Some(p))
            }
            Synthesis::Model { params } => {
                let (c, sigma) = noisy_model_cycle(params, g, spec.noise, rng.random())?;
                (c, sigma, params.freqs(), Some(*params))
            }
            Synthesis::HarmonicSeries { series } => {
                let clean = synthesize_appendix_cycle(series, g)?;
                let (c, sigma) = add_noise(clean, spec.noise, rng.random())?;
                let freqs = FreqPair {
                    omega1: series.systolic_terms[0].omega,
                    omega2: series.diastolic_terms[0].omega,
                };
                (c, sigma, freqs, None)
            }
        };
        let (u1, u2) = freqs.dimensionless(&g);
        records.push(BatchRecord {
            id: id.clone(),
            dt: Some(g.dt),
            sampling_rate: None,
            t0: g.t0(),
            period: g.period(),
            samples: cycle.samples().to_vec(),
            subject: None,
            interval: None,
        });
        truth.push(TruthRecord {
            id,
            omega1: freqs.omega1,
            omega2: freqs.omega2,
            u1,
            u2,
            params,
            noise_sigma: sigma,
        });
    }
    Ok((records, truth))
}

/// Path of the ground-truth sidecar for a batch file.
pub fn truth_path(batch: &Path) -> PathBuf {
    let stem = batch.file_stem().and_then(|s| s.to_str()).unwrap_or("batch");
    batch.with_file_name(format!("{stem}{TRUTH_SUFFIX}"))
}

/// Reads a spec file, generates, and writes the batch plus its truth
/// sidecar. Returns the sidecar path.
pub fn generate_to_file(spec_path: &Path, count: usize, seed: u64, out: &Path) -> PipelineResult<PathBuf> {
    let text = fs::read_to_string(spec_path).map_err(|e| PipelineError::io(spec_path, e))?;
    let spec: GenerateSpec =
        serde_json::from_str(&text).map_err(|e| PipelineError::parse(spec_path, e.to_string()))?;
    let (records, truth) = generate(&spec, count, seed)?;
    write_batch(out, &records)?;
    let sidecar = truth_path(out);
    let text = serde_json::to_string_pretty(&truth).map_err(|e| PipelineError::parse(&sidecar, e.to_string()))?;
    fs::write(&sidecar, text).map_err(|e| PipelineError::io(&sidecar, e))?;
    Ok(sidecar)
}

pub fn read_truth(path: &Path) -> PipelineResult<Vec<TruthRecord>> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::parse(path, e.to_string()))
}
