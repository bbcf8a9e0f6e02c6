//! Waveform and parameter types, the piecewise-sinusoidal pressure model and
//! synthetic signal generators.
//!
//! A cardiac cycle is split at the dicrotic notch `T0` into a systolic segment
//! of `n` samples covering `t = 0, dt, ..., T0` and a diastolic segment of `m`
//! samples covering segment-local times `dt, 2 dt, ..., T - T0`. Each segment
//! carries its own sinusoid on top of a shared offset:
//!
//! ```text
//! S(t) = a1 cos(w1 t) + b1 sin(w1 t) + pbar    (systole)
//! S(t) = a2 cos(w2 t) + b2 sin(w2 t) + pbar    (diastole, segment-local t)
//! ```
//!
//! subject to continuity at the notch and periodicity at the end of the
//! cycle (see [`constraint_residuals`]).

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{IfError, Result};

/// Default tolerance used when checking that parameters satisfy the
/// continuity and periodicity constraints.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Sampling layout of one cycle: interval and segment sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleGeometry {
    pub dt: f64,
    /// Systolic samples, `t = 0 ..= T0`.
    pub n: usize,
    /// Diastolic samples, segment-local `t = dt ..= T - T0`.
    pub m: usize,
}

impl CycleGeometry {
    pub fn new(dt: f64, n: usize, m: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(IfError::InvalidCycle(format!("sampling interval must be positive, got {dt}")));
        }
        if n < 2 || m < 1 {
            return Err(IfError::InvalidCycle(format!(
                "need n >= 2 and m >= 1 so that T0 and T - T0 are positive (n = {n}, m = {m})"
            )));
        }
        Ok(Self { dt, n, m })
    }

    /// Notch time `T0 = (n - 1) dt`.
    pub fn t0(&self) -> f64 {
        (self.n - 1) as f64 * self.dt
    }

    /// Diastolic duration `T - T0 = m dt`.
    pub fn diastole(&self) -> f64 {
        self.m as f64 * self.dt
    }

    pub fn period(&self) -> f64 {
        self.t0() + self.diastole()
    }

    pub fn len(&self) -> usize {
        self.n + self.m
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One uniformly sampled cardiac cycle with the notch on a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCycle {
    samples: Vec<f64>,
    geometry: CycleGeometry,
}

impl SampledCycle {
    /// Minimum samples per segment; each segment must overdetermine its
    /// free coefficients.
    pub const MIN_SEGMENT: usize = 3;

    /// Builds a cycle whose first `n` samples are systolic; the remaining
    /// samples form the diastolic segment.
    pub fn new(samples: Vec<f64>, dt: f64, n: usize) -> Result<Self> {
        if n > samples.len() {
            return Err(IfError::InvalidCycle(format!(
                "systolic count {n} exceeds sample count {}",
                samples.len()
            )));
        }
        let m = samples.len() - n;
        if n < Self::MIN_SEGMENT || m < Self::MIN_SEGMENT {
            return Err(IfError::InvalidCycle(format!(
                "each segment needs at least {} samples (n = {n}, m = {m})",
                Self::MIN_SEGMENT
            )));
        }
        let geometry = CycleGeometry::new(dt, n, m)?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(IfError::InvalidCycle(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, geometry })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn geometry(&self) -> CycleGeometry {
        self.geometry
    }

    pub fn dt(&self) -> f64 {
        self.geometry.dt
    }

    pub fn n(&self) -> usize {
        self.geometry.n
    }

    pub fn m(&self) -> usize {
        self.geometry.m
    }

    pub fn t0(&self) -> f64 {
        self.geometry.t0()
    }

    pub fn period(&self) -> f64 {
        self.geometry.period()
    }

    pub fn systole(&self) -> &[f64] {
        &self.samples[..self.geometry.n]
    }

    pub fn diastole(&self) -> &[f64] {
        &self.samples[self.geometry.n..]
    }

    /// `||f||^2`.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    /// `||f - mean(f) 1||^2`, the objective value of an offset-only fit.
    pub fn total_variance(&self) -> f64 {
        let mean = self.samples.iter().sum::<f64>() / self.samples.len() as f64;
        self.samples.iter().map(|v| (v - mean) * (v - mean)).sum()
    }
}

/// Angular frequency pair in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqPair {
    pub omega1: f64,
    pub omega2: f64,
}

impl FreqPair {
    pub fn new(omega1: f64, omega2: f64) -> Result<Self> {
        if !(omega1.is_finite() && omega1 > 0.0 && omega2.is_finite() && omega2 > 0.0) {
            return Err(IfError::InvalidParameter(format!(
                "frequencies must be positive and finite, got ({omega1}, {omega2})"
            )));
        }
        Ok(Self { omega1, omega2 })
    }

    /// Converts dimensionless coordinates `u1 = w1 T0 / pi`,
    /// `u2 = w2 (T - T0) / pi` into rad/s.
    pub fn from_dimensionless(u1: f64, u2: f64, geometry: &CycleGeometry) -> Self {
        Self {
            omega1: u1 * PI / geometry.t0(),
            omega2: u2 * PI / geometry.diastole(),
        }
    }

    pub fn dimensionless(&self, geometry: &CycleGeometry) -> (f64, f64) {
        (
            self.omega1 * geometry.t0() / PI,
            self.omega2 * geometry.diastole() / PI,
        )
    }

    /// Reporting unit for an angular frequency: `60 w / (2 pi)`.
    pub fn to_bpm(omega: f64) -> f64 {
        60.0 * omega / (2.0 * PI)
    }
}

/// Closed rectangle in the dimensionless `(u1, u2)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub u1_min: f64,
    pub u1_max: f64,
    pub u2_min: f64,
    pub u2_max: f64,
}

impl Default for Domain {
    /// The physiological search domain `0.5 <= u1 <= 1.5`, `0.5 <= u2 <= 3`.
    fn default() -> Self {
        Self {
            u1_min: 0.5,
            u1_max: 1.5,
            u2_min: 0.5,
            u2_max: 3.0,
        }
    }
}

impl Domain {
    pub fn new(u1_min: f64, u1_max: f64, u2_min: f64, u2_max: f64) -> Result<Self> {
        let d = Self {
            u1_min,
            u1_max,
            u2_min,
            u2_max,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.u1_min, self.u1_max, self.u2_min, self.u2_max]
            .iter()
            .all(|v| v.is_finite())
            && self.u1_min > 0.0
            && self.u2_min > 0.0
            && self.u1_min <= self.u1_max
            && self.u2_min <= self.u2_max;
        if ok {
            Ok(())
        } else {
            Err(IfError::InvalidConfig(format!("invalid dimensionless domain {self:?}")))
        }
    }

    pub fn contains(&self, u1: f64, u2: f64) -> bool {
        (self.u1_min..=self.u1_max).contains(&u1) && (self.u2_min..=self.u2_max).contains(&u2)
    }
}

/// Full parameter set of the piecewise model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub pbar: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl ModelParams {
    pub fn freqs(&self) -> FreqPair {
        FreqPair {
            omega1: self.omega1,
            omega2: self.omega2,
        }
    }

    /// `max(|a1|, |b1|, |a2|, |b2|, 1)`, the scale used for constraint checks.
    pub fn envelope_scale(&self) -> f64 {
        [self.a1, self.b1, self.a2, self.b2]
            .iter()
            .fold(1.0_f64, |acc, v| acc.max(v.abs()))
    }

    fn check_finite(&self) -> Result<()> {
        let all = [
            self.a1,
            self.b1,
            self.a2,
            self.b2,
            self.pbar,
            self.omega1,
            self.omega2,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(IfError::InvalidParameter(format!("non-finite parameter in {self:?}")))
        }
    }

    /// Checks both constraint residuals against `tol * envelope_scale()`.
    pub fn check_constraints(&self, geometry: &CycleGeometry, tol: f64) -> Result<()> {
        self.check_finite()?;
        let (cont, per) = constraint_residuals(self, geometry.t0(), geometry.period());
        let bound = tol * self.envelope_scale();
        if cont.abs() > bound || per.abs() > bound {
            return Err(IfError::InvalidParameter(format!(
                "constraint residuals (continuity {cont:e}, periodicity {per:e}) exceed {bound:e}"
            )));
        }
        Ok(())
    }
}

/// Evaluates the model on the sample grid of `geometry`.
///
/// Systolic samples use `t = k dt` for `k = 0..n`; diastolic samples use the
/// segment-local `t = j dt` for `j = 1..=m`.
pub fn evaluate_model(params: &ModelParams, geometry: &CycleGeometry) -> Result<Vec<f64>> {
    params.check_finite()?;
    let dt = geometry.dt;
    let systole = (0..geometry.n).map(|k| {
        let (s, c) = (params.omega1 * k as f64 * dt).sin_cos();
        params.a1 * c + params.b1 * s + params.pbar
    });
    let diastole = (1..=geometry.m).map(|j| {
        let (s, c) = (params.omega2 * j as f64 * dt).sin_cos();
        params.a2 * c + params.b2 * s + params.pbar
    });
    Ok(systole.chain(diastole).collect())
}

/// Left-minus-right residuals of the continuity and periodicity rows:
///
/// ```text
/// continuity:  a1 cos(w1 T0) + b1 sin(w1 T0) - a2
/// periodicity: a1 - (a2 cos(w2 (T - T0)) + b2 sin(w2 (T - T0)))
/// ```
pub fn constraint_residuals(params: &ModelParams, t0: f64, period: f64) -> (f64, f64) {
    let (s1, c1) = (params.omega1 * t0).sin_cos();
    let (s2, c2) = (params.omega2 * (period - t0)).sin_cos();
    let continuity = params.a1 * c1 + params.b1 * s1 - params.a2;
    let periodicity = params.a1 - (params.a2 * c2 + params.b2 * s2);
    (continuity, periodicity)
}

/// Samples the model and adds i.i.d. Gaussian noise of standard deviation
/// `noise_sigma`, drawn from a ChaCha stream seeded with `seed`.
pub fn synthesize_cycle(
    params: &ModelParams,
    geometry: CycleGeometry,
    noise_sigma: f64,
    seed: u64,
) -> Result<SampledCycle> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(IfError::InvalidParameter(format!(
            "noise sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    params.check_constraints(&geometry, CONSTRAINT_TOL)?;
    let mut samples = evaluate_model(params, &geometry)?;
    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| IfError::InvalidParameter(e.to_string()))?;
        for v in &mut samples {
            *v += normal.sample(&mut rng);
        }
    }
    SampledCycle::new(samples, geometry.dt, geometry.n)
}

/// One series term `sin_amplitude * sin(w t) + cos_amplitude * cos(w t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicTerm {
    pub sin_amplitude: f64,
    pub cos_amplitude: f64,
    pub omega: f64,
}

/// Truncated damped harmonic series recorded at a fixed point of a
/// compliant tube, with separate term lists for systole and diastole.
///
/// All spatial and physical factors are folded into the per-term amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSeriesSpec {
    pub pbar: f64,
    /// `R / (2 L)` in 1/s; zero gives the undamped series.
    pub damping_ratio: f64,
    pub systolic_terms: Vec<HarmonicTerm>,
    pub diastolic_terms: Vec<HarmonicTerm>,
}

impl HarmonicSeriesSpec {
    /// Single-term, undamped series that reproduces `params` exactly.
    ///
    /// The series is written in absolute time, so the diastolic coefficients
    /// are rotated by `w2 T0` to match the segment-local model convention.
    pub fn from_model(params: &ModelParams, t0: f64) -> Self {
        let (s, c) = (params.omega2 * t0).sin_cos();
        Self {
            pbar: params.pbar,
            damping_ratio: 0.0,
            systolic_terms: vec![HarmonicTerm {
                sin_amplitude: params.b1,
                cos_amplitude: params.a1,
                omega: params.omega1,
            }],
            diastolic_terms: vec![HarmonicTerm {
                sin_amplitude: params.a2 * s + params.b2 * c,
                cos_amplitude: params.a2 * c - params.b2 * s,
                omega: params.omega2,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.damping_ratio.is_finite() && self.damping_ratio >= 0.0) {
            return Err(IfError::InvalidSpec(format!(
                "damping ratio must be finite and >= 0, got {}",
                self.damping_ratio
            )));
        }
        if !self.pbar.is_finite() {
            return Err(IfError::InvalidSpec("pbar must be finite".into()));
        }
        for (name, terms) in [("systolic", &self.systolic_terms), ("diastolic", &self.diastolic_terms)] {
            if terms.is_empty() {
                return Err(IfError::InvalidSpec(format!("{name} term list is empty")));
            }
            for t in terms {
                if !(t.omega.is_finite() && t.omega > 0.0) {
                    return Err(IfError::InvalidSpec(format!("{name} term frequency must be > 0, got {}", t.omega)));
                }
                if !(t.sin_amplitude.is_finite() && t.cos_amplitude.is_finite()) {
                    return Err(IfError::InvalidSpec(format!("{name} term amplitude is not finite")));
                }
            }
        }
        Ok(())
    }

    fn series(&self, terms: &[HarmonicTerm], t: f64) -> f64 {
        let sum: f64 = terms
            .iter()
            .map(|term| {
                let (s, c) = (term.omega * t).sin_cos();
                term.sin_amplitude * s + term.cos_amplitude * c
            })
            .sum();
        self.pbar + (-self.damping_ratio * t).exp() * sum
    }
}

/// Samples a [`HarmonicSeriesSpec`] on the grid of `geometry`.
///
/// Unlike [`evaluate_model`], the diastolic samples are evaluated at absolute
/// time `T0 + j dt`, both in the trigonometric arguments and in the damping
/// envelope.
pub fn synthesize_appendix_cycle(spec: &HarmonicSeriesSpec, geometry: CycleGeometry) -> Result<SampledCycle> {
    spec.validate()?;
    let dt = geometry.dt;
    let t0 = geometry.t0();
    let systole = (0..geometry.n).map(|k| spec.series(&spec.systolic_terms, k as f64 * dt));
    let diastole = (1..=geometry.m).map(|j| spec.series(&spec.diastolic_terms, t0 + j as f64 * dt));
    SampledCycle::new(systole.chain(diastole).collect(), dt, geometry.n)
}
