//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use intrinsic_frequency::model::{
    constraint_residuals, evaluate_model, CycleGeometry, Domain, FreqPair, ModelParams, SampledCycle,
};
use intrinsic_frequency::objective::{
    build_basis, degeneracy_gap, enumerate_nodes, reduce_constraints, solve_inner, BasisCase, InnerSolution,
    DEGENERACY_EPS,
};
use intrinsic_frequency::pipeline::generate::{node_distance, noisy_model_cycle, random_model, RandomModelSpec};
use intrinsic_frequency::search::{
    brute_force_if, compare_algorithms, fast_if, ComparisonReport, GridConfig, Lobe, SearchConfig, SearchOutcome,
    DEFAULT_MESH,
};

const RECOVERY_TOL: f64 = 0.002;
const RESIDUAL_BOUND: f64 = 1e-10;
const IF_DIFF_THRESHOLD: f64 = 0.0475;
const MIN_SPEEDUP: f64 = 50.0;
const MAX_FAST_SECONDS: f64 = 1.0;
const ORACLE_RTOL: f64 = 1e-8;
const CONSTRAINT_RTOL: f64 = 1e-9;
const ORTHOGONALITY_RTOL: f64 = 1e-8;

fn geometry() -> CycleGeometry {
    CycleGeometry::new(0.002, 181, 320).unwrap()
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(number: usize, name: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {number} ({name}): {tag} - {}", v.detail);
}

fn synthetic(seed: u64, count: usize, noise: f64) -> Vec<(ModelParams, SampledCycle)> {
    let g = geometry();
    let spec = RandomModelSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = random_model(&mut rng, &g, &spec).unwrap();
            let (c, _) = noisy_model_cycle(&p, g, noise, rng.random()).unwrap();
            (p, c)
        })
        .collect()
}

/// Continuity/periodicity of every reconstructed parameter set and normal
/// equation orthogonality of the inner solution behind it. Returns the worst
/// relative values seen.
#[derive(Default)]
struct InvariantLog {
    checked: usize,
    worst_constraint: f64,
    worst_orthogonality: f64,
}

impl InvariantLog {
    fn params(&mut self, p: &ModelParams, g: &CycleGeometry) {
        let (r1, r2) = constraint_residuals(p, g.t0(), g.period());
        let rel = r1.abs().max(r2.abs()) / p.envelope_scale();
        self.worst_constraint = self.worst_constraint.max(rel);
    }

    fn inner(&mut self, sol: &InnerSolution, cycle: &SampledCycle) {
        let g = cycle.geometry();
        self.params(&sol.params(), &g);
        let model = evaluate_model(&sol.params(), &g).unwrap();
        let f = cycle.samples();
        let resid: Vec<f64> = f.iter().zip(&model).map(|(a, b)| a - b).collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let basis = build_basis(&sol.freqs, cycle);
        let ones = vec![1.0; f.len()];
        let mut columns = vec![basis.v1, basis.v2, ones];
        columns.extend(basis.w0);
        let fnorm = norm(f);
        for col in &columns {
            let rel = dot(&resid, col).abs() / (fnorm * norm(col));
            self.worst_orthogonality = self.worst_orthogonality.max(rel);
        }
        self.checked += 1;
    }

    fn outcome(&mut self, o: &SearchOutcome, cycle: &SampledCycle) {
        self.params(&o.params, &cycle.geometry());
        let sol = solve_inner(&o.freqs, cycle).unwrap();
        self.inner(&sol, cycle);
    }
}

fn criterion_1(log: &mut InvariantLog) -> Verdict {
    let clock = Instant::now();
    let cycles = synthetic(1, 50, 0.0);
    let g = geometry();
    let config = SearchConfig::default();
    let (mut recovered, mut small_p, mut worst_du) = (0, 0, 0.0_f64);
    let mut rel_p = Vec::new();
    for (p, c) in &cycles {
        let (u1, u2) = p.freqs().dimensionless(&g);
        let o = match fast_if(c, &config) {
            Ok(o) => o,
            Err(_) => continue,
        };
        log.outcome(&o, c);
        let du = (o.u1 - u1).abs().max((o.u2 - u2).abs());
        worst_du = worst_du.max(du);
        recovered += usize::from(du <= RECOVERY_TOL);
        let r = o.objective / c.energy();
        rel_p.push(r);
        small_p += usize::from(r <= RESIDUAL_BOUND);
    }
    rel_p.sort_by(f64::total_cmp);
    let n = cycles.len();
    Verdict {
        pass: recovered == n && small_p == n,
        detail: format!(
            "{recovered}/{n} within {RECOVERY_TOL} (worst |du| {worst_du:.2e}); {small_p}/{n} with P <= {RESIDUAL_BOUND:e} ||f||^2 \
             (median P/||f||^2 {:.2e}); {:.1} s",
            rel_p.get(rel_p.len() / 2).copied().unwrap_or(f64::NAN),
            clock.elapsed().as_secs_f64()
        ),
    }
}

fn comparison_run(log: &mut InvariantLog) -> (ComparisonReport, f64) {
    let clock = Instant::now();
    let data = synthetic(2, 100, 0.01);
    let cycles: Vec<SampledCycle> = data.into_iter().map(|(_, c)| c).collect();
    let report = compare_algorithms(&cycles, &GridConfig::default(), &SearchConfig::default(), IF_DIFF_THRESHOLD)
        .unwrap();
    for (row, c) in report.cycles.iter().zip(&cycles) {
        for o in [&row.fast, &row.brute].into_iter().flatten() {
            log.outcome(o, c);
        }
    }
    (report, clock.elapsed().as_secs_f64())
}

fn criterion_2(report: &ComparisonReport, seconds: f64) -> Verdict {
    Verdict {
        pass: report.failed == 0 && report.max_mean_abs_diff <= IF_DIFF_THRESHOLD,
        detail: format!(
            "mean |dw1| {:.4}, mean |dw2| {:.4} rad/s (limit {IF_DIFF_THRESHOLD}) over {} cycles, {} failed; \
             fast P <= brute P on {}/{}; {seconds:.0} s",
            report.mean_abs_diff_omega1,
            report.mean_abs_diff_omega2,
            report.compared,
            report.failed,
            report.fast_not_worse,
            report.compared,
        ),
    }
}

fn criterion_3(report: &ComparisonReport) -> Verdict {
    let slowest = report
        .cycles
        .iter()
        .filter_map(|r| r.fast.as_ref())
        .map(|o| o.wall.as_secs_f64())
        .fold(0.0_f64, f64::max);
    Verdict {
        pass: report.compared >= 10 && report.median_time_ratio >= MIN_SPEEDUP && slowest <= MAX_FAST_SECONDS,
        detail: format!(
            "median brute/fast {:.1}x over {} cycles (need {MIN_SPEEDUP}x); slowest fast run {:.2} ms",
            report.median_time_ratio,
            report.compared,
            slowest * 1e3
        ),
    }
}

/// Constrained least squares solved independently: the two constraint rows
/// are eliminated through an orthonormal basis of their null space obtained
/// by QR, and the reduced problem is solved by SVD.
fn oracle(freqs: &FreqPair, cycle: &SampledCycle) -> ([f64; 5], f64) {
    let g = cycle.geometry();
    let (n, m, dt) = (g.n, g.m, g.dt);
    let rows = n + m;
    let mut a = DMatrix::<f64>::zeros(rows, 5);
    for k in 0..n {
        let t = k as f64 * dt;
        a[(k, 0)] = (freqs.omega1 * t).cos();
        a[(k, 1)] = (freqs.omega1 * t).sin();
        a[(k, 4)] = 1.0;
    }
    for j in 1..=m {
        let t = j as f64 * dt;
        a[(n + j - 1, 2)] = (freqs.omega2 * t).cos();
        a[(n + j - 1, 3)] = (freqs.omega2 * t).sin();
        a[(n + j - 1, 4)] = 1.0;
    }
    let (x, y) = (freqs.omega1 * g.t0(), freqs.omega2 * g.diastole());
    // Rows: S1(T0) = S2(0) and S2(T - T0) = S1(0).
    let c = DMatrix::from_row_slice(2, 5, &[x.cos(), x.sin(), -1.0, 0.0, 0.0, -1.0, 0.0, y.cos(), y.sin(), 0.0]);
    let mut aug = DMatrix::<f64>::zeros(5, 7);
    aug.view_mut((0, 0), (5, 2)).copy_from(&c.transpose());
    aug.view_mut((0, 2), (5, 5)).copy_from(&DMatrix::identity(5, 5));
    let q = aug.qr().q();
    let z = q.columns(2, 3).into_owned();
    let f = DVector::from_column_slice(cycle.samples());
    let reduced = &a * &z;
    let y = reduced.svd(true, true).solve(&f, 1e-14).unwrap();
    let theta = &z * y;
    let r = &a * &theta - &f;
    ([theta[0], theta[1], theta[2], theta[3], theta[4]], r.norm_squared())
}

fn criterion_4(log: &mut InvariantLog) -> Verdict {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let domain = Domain::default();
    let (mut ok, mut worst_coef, mut worst_p) = (0, 0.0_f64, 0.0_f64);
    let mut errors = Vec::new();
    let total = 200;
    for i in 0..total {
        let n = rng.random_range(3..=20);
        let m = rng.random_range(3..=40 - n);
        let dt = 1.0 / (n - 1 + m) as f64;
        let g = CycleGeometry::new(dt, n, m).unwrap();
        let (u1, u2) = loop {
            let u1 = rng.random_range(domain.u1_min..=domain.u1_max);
            let u2 = rng.random_range(domain.u2_min..=domain.u2_max);
            if node_distance(u1, u2) >= 0.05 {
                break (u1, u2);
            }
        };
        let freqs = FreqPair::from_dimensionless(u1, u2, &g);
        let samples: Vec<f64> = (0..n + m).map(|_| 90.0 + rng.random_range(-20.0..20.0)).collect();
        let cycle = SampledCycle::new(samples, dt, n).unwrap();
        let sol = match solve_inner(&freqs, &cycle) {
            Ok(s) => s,
            Err(e) => {
                errors.push(format!("#{i}: {e}"));
                continue;
            }
        };
        log.inner(&sol, &cycle);
        let (theta, p) = oracle(&freqs, &cycle);
        let mine = [sol.a1, sol.b1, sol.a2, sol.b2, sol.pbar];
        let scale = theta.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let coef = mine.iter().zip(&theta).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())) / scale;
        let perr = (sol.objective - p).abs() / p;
        worst_coef = worst_coef.max(coef);
        worst_p = worst_p.max(perr);
        if coef <= ORACLE_RTOL && perr <= ORACLE_RTOL {
            ok += 1;
        } else {
            errors.push(format!("#{i} (n={n}, m={m}): coef {coef:.1e}, P {perr:.1e}"));
        }
    }
    let seconds = clock.elapsed().as_secs_f64();
    Verdict {
        pass: ok == total && seconds < 5.0,
        detail: format!(
            "{ok}/{total} match (worst coefficient {worst_coef:.1e}, worst P {worst_p:.1e}, limit {ORACLE_RTOL:e}); \
             {seconds:.2} s{}",
            if errors.is_empty() { String::new() } else { format!("; {}", errors.join(", ")) }
        ),
    }
}

fn criterion_5(log: &InvariantLog) -> Verdict {
    Verdict {
        pass: log.worst_constraint <= CONSTRAINT_RTOL && log.worst_orthogonality <= ORTHOGONALITY_RTOL,
        detail: format!(
            "{} solutions; worst constraint residual {:.1e} x scale (limit {CONSTRAINT_RTOL:e}); \
             worst normal-equation residual {:.1e} (limit {ORTHOGONALITY_RTOL:e})",
            log.checked, log.worst_constraint, log.worst_orthogonality
        ),
    }
}

fn criterion_6(log: &mut InvariantLog) -> Verdict {
    let g = geometry();
    let (t0, period) = (g.t0(), g.period());
    let cycle = synthetic(6, 1, 0.01).pop().unwrap().1;
    let mut problems = Vec::new();

    let nodes = enumerate_nodes(t0, period, &Domain::default());
    let wider = enumerate_nodes(t0, period, &Domain::new(0.5, 6.5, 0.5, 6.5).unwrap());
    for node in nodes.iter().chain(&wider) {
        let b = build_basis(&node.freqs(), &cycle);
        let dot: f64 = b.v1.iter().zip(&b.v2).map(|(x, y)| x * y).sum();
        if dot != 0.0 || !b.case.is_degenerate() {
            problems.push(format!("node {:?}: w1.w2 = {dot:e}, case {:?}", node.dimensionless(), b.case));
        }
    }

    // Probe set: rings around each node at radii from 1e-12 to 1e-2, plus a
    // uniform sweep of the domain. The case tag on each inner solution
    // records which formulas ran.
    let mut probes = Vec::new();
    for node in &nodes {
        let (c1, c2) = node.dimensionless();
        for e in 0..=40 {
            let r = 10f64.powf(-12.0 + 0.25 * e as f64);
            for k in 0..32 {
                let a = k as f64 * PI / 16.0;
                probes.push((c1 + r * a.cos(), c2 + r * a.sin()));
            }
        }
    }
    for i in 0..=200 {
        for j in 0..=500 {
            probes.push((0.5 + i as f64 * 0.005, 0.5 + j as f64 * 0.005));
        }
    }
    let (mut inside, mut outside) = (0, 0);
    for &(u1, u2) in &probes {
        let freqs = FreqPair::from_dimensionless(u1, u2, &g);
        let in_tube = degeneracy_gap(&freqs, t0, period) <= DEGENERACY_EPS;
        let reduced = reduce_constraints(&freqs, 1.0, 1.0, t0, period);
        match solve_inner(&freqs, &cycle) {
            Ok(sol) => {
                if in_tube {
                    inside += 1;
                    if sol.case == BasisCase::General || reduced.is_ok() {
                        problems.push(format!("general formulas used at ({u1}, {u2}) inside the tube"));
                    }
                    log.inner(&sol, &cycle);
                } else {
                    outside += 1;
                    if sol.case != BasisCase::General {
                        problems.push(format!("({u1}, {u2}) outside the tube tagged {:?}", sol.case));
                    }
                }
            }
            Err(e) => problems.push(format!("({u1}, {u2}): {e}")),
        }
    }
    let shown: Vec<&String> = problems.iter().take(5).collect();
    Verdict {
        pass: problems.is_empty() && inside > 0,
        detail: format!(
            "{} nodes checked ({} in domain); {} probes ({inside} inside the tube, {outside} outside); {} problems{}",
            nodes.len() + wider.len(),
            nodes.len(),
            probes.len(),
            problems.len(),
            if shown.is_empty() { String::new() } else { format!(": {shown:?}") }
        ),
    }
}

fn lobe_case(u1: f64, u2: f64, theta: f64, seed: u64, log: &mut InvariantLog) -> Result<String, String> {
    let g = geometry();
    let freqs = FreqPair::from_dimensionless(u1, u2, &g);
    let (b1, b2) = (20.0 * theta.cos(), 20.0 * theta.sin());
    let (a1, a2) = reduce_constraints(&freqs, b1, b2, g.t0(), g.period()).unwrap();
    let p = ModelParams {
        a1,
        b1,
        a2,
        b2,
        pbar: 90.0,
        omega1: freqs.omega1,
        omega2: freqs.omega2,
    };
    let (cycle, _) = noisy_model_cycle(&p, g, 0.01, seed).unwrap();
    let fast = fast_if(&cycle, &SearchConfig::default()).map_err(|e| e.to_string())?;
    let (brute, _) = brute_force_if(&cycle, &GridConfig::default()).map_err(|e| e.to_string())?;
    log.outcome(&fast, &cycle);
    log.outcome(&brute, &cycle);
    let want = Lobe::of(u2);
    // Default guesses: (1, 2) is the upper start, (1, 0.9) the lower one.
    let (upper, lower) = (&fast.starts[0].result, &fast.starts[1].result);
    let (matching, other) = if want == Lobe::Upper { (upper, lower) } else { (lower, upper) };
    let label = format!("{want:?} u*=({u1}, {u2})");
    if brute.lobe != want {
        return Err(format!("{label}: brute force minimum is in the {:?} lobe", brute.lobe));
    }
    if !(matching.objective < other.objective) {
        return Err(format!(
            "{label}: matching start P {:.4e} not below other start P {:.4e}",
            matching.objective, other.objective
        ));
    }
    let (d1, d2) = (
        (fast.freqs.omega1 - brute.freqs.omega1).abs(),
        (fast.freqs.omega2 - brute.freqs.omega2).abs(),
    );
    if d1 > DEFAULT_MESH || d2 > DEFAULT_MESH {
        return Err(format!("{label}: fast and brute differ by ({d1:.4}, {d2:.4}) rad/s"));
    }
    Ok(format!(
        "{label}: P {:.3e} vs {:.3e} (other start ends at ({:.3}, {:.3})), |dw| ({d1:.4}, {d2:.4})",
        matching.objective, other.objective, other.u1, other.u2
    ))
}

fn criterion_7(log: &mut InvariantLog) -> Verdict {
    let results = [lobe_case(1.2, 2.3, 0.8, 71, log), lobe_case(1.1, 0.7, 0.5, 72, log)];
    Verdict {
        pass: results.iter().all(Result::is_ok),
        detail: results
            .iter()
            .map(|r| match r {
                Ok(s) => s.clone(),
                Err(s) => format!("FAILED {s}"),
            })
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn main() -> ExitCode {
    let mut log = InvariantLog::default();
    let mut all = true;
    let mut emit = |n: usize, name: &str, v: Verdict| {
        report(n, name, &v);
        all &= v.pass;
    };
    emit(1, "exact recovery", criterion_1(&mut log));
    let (cmp, seconds) = comparison_run(&mut log);
    emit(2, "oracle equivalence", criterion_2(&cmp, seconds));
    emit(3, "speed-up", criterion_3(&cmp));
    emit(4, "inner-solver oracle", criterion_4(&mut log));
    let c6 = criterion_6(&mut log);
    let c7 = criterion_7(&mut log);
    emit(5, "constraint invariants", criterion_5(&log));
    emit(6, "degenerate structure", c6);
    emit(7, "lobe topology", c7);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
