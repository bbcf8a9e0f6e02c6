//! Constraint elimination, the degeneracy lattice and the reduced objective
//! `P(w1, w2)`.
//!
//! For fixed frequencies the model is linear in `(a1, b1, a2, b2, pbar)` and
//! the two constraint rows
//!
//! ```text
//! [ cos(w1 T0)  -1            sin(w1 T0)  0           ] [a1 a2 b1 b2]' = 0
//! [ 1           -cos(w2 Td)   0           -sin(w2 Td) ]
//! ```
//!
//! (`Td = T - T0`) have full rank unless `cos(w1 T0) cos(w2 Td) = 1`. In the
//! general case `a1`, `a2` are eliminated in favour of `b1`, `b2`, leaving a
//! three-column least-squares problem over the basis `(v1, v2, 1)`. On the
//! lattice of degenerate nodes the rows collapse to `a2 = -a1` (odd node) or
//! `a2 = a1` (even node) and the problem has four columns `(w0, w1, w2, 1)`.
//!
//! Both cases are solved through their Gram (normal-equation) systems. The
//! Gram entries are assembled from per-segment trigonometric sums, and the
//! objective is recomputed from the explicit residual so that exact fits
//! report an objective at rounding level rather than at cancellation level.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{IfError, Result};
use crate::linalg::solve_gram;
use crate::model::{CycleGeometry, Domain, FreqPair, ModelParams, SampledCycle};

/// Width of the tube around lattice nodes, measured on
/// `|1 - cos(w1 T0) cos(w2 (T - T0))|`, inside which the lattice-node solve
/// replaces the general elimination.
pub const DEGENERACY_EPS: f64 = 1e-8;

/// Equilibrated Gram condition above which the inner solve is refused.
pub const COND_MAX: f64 = 1e12;

/// Which reduced basis a frequency pair uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisCase {
    General,
    /// Odd node: `w1 T0` and `w2 (T - T0)` are odd multiples of pi.
    DegenerateGamma1,
    /// Even node: both are nonzero even multiples of pi.
    DegenerateGamma2,
}

impl BasisCase {
    pub fn is_degenerate(self) -> bool {
        !matches!(self, BasisCase::General)
    }
}

/// Lattice branch of a degenerate node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeBranch {
    Gamma1,
    Gamma2,
}

impl NodeBranch {
    fn case(self) -> BasisCase {
        match self {
            NodeBranch::Gamma1 => BasisCase::DegenerateGamma1,
            NodeBranch::Gamma2 => BasisCase::DegenerateGamma2,
        }
    }
}

/// A degenerate frequency pair.
///
/// For `Gamma1`, `w1 T0 = (2 k1 + 1) pi` and `w2 (T - T0) = (2 k2 + 1) pi`;
/// for `Gamma2`, `w1 T0 = 2 k1 pi` and `w2 (T - T0) = 2 k2 pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeNode {
    pub k1: i64,
    pub k2: i64,
    pub branch: NodeBranch,
    pub omega1: f64,
    pub omega2: f64,
}

impl LatticeNode {
    pub fn new(k1: i64, k2: i64, branch: NodeBranch, t0: f64, period: f64) -> Self {
        let (u1, u2) = node_coordinates(k1, k2, branch);
        Self {
            k1,
            k2,
            branch,
            omega1: u1 * PI / t0,
            omega2: u2 * PI / (period - t0),
        }
    }

    /// Dimensionless coordinates `(u1, u2)`; these are integers.
    pub fn dimensionless(&self) -> (f64, f64) {
        node_coordinates(self.k1, self.k2, self.branch)
    }

    pub fn freqs(&self) -> FreqPair {
        FreqPair {
            omega1: self.omega1,
            omega2: self.omega2,
        }
    }
}

fn node_coordinates(k1: i64, k2: i64, branch: NodeBranch) -> (f64, f64) {
    match branch {
        NodeBranch::Gamma1 => ((2 * k1 + 1) as f64, (2 * k2 + 1) as f64),
        NodeBranch::Gamma2 => ((2 * k1) as f64, (2 * k2) as f64),
    }
}

/// Sines and cosines of the segment endpoint phases `w1 T0` and
/// `w2 (T - T0)`, plus an accurately computed `1 - c1 c2`.
#[derive(Debug, Clone, Copy)]
struct EndpointPhases {
    s1: f64,
    c1: f64,
    s2: f64,
    c2: f64,
    gap: f64,
}

impl EndpointPhases {
    fn new(freqs: &FreqPair, t0: f64, period: f64) -> Self {
        let x = freqs.omega1 * t0;
        let y = freqs.omega2 * (period - t0);
        let (s1, c1) = x.sin_cos();
        let (s2, c2) = y.sin_cos();
        // 1 - cos x cos y = sin^2((x - y)/2) + sin^2((x + y)/2), free of the
        // cancellation that the direct form suffers next to a node.
        let gap = (0.5 * (x - y)).sin().powi(2) + (0.5 * (x + y)).sin().powi(2);
        Self { s1, c1, s2, c2, gap }
    }
}

/// `|1 - cos(w1 T0) cos(w2 (T - T0))|`.
pub fn degeneracy_gap(freqs: &FreqPair, t0: f64, period: f64) -> f64 {
    EndpointPhases::new(freqs, t0, period).gap
}

/// Nearest lattice node in the dimensionless plane, ties going to `Gamma1`.
pub fn nearest_node(freqs: &FreqPair, t0: f64, period: f64) -> LatticeNode {
    let u1 = freqs.omega1 * t0 / PI;
    let u2 = freqs.omega2 * (period - t0) / PI;
    let odd = |u: f64| (((u - 1.0) / 2.0).round() as i64).max(0);
    let even = |u: f64| ((u / 2.0).round() as i64).max(1);
    let g1 = LatticeNode::new(odd(u1), odd(u2), NodeBranch::Gamma1, t0, period);
    let g2 = LatticeNode::new(even(u1), even(u2), NodeBranch::Gamma2, t0, period);
    let dist = |n: &LatticeNode| {
        let (a, b) = n.dimensionless();
        (a - u1).hypot(b - u2)
    };
    if dist(&g2) < dist(&g1) {
        g2
    } else {
        g1
    }
}

/// Decides between the general elimination and a lattice-node solve.
pub fn classify(freqs: &FreqPair, t0: f64, period: f64, eps: f64) -> BasisCase {
    if EndpointPhases::new(freqs, t0, period).gap <= eps {
        nearest_node(freqs, t0, period).branch.case()
    } else {
        BasisCase::General
    }
}

/// Eliminates `a1`, `a2` through the constraint rows:
///
/// ```text
/// a1 = (b1 sin(w1 T0) cos(w2 Td) + b2 sin(w2 Td)) / (1 - cos(w1 T0) cos(w2 Td))
/// a2 = (b1 sin(w1 T0) + b2 cos(w1 T0) sin(w2 Td)) / (1 - cos(w1 T0) cos(w2 Td))
/// ```
pub fn reduce_constraints(freqs: &FreqPair, b1: f64, b2: f64, t0: f64, period: f64) -> Result<(f64, f64)> {
    let ph = EndpointPhases::new(freqs, t0, period);
    if ph.gap <= DEGENERACY_EPS {
        return Err(IfError::Degenerate { gap: ph.gap });
    }
    let a1 = (b1 * ph.s1 * ph.c2 + b2 * ph.s2) / ph.gap;
    let a2 = (b1 * ph.s1 + b2 * ph.c1 * ph.s2) / ph.gap;
    Ok((a1, a2))
}

/// Every lattice node with positive frequencies inside `domain`.
pub fn enumerate_nodes(t0: f64, period: f64, domain: &Domain) -> Vec<LatticeNode> {
    let ints = |lo: f64, hi: f64, parity: i64| -> Vec<i64> {
        let start = lo.ceil().max(1.0) as i64;
        let end = hi.floor() as i64;
        (start..=end).filter(|k| k.rem_euclid(2) == parity).collect()
    };
    let mut nodes = Vec::new();
    for (branch, parity) in [(NodeBranch::Gamma1, 1), (NodeBranch::Gamma2, 0)] {
        let us1 = ints(domain.u1_min, domain.u1_max, parity);
        let us2 = ints(domain.u2_min, domain.u2_max, parity);
        for &i in &us1 {
            for &j in &us2 {
                let (k1, k2) = match branch {
                    NodeBranch::Gamma1 => ((i - 1) / 2, (j - 1) / 2),
                    NodeBranch::Gamma2 => (i / 2, j / 2),
                };
                nodes.push(LatticeNode::new(k1, k2, branch, t0, period));
            }
        }
    }
    nodes
}

/// A reduced basis column as a combination of the four segment atoms
/// `[cos(w1 t1); 0]`, `[sin(w1 t1); 0]`, `[0; cos(w2 t2)]`, `[0; sin(w2 t2)]`.
/// The same coefficients map the reduced unknowns back onto
/// `(a1, b1, a2, b2)`.
type Column = [f64; 4];

/// Columns of the reduced basis and the case they belong to.
fn reduced_columns(case: BasisCase, ph: &EndpointPhases) -> Vec<Column> {
    match case {
        BasisCase::General => {
            let d = ph.gap;
            vec![
                [ph.s1 * ph.c2 / d, 1.0, ph.s1 / d, 0.0],
                [ph.s2 / d, 0.0, ph.c1 * ph.s2 / d, 1.0],
            ]
        }
        BasisCase::DegenerateGamma1 | BasisCase::DegenerateGamma2 => {
            let sign = if case == BasisCase::DegenerateGamma1 { -1.0 } else { 1.0 };
            vec![[1.0, 0.0, sign, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
        }
    }
}

/// Reduced basis vectors sampled on a cycle.
///
/// In the general case `v1`, `v2` are the eliminated-constraint columns and
/// `w0` is `None`. On a node `w0` is the shared cosine column and `v1`, `v2`
/// hold the disjointly supported sine columns `w1`, `w2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisVectors {
    pub case: BasisCase,
    pub v1: Vec<f64>,
    pub v2: Vec<f64>,
    pub w0: Option<Vec<f64>>,
    /// Frequencies the basis was built at; snapped to the node when degenerate.
    pub freqs: FreqPair,
}

/// Sampled atoms for one frequency pair.
struct Atoms {
    cos1: Vec<f64>,
    sin1: Vec<f64>,
    cos2: Vec<f64>,
    sin2: Vec<f64>,
}

impl Atoms {
    fn new(freqs: &FreqPair, g: &CycleGeometry) -> Self {
        let (sin1, cos1) = (0..g.n).map(|k| (freqs.omega1 * k as f64 * g.dt).sin_cos()).unzip();
        let (sin2, cos2) = (1..=g.m).map(|j| (freqs.omega2 * j as f64 * g.dt).sin_cos()).unzip();
        Self { cos1, sin1, cos2, sin2 }
    }

    fn column(&self, c: &Column) -> Vec<f64> {
        let top = self.cos1.iter().zip(&self.sin1).map(|(cs, sn)| c[0] * cs + c[1] * sn);
        let bottom = self.cos2.iter().zip(&self.sin2).map(|(cs, sn)| c[2] * cs + c[3] * sn);
        top.chain(bottom).collect()
    }
}

/// Resolves the case and the frequencies actually used for the solve.
/// Degenerate pairs are moved onto their node so that the collapsed
/// constraint rows hold exactly.
fn resolve(freqs: &FreqPair, g: &CycleGeometry) -> (BasisCase, FreqPair, EndpointPhases) {
    let (t0, period) = (g.t0(), g.period());
    let ph = EndpointPhases::new(freqs, t0, period);
    if ph.gap > DEGENERACY_EPS {
        return (BasisCase::General, *freqs, ph);
    }
    let node = nearest_node(freqs, t0, period);
    let snapped = node.freqs();
    (node.branch.case(), snapped, EndpointPhases::new(&snapped, t0, period))
}

pub fn build_basis(freqs: &FreqPair, cycle: &SampledCycle) -> BasisVectors {
    let g = cycle.geometry();
    let (case, used, ph) = resolve(freqs, &g);
    let atoms = Atoms::new(&used, &g);
    let cols = reduced_columns(case, &ph);
    let mut vecs: Vec<Vec<f64>> = cols.iter().map(|c| atoms.column(c)).collect();
    match case {
        BasisCase::General => {
            let v2 = vecs.pop().unwrap();
            let v1 = vecs.pop().unwrap();
            BasisVectors {
                case,
                v1,
                v2,
                w0: None,
                freqs: used,
            }
        }
        _ => {
            let w2 = vecs.pop().unwrap();
            let w1 = vecs.pop().unwrap();
            let w0 = vecs.pop().unwrap();
            BasisVectors {
                case,
                v1: w1,
                v2: w2,
                w0: Some(w0),
                freqs: used,
            }
        }
    }
}

/// Optimal linear coefficients at one frequency pair and the objective value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSolution {
    pub case: BasisCase,
    /// Frequencies the solve used; equals the input except when it was
    /// snapped onto a lattice node.
    pub freqs: FreqPair,
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
    pub pbar: f64,
    /// `P = ||S - f||^2` at the optimum.
    pub objective: f64,
    /// 1-norm condition number of the equilibrated Gram matrix.
    pub gram_condition: f64,
}

impl InnerSolution {
    pub fn params(&self) -> ModelParams {
        ModelParams {
            a1: self.a1,
            b1: self.b1,
            a2: self.a2,
            b2: self.b2,
            pbar: self.pbar,
            omega1: self.freqs.omega1,
            omega2: self.freqs.omega2,
        }
    }
}

/// Gram system for `K` reduced columns plus the constant column.
fn assemble<const K: usize>(cols: &[Column], atoms: &Atoms, f: &[f64], n: usize) -> ([[f64; K]; K], [f64; K]) {
    // Atom Gram (the two segments are disjoint, so it is block diagonal),
    // atom sums against 1 and against f.
    let mut gram = [[0.0; 4]; 4];
    let mut ones = [0.0; 4];
    let mut proj = [0.0; 4];
    let (f1, f2) = f.split_at(n);
    for (block, cs, sn, fs) in [(0, &atoms.cos1, &atoms.sin1, f1), (2, &atoms.cos2, &atoms.sin2, f2)] {
        let (mut cc, mut cs_, mut ss, mut c, mut s, mut fc, mut fsn) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for ((&x, &y), &v) in cs.iter().zip(sn.iter()).zip(fs) {
            cc += x * x;
            cs_ += x * y;
            ss += y * y;
            c += x;
            s += y;
            fc += v * x;
            fsn += v * y;
        }
        gram[block][block] = cc;
        gram[block][block + 1] = cs_;
        gram[block + 1][block] = cs_;
        gram[block + 1][block + 1] = ss;
        ones[block] = c;
        ones[block + 1] = s;
        proj[block] = fc;
        proj[block + 1] = fsn;
    }
    let total: f64 = f.iter().sum();

    let r = K - 1;
    let mut g = [[0.0; K]; K];
    let mut rhs = [0.0; K];
    for i in 0..r {
        for j in 0..r {
            let mut acc = 0.0;
            for p in 0..4 {
                for q in 0..4 {
                    acc += cols[i][p] * gram[p][q] * cols[j][q];
                }
            }
            g[i][j] = acc;
        }
        let one: f64 = (0..4).map(|p| cols[i][p] * ones[p]).sum();
        g[i][r] = one;
        g[r][i] = one;
        rhs[i] = (0..4).map(|p| cols[i][p] * proj[p]).sum();
    }
    g[r][r] = f.len() as f64;
    rhs[r] = total;
    (g, rhs)
}

fn solve_case<const K: usize>(
    case: BasisCase,
    freqs: FreqPair,
    cols: &[Column],
    atoms: &Atoms,
    cycle: &SampledCycle,
) -> Result<InnerSolution> {
    let f = cycle.samples();
    let n = cycle.n();
    let (g, rhs) = assemble::<K>(cols, atoms, f, n);
    let sol = solve_gram(&g, &rhs).map_err(|condition| IfError::IllConditioned { condition })?;
    if sol.condition > COND_MAX {
        return Err(IfError::IllConditioned {
            condition: sol.condition,
        });
    }
    let y = sol.x;
    let r = K - 1;
    let mut coef = [0.0; 4];
    for (i, col) in cols.iter().enumerate() {
        for p in 0..4 {
            coef[p] += y[i] * col[p];
        }
    }
    let [a1, b1, a2, b2] = coef;
    let pbar = y[r];

    let (f1, f2) = f.split_at(n);
    let seg = |a: f64, b: f64, cs: &[f64], sn: &[f64], fs: &[f64]| -> f64 {
        cs.iter()
            .zip(sn)
            .zip(fs)
            .map(|((c, s), v)| {
                let e = a * c + b * s + pbar - v;
                e * e
            })
            .sum::<f64>()
    };
    let objective = seg(a1, b1, &atoms.cos1, &atoms.sin1, f1) + seg(a2, b2, &atoms.cos2, &atoms.sin2, f2);

    let (b1_out, b2_out) = match case {
        BasisCase::General => (y[0], y[1]),
        _ => (y[1], y[2]),
    };
    Ok(InnerSolution {
        case,
        freqs,
        a1,
        b1: b1_out,
        a2,
        b2: b2_out,
        pbar,
        objective,
        gram_condition: sol.condition,
    })
}

/// Minimises `||S - f||^2` over the linear coefficients at fixed
/// frequencies, honouring both constraints.
///
/// General pairs solve the 3x3 system in `(b1, b2, pbar)` and recover
/// `a1`, `a2` by elimination. Pairs within [`DEGENERACY_EPS`] of a lattice
/// node are snapped onto it and solve the 4x4 system in
/// `(a1, b1, b2, pbar)` with `a2 = -a1` or `a2 = a1`.
pub fn solve_inner(freqs: &FreqPair, cycle: &SampledCycle) -> Result<InnerSolution> {
    let g = cycle.geometry();
    let (case, used, ph) = resolve(freqs, &g);
    let atoms = Atoms::new(&used, &g);
    let cols = reduced_columns(case, &ph);
    match case {
        BasisCase::General => solve_case::<3>(case, used, &cols, &atoms, cycle),
        _ => solve_case::<4>(case, used, &cols, &atoms, cycle),
    }
}

/// `P(w1, w2)`, or `+inf` when the inner solve is refused.
pub fn objective_p(freqs: &FreqPair, cycle: &SampledCycle) -> f64 {
    solve_inner(freqs, cycle).map_or(f64::INFINITY, |s| s.objective)
}

/// `P / ||f - mean(f) 1||^2`; zero for a constant cycle.
pub fn normalized_objective(objective: f64, cycle: &SampledCycle) -> f64 {
    let var = cycle.total_variance();
    if var > 0.0 {
        objective / var
    } else {
        0.0
    }
}
