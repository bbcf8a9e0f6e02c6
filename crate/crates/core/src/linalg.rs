//! Tiny dense solves for the 3x3 and 4x4 Gram systems.

/// Solution of a symmetric positive semi-definite system together with the
/// 1-norm condition number of its diagonally equilibrated form.
#[derive(Debug, Clone, Copy)]
pub(crate) struct GramSolve<const N: usize> {
    pub x: [f64; N],
    pub condition: f64,
}

/// Solves `G x = rhs` after symmetric Jacobi scaling `D G D` with
/// `D = diag(G_ii^-1/2)`, using Gaussian elimination with partial pivoting.
///
/// Fails with an infinite condition estimate when a diagonal entry is not
/// positive or elimination hits an exact zero pivot.
pub(crate) fn solve_gram<const N: usize>(g: &[[f64; N]; N], rhs: &[f64; N]) -> Result<GramSolve<N>, f64> {
    let mut d = [0.0; N];
    for i in 0..N {
        let gii = g[i][i];
        if !(gii.is_finite() && gii > 0.0) {
            return Err(f64::INFINITY);
        }
        d[i] = 1.0 / gii.sqrt();
    }
    let mut a = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..N {
            a[i][j] = d[i] * g[i][j] * d[j];
        }
    }
    let lu = Lu::factor(a).ok_or(f64::INFINITY)?;

    // Explicit inverse is cheap at this size and gives an exact 1-norm.
    let mut inv_norm = 0.0_f64;
    for j in 0..N {
        let mut e = [0.0; N];
        e[j] = 1.0;
        let col = lu.solve(&e);
        inv_norm = inv_norm.max(col.iter().map(|v| v.abs()).sum());
    }
    let a_norm = (0..N)
        .map(|j| (0..N).map(|i| a[i][j].abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let condition = a_norm * inv_norm;
    if !condition.is_finite() {
        return Err(f64::INFINITY);
    }

    let mut b = [0.0; N];
    for i in 0..N {
        b[i] = d[i] * rhs[i];
    }
    let z = lu.solve(&b);
    let mut x = [0.0; N];
    for i in 0..N {
        x[i] = d[i] * z[i];
    }
    Ok(GramSolve { x, condition })
}

struct Lu<const N: usize> {
    a: [[f64; N]; N],
    perm: [usize; N],
}

impl<const N: usize> Lu<N> {
    fn factor(mut a: [[f64; N]; N]) -> Option<Self> {
        let mut perm = [0usize; N];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        for k in 0..N {
            let pivot = (k..N).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
            if a[pivot][k] == 0.0 {
                return None;
            }
            a.swap(k, pivot);
            perm.swap(k, pivot);
            for i in k + 1..N {
                let f = a[i][k] / a[k][k];
                a[i][k] = f;
                for j in k + 1..N {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        Some(Self { a, perm })
    }

    fn solve(&self, b: &[f64; N]) -> [f64; N] {
        let mut y = [0.0; N];
        for i in 0..N {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.a[i][j] * y[j];
            }
            y[i] = s;
        }
        for i in (0..N).rev() {
            let mut s = y[i];
            for j in i + 1..N {
                s -= self.a[i][j] * y[j];
            }
            y[i] = s / self.a[i][i];
        }
        y
    }
}
