//! Small shared numerical helpers: orthonormalization, operator norms,
//! finite-difference Jacobians, max-norm utilities.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-12;

/// Operator 2-norm via SVD; 0 for empty matrices.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Smallest singular value (as an operator on its domain): 0 if the matrix
/// has fewer rows than columns.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() < m.ncols() {
        return 0.0;
    }
    m.clone().singular_values().min()
}

/// Orthonormal basis of the column span, dropping directions with singular
/// value below `RANK_TOL` relative to the largest.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax)
        .count();
    u.columns(0, rank).into_owned()
}

/// Max (sup) norm of a vector; 0 for the empty vector.
pub fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Max norm of the difference.
pub fn max_norm_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut m = 0.0f64;
    for i in 0..a.len() {
        m = m.max((a[i] - b[i]).abs());
    }
    m
}

/// Central finite-difference Jacobian of `f` at `x` with the step the
/// tangent module documents: 1e-6·(1+‖x‖).
pub fn fd_jacobian<F>(f: &F, x: &DVector<f64>, out_dim: usize) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64> + ?Sized,
{
    let h = 1e-6 * (1.0 + x.norm());
    let mut jac = DMatrix::zeros(out_dim, x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let fp = f(&xp);
        let fm = f(&xm);
        for i in 0..out_dim {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Radial retraction onto the closed max-norm ball of radius `r`
/// (identity inside, x ↦ r·x/|x| outside).
pub fn retract_max(x: &DVector<f64>, r: f64) -> DVector<f64> {
    let n = max_norm(x);
    if n <= r || n == 0.0 {
        x.clone()
    } else {
        x * (r / n)
    }
}

/// Solve `a · x = b` in the least-squares sense via complete orthogonal
/// decomposition (works for square and tall systems).
pub fn solve_lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    a.clone()
        .svd(true, true)
        .solve(b, RANK_TOL)
        .expect("svd solve")
}
