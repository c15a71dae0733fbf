//! Complemented-subspace calculus in R^n: gap metrics between subspaces,
//! projections with prescribed range and kernel, graph charts on the
//! Grassmannian, and complement selection.
//!
//! With the Euclidean norm every gap quantity has a closed form through the
//! principal angles θ_i between two subspaces (singular values of Q₂ᵀQ₁ are
//! cos θ_i):
//!
//! * α(X₁,X₂) = sin θ_min,
//! * δ(X₁,X₂) = sin θ_max,
//! * d(X₁,X₂) = 2 sin(θ_max/2)   (chordal distance between unit spheres),
//!
//! and d̂ is the larger of the two one-sided d's. These satisfy
//! α ≤ δ ≤ d ≤ 2δ, and for a complementary pair α(X₁,X₂)·‖Π_{X₂}(X₁)‖ = 1.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{op_norm, orthonormalize, sigma_min, RANK_TOL};

#[derive(Debug, Error)]
pub enum GrassmannError {
    #[error("ambient dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("degenerate (zero-dimensional) subspace")]
    Degenerate,
    #[error("basis vectors are linearly dependent")]
    DependentBasis,
    #[error("subspaces are not complementary")]
    NotComplementary,
    #[error("target subspace is not complementary to the transversal")]
    NotTransversal,
    #[error("subspace is not contained in the ambient subspace")]
    NotContained,
}

/// A linear subspace of R^n, stored with the original basis and a cached
/// orthonormal one.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
    ortho: DMatrix<f64>,
}

impl Subspace {
    /// Build from basis columns; fails if the columns are dependent
    /// (smallest singular value of the column-normalized basis ≤ 1e-12).
    pub fn new(basis: DMatrix<f64>) -> Result<Self, GrassmannError> {
        if basis.ncols() > basis.nrows() {
            return Err(GrassmannError::DependentBasis);
        }
        if basis.ncols() > 0 {
            let mut normalized = basis.clone();
            for mut c in normalized.column_iter_mut() {
                let n = c.norm();
                if n == 0.0 {
                    return Err(GrassmannError::DependentBasis);
                }
                c /= n;
            }
            if sigma_min(&normalized) <= RANK_TOL {
                return Err(GrassmannError::DependentBasis);
            }
        }
        let ortho = orthonormalize(&basis);
        if ortho.ncols() != basis.ncols() {
            return Err(GrassmannError::DependentBasis);
        }
        Ok(Self { basis, ortho })
    }

    pub fn from_vectors(vectors: &[DVector<f64>]) -> Result<Self, GrassmannError> {
        assert!(!vectors.is_empty(), "use Subspace::zero for the trivial subspace");
        let n = vectors[0].len();
        for v in vectors {
            if v.len() != n {
                return Err(GrassmannError::DimensionMismatch(n, v.len()));
            }
        }
        Self::new(DMatrix::from_columns(vectors))
    }

    /// The zero subspace of R^n.
    pub fn zero(ambient_dim: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient_dim, 0),
            ortho: DMatrix::zeros(ambient_dim, 0),
        }
    }

    /// Span of the given standard basis vectors of R^n.
    pub fn coordinate(ambient_dim: usize, axes: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(ambient_dim, axes.len());
        for (j, &i) in axes.iter().enumerate() {
            basis[(i, j)] = 1.0;
        }
        Self::new(basis).expect("coordinate axes are independent")
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn orthonormal(&self) -> &DMatrix<f64> {
        &self.ortho
    }

    /// Orthogonal projector QQᵀ onto the subspace.
    pub fn orthogonal_projector(&self) -> DMatrix<f64> {
        &self.ortho * self.ortho.transpose()
    }

    /// Euclidean distance from `x` to the subspace.
    pub fn distance_to(&self, x: &DVector<f64>) -> f64 {
        (x - &self.ortho * (self.ortho.transpose() * x)).norm()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.distance_to(x) <= tol * (1.0 + x.norm())
    }

    /// Coordinates of `x` in this subspace's basis (least squares; exact when
    /// `x` lies in the span).
    pub fn coords_of(&self, x: &DVector<f64>) -> DVector<f64> {
        crate::linalg::solve_lstsq(&self.basis, x)
    }
}

/// The four gap quantities between two subspaces.
#[derive(Debug, Clone, Copy)]
pub struct GapMetrics {
    pub d: f64,
    pub delta: f64,
    pub alpha: f64,
    pub dhat: f64,
}

fn principal_cosines(a: &Subspace, b: &Subspace) -> DVector<f64> {
    let m = b.orthonormal().transpose() * a.orthonormal();
    m.svd(false, false).singular_values
}

fn one_sided(a: &Subspace, b: &Subspace) -> (f64, f64, f64) {
    // cos θ_i = singular values of Q_bᵀ Q_a; the operator-on-domain minimum
    // is 0 when dim b < dim a.
    let cos = principal_cosines(a, b);
    let cos_max = cos.iter().fold(0.0f64, |m, &c| m.max(c.min(1.0)));
    let cos_min = if b.dim() < a.dim() {
        0.0
    } else {
        cos.iter().fold(1.0f64, |m, &c| m.min(c.max(0.0)))
    };
    let alpha = (1.0 - cos_max * cos_max).max(0.0).sqrt();
    let delta = (1.0 - cos_min * cos_min).max(0.0).sqrt();
    let d = (2.0 - 2.0 * cos_min).max(0.0).sqrt();
    (d, delta, alpha)
}

/// Gap metrics d, δ, α between `a` and `b`, plus d̂ = max of the one-sided d's.
pub fn gap_metrics(a: &Subspace, b: &Subspace) -> Result<GapMetrics, GrassmannError> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(GrassmannError::DimensionMismatch(a.ambient_dim(), b.ambient_dim()));
    }
    if a.dim() == 0 || b.dim() == 0 {
        return Err(GrassmannError::Degenerate);
    }
    let (d_ab, delta, alpha) = one_sided(a, b);
    let (d_ba, _, _) = one_sided(b, a);
    Ok(GapMetrics {
        d: d_ab,
        delta,
        alpha,
        dhat: d_ab.max(d_ba),
    })
}

/// d̂ between the ranges of two projection matrices.
pub fn dhat_of_ranges(p1: &DMatrix<f64>, p2: &DMatrix<f64>) -> Result<f64, GrassmannError> {
    let r1 = Subspace::new(orthonormalize(p1))?;
    let r2 = Subspace::new(orthonormalize(p2))?;
    Ok(gap_metrics(&r1, &r2)?.dhat)
}

/// A projection together with its declared range and kernel.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub range: Subspace,
    pub kernel: Subspace,
    pub matrix: DMatrix<f64>,
}

impl ProjectionPair {
    pub fn norm(&self) -> f64 {
        op_norm(&self.matrix)
    }
}

/// The projection with range `range` and kernel `kernel`;
/// requires range ⊕ kernel = R^n.
pub fn projection_from_pair(
    range: &Subspace,
    kernel: &Subspace,
) -> Result<ProjectionPair, GrassmannError> {
    let n = range.ambient_dim();
    if kernel.ambient_dim() != n {
        return Err(GrassmannError::DimensionMismatch(n, kernel.ambient_dim()));
    }
    if range.dim() + kernel.dim() != n {
        return Err(GrassmannError::NotComplementary);
    }
    let mut b = DMatrix::zeros(n, n);
    b.columns_mut(0, range.dim()).copy_from(range.basis());
    b.columns_mut(range.dim(), kernel.dim()).copy_from(kernel.basis());
    // complementary ⟺ the combined (column-normalized) basis has full rank
    let mut bn = b.clone();
    for mut c in bn.column_iter_mut() {
        c /= c.norm();
    }
    if sigma_min(&bn) <= RANK_TOL {
        return Err(GrassmannError::NotComplementary);
    }
    let binv = b.clone().try_inverse().ok_or(GrassmannError::NotComplementary)?;
    let mut sel = DMatrix::zeros(n, n);
    for i in 0..range.dim() {
        sel[(i, i)] = 1.0;
    }
    let matrix = &b * sel * binv;
    Ok(ProjectionPair {
        range: range.clone(),
        kernel: kernel.clone(),
        matrix,
    })
}

/// A linear map base → transversal whose graph is a prescribed subspace,
/// expressed in the bases of the two factors.
#[derive(Debug, Clone)]
pub struct GraphChart {
    pub base: Subspace,
    pub transversal: Subspace,
    /// dim(transversal) × dim(base) coordinate matrix.
    pub map: DMatrix<f64>,
}

impl GraphChart {
    /// Apply to a vector of base coordinates.
    pub fn apply(&self, base_coords: &DVector<f64>) -> DVector<f64> {
        &self.map * base_coords
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.map)
    }
}

/// The chart φ_{X₁,X₂}(X′) = Π_{X₁}(X₂) Π_{X₂}(X′)|_{X₁}: the unique linear
/// map f with Graph f = target, for target complementary to the transversal.
pub fn graph_chart(
    base: &Subspace,
    transversal: &Subspace,
    target: &Subspace,
) -> Result<GraphChart, GrassmannError> {
    if target.dim() != base.dim() {
        return Err(GrassmannError::NotTransversal);
    }
    let onto_target = projection_from_pair(target, transversal)
        .map_err(|_| GrassmannError::NotTransversal)?;
    let onto_transversal = projection_from_pair(transversal, base)?;
    let mut map = DMatrix::zeros(transversal.dim(), base.dim());
    for j in 0..base.dim() {
        let bj: DVector<f64> = base.basis().column(j).into_owned();
        let w = &onto_transversal.matrix * (&onto_target.matrix * bj);
        map.set_column(j, &transversal.coords_of(&w));
    }
    Ok(GraphChart {
        base: base.clone(),
        transversal: transversal.clone(),
        map,
    })
}

/// Inverse chart: the subspace Graph f = span{ b_j + f(b_j) }.
pub fn graph_chart_inverse(chart: &GraphChart) -> Result<Subspace, GrassmannError> {
    let cols: Vec<DVector<f64>> = (0..chart.base.dim())
        .map(|j| {
            let bj: DVector<f64> = chart.base.basis().column(j).into_owned();
            &bj + chart.transversal.basis() * chart.map.column(j)
        })
        .collect();
    Subspace::from_vectors(&cols)
}

/// Orthogonal complement of `sub` inside `ambient_sub`
/// (finite-dimensional inner-product shortcut; sub ⊕ result = ambient_sub).
pub fn complement_within(
    sub: &Subspace,
    ambient_sub: &Subspace,
) -> Result<Subspace, GrassmannError> {
    if sub.ambient_dim() != ambient_sub.ambient_dim() {
        return Err(GrassmannError::DimensionMismatch(
            sub.ambient_dim(),
            ambient_sub.ambient_dim(),
        ));
    }
    for j in 0..sub.dim() {
        let v = sub.basis().column(j).into_owned();
        if !ambient_sub.contains(&v, 1e-10) {
            return Err(GrassmannError::NotContained);
        }
    }
    if sub.dim() == ambient_sub.dim() {
        return Ok(Subspace::zero(sub.ambient_dim()));
    }
    let psub = sub.orthogonal_projector();
    let residual = ambient_sub.orthonormal() - &psub * ambient_sub.orthonormal();
    let q = orthonormalize(&residual);
    debug_assert_eq!(q.ncols(), ambient_sub.dim() - sub.dim());
    Subspace::new(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_subspace(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Subspace {
        loop {
            let m = DMatrix::from_fn(n, k, |_, _| rng.gen_range(-1.0..1.0));
            if let Ok(s) = Subspace::new(m) {
                return s;
            }
        }
    }

    /// Spec's documented solver for the gap quantities, kept as the
    /// independent oracle for the SVD closed forms: dense sampling of the
    /// unit sphere of `a` followed by local refinement, tolerance 1e-8.
    fn gap_by_sphere_search(a: &Subspace, b: &Subspace, rng: &mut ChaCha8Rng) -> (f64, f64, f64) {
        let k = a.dim();
        let unit = |v: DVector<f64>| -> DVector<f64> {
            let n = v.norm();
            v / n
        };
        let value = |v: &DVector<f64>, chordal: bool| -> f64 {
            let x = a.orthonormal() * v;
            if chordal {
                let p = b.orthogonal_projector() * &x;
                let pn = p.norm();
                (2.0 - 2.0 * pn).max(0.0).sqrt()
            } else {
                b.distance_to(&x)
            }
        };
        let mut best = [f64::MIN, f64::MIN, f64::MAX]; // d(sup), δ(sup), α(inf)
        let mut arg = vec![DVector::zeros(k); 3];
        for _ in 0..4000 {
            let v = unit(DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)));
            let cands = [value(&v, true), value(&v, false), value(&v, false)];
            if cands[0] > best[0] {
                best[0] = cands[0];
                arg[0] = v.clone();
            }
            if cands[1] > best[1] {
                best[1] = cands[1];
                arg[1] = v.clone();
            }
            if cands[2] < best[2] {
                best[2] = cands[2];
                arg[2] = v;
            }
        }
        // local refinement: random perturbations of shrinking size until the
        // improvement falls below 1e-8
        for (slot, maximize, chordal) in [(0usize, true, true), (1, true, false), (2, false, false)] {
            let mut step = 0.3;
            while step > 1e-9 {
                let mut improved = false;
                for _ in 0..60 {
                    let v = unit(&arg[slot] + step * DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0)));
                    let c = value(&v, chordal);
                    let better = if maximize { c > best[slot] + 1e-15 } else { c < best[slot] - 1e-15 };
                    if better {
                        best[slot] = c;
                        arg[slot] = v;
                        improved = true;
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
        }
        (best[0], best[1], best[2])
    }

    #[test]
    fn gap_orthogonal_lines() {
        let a = Subspace::coordinate(2, &[0]);
        let b = Subspace::coordinate(2, &[1]);
        let g = gap_metrics(&a, &b).unwrap();
        assert_abs_diff_eq!(g.alpha, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.d, 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gap_diagonal_line() {
        let a = Subspace::from_vectors(&[dvector![1.0, 0.0]]).unwrap();
        let b = Subspace::from_vectors(&[dvector![1.0, 1.0] / 2.0f64.sqrt()]).unwrap();
        let g = gap_metrics(&a, &b).unwrap();
        assert_abs_diff_eq!(g.alpha, 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn gap_identical_subspaces() {
        let a = Subspace::coordinate(4, &[0, 2]);
        let g = gap_metrics(&a, &a).unwrap();
        assert_abs_diff_eq!(g.d, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g.delta, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gap_errors() {
        let a = Subspace::coordinate(2, &[0]);
        let b = Subspace::coordinate(3, &[1]);
        assert!(matches!(gap_metrics(&a, &b), Err(GrassmannError::DimensionMismatch(_, _))));
        let z = Subspace::zero(2);
        assert!(matches!(gap_metrics(&a, &z), Err(GrassmannError::Degenerate)));
    }

    #[test]
    fn gap_closed_form_agrees_with_sphere_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..6 {
            let a = random_subspace(&mut rng, 5, 2);
            let b = random_subspace(&mut rng, 5, 3);
            let g = gap_metrics(&a, &b).unwrap();
            let (d, delta, alpha) = gap_by_sphere_search(&a, &b, &mut rng);
            assert_abs_diff_eq!(g.d, d, epsilon = 1e-6);
            assert_abs_diff_eq!(g.delta, delta, epsilon = 1e-6);
            assert_abs_diff_eq!(g.alpha, alpha, epsilon = 1e-6);
            assert!(g.alpha <= g.delta + 1e-12 && g.delta <= g.d + 1e-12 && g.d <= 2.0 * g.delta + 1e-12);
        }
    }

    #[test]
    fn projection_diagonal() {
        let p = projection_from_pair(&Subspace::coordinate(2, &[0]), &Subspace::coordinate(2, &[1])).unwrap();
        assert_relative_eq!(p.matrix, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn projection_oblique() {
        // range e1, kernel span{(1,1)}: P(x,y) = (x−y, 0), ‖P‖ = √2, α = 1/√2
        let range = Subspace::coordinate(2, &[0]);
        let kernel = Subspace::from_vectors(&[dvector![1.0, 1.0]]).unwrap();
        let p = projection_from_pair(&range, &kernel).unwrap();
        assert_relative_eq!(
            p.matrix,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 0.0]),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(p.norm(), 2.0f64.sqrt(), epsilon = 1e-12);
        let alpha = gap_metrics(&range, &kernel).unwrap().alpha;
        assert_abs_diff_eq!(p.norm() * alpha, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn projection_not_complementary() {
        let e1 = Subspace::coordinate(2, &[0]);
        assert!(matches!(
            projection_from_pair(&e1, &e1),
            Err(GrassmannError::NotComplementary)
        ));
    }

    #[test]
    fn projection_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let range = random_subspace(&mut rng, 5, 2);
            let kernel = random_subspace(&mut rng, 5, 3);
            let Ok(p) = projection_from_pair(&range, &kernel) else { continue };
            let idem = op_norm(&(&p.matrix * &p.matrix - &p.matrix));
            assert!(idem <= 1e-10 * p.norm().max(1.0), "idempotence, got {idem}");
            assert!(op_norm(&(&p.matrix * range.basis() - range.basis())) <= 1e-9);
            assert!(op_norm(&(&p.matrix * kernel.basis())) <= 1e-9);
        }
    }

    #[test]
    fn chart_identity_and_slope() {
        let base = Subspace::coordinate(2, &[0]);
        let trans = Subspace::coordinate(2, &[1]);
        let f = graph_chart(&base, &trans, &base).unwrap();
        assert_abs_diff_eq!(f.norm(), 0.0, epsilon = 1e-12);
        for t in [-0.4, 0.3, 1.7] {
            let target = Subspace::from_vectors(&[dvector![1.0, t]]).unwrap();
            let f = graph_chart(&base, &trans, &target).unwrap();
            assert_abs_diff_eq!(f.map[(0, 0)], t, epsilon = 1e-12);
        }
    }

    #[test]
    fn chart_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = Subspace::coordinate(5, &[0, 1]);
        let trans = Subspace::coordinate(5, &[2, 3, 4]);
        let alpha = gap_metrics(&base, &trans).unwrap().alpha;
        for _ in 0..30 {
            let f = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0) * alpha / 4.0);
            let chart = GraphChart { base: base.clone(), transversal: trans.clone(), map: f.clone() };
            let graph = graph_chart_inverse(&chart).unwrap();
            let back = graph_chart(&base, &trans, &graph).unwrap();
            assert_relative_eq!(back.map, f, epsilon = 1e-10);
        }
    }

    #[test]
    fn chart_rejects_non_transversal_target() {
        let base = Subspace::coordinate(2, &[0]);
        let trans = Subspace::coordinate(2, &[1]);
        assert!(matches!(
            graph_chart(&base, &trans, &trans),
            Err(GrassmannError::NotTransversal)
        ));
    }

    #[test]
    fn complement_within_examples() {
        let e1 = Subspace::coordinate(2, &[0]);
        let full = Subspace::coordinate(2, &[0, 1]);
        let c = complement_within(&e1, &full).unwrap();
        assert_abs_diff_eq!(gap_metrics(&c, &Subspace::coordinate(2, &[1])).unwrap().dhat, 0.0, epsilon = 1e-12);

        let sub = Subspace::from_vectors(&[dvector![1.0, 1.0, 0.0] / 2.0f64.sqrt()]).unwrap();
        let amb = Subspace::coordinate(3, &[0, 1]);
        let c = complement_within(&sub, &amb).unwrap();
        let expect = Subspace::from_vectors(&[dvector![1.0, -1.0, 0.0] / 2.0f64.sqrt()]).unwrap();
        assert_abs_diff_eq!(gap_metrics(&c, &expect).unwrap().dhat, 0.0, epsilon = 1e-10);

        let trivial = complement_within(&amb, &amb).unwrap();
        assert_eq!(trivial.dim(), 0);

        let outside = Subspace::coordinate(3, &[2]);
        assert!(matches!(
            complement_within(&outside, &amb),
            Err(GrassmannError::NotContained)
        ));
    }

    #[test]
    fn alpha_projection_identity_random() {
        // Lemma-style identity α(a,b)·‖Π_b(a)‖ = 1 on random complementary pairs
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut done = 0;
        while done < 60 {
            let a = random_subspace(&mut rng, 6, 3);
            let b = random_subspace(&mut rng, 6, 3);
            let Ok(p) = projection_from_pair(&a, &b) else { continue };
            let alpha = gap_metrics(&a, &b).unwrap().alpha;
            assert!((alpha * p.norm() - 1.0).abs() <= 1e-5);
            done += 1;
        }
    }

    #[test]
    fn projection_difference_bounds_range_gap() {
        // d̂(R(Π₁), R(Π₂)) ≤ 2‖Π₁−Π₂‖ for nearby projections
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut done = 0;
        while done < 40 {
            let a = random_subspace(&mut rng, 6, 2);
            let b = random_subspace(&mut rng, 6, 4);
            let Ok(p1) = projection_from_pair(&a, &b) else { continue };
            // perturb the range slightly to get a second projection
            let a2basis = a.basis() + DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-0.02..0.02));
            let Ok(a2) = Subspace::new(a2basis) else { continue };
            let Ok(p2) = projection_from_pair(&a2, &b) else { continue };
            let diff = op_norm(&(&p1.matrix - &p2.matrix));
            if diff > 0.3 {
                continue;
            }
            let dhat = dhat_of_ranges(&p1.matrix, &p2.matrix).unwrap();
            assert!(dhat <= 2.0 * diff + 1e-8, "dhat {dhat} vs 2‖ΔΠ‖ {}", 2.0 * diff);
            done += 1;
        }
    }

    #[test]
    fn perturbation_norm_bound() {
        // ‖Π_{X₂}(X₃)‖ ≤ ‖Π_{X₂}(X₁)‖ / (1 − ‖Π_{X₂}(X₁)‖ d(X₃,X₁)) on
        // sampled triples satisfying the hypothesis
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut done = 0;
        while done < 40 {
            let x1 = random_subspace(&mut rng, 6, 3);
            let x2 = random_subspace(&mut rng, 6, 3);
            let Ok(p12) = projection_from_pair(&x1, &x2) else { continue };
            let x3basis = x1.basis() + DMatrix::from_fn(6, 3, |_, _| rng.gen_range(-0.01..0.01));
            let Ok(x3) = Subspace::new(x3basis) else { continue };
            let g = gap_metrics(&x3, &x1).unwrap();
            if g.dhat >= 1.0 / p12.norm() {
                continue;
            }
            let Ok(p32) = projection_from_pair(&x3, &x2) else { continue };
            let bound = p12.norm() / (1.0 - p12.norm() * g.d);
            assert!(p32.norm() <= bound + 1e-6, "{} vs {}", p32.norm(), bound);
            done += 1;
        }
    }

    #[test]
    fn alpha_symmetry_inequalities() {
        // α(a,b) ≤ 2α(b,a) and α(a,b)⁻¹ ≤ 1 + α(b,a)⁻¹ on random samples
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..60 {
            let a = random_subspace(&mut rng, 6, 2);
            let b = random_subspace(&mut rng, 6, 2);
            let ab = gap_metrics(&a, &b).unwrap().alpha;
            let ba = gap_metrics(&b, &a).unwrap().alpha;
            if ab == 0.0 || ba == 0.0 {
                continue;
            }
            assert!(ab <= 2.0 * ba + 1e-12);
            assert!(1.0 / ab <= 1.0 + 1.0 / ba + 1e-9);
        }
    }
}
