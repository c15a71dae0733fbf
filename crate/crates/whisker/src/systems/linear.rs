//! Linear block systems around a fixed point: exact generating pairs from
//! block inverses, analytic constants, and the eigenspace oracle for the
//! invariant graph.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::atlas::{build_base_sample, AtlasSpec, Splitting};
use crate::conditions::{ab_from_additive_lipschitz, AbConstants};
use crate::correspondence::{GeneratingPair, JacFn2, VecFn2};
use crate::graph_transform::TransformMode;
use crate::grassmann::{graph_chart, Subspace};
use crate::linalg::op_norm;

use super::{GroundTruth, LocalDynamics, LocalPair, SystemError, SystemSpec};

/// Exact generating pair of a linear map split as x-slot/z-slot blocks:
/// G(x,z) = A_zz⁻¹(z − A_zx x), F(x,z) = A_xx x + A_xz G(x,z).
pub fn linear_generating_pair(
    a_xx: DMatrix<f64>,
    a_xz: DMatrix<f64>,
    a_zx: DMatrix<f64>,
    a_zz: DMatrix<f64>,
    radii: (f64, f64),
) -> Result<GeneratingPair, SystemError> {
    let dim_x = a_xx.nrows();
    let dim_z = a_zz.nrows();
    let a_zz_inv = a_zz
        .clone()
        .try_inverse()
        .ok_or_else(|| SystemError::InvalidParams("unstable block is singular".into()))?;
    let g_x = -(&a_zz_inv) * &a_zx; // D₁G
    let g_z = a_zz_inv.clone(); // D₂G
    let f_x = &a_xx + &a_xz * &g_x; // D₁F
    let f_z = &a_xz * &a_zz_inv; // D₂F
    let (gx2, gz2) = (g_x.clone(), g_z.clone());
    let g: VecFn2 = Arc::new(move |x, z| &gx2 * x + &gz2 * z);
    let (fx2, fz2) = (f_x.clone(), f_z.clone());
    let f: VecFn2 = Arc::new(move |x, z| &fx2 * x + &fz2 * z);
    let fj: JacFn2 = Arc::new(move |_, _| (f_x.clone(), f_z.clone()));
    let gj: JacFn2 = Arc::new(move |_, _| (g_x.clone(), g_z.clone()));
    Ok(GeneratingPair::new(f, g, radii, (dim_x, dim_z)).with_jacobians(fj, gj))
}

struct LinearDynamics {
    matrix: DMatrix<f64>,
    d_c: usize,
    d_s: usize,
    d_u: usize,
    radii: (f64, f64),
}

impl LinearDynamics {
    fn blocks(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.matrix[(rows[i], cols[j])])
    }

    fn index_sets(&self) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let c: Vec<usize> = (0..self.d_c).collect();
        let s: Vec<usize> = (self.d_c..self.d_c + self.d_s).collect();
        let u: Vec<usize> = (self.d_c + self.d_s..self.d_c + self.d_s + self.d_u).collect();
        (c, s, u)
    }
}

impl LocalDynamics for LinearDynamics {
    fn pair_cs(&self, param: &DVector<f64>) -> LocalPair {
        let (c, s, u) = self.index_sets();
        let cs: Vec<usize> = c.iter().chain(s.iter()).copied().collect();
        let pair = linear_generating_pair(
            self.blocks(&cs, &cs),
            self.blocks(&cs, &u),
            self.blocks(&u, &cs),
            self.blocks(&u, &u),
            self.radii,
        )
        .expect("u-block certified at construction");
        LocalPair { pair, source_param: param.clone(), target_param: param.clone() }
    }

    fn pair_scu(&self, param: &DVector<f64>) -> Option<LocalPair> {
        let (c, s, u) = self.index_sets();
        let cu: Vec<usize> = c.iter().chain(u.iter()).copied().collect();
        let pair = linear_generating_pair(
            self.blocks(&s, &s),
            self.blocks(&s, &cu),
            self.blocks(&cu, &s),
            self.blocks(&cu, &cu),
            self.radii,
        )
        .ok()?;
        Some(LocalPair { pair, source_param: param.clone(), target_param: param.clone() })
    }

    fn ambient_map(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        Some(&self.matrix * z)
    }
}

/// Linear block system around the fixed point 0 with ambient coordinates
/// ordered [center | stable | unstable]: A = blockdiag(a_c, a_s, a_u) +
/// coupling. Constants come from `ab_from_additive_lipschitz` applied to the
/// exact block Lipschitz data; when its preconditions fail the system is
/// constructed anyway with the raw measured data (predicates will report).
pub fn linear_block_system(
    a_c: DMatrix<f64>,
    a_s: DMatrix<f64>,
    a_u: DMatrix<f64>,
    coupling: DMatrix<f64>,
    radii: (f64, f64),
) -> Result<SystemSpec, SystemError> {
    let (d_c, d_s, d_u) = (a_c.nrows(), a_s.nrows(), a_u.nrows());
    let n = d_c + d_s + d_u;
    if coupling.nrows() != n || coupling.ncols() != n {
        return Err(SystemError::InvalidParams(format!(
            "coupling must be {n}×{n}"
        )));
    }
    let mut matrix = coupling.clone();
    matrix.view_mut((0, 0), (d_c, d_c)).copy_from(&a_c);
    matrix.view_mut((d_c, d_c), (d_s, d_s)).copy_from(&a_s);
    matrix.view_mut((d_c + d_s, d_c + d_s), (d_u, d_u)).copy_from(&a_u);

    let split = Splitting::new(
        block_cols(n, 0, d_c),
        DMatrix::zeros(n, 0),
        block_cols(n, d_c, d_s),
        block_cols(n, d_c + d_s, d_u),
    )?;
    let (atlas, _report) =
        build_base_sample(AtlasSpec::Point { point: DVector::zeros(n), split })?;

    let dynamics = LinearDynamics { matrix: matrix.clone(), d_c, d_s, d_u, radii };
    let probe = dynamics.pair_cs(&DVector::zeros(0));
    let (d1f, d2f) = probe.pair.df(&DVector::zeros(d_c + d_s), &DVector::zeros(d_u));
    let (d1g, d2g) = probe.pair.dg(&DVector::zeros(d_c + d_s), &DVector::zeros(d_u));
    let (lf_x, lf_z, lg_x, lg_z) = (op_norm(&d1f), op_norm(&d2f), op_norm(&d1g), op_norm(&d2g));
    let constants = match ab_from_additive_lipschitz(lf_z, lg_x, lf_x, lg_z, 1.0) {
        Ok(c) => c,
        Err(_) => {
            // keep the raw data; the predicates will fail loudly downstream
            let mut c = AbConstants::uniform(lf_z, lg_x, lf_x, lg_z);
            c.alpha_prime = lf_z;
            c.beta_prime = lg_x;
            c
        }
    };
    let constants_scu = dynamics.pair_scu(&DVector::zeros(0)).map(|p| {
        let zx = DVector::zeros(p.pair.dim_x);
        let zz = DVector::zeros(p.pair.dim_z);
        let (d1f, d2f) = p.pair.df(&zx, &zz);
        let (d1g, d2g) = p.pair.dg(&zx, &zz);
        match ab_from_additive_lipschitz(op_norm(&d2f), op_norm(&d1g), op_norm(&d1f), op_norm(&d2g), 1.0)
        {
            Ok(c) => c,
            Err(_) => AbConstants::uniform(op_norm(&d2f), op_norm(&d1g), op_norm(&d1f), op_norm(&d2g)),
        }
    });

    // eigenspace oracle: the cs-invariant subspace as a graph over the
    // (coupled) cs-block, computed by inverse iteration
    let ground_truth = invariant_graph_chart(&matrix, d_c + d_s).ok().map(|chart| {
        let map = chart.map.clone();
        GroundTruth {
            section: Arc::new(move |_param: &DVector<f64>, cs: &DVector<f64>| &map * cs),
            label: "cs-eigenspace graph chart".into(),
        }
    });

    Ok(SystemSpec {
        label: "linear_block".into(),
        atlas,
        dynamics: Arc::new(dynamics),
        constants,
        constants_scu,
        ground_truth,
        preferred_mode: if d_c == 0 {
            TransformMode::StrictlyInflowing
        } else {
            TransformMode::Invariant
        },
    })
}

fn block_cols(n: usize, start: usize, len: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, len);
    for j in 0..len {
        m[(start + j, j)] = 1.0;
    }
    m
}

/// Invariant-subspace oracle: eigenvalues by `complex_eigenvalues`, real
/// eigenvectors by shifted inverse iteration, the d_cs of smallest modulus
/// spanning the cs-space; returned as the graph chart over the coordinate
/// splitting. Fails on complex or clustered spectra.
pub fn invariant_graph_chart(
    a: &DMatrix<f64>,
    d_cs: usize,
) -> Result<crate::grassmann::GraphChart, SystemError> {
    let n = a.nrows();
    let eigs = a.complex_eigenvalues();
    let mut lambdas: Vec<f64> = Vec::with_capacity(n);
    for e in eigs.iter() {
        if e.im.abs() > 1e-9 * (1.0 + e.re.abs()) {
            return Err(SystemError::InvalidParams(
                "eigenspace oracle needs a real spectrum".into(),
            ));
        }
        lambdas.push(e.re);
    }
    lambdas.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
    let mut vectors: Vec<(f64, DVector<f64>)> = Vec::with_capacity(d_cs);
    for (idx, &lam) in lambdas.iter().take(d_cs).enumerate() {
        let shifted = a - DMatrix::from_diagonal_element(n, n, lam + 1e-9);
        let lu = shifted.lu();
        let mut v = DVector::from_fn(n, |i, _| 1.0 + (i + idx) as f64 * 0.37);
        v /= v.norm();
        // deflate against previously found vectors of the same eigenvalue so
        // multiple eigenvalues yield independent directions
        let peers: Vec<&DVector<f64>> = vectors
            .iter()
            .filter(|(l, _)| (l - lam).abs() <= 1e-6 * (1.0 + lam.abs()))
            .map(|(_, v)| v)
            .collect();
        for _ in 0..200 {
            let mut w = lu.solve(&v).ok_or_else(|| {
                SystemError::InvalidParams("inverse iteration hit a singular shift".into())
            })?;
            for p in &peers {
                let proj = p.dot(&w);
                w -= proj * *p;
            }
            let nw = w.norm();
            if nw == 0.0 {
                return Err(SystemError::InvalidParams("inverse iteration degenerated".into()));
            }
            let w = w / nw;
            if (&w - &v).norm().min((&w + &v).norm()) < 1e-14 {
                v = w;
                break;
            }
            v = w;
        }
        vectors.push((lam, v));
    }
    let vectors: Vec<DVector<f64>> = vectors.into_iter().map(|(_, v)| v).collect();
    let target = Subspace::from_vectors(&vectors)
        .map_err(|e| SystemError::InvalidParams(format!("eigenvectors degenerate: {e}")))?;
    let base = Subspace::coordinate(n, &(0..d_cs).collect::<Vec<_>>());
    let transversal = Subspace::coordinate(n, &(d_cs..n).collect::<Vec<_>>());
    graph_chart(&base, &transversal, &target)
        .map_err(|e| SystemError::InvalidParams(format!("eigenspace not a graph: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    #[test]
    fn diagonal_system_ground_truth_zero() {
        let sys = linear_block_system(
            DMatrix::zeros(0, 0),
            DMatrix::from_diagonal(&dvector![0.9, 0.9]),
            DMatrix::from_diagonal(&dvector![2.0]),
            DMatrix::zeros(3, 3),
            (1.0, 1.0),
        )
        .unwrap();
        let gt = sys.ground_truth.as_ref().unwrap();
        let v = (gt.section)(&DVector::zeros(0), &dvector![0.3, -0.2]);
        assert_abs_diff_eq!(v.norm(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sys.constants.lambda_u, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sys.constants.lambda_cs, 0.9, epsilon = 1e-12);
    }

    #[test]
    fn sheared_system_ground_truth_satisfies_invariance() {
        // coupling 0.05 shear from u into s
        let mut coupling = DMatrix::zeros(3, 3);
        coupling[(1, 2)] = 0.05;
        coupling[(2, 0)] = 0.03;
        let sys = linear_block_system(
            DMatrix::zeros(0, 0),
            DMatrix::from_diagonal(&dvector![0.9, 0.8]),
            DMatrix::from_diagonal(&dvector![2.0]),
            coupling,
            (1.0, 1.0),
        )
        .unwrap();
        let gt = sys.ground_truth.as_ref().unwrap();
        // invariance: A(x, σ(x)) must again lie on the graph
        let lp = sys.dynamics.pair_cs(&DVector::zeros(0));
        for xs in [dvector![0.2, 0.0], dvector![-0.1, 0.3]] {
            let y = (gt.section)(&DVector::zeros(0), &xs);
            let z = sys.dynamics.ambient_map(&dvector![xs[0], xs[1], y[0]]).unwrap();
            let image_cs = dvector![z[0], z[1]];
            let image_u = dvector![z[2]];
            let expected = (gt.section)(&DVector::zeros(0), &image_cs);
            assert_abs_diff_eq!((expected - &image_u).norm(), 0.0, epsilon = 1e-9);
            // membership through the generating pair agrees
            let r = crate::correspondence::CorrespondenceHandle::from_pair(
                lp.pair.clone(),
                "lin",
            )
            .membership_residual((&xs, &y), (&image_cs, &image_u));
            assert!(r <= 1e-10);
        }
    }

    #[test]
    fn center_rates_pass_smooth_predicate() {
        // rates (1.05 | 0.5): λ_cs·λ_u = 0.525 < 1
        let sys = linear_block_system(
            DMatrix::from_diagonal(&dvector![1.05]),
            DMatrix::from_diagonal(&dvector![0.5]),
            DMatrix::from_diagonal(&dvector![2.0]),
            DMatrix::zeros(3, 3),
            (1.0, 1.0),
        )
        .unwrap();
        let report = crate::conditions::check_hyperbolicity_predicates(
            &sys.constants,
            &crate::conditions::PredicateMode::Smooth,
        );
        assert!(report.passed, "{:?}", report.predicate_values);
        assert_abs_diff_eq!(sys.constants.lambda_cs * sys.constants.lambda_u, 0.525, epsilon = 1e-12);
    }
}
