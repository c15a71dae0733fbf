//! Polynomial perturbations of linear maps around a fixed point, and the
//! power-series oracle solving the formal invariance equation order by order.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::atlas::{build_base_sample, AtlasSpec, Splitting};
use crate::conditions::{ab_from_additive_lipschitz, AbConstants};
use crate::correspondence::{pair_lipschitz, BlockMap, CorrespondenceHandle, JacFn2, VecFn2};
use crate::graph_transform::TransformMode;

use super::{GroundTruth, LocalDynamics, LocalPair, SystemError, SystemSpec};

/// One monomial term: coefficient vector times ∏ xᵢ^{expsᵢ} over the ambient
/// coordinates.
#[derive(Debug, Clone)]
pub struct Monomial {
    pub coef: DVector<f64>,
    pub exps: Vec<u32>,
}

/// linear + polynomial map on R^n (ambient coordinates [center|stable|unstable]).
#[derive(Debug, Clone)]
pub struct PolyMap {
    pub linear: DMatrix<f64>,
    pub monomials: Vec<Monomial>,
}

impl PolyMap {
    pub fn dim(&self) -> usize {
        self.linear.nrows()
    }

    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.linear * z;
        for m in &self.monomials {
            let mut v = 1.0;
            for (i, &e) in m.exps.iter().enumerate() {
                v *= z[i].powi(e as i32);
            }
            out += v * &m.coef;
        }
        out
    }

    pub fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = self.linear.clone();
        for m in &self.monomials {
            for j in 0..self.dim() {
                let e = m.exps[j];
                if e == 0 {
                    continue;
                }
                let mut v = e as f64 * z[j].powi(e as i32 - 1);
                for (i, &ei) in m.exps.iter().enumerate() {
                    if i != j {
                        v *= z[i].powi(ei as i32);
                    }
                }
                for r in 0..self.dim() {
                    jac[(r, j)] += v * m.coef[r];
                }
            }
        }
        jac
    }
}

struct PolyDynamics {
    map: PolyMap,
    handle_cs: CorrespondenceHandle,
    handle_scu: Option<CorrespondenceHandle>,
}

impl LocalDynamics for PolyDynamics {
    fn pair_cs(&self, param: &DVector<f64>) -> LocalPair {
        LocalPair {
            pair: self.handle_cs.pair.clone(),
            source_param: param.clone(),
            target_param: param.clone(),
        }
    }

    fn pair_scu(&self, param: &DVector<f64>) -> Option<LocalPair> {
        self.handle_scu.as_ref().map(|h| LocalPair {
            pair: h.pair.clone(),
            source_param: param.clone(),
            target_param: param.clone(),
        })
    }

    fn ambient_map(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.map.eval(z))
    }
}

/// Block map view of the polynomial map for a given coordinate partition
/// (x-slot indices, z-slot indices).
fn poly_block_map(map: PolyMap, x_idx: Vec<usize>, z_idx: Vec<usize>) -> BlockMap {
    let dim_x = x_idx.len();
    let dim_z = z_idx.len();
    let m1 = map.clone();
    let (xi1, zi1) = (x_idx.clone(), z_idx.clone());
    let fg: VecFn2 = Arc::new(move |x, y| {
        let mut amb = DVector::zeros(m1.dim());
        for (k, &i) in xi1.iter().enumerate() {
            amb[i] = x[k];
        }
        for (k, &i) in zi1.iter().enumerate() {
            amb[i] = y[k];
        }
        let img = m1.eval(&amb);
        let mut out = DVector::zeros(dim_x + dim_z);
        for (k, &i) in xi1.iter().enumerate() {
            out[k] = img[i];
        }
        for (k, &i) in zi1.iter().enumerate() {
            out[dim_x + k] = img[i];
        }
        out
    });
    let m2 = map;
    let (xi2, zi2) = (x_idx, z_idx);
    let jac: JacFn2 = Arc::new(move |x, y| {
        let mut amb = DVector::zeros(m2.dim());
        for (k, &i) in xi2.iter().enumerate() {
            amb[i] = x[k];
        }
        for (k, &i) in zi2.iter().enumerate() {
            amb[i] = y[k];
        }
        let full = m2.jacobian(&amb);
        let rows: Vec<usize> = xi2.iter().chain(zi2.iter()).copied().collect();
        let mut dx = DMatrix::zeros(dim_x + dim_z, dim_x);
        let mut dz = DMatrix::zeros(dim_x + dim_z, dim_z);
        for (r, &i) in rows.iter().enumerate() {
            for (c, &j) in xi2.iter().enumerate() {
                dx[(r, c)] = full[(i, j)];
            }
            for (c, &j) in zi2.iter().enumerate() {
                dz[(r, c)] = full[(i, j)];
            }
        }
        (dx, dz)
    });
    BlockMap { fg, jac: Some(jac), dim_x, dim_z }
}

/// Polynomial system around the fixed point 0: the generating pair is built
/// by the map → pair conversion (Newton inner solves), the series oracle is
/// attached as ground truth when the blocks are scalar.
pub fn poly_perturbed_system(
    map: PolyMap,
    d_c: usize,
    d_s: usize,
    d_u: usize,
    radius: f64,
) -> Result<SystemSpec, SystemError> {
    let n = map.dim();
    if d_c + d_s + d_u != n {
        return Err(SystemError::InvalidParams("block dims must fill the ambient space".into()));
    }
    for m in &map.monomials {
        if m.exps.len() != n || m.coef.len() != n {
            return Err(SystemError::InvalidParams("monomial shape mismatch".into()));
        }
        if m.exps.iter().sum::<u32>() < 2 {
            return Err(SystemError::InvalidParams(
                "perturbation monomials must vanish to second order at 0".into(),
            ));
        }
    }
    let cs_idx: Vec<usize> = (0..d_c + d_s).collect();
    let u_idx: Vec<usize> = (d_c + d_s..n).collect();
    let bm = poly_block_map(map.clone(), cs_idx.clone(), u_idx.clone());
    let (handle_cs, report) =
        CorrespondenceHandle::from_block_map(bm, (radius, radius), (d_c + d_s, d_u))?;
    let s_idx: Vec<usize> = (d_c..d_c + d_s).collect();
    let cu_idx: Vec<usize> = (0..d_c).chain(d_c + d_s..n).collect();
    let handle_scu = CorrespondenceHandle::from_block_map(
        poly_block_map(map.clone(), s_idx, cu_idx),
        (radius, radius),
        (d_s, d_c + d_u),
    )
    .ok()
    .map(|(h, _)| h);

    let from_lips = |lf_x: f64, lf_z: f64, lg_x: f64, lg_z: f64| {
        match ab_from_additive_lipschitz(lf_z, lg_x, lf_x, lg_z, 1.0) {
            Ok(c) => c,
            Err(_) => {
                let mut c = AbConstants::uniform(lf_z, lg_x, lf_x, lg_z);
                c.alpha_prime = lf_z;
                c.beta_prime = lg_x;
                c
            }
        }
    };
    let constants = from_lips(report.lip_f_x, report.lip_f_z, report.lip_g_x, report.lip_g_z);
    let constants_scu = handle_scu.as_ref().map(|h| {
        let (lf_x, lf_z, lg_x, lg_z) = pair_lipschitz(&h.pair);
        from_lips(lf_x, lf_z, lg_x, lg_z)
    });

    let split = Splitting::new(
        coord_block(n, 0, d_c),
        DMatrix::zeros(n, 0),
        coord_block(n, d_c, d_s),
        coord_block(n, d_c + d_s, d_u),
    )?;
    let (atlas, _) = build_base_sample(AtlasSpec::Point { point: DVector::zeros(n), split })?;

    // series oracle as ground truth for scalar blocks
    let ground_truth = if d_c == 0 && d_s == 1 && d_u == 1 {
        taylor_oracle(&map, GraphSide::Cs, 12).ok().map(|oracle| {
            let coeffs = oracle.coefficients.clone();
            GroundTruth {
                section: Arc::new(move |_p: &DVector<f64>, cs: &DVector<f64>| {
                    DVector::from_vec(vec![eval_series(&coeffs, cs[0])])
                }),
                label: "power-series oracle".into(),
            }
        })
    } else {
        None
    };

    Ok(SystemSpec {
        label: "poly".into(),
        atlas,
        dynamics: Arc::new(PolyDynamics { map, handle_cs, handle_scu }),
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

fn coord_block(n: usize, start: usize, len: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, len);
    for j in 0..len {
        m[(start + j, j)] = 1.0;
    }
    m
}

/// Which invariant graph the oracle solves for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphSide {
    /// y = h(x): the graph over the (center-)stable coordinate
    Cs,
    /// x = σ(y): the graph over the unstable coordinate
    Cu,
}

/// Power-series solution of the scalar invariance equation, with the
/// residual of the recomposed equation per computed order.
#[derive(Debug, Clone)]
pub struct SeriesOracle {
    /// coefficients c₀..c_order of the graph (c₀ = c₁ = 0)
    pub coefficients: Vec<f64>,
    pub residual: f64,
}

pub fn eval_series(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

// truncated univariate polynomial helpers (index = power)
fn poly_mul(a: &[f64], b: &[f64], order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 || i > order {
            continue;
        }
        for (j, &bj) in b.iter().enumerate() {
            if i + j > order {
                break;
            }
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_pow(a: &[f64], e: u32, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    out[0] = 1.0;
    for _ in 0..e {
        out = poly_mul(&out, a, order);
    }
    out
}

/// Compose a bivariate polynomial map component with (x, h(x)) as truncated
/// series in x. `component` selects the ambient output coordinate.
fn compose_component(
    map: &PolyMap,
    component: usize,
    x_series: &[f64],
    y_series: &[f64],
    x_coord: usize,
    y_coord: usize,
    order: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    // linear part
    let lin = &map.linear;
    for (k, s) in [(x_coord, x_series), (y_coord, y_series)] {
        let c = lin[(component, k)];
        if c != 0.0 {
            for (i, &si) in s.iter().enumerate() {
                if i <= order {
                    out[i] += c * si;
                }
            }
        }
    }
    for m in &map.monomials {
        let c = m.coef[component];
        if c == 0.0 {
            continue;
        }
        let term = poly_mul(
            &poly_pow(x_series, m.exps[x_coord], order),
            &poly_pow(y_series, m.exps[y_coord], order),
            order,
        );
        for (i, &ti) in term.iter().enumerate() {
            out[i] += c * ti;
        }
    }
    out
}

/// Solve the formal invariance equation of a scalar 2-d polynomial map
/// (coordinates: x stable-side, y unstable-side) order by order.
///
/// Cs side: q(x,h(x)) = h(p(x,h(x))); Cu side: the same with roles swapped.
/// Resonances λ_cs^k = λ_u abort with the resonant index.
pub fn taylor_oracle(
    map: &PolyMap,
    side: GraphSide,
    order: usize,
) -> Result<SeriesOracle, SystemError> {
    if map.dim() != 2 {
        return Err(SystemError::InvalidParams("series oracle needs scalar blocks (R²)".into()));
    }
    if order > 12 {
        return Err(SystemError::InvalidParams("series order capped at 12".into()));
    }
    // coordinates: 0 = graph base, 1 = graph value
    let (xc, yc) = match side {
        GraphSide::Cs => (0usize, 1usize),
        GraphSide::Cu => (1usize, 0usize),
    };
    let lam_base = map.linear[(xc, xc)];
    let lam_val = map.linear[(yc, yc)];
    // the graph must be tangent to the base axis: no linear value ← base term
    if map.linear[(yc, xc)].abs() > 1e-14 {
        return Err(SystemError::InvalidParams(
            "series oracle needs no linear coupling from the base into the value coordinate".into(),
        ));
    }
    let mut h = vec![0.0; order + 1]; // h(x) = Σ_{k≥2} c_k x^k
    for k in 2..=order {
        // residual of the invariance equation with coefficients below k
        let x_series = {
            let mut s = vec![0.0; order + 1];
            s[1] = 1.0;
            s
        };
        let image_base = compose_component(map, xc, &x_series, &h, xc, yc, order);
        let image_val = compose_component(map, yc, &x_series, &h, xc, yc, order);
        // h(image_base): substitute the series
        let mut h_of_image = vec![0.0; order + 1];
        for (i, &ci) in h.iter().enumerate() {
            if ci == 0.0 {
                continue;
            }
            let p = poly_pow(&image_base, i as u32, order);
            for (j, &pj) in p.iter().enumerate() {
                h_of_image[j] += ci * pj;
            }
        }
        // order-k balance: lam_val·c_k + rhs_k = c_k·lam_base^k + known_k
        let denom = lam_val - lam_base.powi(k as i32);
        if denom.abs() < 1e-12 {
            return Err(SystemError::Resonance(vec![k as u32]));
        }
        let defect = image_val[k] - h_of_image[k];
        // both sides currently exclude c_k; adding c_k contributes
        // lam_val·c_k to image_val[k] and lam_base^k·c_k to h_of_image[k]
        h[k] = -defect / denom;
    }
    // recomposed residual per order
    let x_series = {
        let mut s = vec![0.0; order + 1];
        s[1] = 1.0;
        s
    };
    let image_base = compose_component(map, xc, &x_series, &h, xc, yc, order);
    let image_val = compose_component(map, yc, &x_series, &h, xc, yc, order);
    let mut h_of_image = vec![0.0; order + 1];
    for (i, &ci) in h.iter().enumerate() {
        if ci == 0.0 {
            continue;
        }
        let p = poly_pow(&image_base, i as u32, order);
        for (j, &pj) in p.iter().enumerate() {
            h_of_image[j] += ci * pj;
        }
    }
    let residual = image_val
        .iter()
        .zip(h_of_image.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    Ok(SeriesOracle { coefficients: h, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;

    fn quadratic_cs_map() -> PolyMap {
        // (x,y) ↦ (0.5x, 2y + x²)
        PolyMap {
            linear: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            monomials: vec![Monomial { coef: dvector![0.0, 1.0], exps: vec![2, 0] }],
        }
    }

    #[test]
    fn oracle_recovers_minus_four_sevenths() {
        let oracle = taylor_oracle(&quadratic_cs_map(), GraphSide::Cs, 12).unwrap();
        assert_abs_diff_eq!(oracle.coefficients[2], -4.0 / 7.0, epsilon = 1e-14);
        for k in (3..=12).chain(0..=1) {
            assert_abs_diff_eq!(oracle.coefficients[k], 0.0, epsilon = 1e-13);
        }
        assert!(oracle.residual <= 1e-12);
    }

    #[test]
    fn oracle_unstable_side() {
        // (x,y) ↦ (0.5x + y², 2y): x = σ(y) with 4c₂ = 0.5c₂ + 1 ⟹ c₂ = 2/7
        let map = PolyMap {
            linear: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            monomials: vec![Monomial { coef: dvector![1.0, 0.0], exps: vec![0, 2] }],
        };
        let oracle = taylor_oracle(&map, GraphSide::Cu, 8).unwrap();
        assert_abs_diff_eq!(oracle.coefficients[2], 2.0 / 7.0, epsilon = 1e-14);
        assert!(oracle.residual <= 1e-12);
    }

    #[test]
    fn oracle_zero_for_linear() {
        let map = PolyMap {
            linear: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]),
            monomials: vec![],
        };
        let oracle = taylor_oracle(&map, GraphSide::Cs, 10).unwrap();
        assert!(oracle.coefficients.iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn oracle_detects_resonance() {
        // λ_cs = 0.5, λ_u = 0.25 = λ_cs²: resonance at k = 2
        let map = PolyMap {
            linear: DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]),
            monomials: vec![Monomial { coef: dvector![0.0, 1.0], exps: vec![2, 0] }],
        };
        match taylor_oracle(&map, GraphSide::Cs, 6) {
            Err(SystemError::Resonance(idx)) => assert_eq!(idx, vec![2]),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    #[test]
    fn poly_system_ground_truth_matches_oracle() {
        let sys = poly_perturbed_system(quadratic_cs_map(), 0, 1, 1, 0.4).unwrap();
        let gt = sys.ground_truth.as_ref().expect("series oracle attached");
        let v = (gt.section)(&DVector::zeros(0), &dvector![0.1]);
        assert_abs_diff_eq!(v[0], -4.0 / 7.0 * 0.01, epsilon = 1e-12);
        // the attached section satisfies the membership residual
        let lp = sys.dynamics.pair_cs(&DVector::zeros(0));
        for x in [-0.1f64, 0.05, 0.12] {
            let xs = dvector![x];
            let y = (gt.section)(&DVector::zeros(0), &xs);
            let img = sys.dynamics.ambient_map(&dvector![x, y[0]]).unwrap();
            let r = crate::correspondence::CorrespondenceHandle::from_pair(lp.pair.clone(), "q")
                .membership_residual((&xs, &y), (&dvector![img[0]], &dvector![img[1]]));
            assert!(r <= 1e-9, "membership residual {r}");
        }
    }
}
