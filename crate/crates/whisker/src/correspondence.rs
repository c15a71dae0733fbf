//! Correspondences with generating pairs.
//!
//! A correspondence H: X₁×Y₁ → X₂×Y₂ is described by a pair (F,G) with
//! (x₂,y₂) ∈ H(x₁,y₁)  ⟺  y₁ = G(x₁,y₂), x₂ = F(x₁,y₂). Maps whose
//! "unstable" block is invertible induce such pairs; duality swaps the roles
//! so unstable-direction problems become stable-direction ones.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::fd_jacobian;

pub type VecFn2 = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// Analytic Jacobian of a two-argument map: returns (D₁, D₂).
pub type JacFn2 =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) + Send + Sync>;

#[derive(Debug, Error)]
pub enum CorrespondenceError {
    #[error("u-block not invertible on ball (inner solve stalled: residual {residual:.3e} after {iterations} iterations)")]
    InnerSolveDiverged { residual: f64, iterations: usize },
    #[error("hyperbolicity hypotheses violated: {0}")]
    HypothesesViolated(String),
    #[error("composition not well posed on these radii (sampled contraction factor {0:.3})")]
    CompositionIllPosed(f64),
    #[error("dimension mismatch composing correspondences: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Maximum iterations for every inner Picard/Newton solve.
pub const INNER_MAX_ITER: usize = 200;
/// Residual target for inner solves.
pub const INNER_TOL: f64 = 1e-12;

/// The pair (F,G) generating a correspondence, with declared domain radii.
#[derive(Clone)]
pub struct GeneratingPair {
    pub f: VecFn2,
    pub g: VecFn2,
    pub f_jac: Option<JacFn2>,
    pub g_jac: Option<JacFn2>,
    pub dom_x_radius: f64,
    pub dom_z_radius: f64,
    pub dim_x: usize,
    pub dim_z: usize,
}

impl std::fmt::Debug for GeneratingPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneratingPair")
            .field("dim_x", &self.dim_x)
            .field("dim_z", &self.dim_z)
            .field("dom_x_radius", &self.dom_x_radius)
            .field("dom_z_radius", &self.dom_z_radius)
            .finish()
    }
}

impl GeneratingPair {
    pub fn new(f: VecFn2, g: VecFn2, radii: (f64, f64), dims: (usize, usize)) -> Self {
        Self {
            f,
            g,
            f_jac: None,
            g_jac: None,
            dom_x_radius: radii.0,
            dom_z_radius: radii.1,
            dim_x: dims.0,
            dim_z: dims.1,
        }
    }

    pub fn with_jacobians(mut self, f_jac: JacFn2, g_jac: JacFn2) -> Self {
        self.f_jac = Some(f_jac);
        self.g_jac = Some(g_jac);
        self
    }

    pub fn f(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, z)
    }

    pub fn g(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        (self.g)(x, z)
    }

    /// (D₁F, D₂F) at (x,z): analytic when supplied, otherwise central finite
    /// differences with step 1e-6·(1+‖point‖).
    pub fn df(&self, x: &DVector<f64>, z: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        match &self.f_jac {
            Some(j) => j(x, z),
            None => fd_pair_jacobian(&*self.f, x, z, self.dim_x),
        }
    }

    pub fn dg(&self, x: &DVector<f64>, z: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        match &self.g_jac {
            Some(j) => j(x, z),
            None => fd_pair_jacobian(&*self.g, x, z, self.dim_z),
        }
    }

    pub fn has_jacobians(&self) -> bool {
        self.f_jac.is_some() && self.g_jac.is_some()
    }

    /// Identity pair F(x,z)=x, G(x,z)=z.
    pub fn identity(dim_x: usize, dim_z: usize, radii: (f64, f64)) -> Self {
        Self::new(
            Arc::new(|x: &DVector<f64>, _: &DVector<f64>| x.clone()),
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| z.clone()),
            radii,
            (dim_x, dim_z),
        )
        .with_jacobians(
            Arc::new(|x: &DVector<f64>, z: &DVector<f64>| {
                (DMatrix::identity(x.len(), x.len()), DMatrix::zeros(x.len(), z.len()))
            }),
            Arc::new(|x: &DVector<f64>, z: &DVector<f64>| {
                (DMatrix::zeros(z.len(), x.len()), DMatrix::identity(z.len(), z.len()))
            }),
        )
    }
}

fn fd_pair_jacobian<F>(
    f: &F,
    x: &DVector<f64>,
    z: &DVector<f64>,
    out_dim: usize,
) -> (DMatrix<f64>, DMatrix<f64>)
where
    F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + ?Sized,
{
    let zc = z.clone();
    let fx = |v: &DVector<f64>| f(v, &zc);
    let xc = x.clone();
    let fz = |v: &DVector<f64>| f(&xc, v);
    (fd_jacobian(&fx, x, out_dim), fd_jacobian(&fz, z, out_dim))
}

/// A correspondence realized by a generating pair.
#[derive(Clone, Debug)]
pub struct CorrespondenceHandle {
    pub pair: GeneratingPair,
    pub label: String,
}

/// Measured constants from the map → generating-pair conversion (the
/// hypotheses the construction rests on, checked by sampling).
#[derive(Debug, Clone)]
pub struct MapConversionReport {
    /// ‖G(0,0)‖ observed (bounded by 2·C₁·η* in the construction).
    pub g_origin_norm: f64,
    /// smallest singular value of the u-block differential over the samples
    pub u_block_sigma_min: f64,
    /// sampled Lipschitz constants of the induced pair
    pub lip_f_x: f64,
    pub lip_f_z: f64,
    pub lip_g_x: f64,
    pub lip_g_z: f64,
}

impl CorrespondenceHandle {
    pub fn from_generating_maps(
        f: VecFn2,
        g: VecFn2,
        radii: (f64, f64),
        dims: (usize, usize),
    ) -> Self {
        Self {
            pair: GeneratingPair::new(f, g, radii, dims),
            label: String::new(),
        }
    }

    pub fn from_pair(pair: GeneratingPair, label: impl Into<String>) -> Self {
        Self { pair, label: label.into() }
    }

    pub fn identity(dim_x: usize, dim_z: usize, radii: (f64, f64)) -> Self {
        Self {
            pair: GeneratingPair::identity(dim_x, dim_z, radii),
            label: "identity".into(),
        }
    }

    /// Residual of the membership test (x₂,y₂) ∈ H(x₁,y₁):
    /// max(‖y₁ − G(x₁,y₂)‖, ‖x₂ − F(x₁,y₂)‖).
    pub fn membership_residual(
        &self,
        source: (&DVector<f64>, &DVector<f64>),
        target: (&DVector<f64>, &DVector<f64>),
    ) -> f64 {
        let (x1, y1) = source;
        let (x2, y2) = target;
        let ry = (y1 - self.pair.g(x1, y2)).norm();
        let rx = (x2 - self.pair.f(x1, y2)).norm();
        ry.max(rx)
    }

    /// Build the pair from a map (f_blk, g_blk): R^{dx}×R^{dz} → R^{dx}×R^{dz}
    /// by inverting the z-block: G(x,z) solves g_blk(x,G) = z (damped Newton,
    /// residual ≤ 1e-12), F(x,z) = f_blk(x,G(x,z)).
    pub fn from_block_map(
        map: BlockMap,
        radii: (f64, f64),
        dims: (usize, usize),
    ) -> Result<(Self, MapConversionReport), CorrespondenceError> {
        let (_, dim_z) = dims;
        let report = check_block_map(&map, radii, dims)?;

        let m_g = map.clone();
        let solve_y = Arc::new(move |x: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
            newton_solve_y(&m_g, x, z, dim_z).expect("inner solve inside certified domain")
        });

        let m_f = map.clone();
        let sy = solve_y.clone();
        let f: VecFn2 = Arc::new(move |x, z| m_f.apply(x, &sy(x, z)).0);
        let sy2 = solve_y.clone();
        let g: VecFn2 = Arc::new(move |x, z| sy2(x, z));

        let mut pair = GeneratingPair::new(f, g, radii, dims);
        if map.jac.is_some() {
            // chain rule through the implicit solve:
            //   G solves g(x,G)=z ⟹ D₁G = −(D_y g)⁻¹ D_x g, D₂G = (D_y g)⁻¹
            //   F = f(x,G)       ⟹ D₁F = D_x f + D_y f·D₁G, D₂F = D_y f·D₂G
            let m1 = map.clone();
            let sy3 = solve_y.clone();
            let g_jac: JacFn2 = Arc::new(move |x, z| {
                let y = sy3(x, z);
                let (_, _, dgx, dgy) = m1.jac_blocks(x, &y);
                let dgy_inv = dgy.try_inverse().expect("u-block invertible by hypothesis");
                ((-&dgy_inv) * dgx, dgy_inv)
            });
            let m2 = map.clone();
            let sy4 = solve_y.clone();
            let f_jac: JacFn2 = Arc::new(move |x, z| {
                let y = sy4(x, z);
                let (dfx, dfy, dgx, dgy) = m2.jac_blocks(x, &y);
                let dgy_inv = dgy.try_inverse().expect("u-block invertible by hypothesis");
                let d1g = (-&dgy_inv) * dgx;
                (&dfx + &dfy * &d1g, &dfy * &dgy_inv)
            });
            pair = pair.with_jacobians(f_jac, g_jac);
        }
        Ok((Self { pair, label: "from_map".into() }, report))
    }

    /// Like `from_block_map` but without the sampled hypothesis checks: for
    /// hot paths rebuilding the pair of an already-certified map family.
    pub fn from_block_map_unchecked(map: BlockMap, radii: (f64, f64), dims: (usize, usize)) -> Self {
        let (_, dim_z) = dims;
        let m_g = map.clone();
        let solve_y = Arc::new(move |x: &DVector<f64>, z: &DVector<f64>| -> DVector<f64> {
            newton_solve_y(&m_g, x, z, dim_z).expect("inner solve inside certified domain")
        });
        let m_f = map.clone();
        let sy = solve_y.clone();
        let f: VecFn2 = Arc::new(move |x, z| m_f.apply(x, &sy(x, z)).0);
        let sy2 = solve_y.clone();
        let g: VecFn2 = Arc::new(move |x, z| sy2(x, z));
        let mut pair = GeneratingPair::new(f, g, radii, dims);
        if map.jac.is_some() {
            let m1 = map.clone();
            let sy3 = solve_y.clone();
            let g_jac: JacFn2 = Arc::new(move |x, z| {
                let y = sy3(x, z);
                let (_, _, dgx, dgy) = m1.jac_blocks(x, &y);
                let dgy_inv = dgy.try_inverse().expect("u-block invertible by hypothesis");
                ((-&dgy_inv) * dgx, dgy_inv)
            });
            let m2 = map.clone();
            let sy4 = solve_y.clone();
            let f_jac: JacFn2 = Arc::new(move |x, z| {
                let y = sy4(x, z);
                let (dfx, dfy, dgx, dgy) = m2.jac_blocks(x, &y);
                let dgy_inv = dgy.try_inverse().expect("u-block invertible by hypothesis");
                let d1g = (-&dgy_inv) * dgx;
                (&dfx + &dfy * &d1g, &dfy * &dgy_inv)
            });
            pair = pair.with_jacobians(f_jac, g_jac);
        }
        Self { pair, label: "from_map".into() }
    }

    /// Composition h₂ ∘ h₁; the intermediate point is the inner fixed point
    /// y₂ = G₂(F₁(x₁,y₂), y₃), a contraction when lip F₁(x,·)·lip G₂(·,y) < 1
    /// (checked by sampling).
    pub fn compose(
        h2: &CorrespondenceHandle,
        h1: &CorrespondenceHandle,
    ) -> Result<CorrespondenceHandle, CorrespondenceError> {
        if h1.pair.dim_x != h2.pair.dim_x || h1.pair.dim_z != h2.pair.dim_z {
            return Err(CorrespondenceError::DimensionMismatch(h1.pair.dim_x, h2.pair.dim_x));
        }
        let lip_f1_z = sample_lip(&h1.pair, true, false);
        let lip_g2_x = sample_lip(&h2.pair, false, true);
        let factor = lip_f1_z * lip_g2_x;
        if factor >= 1.0 {
            return Err(CorrespondenceError::CompositionIllPosed(factor));
        }
        let p1 = h1.pair.clone();
        let p2 = h2.pair.clone();
        let dim_z = h1.pair.dim_z;
        let mid = Arc::new(move |x1: &DVector<f64>, y3: &DVector<f64>| -> DVector<f64> {
            let mut y2 = DVector::zeros(dim_z);
            for _ in 0..INNER_MAX_ITER {
                let next = p2.g(&p1.f(x1, &y2), y3);
                let delta = (&next - &y2).norm();
                y2 = next;
                if delta <= INNER_TOL {
                    break;
                }
            }
            y2
        });
        let p1f = h1.pair.clone();
        let p2f = h2.pair.clone();
        let m1 = mid.clone();
        let f: VecFn2 = Arc::new(move |x1, y3| p2f.f(&p1f.f(x1, &m1(x1, y3)), y3));
        let p1g = h1.pair.clone();
        let m2 = mid.clone();
        let g: VecFn2 = Arc::new(move |x1, y3| p1g.g(x1, &m2(x1, y3)));
        Ok(CorrespondenceHandle {
            pair: GeneratingPair::new(
                f,
                g,
                (h1.pair.dom_x_radius, h2.pair.dom_z_radius),
                (h1.pair.dim_x, h1.pair.dim_z),
            ),
            label: format!("{}∘{}", h2.label, h1.label),
        })
    }

    /// Dual correspondence: F̃(x̃,ỹ) = G(ỹ,x̃), G̃(x̃,ỹ) = F(ỹ,x̃), with the
    /// x/z roles (and radii) swapped. dual(dual(h)) ≡ h pointwise.
    pub fn dual(&self) -> CorrespondenceHandle {
        let pf = self.pair.clone();
        let pg = self.pair.clone();
        let f: VecFn2 = Arc::new(move |xt, yt| pf.g(yt, xt));
        let g: VecFn2 = Arc::new(move |xt, yt| pg.f(yt, xt));
        let mut pair = GeneratingPair::new(
            f,
            g,
            (self.pair.dom_z_radius, self.pair.dom_x_radius),
            (self.pair.dim_z, self.pair.dim_x),
        );
        if self.pair.has_jacobians() {
            let src = self.pair.clone();
            let fj: JacFn2 = Arc::new(move |xt, yt| {
                let (d1, d2) = src.dg(yt, xt);
                (d2, d1)
            });
            let src2 = self.pair.clone();
            let gj: JacFn2 = Arc::new(move |xt, yt| {
                let (d1, d2) = src2.df(yt, xt);
                (d2, d1)
            });
            pair = pair.with_jacobians(fj, gj);
        }
        CorrespondenceHandle { pair, label: format!("dual({})", self.label) }
    }

    /// Base-point shift: the pair of H(m+·) − m_target in block coordinates,
    /// with m = (m_x, m_y) and m_target = (t_x, t_y). Shifting by zero is the
    /// identity operation.
    pub fn shift(
        &self,
        m: (&DVector<f64>, &DVector<f64>),
        m_target: (&DVector<f64>, &DVector<f64>),
    ) -> CorrespondenceHandle {
        let (mx, my) = (m.0.clone(), m.1.clone());
        let (tx, ty) = (m_target.0.clone(), m_target.1.clone());
        let pf = self.pair.clone();
        let (mxf, tyf, txf) = (mx.clone(), ty.clone(), tx.clone());
        let f: VecFn2 = Arc::new(move |x, z| pf.f(&(x + &mxf), &(z + &tyf)) - &txf);
        let pg = self.pair.clone();
        let (mxg, tyg, myg) = (mx.clone(), ty.clone(), my.clone());
        let g: VecFn2 = Arc::new(move |x, z| pg.g(&(x + &mxg), &(z + &tyg)) - &myg);
        let mut pair = GeneratingPair::new(
            f,
            g,
            (self.pair.dom_x_radius, self.pair.dom_z_radius),
            (self.pair.dim_x, self.pair.dim_z),
        );
        if self.pair.has_jacobians() {
            let src = self.pair.clone();
            let (ax, az) = (mx.clone(), ty.clone());
            let fj: JacFn2 = Arc::new(move |x, z| src.df(&(x + &ax), &(z + &az)));
            let src2 = self.pair.clone();
            let gj: JacFn2 = Arc::new(move |x, z| src2.dg(&(x + &mx), &(z + &ty)));
            pair = pair.with_jacobians(fj, gj);
        }
        CorrespondenceHandle { pair, label: format!("{}@shift", self.label) }
    }
}

/// An ambient map in block coordinates (x ∈ R^{dx}, y ∈ R^{dz}) with an
/// optional analytic Jacobian in the same blocks.
#[derive(Clone)]
pub struct BlockMap {
    /// returns the concatenated image (f_blk, g_blk)
    pub fg: VecFn2,
    /// optional Jacobian: (D wrt x, D wrt y) of the stacked image
    pub jac: Option<JacFn2>,
    pub dim_x: usize,
    pub dim_z: usize,
}

impl BlockMap {
    pub fn apply(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let out = (self.fg)(x, y);
        (
            out.rows(0, self.dim_x).into_owned(),
            out.rows(self.dim_x, self.dim_z).into_owned(),
        )
    }

    /// Jacobian blocks (D_x f, D_y f, D_x g, D_y g), analytic or FD.
    pub fn jac_blocks(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (dx, dy) = match &self.jac {
            Some(j) => j(x, y),
            None => fd_pair_jacobian(&*self.fg, x, y, self.dim_x + self.dim_z),
        };
        (
            dx.rows(0, self.dim_x).into_owned(),
            dy.rows(0, self.dim_x).into_owned(),
            dx.rows(self.dim_x, self.dim_z).into_owned(),
            dy.rows(self.dim_x, self.dim_z).into_owned(),
        )
    }
}

/// Damped Newton for g_blk(x, y) = z, FD Jacobian when no analytic one.
fn newton_solve_y(
    map: &BlockMap,
    x: &DVector<f64>,
    z: &DVector<f64>,
    dim_z: usize,
) -> Result<DVector<f64>, CorrespondenceError> {
    let mut y = DVector::zeros(dim_z);
    let mut residual = f64::INFINITY;
    for _ in 0..INNER_MAX_ITER {
        let (_, gy) = map.apply(x, &y);
        let r = &gy - z;
        residual = r.norm();
        if residual <= INNER_TOL {
            return Ok(y);
        }
        let (_, _, _, dgy) = map.jac_blocks(x, &y);
        let step = crate::linalg::solve_lstsq(&dgy, &r);
        let mut t = 1.0;
        loop {
            let cand = &y - t * &step;
            let (_, gc) = map.apply(x, &cand);
            if (&gc - z).norm() < residual || t < 1e-4 {
                y = cand;
                break;
            }
            t *= 0.5;
        }
    }
    Err(CorrespondenceError::InnerSolveDiverged { residual, iterations: INNER_MAX_ITER })
}

/// Sampled Lipschitz constant of F or G in one slot over the declared balls.
fn sample_lip(pair: &GeneratingPair, of_f: bool, in_x: bool) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x11ce);
    let mut sup: f64 = 0.0;
    for _ in 0..200 {
        let x = DVector::from_fn(pair.dim_x, |_, _| rng.gen_range(-1.0..1.0) * pair.dom_x_radius);
        let z = DVector::from_fn(pair.dim_z, |_, _| rng.gen_range(-1.0..1.0) * pair.dom_z_radius);
        let (x2, z2) = if in_x {
            if pair.dim_x == 0 {
                continue;
            }
            let x2 =
                DVector::from_fn(pair.dim_x, |_, _| rng.gen_range(-1.0..1.0) * pair.dom_x_radius);
            (x2, z.clone())
        } else {
            if pair.dim_z == 0 {
                continue;
            }
            let z2 =
                DVector::from_fn(pair.dim_z, |_, _| rng.gen_range(-1.0..1.0) * pair.dom_z_radius);
            (x.clone(), z2)
        };
        let denom = ((&x2 - &x).norm_squared() + (&z2 - &z).norm_squared()).sqrt();
        if denom < 1e-12 {
            continue;
        }
        let (a, b) = if of_f {
            (pair.f(&x, &z), pair.f(&x2, &z2))
        } else {
            (pair.g(&x, &z), pair.g(&x2, &z2))
        };
        sup = sup.max((&b - &a).norm() / denom);
    }
    sup
}

/// Sampled Lipschitz constants (lip F(·,z), lip F(x,·), lip G(·,z), lip G(x,·)).
pub fn pair_lipschitz(pair: &GeneratingPair) -> (f64, f64, f64, f64) {
    (
        sample_lip(pair, true, true),
        sample_lip(pair, true, false),
        sample_lip(pair, false, true),
        sample_lip(pair, false, false),
    )
}

/// Sampled checks behind `from_block_map`: invertibility of the u-block on
/// the ball, then the measured constants of the induced pair.
fn check_block_map(
    map: &BlockMap,
    radii: (f64, f64),
    dims: (usize, usize),
) -> Result<MapConversionReport, CorrespondenceError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xab);
    let (dim_x, dim_z) = dims;
    let mut sig_min = f64::INFINITY;
    for _ in 0..64 {
        let x = DVector::from_fn(dim_x, |_, _| rng.gen_range(-1.0..1.0) * radii.0);
        let y = DVector::from_fn(dim_z, |_, _| rng.gen_range(-1.0..1.0) * radii.1);
        let (_, _, _, dgy) = map.jac_blocks(&x, &y);
        sig_min = sig_min.min(crate::linalg::sigma_min(&dgy));
    }
    if sig_min <= 1e-8 {
        return Err(CorrespondenceError::HypothesesViolated(format!(
            "σ_min(D_y g) = {sig_min:.3e} ≤ 1e-8 on the declared ball"
        )));
    }
    // solvability of g(x,·) = z across the declared ball, before any closure
    // is allowed to rely on it
    for _ in 0..64 {
        let x = DVector::from_fn(dim_x, |_, _| rng.gen_range(-1.0..1.0) * radii.0);
        let z = DVector::from_fn(dim_z, |_, _| rng.gen_range(-1.0..1.0) * radii.1);
        newton_solve_y(map, &x, &z, dim_z)?;
    }
    let g0 = newton_solve_y(map, &DVector::zeros(dim_x), &DVector::zeros(dim_z), dim_z)?;
    let probe = {
        let m = map.clone();
        let g: VecFn2 =
            Arc::new(move |x, z| newton_solve_y(&m, x, z, dim_z).expect("certified above"));
        let m2 = map.clone();
        let g2 = g.clone();
        let f: VecFn2 = Arc::new(move |x, z| m2.apply(x, &g2(x, z)).0);
        GeneratingPair::new(f, g, radii, dims)
    };
    let (lip_f_x, lip_f_z, lip_g_x, lip_g_z) = pair_lipschitz(&probe);
    Ok(MapConversionReport {
        g_origin_norm: g0.norm(),
        u_block_sigma_min: sig_min,
        lip_f_x,
        lip_f_z,
        lip_g_x,
        lip_g_z,
    })
}

/// A linear block map [[a, c_xz], [c_zx, b]] as a BlockMap.
pub fn linear_block_map(
    a: DMatrix<f64>,
    c_xz: DMatrix<f64>,
    c_zx: DMatrix<f64>,
    b: DMatrix<f64>,
) -> BlockMap {
    let dim_x = a.nrows();
    let dim_z = b.nrows();
    let (a2, cxz2, czx2, b2) = (a.clone(), c_xz.clone(), c_zx.clone(), b.clone());
    let fg: VecFn2 = Arc::new(move |x, y| {
        let fx = &a2 * x + &cxz2 * y;
        let gy = &czx2 * x + &b2 * y;
        let mut out = DVector::zeros(dim_x + dim_z);
        out.rows_mut(0, dim_x).copy_from(&fx);
        out.rows_mut(dim_x, dim_z).copy_from(&gy);
        out
    });
    let jac: JacFn2 = Arc::new(move |_x, _y| {
        let mut dx = DMatrix::zeros(dim_x + dim_z, dim_x);
        dx.view_mut((0, 0), (dim_x, dim_x)).copy_from(&a);
        dx.view_mut((dim_x, 0), (dim_z, dim_x)).copy_from(&c_zx);
        let mut dy = DMatrix::zeros(dim_x + dim_z, dim_z);
        dy.view_mut((0, 0), (dim_x, dim_z)).copy_from(&c_xz);
        dy.view_mut((dim_x, 0), (dim_z, dim_z)).copy_from(&b);
        (dx, dy)
    });
    BlockMap { fg, jac: Some(jac), dim_x, dim_z }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_pair(a: f64, b: f64) -> CorrespondenceHandle {
        // map (x,y) ↦ (a x, b y): G(x,z) = z/b, F(x,z) = a x
        CorrespondenceHandle::from_generating_maps(
            Arc::new(move |x: &DVector<f64>, _: &DVector<f64>| a * x),
            Arc::new(move |_: &DVector<f64>, z: &DVector<f64>| z / b),
            (1.0, 1.0),
            (1, 1),
        )
    }

    #[test]
    fn membership_of_linear_graph() {
        let h = linear_pair(0.5, 2.0);
        let r = h.membership_residual(
            (&dvector![1.0], &dvector![0.3]),
            (&dvector![0.5], &dvector![0.6]),
        );
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        let off = h.membership_residual(
            (&dvector![1.0], &dvector![0.3]),
            (&dvector![0.5], &dvector![0.7]),
        );
        assert!(off > 1e-3);
    }

    #[test]
    fn identity_pair_is_identity_relation() {
        let id = CorrespondenceHandle::identity(2, 1, (1.0, 1.0));
        let r = id.membership_residual(
            (&dvector![0.1, -0.2], &dvector![0.4]),
            (&dvector![0.1, -0.2], &dvector![0.4]),
        );
        assert_abs_diff_eq!(r, 0.0);
    }

    #[test]
    fn from_map_linear_diagonal() {
        let map = linear_block_map(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 2.0),
        );
        let (h, report) = CorrespondenceHandle::from_block_map(map, (1.0, 1.0), (1, 1)).unwrap();
        let x = dvector![0.3];
        let z = dvector![0.8];
        assert_abs_diff_eq!(h.pair.g(&x, &z)[0], 0.4, epsilon = 1e-10);
        assert_abs_diff_eq!(h.pair.f(&x, &z)[0], 0.15, epsilon = 1e-10);
        assert!(report.u_block_sigma_min > 1.9);
        assert!(report.lip_g_z <= 0.5 + 1e-6);
    }

    #[test]
    fn from_map_quadratic_matches_exact_algebra() {
        // h(x,y) = (0.5x + 0.1y², 2y + 0.1x²): g affine in y ⟹
        // G(x,z) = (z − 0.1x²)/2, F = 0.5x + 0.1 G²
        let fg: VecFn2 = Arc::new(|x: &DVector<f64>, y: &DVector<f64>| {
            dvector![0.5 * x[0] + 0.1 * y[0] * y[0], 2.0 * y[0] + 0.1 * x[0] * x[0]]
        });
        let map = BlockMap { fg, jac: None, dim_x: 1, dim_z: 1 };
        let (h, _) = CorrespondenceHandle::from_block_map(map, (0.5, 0.5), (1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = dvector![rng.gen_range(-0.5..0.5)];
            let z = dvector![rng.gen_range(-0.5..0.5)];
            let gexact = (z[0] - 0.1 * x[0] * x[0]) / 2.0;
            let fexact = 0.5 * x[0] + 0.1 * gexact * gexact;
            assert_abs_diff_eq!(h.pair.g(&x, &z)[0], gexact, epsilon = 1e-10);
            assert_abs_diff_eq!(h.pair.f(&x, &z)[0], fexact, epsilon = 1e-10);
        }
    }

    #[test]
    fn from_map_rejects_singular_u_block() {
        let fg: VecFn2 = Arc::new(|x: &DVector<f64>, y: &DVector<f64>| {
            dvector![0.5 * x[0], y[0] * y[0]] // D_y g(0) = 0
        });
        let map = BlockMap { fg, jac: None, dim_x: 1, dim_z: 1 };
        assert!(matches!(
            CorrespondenceHandle::from_block_map(map, (0.1, 0.1), (1, 1)),
            Err(CorrespondenceError::HypothesesViolated(_))
                | Err(CorrespondenceError::InnerSolveDiverged { .. })
        ));
    }

    #[test]
    fn reconstruction_identity_for_from_map() {
        // g(x, G(x, g(x,y))) = g(x,y)
        let fg: VecFn2 = Arc::new(|x: &DVector<f64>, y: &DVector<f64>| {
            dvector![0.5 * x[0] + 0.1 * y[0] * y[0], 2.0 * y[0] + 0.1 * x[0] * x[0]]
        });
        let map = BlockMap { fg: fg.clone(), jac: None, dim_x: 1, dim_z: 1 };
        let (h, _) = CorrespondenceHandle::from_block_map(map.clone(), (0.5, 0.5), (1, 1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let x = dvector![rng.gen_range(-0.4..0.4)];
            let y = dvector![rng.gen_range(-0.4..0.4)];
            let (_, gxy) = map.apply(&x, &y);
            let yback = h.pair.g(&x, &gxy);
            let (_, gagain) = map.apply(&x, &yback);
            assert_abs_diff_eq!(gagain[0], gxy[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn compose_identity_is_identity() {
        let h = linear_pair(0.7, 1.6);
        let id = CorrespondenceHandle::identity(1, 1, (1.0, 1.0));
        let c = CorrespondenceHandle::compose(&id, &h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = dvector![rng.gen_range(-1.0..1.0)];
            let z = dvector![rng.gen_range(-1.0..1.0)];
            assert_abs_diff_eq!(c.pair.f(&x, &z)[0], h.pair.f(&x, &z)[0], epsilon = 1e-10);
            assert_abs_diff_eq!(c.pair.g(&x, &z)[0], h.pair.g(&x, &z)[0], epsilon = 1e-10);
        }
    }

    #[test]
    fn compose_linear_pairs_multiplies_rates() {
        let h1 = linear_pair(0.5, 2.0);
        let h2 = linear_pair(0.8, 1.5);
        let c = CorrespondenceHandle::compose(&h2, &h1).unwrap();
        let x = dvector![0.4];
        let z = dvector![0.9];
        assert_abs_diff_eq!(c.pair.f(&x, &z)[0], 0.8 * 0.5 * 0.4, epsilon = 1e-10);
        assert_abs_diff_eq!(c.pair.g(&x, &z)[0], 0.9 / (2.0 * 1.5), epsilon = 1e-10);
    }

    #[test]
    fn compose_nonlinear_self_matches_two_step_membership() {
        let fg: VecFn2 = Arc::new(|x: &DVector<f64>, y: &DVector<f64>| {
            dvector![0.5 * x[0] + 0.05 * y[0] * y[0], 2.0 * y[0] + 0.05 * x[0] * x[0]]
        });
        let map = BlockMap { fg, jac: None, dim_x: 1, dim_z: 1 };
        let (h, _) = CorrespondenceHandle::from_block_map(map, (0.5, 0.5), (1, 1)).unwrap();
        let c = CorrespondenceHandle::compose(&h, &h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x1 = dvector![rng.gen_range(-0.3..0.3)];
            let y3 = dvector![rng.gen_range(-0.3..0.3)];
            let x3 = c.pair.f(&x1, &y3);
            let y1 = c.pair.g(&x1, &y3);
            // mid point of the chain through h
            let y2 = mid_point(&h, &x1, &y3);
            let x2 = h.pair.f(&x1, &y2);
            let y2v = h.pair.g(&x1, &y2); // = y1 must hold
            let r1 = h.membership_residual((&x1, &y1), (&x2, &y2));
            let r2 = h.membership_residual((&x2, &y2), (&x3, &y3));
            assert_abs_diff_eq!(y2v[0], y1[0], epsilon = 1e-9);
            assert!(r1 <= 1e-9 && r2 <= 1e-9, "chain residuals {r1}, {r2}");
        }
    }

    fn mid_point(h: &CorrespondenceHandle, x1: &DVector<f64>, y3: &DVector<f64>) -> DVector<f64> {
        let mut y2 = DVector::zeros(1);
        for _ in 0..200 {
            let next = h.pair.g(&h.pair.f(x1, &y2), y3);
            if (&next - &y2).norm() <= 1e-13 {
                return next;
            }
            y2 = next;
        }
        y2
    }

    #[test]
    fn dual_swaps_roles_and_is_involutive() {
        let h = linear_pair(0.5, 2.0);
        let d = h.dual();
        let x = dvector![0.3];
        let z = dvector![0.8];
        // F̃(x̃,ỹ) = G(ỹ,x̃) = x̃/2, G̃(x̃,ỹ) = F(ỹ,x̃) = 0.5 ỹ
        assert_abs_diff_eq!(d.pair.f(&x, &z)[0], x[0] / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.pair.g(&x, &z)[0], 0.5 * z[0], epsilon = 1e-12);
        let dd = d.dual();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let x = dvector![rng.gen_range(-1.0..1.0)];
            let z = dvector![rng.gen_range(-1.0..1.0)];
            assert_abs_diff_eq!(dd.pair.f(&x, &z)[0], h.pair.f(&x, &z)[0], epsilon = 1e-13);
            assert_abs_diff_eq!(dd.pair.g(&x, &z)[0], h.pair.g(&x, &z)[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn membership_symmetry_under_duality() {
        let h = linear_pair(0.5, 2.0);
        let d = h.dual();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x1 = dvector![rng.gen_range(-1.0..1.0)];
            let y2 = dvector![rng.gen_range(-1.0..1.0)];
            let y1 = h.pair.g(&x1, &y2);
            let x2 = h.pair.f(&x1, &y2);
            // (x₂,y₂) ∈ H(x₁,y₁) ⟺ (y₁,x₁) ∈ H̃(y₂,x₂)
            let r = d.membership_residual((&y2, &x2), (&y1, &x1));
            assert!(r <= 1e-10);
        }
    }

    #[test]
    fn shift_by_zero_and_fixed_point() {
        let h = linear_pair(0.5, 2.0);
        let zero = dvector![0.0];
        let s = h.shift((&zero, &zero), (&zero, &zero));
        let x = dvector![0.2];
        let z = dvector![0.5];
        assert_abs_diff_eq!(s.pair.f(&x, &z)[0], h.pair.f(&x, &z)[0], epsilon = 1e-13);
        assert_abs_diff_eq!(s.pair.f(&zero, &zero)[0], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(s.pair.g(&zero, &zero)[0], 0.0, epsilon = 1e-13);
    }

    #[test]
    fn shift_off_invariant_set_measures_defect() {
        let h = linear_pair(0.5, 2.0);
        let m = (dvector![0.1], dvector![0.04]);
        let s = h.shift((&m.0, &m.1), (&m.0, &m.1));
        let zero = dvector![0.0];
        // F(0,0) = F(0.1, 0.04) − 0.1 = 0.05 − 0.1; G(0,0) = 0.04/2 − 0.04
        assert_abs_diff_eq!(s.pair.f(&zero, &zero)[0], -0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(s.pair.g(&zero, &zero)[0], -0.02, epsilon = 1e-12);
    }

    #[test]
    fn compose_associativity_on_linear_triples() {
        let h1 = linear_pair(0.5, 2.0);
        let h2 = linear_pair(0.8, 1.5);
        let h3 = linear_pair(0.9, 1.2);
        let left =
            CorrespondenceHandle::compose(&h3, &CorrespondenceHandle::compose(&h2, &h1).unwrap())
                .unwrap();
        let right =
            CorrespondenceHandle::compose(&CorrespondenceHandle::compose(&h3, &h2).unwrap(), &h1)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..30 {
            let x = dvector![rng.gen_range(-1.0..1.0)];
            let z = dvector![rng.gen_range(-1.0..1.0)];
            assert_abs_diff_eq!(left.pair.f(&x, &z)[0], right.pair.f(&x, &z)[0], epsilon = 1e-10);
            assert_abs_diff_eq!(left.pair.g(&x, &z)[0], right.pair.g(&x, &z)[0], epsilon = 1e-10);
        }
    }
}
