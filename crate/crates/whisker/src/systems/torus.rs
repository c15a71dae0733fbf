//! Whiskered-torus skew product over an irrational rotation: ambient
//! coordinates (x^s, x^u, x^c, θ) with θ a flat angle, dynamics
//!
//!   (x^s, x^u, x^c, θ) ↦ (μA_θ x^s, (μA_θ)⁻¹ x^u, x^c, θ+ω) + ε·N,
//!
//! N a cubic polynomial perturbation vanishing on the torus. Strong-stable
//! fibers through a base point are computed by the same fixed-point sweep in
//! the s ⊕ cu blocking along the forward orbit of θ.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::atlas::{flat_torus, BaseAtlas, Splitting};
use crate::conditions::{ab_case2_from_lipschitz, AbAtSample};
use crate::correspondence::{BlockMap, CorrespondenceHandle, VecFn2};
use crate::graph_transform::TransformMode;
use crate::section::LocalGrid;

use super::{GroundTruth, LocalDynamics, LocalPair, SystemError, SystemSpec};

const TAU: f64 = 2.0 * std::f64::consts::PI;

/// Parameters of the torus model. The perturbation is the fixed cubic field
///   N^s = x^c² x^u + x^s³ cos θ,
///   N^u = x^s² x^c + x^u³ sin θ,
///   N^c = x^s x^u (1 + cos θ),      N^θ = 0,
/// which vanishes on the torus, keeps the cylinder {x^s = x^u = 0}
/// invariant, and has no linear cs → u coupling at the torus (the
/// base-preserving case).
#[derive(Debug, Clone)]
pub struct TorusParams {
    pub samples: usize,
    pub omega: f64,
    pub mu: f64,
    /// scalar field θ ↦ A_θ with 0 < inf A ≤ sup A < μ⁻¹
    pub a0: f64,
    pub a1: f64,
    pub eps: f64,
}

impl Default for TorusParams {
    fn default() -> Self {
        // d = 1, golden-ratio rotation, A_θ = 0.8 + 0.1 cos θ
        Self {
            samples: 256,
            omega: TAU * 0.5 * (5.0f64.sqrt() - 1.0),
            mu: 0.5,
            a0: 0.8,
            a1: 0.1,
            eps: 0.01,
        }
    }
}

impl TorusParams {
    pub fn a(&self, theta: f64) -> f64 {
        self.a0 + self.a1 * theta.cos()
    }

    fn a_sup(&self) -> f64 {
        self.a0 + self.a1.abs()
    }

    fn a_inf(&self) -> f64 {
        self.a0 - self.a1.abs()
    }
}

/// Cubic perturbation field and its Jacobian in (x^s, x^u, x^c, θ).
fn cubic_n(z: &DVector<f64>) -> DVector<f64> {
    let (xs, xu, xc, th) = (z[0], z[1], z[2], z[3]);
    DVector::from_vec(vec![
        xc * xc * xu + xs * xs * xs * th.cos(),
        xs * xs * xc + xu * xu * xu * th.sin(),
        xs * xu * (1.0 + th.cos()),
        0.0,
    ])
}

fn cubic_n_jac(z: &DVector<f64>) -> DMatrix<f64> {
    let (xs, xu, xc, th) = (z[0], z[1], z[2], z[3]);
    DMatrix::from_row_slice(
        4,
        4,
        &[
            3.0 * xs * xs * th.cos(),
            xc * xc,
            2.0 * xc * xu,
            -xs * xs * xs * th.sin(),
            2.0 * xs * xc,
            3.0 * xu * xu * th.sin(),
            xs * xs,
            xu * xu * xu * th.cos(),
            xu * (1.0 + th.cos()),
            xs * (1.0 + th.cos()),
            0.0,
            -xs * xu * th.sin(),
            0.0,
            0.0,
            0.0,
            0.0,
        ],
    )
}

#[derive(Clone)]
struct TorusDynamics {
    p: TorusParams,
    radii: (f64, f64),
}

impl TorusDynamics {
    /// Ambient image of (x^s, x^u, x^c, θ); θ is NOT wrapped here.
    fn ambient(&self, z: &DVector<f64>) -> DVector<f64> {
        let a = self.p.a(z[3]);
        let lin = DVector::from_vec(vec![
            self.p.mu * a * z[0],
            z[1] / (self.p.mu * a),
            z[2],
            z[3] + self.p.omega,
        ]);
        lin + self.p.eps * cubic_n(z)
    }

    fn ambient_jac(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let a = self.p.a(z[3]);
        let da = -self.p.a1 * z[3].sin();
        let mut jac = DMatrix::zeros(4, 4);
        jac[(0, 0)] = self.p.mu * a;
        jac[(0, 3)] = self.p.mu * da * z[0];
        jac[(1, 1)] = 1.0 / (self.p.mu * a);
        jac[(1, 3)] = -da * z[1] / (self.p.mu * a * a);
        jac[(2, 2)] = 1.0;
        jac[(3, 3)] = 1.0;
        jac + self.p.eps * cubic_n_jac(z)
    }

    /// Block map of Ĥ_θ in frame coordinates for a partition of the frame
    /// axes. Frame layout at θ: cs = [x^c, δθ, x^s], u = [x^u] and
    /// scu: x-slot = [x^s], z-slot = [x^c, δθ, x^u].
    fn block_map(&self, theta: f64, scu: bool) -> BlockMap {
        let this = self.clone();
        let omega = self.p.omega;
        // frame index → ambient offset assembly
        let assemble = move |x: &DVector<f64>, y: &DVector<f64>, scu: bool| -> DVector<f64> {
            // returns ambient source point (x^s, x^u, x^c, θ+δθ)
            if scu {
                DVector::from_vec(vec![x[0], y[2], y[0], theta + y[1]])
            } else {
                DVector::from_vec(vec![x[2], y[0], x[0], theta + x[1]])
            }
        };
        let project = move |img: &DVector<f64>, scu: bool| -> DVector<f64> {
            // target-frame coords relative to (0,0,0,θ+ω)
            let dth = img[3] - (theta + omega);
            if scu {
                DVector::from_vec(vec![img[0], img[2], dth, img[1]])
            } else {
                DVector::from_vec(vec![img[2], dth, img[0], img[1]])
            }
        };
        let t2 = this.clone();
        let fg: VecFn2 = Arc::new(move |x, y| {
            let src = assemble(x, y, scu);
            project(&t2.ambient(&src), scu)
        });
        // analytic jacobian via the chain rule through the index shuffles
        let t3 = this;
        let jac = Arc::new(move |x: &DVector<f64>, y: &DVector<f64>| {
            let src = assemble(x, y, scu);
            let full = t3.ambient_jac(&src);
            // ambient row order after projection and column order of slots
            let (rows, xcols, ycols): (Vec<usize>, Vec<usize>, Vec<usize>) = if scu {
                (vec![0, 2, 3, 1], vec![0], vec![2, 3, 1])
            } else {
                (vec![2, 3, 0, 1], vec![2, 3, 0], vec![1])
            };
            let pick = |cols: &Vec<usize>| {
                DMatrix::from_fn(rows.len(), cols.len(), |i, j| full[(rows[i], cols[j])])
            };
            (pick(&xcols), pick(&ycols))
        });
        let (dim_x, dim_z) = if scu { (1, 3) } else { (3, 1) };
        BlockMap { fg, jac: Some(jac), dim_x, dim_z }
    }
}

impl LocalDynamics for TorusDynamics {
    fn pair_cs(&self, param: &DVector<f64>) -> LocalPair {
        let theta = param[0];
        let bm = self.block_map(theta, false);
        let h = CorrespondenceHandle::from_block_map_unchecked(bm, self.radii, (3, 1));
        LocalPair {
            pair: h.pair,
            source_param: param.clone(),
            target_param: DVector::from_vec(vec![(theta + self.p.omega).rem_euclid(TAU)]),
        }
    }

    fn pair_scu(&self, param: &DVector<f64>) -> Option<LocalPair> {
        let theta = param[0];
        let bm = self.block_map(theta, true);
        let h = CorrespondenceHandle::from_block_map_unchecked(bm, self.radii, (1, 3));
        Some(LocalPair {
            pair: h.pair,
            source_param: param.clone(),
            target_param: DVector::from_vec(vec![(theta + self.p.omega).rem_euclid(TAU)]),
        })
    }

    fn ambient_map(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        Some(self.ambient(z))
    }
}

/// Build the skew-product system (d = 1). Errors when the spectral bound
/// ‖A_θ‖ < μ⁻¹ fails.
pub fn whiskered_torus_system(p: TorusParams) -> Result<SystemSpec, SystemError> {
    if p.a_inf() <= 0.0 || p.mu * p.a_sup() >= 1.0 {
        return Err(SystemError::InvalidParams(format!(
            "need 0 < A_θ and μ·sup A = {:.3} < 1",
            p.mu * p.a_sup()
        )));
    }
    if p.samples < 8 {
        return Err(SystemError::InvalidParams("need ≥ 8 torus samples".into()));
    }
    // ambient (x^s, x^u, x^c, θ); frame blocks c1 = x^c, tangent = θ,
    // s = x^s, u = x^u
    let col = |i: usize| {
        let mut m = DMatrix::zeros(4, 1);
        m[(i, 0)] = 1.0;
        m
    };
    let split = Splitting::new(col(2), col(3), col(0), col(1))?;
    let atlas: BaseAtlas = flat_torus(
        split,
        &[3],
        &[TAU],
        p.samples,
        DVector::from_vec(vec![p.omega]),
    )?;
    let radii = (0.5, 0.5);
    let dynamics = TorusDynamics { p: p.clone(), radii };

    // certify the u-block once (the per-sweep pair construction skips it)
    CorrespondenceHandle::from_block_map(dynamics.block_map(0.0, false), radii, (3, 1))?;

    // blockwise Lipschitz envelopes with an ε margin, then the neutral-center
    // (A')(B) route with β = 0.3 and the measured γ₀
    let eps_margin = 4.0 * p.eps;
    let lam_u_sup = p.mu * p.a_sup() + eps_margin;
    let lam_cs_sup = 1.0 + p.mu * p.a1.abs() * radii.0 + eps_margin;
    let gamma0 = measure_gamma0(&dynamics, &atlas);
    let beta_choice = 0.3;
    let mut constants = ab_case2_from_lipschitz(
        lam_cs_sup,
        eps_margin,
        eps_margin,
        lam_u_sup,
        beta_choice,
        gamma0,
    )
    .map_err(|e| SystemError::InvalidParams(e.to_string()))?;
    constants.eta = 0.0;
    // per-sample rates: λ_u(θ) = μ·A(θ) plus the ε margin
    constants.per_sample = atlas
        .samples
        .iter()
        .map(|s| AbAtSample {
            alpha: constants.alpha,
            alpha_prime: constants.alpha_prime,
            beta: constants.beta,
            beta_prime: constants.beta_prime,
            lambda_cs: constants.lambda_cs,
            lambda_u: p.mu * p.a(s.param[0]) + eps_margin,
        })
        .collect();

    // s ⊕ cu blocking: stored so that dual_swap recovers the constants the
    // dualized run needs; derive them on the dual pair (F̃ = G_scu, G̃ = F_scu)
    // and swap back
    let dual_constants = ab_case2_from_lipschitz(
        lam_cs_sup, // lip F̃ in x̃ = cu-block backward rate ≈ 1
        eps_margin,
        eps_margin,
        p.mu * p.a_sup() + eps_margin, // lip G̃ in z̃ = s-block rate
        beta_choice,
        gamma0,
    )
    .map_err(|e| SystemError::InvalidParams(e.to_string()))?;
    let constants_scu = dual_constants.dual_swap();

    let ground_truth = if p.eps == 0.0 {
        Some(GroundTruth {
            section: Arc::new(|_p: &DVector<f64>, _cs: &DVector<f64>| DVector::zeros(1)),
            label: "invariant bundle (ε = 0)".into(),
        })
    } else {
        None
    };

    Ok(SystemSpec {
        label: "whiskered_torus".into(),
        atlas,
        dynamics: Arc::new(dynamics),
        constants,
        constants_scu: Some(constants_scu),
        ground_truth,
        preferred_mode: TransformMode::Invariant,
    })
}

/// Strong-stable fibers over a truncated forward orbit of θ: graphs
/// w_k: X^s(r) → X^{cu} through K(θ_k), computed by the backward recursion
/// w_k = Γ(w_{k+1}) with w_N = 0 (tail error λ_s^N).
#[derive(Debug, Clone)]
pub struct FiberFamily {
    pub thetas: Vec<f64>,
    pub grids: Vec<LocalGrid>,
    pub radius: f64,
}

impl FiberFamily {
    /// w_k evaluated at x^s (cu-coords [x^c, δθ, x^u]).
    pub fn eval(&self, k: usize, xs: f64) -> DVector<f64> {
        self.grids[k].eval(&DVector::from_vec(vec![xs]))
    }
}

/// γ₀ surrogate: sup over sampled cs-points of |Ĝ(x^{cs}, 0)|/|x^{cs}|.
fn measure_gamma0(dyn_: &TorusDynamics, atlas: &BaseAtlas) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x707);
    let mut sup: f64 = 0.0;
    for _ in 0..200 {
        let i = rng.gen_range(0..atlas.len());
        let lp = dyn_.pair_cs(&atlas.samples[i].param);
        let x = DVector::from_fn(3, |_, _| rng.gen_range(-1.0f64..1.0) * 0.3);
        let n = x.norm();
        if n < 1e-9 {
            continue;
        }
        let g = lp.pair.g(&x, &DVector::zeros(1));
        sup = sup.max(g.norm() / n);
    }
    sup
}

pub fn strong_stable_fiber(
    system: &SystemSpec,
    theta: f64,
    radius: f64,
    nodes: usize,
    n_orbit: usize,
) -> Result<FiberFamily, SystemError> {
    let thetas: Vec<f64> = (0..=n_orbit)
        .map(|k| {
            let mut t = theta;
            for _ in 0..k {
                t = system.atlas.map_param(&DVector::from_vec(vec![t]))[0];
            }
            t
        })
        .collect();
    let mut grids: Vec<LocalGrid> = (0..=n_orbit).map(|_| LocalGrid::zero(1, 3, nodes, radius)).collect();
    // backward sweep: fiber at k from fiber at k+1
    for k in (0..n_orbit).rev() {
        let lp = system
            .dynamics
            .pair_scu(&DVector::from_vec(vec![thetas[k]]))
            .ok_or(SystemError::NoScuBlocking)?;
        let next = grids[k + 1].clone();
        let mut g = LocalGrid::zero(1, 3, nodes, radius);
        for node in 0..g.node_count() {
            let xs = g.node_coords(node);
            // solve z = F(x^s, w_{k+1}(z)) for the image s-coordinate
            let mut z = xs.clone();
            let mut ok = false;
            for _ in 0..200 {
                let w = next.eval(&z);
                let znext = lp.pair.f(&xs, &w);
                let d = (&znext - &z).norm();
                z = znext;
                if d <= 1e-13 {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Err(SystemError::ShootingNotContractive(1.0));
            }
            let v = lp.pair.g(&xs, &next.eval(&z));
            g.set(node, &v);
        }
        grids[k] = g;
    }
    Ok(FiberFamily { thetas, grids, radius })
}
