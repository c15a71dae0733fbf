//! The section graph transform: bump truncation, the cs fixed-point solve,
//! one sweep of the transform, iteration to the invariant section h₀, the
//! induced forward map on the computed graph, and contraction estimation.
//!
//! One sweep is a parallel map over (base sample × grid node) reading the
//! previous immutable section; assembly is order-independent, so runs are
//! deterministic for a fixed seed.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{ConditionReport, PredicateValue, ViolationWitness};
use crate::correspondence::GeneratingPair;
use crate::linalg::max_norm;
use crate::section::{GraphSection, LocalGrid};
use crate::systems::SystemSpec;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("fixed-point solve did not contract at sample {sample}, node {node} (residual {residual:.3e})")]
    FixedPointDiverged { sample: usize, node: usize, residual: f64 },
    #[error("graph transform is not contracting (ratios {0:?})")]
    NotContracting(Vec<f64>),
    #[error("point outside the core tube Ω")]
    OutsideCoreTube,
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

/// Truncation behavior of the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformMode {
    /// bump in both the transversal-center and stable directions
    General,
    /// invariant set (η = 0): h(m̂,0) = 0 enforced, weighted metric d₂
    Invariant,
    /// strong s-contraction: the bump depends on the base distance only
    StrongSContraction,
    /// strictly inflowing: no truncation at all
    StrictlyInflowing,
}

/// Bump profile ℓ: R₊ → [0,1] with plateau below η₂ and support below η₁.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BumpProfile {
    pub eta1: f64,
    pub eta2: f64,
    pub smooth: bool,
}

/// Construct the profile; piecewise-linear has Lip = 1/(η₁−η₂) exactly,
/// the quintic smoothstep has Lip = (15/8)/(η₁−η₂) and C₁ = 15/8 (the
/// constant feeding ς₀ ≥ C₁ + 1 in smooth mode).
pub fn bump_profile(eta1: f64, eta2: f64, smooth: bool) -> Result<BumpProfile, TransformError> {
    if !(0.0 < eta2 && eta2 < eta1) {
        return Err(TransformError::BadConfig(format!(
            "need 0 < η₂ < η₁, got η₂ = {eta2}, η₁ = {eta1}"
        )));
    }
    Ok(BumpProfile { eta1, eta2, smooth })
}

impl BumpProfile {
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.eta2 {
            return 1.0;
        }
        if t >= self.eta1 {
            return 0.0;
        }
        let u = (self.eta1 - t) / (self.eta1 - self.eta2);
        if self.smooth {
            u * u * u * (6.0 * u * u - 15.0 * u + 10.0)
        } else {
            u
        }
    }

    /// dℓ/dt (zero on the plateau and outside the support).
    pub fn derivative(&self, t: f64) -> f64 {
        if t <= self.eta2 || t >= self.eta1 {
            return 0.0;
        }
        let w = self.eta1 - self.eta2;
        let u = (self.eta1 - t) / w;
        if self.smooth {
            -(30.0 * u * u * (u - 1.0) * (u - 1.0)) / w
        } else {
            -1.0 / w
        }
    }

    pub fn lip(&self) -> f64 {
        self.c1() / (self.eta1 - self.eta2)
    }

    /// The Lipschitz constant of the unit-width profile.
    pub fn c1(&self) -> f64 {
        if self.smooth {
            15.0 / 8.0
        } else {
            1.0
        }
    }
}

/// Configuration of one transform run. `derive` fills the paper-default
/// constants from the system's certified data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformConfig {
    pub sigma_star: f64,
    pub rho_star: f64,
    pub eps_star: f64,
    pub eps0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub varsigma0: f64,
    pub mode: TransformMode,
    pub smooth_bump: bool,
    pub tol_fixed_point: f64,
    pub tol_section: f64,
    pub max_sweeps: usize,
    pub nodes_per_axis: usize,
    /// admissible-class Lipschitz bound μ
    pub mu: f64,
    /// anchor constant K₁ (bounds |h(m̂,0)| ≤ K₁η)
    pub k1: f64,
}

impl TransformConfig {
    /// Default constants: η₁ close to σ¹* = σ^c_* = (σ₀−η₀)/(2·max(λ̄_cs,1)).
    /// When the angle gap ς = inf β / sup β′ is comfortably above 2 the
    /// bump plateau is η₂ = ((ς′−2)/(ς′−1))η₁ with ς′ = (ς+2)/2 and the class
    /// bound is μ = ς′·sup β′·1.05; otherwise (the ς₀ ≥ 1 route for neutral
    /// center blocks, which expects ϱ* ≪ σ*) η₂ = η₁/2 and μ = 1.15·sup β′.
    /// ε₀ = η₂, and K₁ = (λ̄_u·μ+1)/(1−λ̄_u) when λ̄_u < 1.
    pub fn derive(
        constants: &crate::conditions::AbConstants,
        sigma_star: f64,
        rho_star: f64,
        nodes_per_axis: usize,
        mode: TransformMode,
    ) -> Self {
        let lam_cs = constants.sup_lambda_cs().max(1.0);
        let eta0 = 1e-6 * sigma_star;
        let sigma_c = (sigma_star - eta0) / (2.0 * lam_cs);
        let eta1 = 0.95 * sigma_c;
        let bp = constants.sup_beta_prime();
        let varsigma = if bp > 0.0 {
            (0.95 * constants.inf_beta() / bp).min(64.0)
        } else {
            64.0
        };
        let (eta2, mu) = if varsigma >= 2.5 {
            let varsigma_p = (varsigma + 2.0) / 2.0;
            let ratio = (varsigma_p - 2.0) / (varsigma_p - 1.0);
            (ratio.max(0.5) * eta1, (varsigma_p * bp * 1.05).max(0.02))
        } else {
            (0.5 * eta1, (1.15 * bp).max(0.02))
        };
        let lam_u = constants.sup_lambda_u();
        let k1 = if lam_u < 1.0 {
            (lam_u * mu + 1.0) / (1.0 - lam_u)
        } else {
            2.0
        };
        // without truncation the core tube is the full ball
        let eps0 = if matches!(mode, TransformMode::StrictlyInflowing) {
            0.9 * sigma_star
        } else {
            eta2
        };
        Self {
            sigma_star,
            rho_star,
            eps_star: sigma_star,
            eps0,
            eta1,
            eta2,
            varsigma0: constants.varsigma0,
            mode,
            smooth_bump: true,
            tol_fixed_point: 1e-12,
            tol_section: 1e-10,
            max_sweeps: 200,
            nodes_per_axis,
            mu,
            k1,
        }
    }

    pub fn profile(&self) -> BumpProfile {
        BumpProfile { eta1: self.eta1, eta2: self.eta2, smooth: self.smooth_bump }
    }

    /// Ψ at a grid node (Euclidean norms inside each block, max across).
    pub fn bump(&self, c1_norm: f64, s_norm: f64) -> f64 {
        match self.mode {
            TransformMode::StrictlyInflowing => 1.0,
            TransformMode::StrongSContraction => self.profile().eval(c1_norm),
            TransformMode::General | TransformMode::Invariant => {
                self.profile().eval(c1_norm.max(s_norm))
            }
        }
    }

    /// ∇Ψ with respect to the full cs-vector; the max-branch is resolved
    /// toward the c-block on ties.
    pub fn bump_gradient(&self, cs: &DVector<f64>, d_c1: usize, d_t: usize, d_s: usize) -> DVector<f64> {
        let dim = d_c1 + d_t + d_s;
        let mut grad = DVector::zeros(dim);
        if matches!(self.mode, TransformMode::StrictlyInflowing) {
            return grad;
        }
        let c1: DVector<f64> = cs.rows(0, d_c1).into_owned();
        let s: DVector<f64> = cs.rows(d_c1 + d_t, d_s).into_owned();
        let (nc, ns) = (c1.norm(), s.norm());
        let use_s = !matches!(self.mode, TransformMode::StrongSContraction) && ns > nc;
        let t = if use_s { ns } else { nc };
        let dl = self.profile().derivative(t);
        if dl == 0.0 || t < 1e-14 {
            return grad;
        }
        if use_s {
            for k in 0..d_s {
                grad[d_c1 + d_t + k] = dl * s[k] / ns;
            }
        } else {
            for k in 0..d_c1 {
                grad[k] = dl * c1[k] / nc;
            }
        }
        grad
    }

    fn validate(&self) -> Result<(), TransformError> {
        if !(0.0 < self.eta2 && self.eta2 < self.eta1 && self.eta1 < self.sigma_star) {
            return Err(TransformError::BadConfig(format!(
                "need 0 < η₂ < η₁ < σ*: η₂ = {}, η₁ = {}, σ* = {}",
                self.eta2, self.eta1, self.sigma_star
            )));
        }
        if self.tol_fixed_point <= 0.0 || self.tol_section <= 0.0 {
            return Err(TransformError::BadConfig("tolerances must be positive".into()));
        }
        if self.nodes_per_axis < 2 {
            return Err(TransformError::BadConfig("need ≥ 2 nodes per axis".into()));
        }
        Ok(())
    }
}

/// Per-run diagnostics of `iterate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformReport {
    pub sweeps: usize,
    pub final_change: f64,
    /// per-sweep contraction ratios (length sweeps−1, while above noise)
    pub ratios: Vec<f64>,
    pub measured_lambda_hat: f64,
    pub analytic_lambda_hat: f64,
    pub eta_measured: f64,
    /// sampled Lipschitz constant of h₀
    pub lip_certificate: f64,
    pub anchor: f64,
    pub converged: bool,
    /// admissible-class violations observed during the sweeps (empty in a
    /// healthy run)
    pub class_violations: Vec<String>,
}

/// The unique z with F̂^{cs}(x^{cs}, f¹(z)) = z, by Picard iteration; the
/// iteration aborts if the residual grows three times in a row.
pub fn solve_cs_fixed_point<F>(
    pair: &GeneratingPair,
    section_at_target: F,
    x_cs: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize), f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut z = x_cs.clone();
    let mut prev_res = f64::INFINITY;
    let mut grow = 0;
    for it in 0..max_iter {
        let next = pair.f(x_cs, &section_at_target(&z));
        let res = (&next - &z).norm();
        z = next;
        if res <= tol {
            return Ok((z, it + 1));
        }
        if res > prev_res * (1.0 + 1e-12) {
            grow += 1;
            if grow >= 3 {
                return Err(res);
            }
        } else {
            grow = 0;
        }
        prev_res = res;
    }
    Err(prev_res)
}

/// μ₁ = (1+χ*)μ + χ*. Flat atlases have χ* = 0.
pub fn mu1(mu: f64, chi_star: f64) -> f64 {
    (1.0 + chi_star) * mu + chi_star
}

/// λ̂_u bound of the contraction lemma: sup λ_u / (1 − sup α · μ₁).
pub fn analytic_lambda_hat(constants: &crate::conditions::AbConstants, mu_1: f64) -> f64 {
    constants.sup_lambda_u() / (1.0 - constants.sup_alpha() * mu_1)
}

/// Invariant-mode bound: sup λ_cs λ_u / (1 − sup α · μ₁).
pub fn analytic_lambda_hat_weighted(
    constants: &crate::conditions::AbConstants,
    mu_1: f64,
) -> f64 {
    constants.sup_lambda_cs() * analytic_lambda_hat(constants, mu_1)
}

/// One sweep of the graph transform: per (sample, node) solve the cs fixed
/// point, evaluate Ĝ, truncate with Ψ, reassemble.
pub fn transform_once(
    section: &GraphSection,
    system: &SystemSpec,
    cfg: &TransformConfig,
) -> Result<GraphSection, TransformError> {
    cfg.validate()?;
    let atlas = &system.atlas;
    let results: Result<Vec<LocalGrid>, TransformError> = (0..atlas.len())
        .into_par_iter()
        .map(|i| {
            let lp = system.dynamics.pair_cs(&atlas.samples[i].param);
            let template = &section.grids[i];
            let mut g = LocalGrid::zero(
                template.d_axes,
                template.d_u,
                template.nodes_per_axis,
                template.radius,
            );
            let f1 = |z: &DVector<f64>| section.eval_at(atlas, &lp.target_param, z);
            for node in 0..g.node_count() {
                let x_grid = g.node_coords(node);
                let x_cs = section.cs_from_grid(&x_grid);
                let (z, _iters) =
                    solve_cs_fixed_point(&lp.pair, &f1, &x_cs, cfg.tol_fixed_point, 400)
                        .map_err(|residual| TransformError::FixedPointDiverged {
                            sample: i,
                            node,
                            residual,
                        })?;
                let v = lp.pair.g(&x_cs, &f1(&z));
                let c1_norm = x_grid.rows(0, section.d_c1).norm();
                let s_norm = x_grid.rows(section.d_c1, section.d_s).norm();
                let psi = cfg.bump(c1_norm, s_norm);
                g.set(node, &(psi * v));
            }
            Ok(g)
        })
        .collect();
    let mut out = GraphSection {
        grids: results?,
        sigma0: section.sigma0,
        rho: section.rho,
        d_c1: section.d_c1,
        d_t: section.d_t,
        d_s: section.d_s,
    };
    if matches!(cfg.mode, TransformMode::Invariant) {
        out.enforce_zero_on_base();
    }
    Ok(out)
}

/// Admissibility of a section against the class bounds (anchor, range,
/// μ-Lip certificate); returns human-readable violations.
pub fn class_check(
    section: &GraphSection,
    cfg: &TransformConfig,
    eta: f64,
    sweep: usize,
) -> Vec<String> {
    let mut v = Vec::new();
    let anchor = section.anchor_norm();
    let anchor_bound = cfg.k1 * eta + 1e-9;
    if anchor > anchor_bound {
        v.push(format!("sweep {sweep}: anchor {anchor:.3e} > K₁η = {anchor_bound:.3e}"));
    }
    let sup = section.sup_norm();
    if sup > cfg.rho_star * (1.0 + 1e-9) {
        v.push(format!("sweep {sweep}: range {sup:.3e} > ϱ* = {:.3e}", cfg.rho_star));
    }
    let lip = section
        .grids
        .iter()
        .map(|g| g.lip_max_sampled(64, 1))
        .fold(0.0f64, f64::max);
    let bound = mu1(cfg.mu, 0.0) + 1e-6;
    if lip > bound {
        v.push(format!("sweep {sweep}: Lip {lip:.3e} > μ₁ = {bound:.3e}"));
    }
    v
}

/// Iterate the transform from `init` (default: zero section) until the
/// sup-change (d₂-change in invariant mode) drops below `tol_section`.
pub fn iterate(
    init: Option<GraphSection>,
    system: &SystemSpec,
    cfg: &TransformConfig,
) -> Result<(GraphSection, TransformReport), TransformError> {
    cfg.validate()?;
    let split = &system.atlas.samples[0].split;
    let mut h = init.unwrap_or_else(|| {
        GraphSection::zero(
            system.atlas.len(),
            split.d_c1,
            split.d_t,
            split.d_s,
            split.d_u,
            cfg.nodes_per_axis,
            cfg.sigma_star,
            cfg.rho_star,
        )
    });
    let eta = system.constants.eta;
    let mut changes: Vec<f64> = Vec::new();
    let mut violations = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    for sweep in 0..cfg.max_sweeps {
        let next = transform_once(&h, system, cfg)?;
        let change = match cfg.mode {
            TransformMode::Invariant => next.d2_distance(&h),
            _ => next.sup_distance(&h),
        };
        violations.extend(class_check(&next, cfg, eta, sweep));
        h = next;
        sweeps = sweep + 1;
        changes.push(change);
        if change <= cfg.tol_section {
            converged = true;
            break;
        }
        // non-contraction: ratio ≥ 1 for three consecutive sweeps
        if changes.len() >= 4 {
            let k = changes.len();
            let bad = (k - 3..k).all(|j| changes[j] >= changes[j - 1] * (1.0 - 1e-12));
            if bad {
                return Err(TransformError::NotContracting(changes));
            }
        }
    }
    let noise = cfg.tol_section * 10.0;
    let mut ratios = Vec::new();
    for j in 1..changes.len() {
        if changes[j - 1] > noise && changes[j] > noise {
            ratios.push(changes[j] / changes[j - 1]);
        }
    }
    let mu_1 = mu1(cfg.mu, 0.0);
    let analytic = match cfg.mode {
        TransformMode::Invariant => analytic_lambda_hat_weighted(&system.constants, mu_1),
        _ => analytic_lambda_hat(&system.constants, mu_1),
    };
    let lip_certificate = h
        .grids
        .iter()
        .map(|g| g.lip_max_sampled(128, 2))
        .fold(0.0f64, f64::max);
    let report = TransformReport {
        sweeps,
        final_change: changes.last().copied().unwrap_or(0.0),
        measured_lambda_hat: ratios.iter().copied().fold(0.0, f64::max),
        ratios,
        analytic_lambda_hat: analytic,
        eta_measured: measure_eta(system),
        lip_certificate,
        anchor: h.anchor_norm(),
        converged,
        class_violations: violations,
    };
    Ok((h, report))
}

/// The approximation defect η = sup_m max(|F̂(0,0)|, |Ĝ(0,0)|).
pub fn measure_eta(system: &SystemSpec) -> f64 {
    let mut sup: f64 = 0.0;
    for s in &system.atlas.samples {
        let lp = system.dynamics.pair_cs(&s.param);
        let zx = DVector::zeros(lp.pair.dim_x);
        let zz = DVector::zeros(lp.pair.dim_z);
        sup = sup.max(max_norm(&lp.pair.f(&zx, &zz))).max(max_norm(&lp.pair.g(&zx, &zz)));
    }
    sup
}

/// A point of an orbit: base parameter of the covering chart and frame
/// coordinates there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphPoint {
    pub base_param: Vec<f64>,
    pub x_cs: Vec<f64>,
    pub x_u: Vec<f64>,
}

impl GraphPoint {
    pub fn base(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.base_param)
    }

    pub fn cs(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_cs)
    }

    pub fn u(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_u)
    }
}

/// The unique H-image on Graph h₀ of a core-tube point: solve the cs fixed
/// point at the covering sample and read the image off the section. The
/// (B)-condition uniqueness is witnessed by re-solving from a perturbed
/// initialization.
pub fn induced_forward_map(
    h0: &GraphSection,
    system: &SystemSpec,
    cfg: &TransformConfig,
    z: &GraphPoint,
) -> Result<(GraphPoint, f64), TransformError> {
    let atlas = &system.atlas;
    let x_cs = z.cs();
    let (grid_part, _) = h0.grid_and_tangent(&x_cs);
    if max_norm(&grid_part) > cfg.eps0 * (1.0 + 1e-9) {
        return Err(TransformError::OutsideCoreTube);
    }
    let i = atlas.nearest_sample(&z.base());
    let lp = system.dynamics.pair_cs(&atlas.samples[i].param);
    // re-center the query on the chart at sample i
    let shift = atlas.param_diff(&z.base(), &atlas.samples[i].param);
    let mut x_local = x_cs.clone();
    for k in 0..h0.d_t {
        x_local[h0.d_c1 + k] += shift[k];
    }
    let f1 = |w: &DVector<f64>| h0.eval_at(atlas, &lp.target_param, w);
    let (znext, _) = solve_cs_fixed_point(&lp.pair, &f1, &x_local, cfg.tol_fixed_point, 400)
        .map_err(|r| TransformError::FixedPointDiverged { sample: i, node: 0, residual: r })?;
    // uniqueness witness: a perturbed initialization lands on the same point
    let mut z2 = x_local.clone();
    z2 += DVector::from_element(z2.len(), 0.3 * cfg.eps0);
    let mut w = z2;
    for _ in 0..400 {
        let next = lp.pair.f(&x_local, &f1(&w));
        if (&next - &w).norm() <= cfg.tol_fixed_point {
            w = next;
            break;
        }
        w = next;
    }
    let uniqueness = (&w - &znext).norm();
    let u_next = f1(&znext);
    // split the image into tangent offset (base drift) and grid coordinates
    let (g_next, t_next) = h0.grid_and_tangent(&znext);
    let mut p_next = lp.target_param.clone();
    for k in 0..h0.d_t.min(p_next.len()) {
        p_next[k] += t_next[k];
    }
    let mut cs_next = h0.cs_from_grid(&g_next);
    // tangent offset absorbed into the base parameter
    for k in 0..h0.d_t {
        cs_next[h0.d_c1 + k] = 0.0;
    }
    Ok((
        GraphPoint {
            base_param: p_next.iter().copied().collect(),
            x_cs: cs_next.iter().copied().collect(),
            x_u: u_next.iter().copied().collect(),
        },
        uniqueness,
    ))
}

/// Max over trials of d(Γh₁,Γh₂)/d(h₁,h₂) on random admissible sections.
pub fn estimate_contraction(
    system: &SystemSpec,
    cfg: &TransformConfig,
    trials: usize,
    seed: u64,
) -> Result<f64, TransformError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let split = &system.atlas.samples[0].split;
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let make = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut s = GraphSection::zero(
                system.atlas.len(),
                split.d_c1,
                split.d_t,
                split.d_s,
                split.d_u,
                cfg.nodes_per_axis,
                cfg.sigma_star,
                cfg.rho_star,
            );
            // one linear field shared by all charts keeps the class bounds
            let scale = cfg.mu.min(cfg.rho_star / cfg.sigma_star) * 0.8;
            let m = nalgebra::DMatrix::from_fn(split.d_u, split.d_c1 + split.d_s, |_, _| {
                rng.gen_range(-1.0..1.0) * scale / ((split.d_c1 + split.d_s) as f64)
            });
            for g in s.grids.iter_mut() {
                for node in 0..g.node_count() {
                    let x = g.node_coords(node);
                    let c1n = x.rows(0, split.d_c1).norm();
                    let sn = x.rows(split.d_c1, split.d_s).norm();
                    let psi = cfg.bump(c1n, sn);
                    g.set(node, &(psi * (&m * &x)));
                }
            }
            if matches!(cfg.mode, TransformMode::Invariant) {
                s.enforce_zero_on_base();
            }
            s
        };
        let h1 = make(&mut rng);
        let h2 = make(&mut rng);
        let metric = |a: &GraphSection, b: &GraphSection| match cfg.mode {
            TransformMode::Invariant => a.d2_distance(b),
            _ => a.sup_distance(b),
        };
        let d0 = metric(&h1, &h2);
        if d0 < 1e-12 {
            continue;
        }
        let g1 = transform_once(&h1, system, cfg)?;
        let g2 = transform_once(&h2, system, cfg)?;
        worst = worst.max(metric(&g1, &g2) / d0);
    }
    Ok(worst)
}

/// Sampled check of the strictly inflowing inclusion: on the enlarged cube
/// c⁻¹·(σ*, ϱ*) the images stay inside c·(σ*, ϱ*).
pub fn check_strictly_inflowing(
    system: &SystemSpec,
    cfg: &TransformConfig,
    c: f64,
    samples: usize,
    seed: u64,
) -> ConditionReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let split = &system.atlas.samples[0].split;
    let mut worst_f: f64 = 0.0;
    let mut worst_g: f64 = 0.0;
    let mut witnesses = Vec::new();
    for _ in 0..samples {
        let i = rng.gen_range(0..system.atlas.len());
        let lp = system.dynamics.pair_cs(&system.atlas.samples[i].param);
        let mut x = DVector::zeros(split.d_cs());
        for k in 0..split.d_c1 {
            x[k] = rng.gen_range(-1.0..1.0) * cfg.sigma_star / c;
        }
        for k in 0..split.d_s {
            x[split.d_c() + k] = rng.gen_range(-1.0..1.0) * cfg.sigma_star / c;
        }
        let z = DVector::from_fn(split.d_u, |_, _| rng.gen_range(-1.0..1.0) * cfg.rho_star / c);
        let fx = lp.pair.f(&x, &z);
        let gx = lp.pair.g(&x, &z);
        // tangent coordinates are base drift, not part of the inclusion
        let mut fgrid = 0.0f64;
        for k in 0..split.d_c1 {
            fgrid = fgrid.max(fx[k].abs());
        }
        for k in 0..split.d_s {
            fgrid = fgrid.max(fx[split.d_c() + k].abs());
        }
        worst_f = worst_f.max(fgrid / cfg.sigma_star);
        worst_g = worst_g.max(max_norm(&gx) / cfg.rho_star);
        if fgrid > c * cfg.sigma_star || max_norm(&gx) > c * cfg.rho_star {
            witnesses.push(ViolationWitness {
                which: "strictly inflowing inclusion".into(),
                source: (x.iter().copied().collect(), z.iter().copied().collect()),
                other: (vec![], vec![]),
                lhs: fgrid.max(max_norm(&gx)),
                rhs: c * cfg.sigma_star.max(cfg.rho_star),
            });
        }
    }
    let preds = vec![
        PredicateValue {
            name: "inflow: sup |F̂|/σ* ≤ c".into(),
            lhs: worst_f,
            rhs: c,
            passed: worst_f <= c,
        },
        PredicateValue {
            name: "inflow: sup |Ĝ|/ϱ* ≤ c".into(),
            lhs: worst_g,
            rhs: c,
            passed: worst_g <= c,
        },
    ];
    let mut report = ConditionReport::from_predicates(preds);
    report.violated_pairs = witnesses;
    report.passed = report.passed && report.violated_pairs.is_empty();
    report
}

/// Sampled strong-s-contraction check: for graph-point pairs whose image
/// u-difference is bounded by B·(|Δx^c|+|Δx^s|), the image s-difference is
/// bounded by λ*_s·(|Δx^c|+|Δx^s|).
pub fn check_strong_s_contraction(
    system: &SystemSpec,
    cfg: &TransformConfig,
    b_const: f64,
    lambda_s_star: f64,
    samples: usize,
    seed: u64,
) -> ConditionReport {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let split = &system.atlas.samples[0].split;
    let mut violated = Vec::new();
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let i = rng.gen_range(0..system.atlas.len());
        let lp = system.dynamics.pair_cs(&system.atlas.samples[i].param);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let x = DVector::from_fn(split.d_cs(), |_, _| rng.gen_range(-1.0..1.0) * cfg.sigma_star);
            let z = DVector::from_fn(split.d_u, |_, _| rng.gen_range(-1.0..1.0) * cfg.rho_star);
            (x, z)
        };
        let (x1, z1) = draw(&mut rng);
        let (x2, z2) = draw(&mut rng);
        let dcs = (&x1 - &x2).norm();
        let du_img = (&z1 - &z2).norm();
        if du_img > b_const * dcs {
            continue;
        }
        let f1 = lp.pair.f(&x1, &z1);
        let f2 = lp.pair.f(&x2, &z2);
        let ds_img = (f1.rows(split.d_c(), split.d_s) - f2.rows(split.d_c(), split.d_s)).norm();
        if dcs > 1e-12 {
            worst = worst.max(ds_img / dcs);
        }
        if ds_img > lambda_s_star * dcs + 1e-9 {
            violated.push(ViolationWitness {
                which: "strong s-contraction (★★)".into(),
                source: (x1.iter().copied().collect(), z1.iter().copied().collect()),
                other: (x2.iter().copied().collect(), z2.iter().copied().collect()),
                lhs: ds_img,
                rhs: lambda_s_star * dcs,
            });
        }
    }
    ConditionReport {
        passed: violated.is_empty(),
        violated_pairs: violated,
        measured_constants: None,
        predicate_values: vec![PredicateValue {
            name: "measured λ*_s".into(),
            lhs: worst,
            rhs: lambda_s_star,
            passed: worst <= lambda_s_star,
        }],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use std::sync::Arc;

    #[test]
    fn bump_profile_plateau_and_support() {
        let p = bump_profile(0.1, 0.05, false).unwrap();
        assert_abs_diff_eq!(p.eval(0.025), 1.0);
        assert_abs_diff_eq!(p.eval(0.2), 0.0);
        // piecewise-linear slope
        let mut lip: f64 = 0.0;
        let mut t = 0.0;
        while t < 0.12 {
            let s = ((p.eval(t + 1e-7) - p.eval(t)) / 1e-7).abs();
            lip = lip.max(s);
            t += 1e-4;
        }
        assert_abs_diff_eq!(lip, 1.0 / 0.05, epsilon = 1e-3);
    }

    #[test]
    fn quintic_bump_slope_matches_15_8() {
        let p = bump_profile(0.1, 0.05, true).unwrap();
        let mut lip: f64 = 0.0;
        let mut t = 0.05;
        while t < 0.1 {
            lip = lip.max(p.derivative(t).abs());
            t += 1e-6;
        }
        assert_abs_diff_eq!(lip, 1.875 / 0.05, epsilon = 1e-3);
        // analytic derivative vs finite differences
        for t in [0.06, 0.075, 0.09] {
            let fd = (p.eval(t + 1e-7) - p.eval(t - 1e-7)) / 2e-7;
            assert_abs_diff_eq!(p.derivative(t), fd, epsilon = 1e-5);
        }
        assert!(bump_profile(0.05, 0.1, true).is_err());
    }

    #[test]
    fn fixed_point_no_z_dependence_is_one_shot() {
        // F(x,z) = 0.5x: z = 0.5x immediately
        let pair = GeneratingPair::new(
            Arc::new(|x: &DVector<f64>, _: &DVector<f64>| 0.5 * x),
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| z.clone()),
            (1.0, 1.0),
            (1, 1),
        );
        let f1 = |_: &DVector<f64>| DVector::zeros(1);
        let (z, iters) =
            solve_cs_fixed_point(&pair, f1, &dvector![0.8], 1e-12, 100).unwrap();
        assert_abs_diff_eq!(z[0], 0.4, epsilon = 1e-12);
        assert!(iters <= 2);
    }

    #[test]
    fn fixed_point_linear_closed_form() {
        // F(x,z) = 0.5x + 0.1z, f(w) = 0.2w: z = 0.5x/0.98
        let pair = GeneratingPair::new(
            Arc::new(|x: &DVector<f64>, z: &DVector<f64>| 0.5 * x + 0.1 * z),
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| z.clone()),
            (1.0, 1.0),
            (1, 1),
        );
        let f1 = |w: &DVector<f64>| 0.2 * w;
        let (z, _) = solve_cs_fixed_point(&pair, f1, &dvector![1.0], 1e-13, 200).unwrap();
        assert_abs_diff_eq!(z[0], 0.5 / 0.98, epsilon = 1e-12);
    }

    #[test]
    fn fixed_point_detects_expansion() {
        // F(x,z) = 2z·(coupling 1): not a contraction
        let pair = GeneratingPair::new(
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| 2.0 * z + DVector::from_element(1, 1.0)),
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| z.clone()),
            (1.0, 1.0),
            (1, 1),
        );
        let f1 = |w: &DVector<f64>| w.clone();
        assert!(solve_cs_fixed_point(&pair, f1, &dvector![0.1], 1e-12, 100).is_err());
    }
}
