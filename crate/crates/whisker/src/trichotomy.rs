//! Trichotomy driver: the center-stable section via the graph transform, the
//! center-unstable section via the dual correspondence (backward dynamics
//! never invert H numerically), the center manifold by intersection, and
//! orbit generation/classification.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{ConditionReport, PredicateValue, ViolationWitness};
use crate::graph_transform::{
    induced_forward_map, iterate, GraphPoint, TransformConfig, TransformReport,
};
use crate::section::GraphSection;
use crate::systems::{SystemError, SystemSpec};

#[derive(Debug, Error)]
pub enum TrichotomyError {
    #[error("center intersection not contractive: measured μ_cs·μ_cu = {0:.3} ≥ 1")]
    IntersectionIllPosed(f64),
    #[error("orbit point outside the core tube at step {0}")]
    OutsideTube(usize),
    #[error(transparent)]
    Transform(#[from] crate::graph_transform::TransformError),
    #[error(transparent)]
    System(#[from] SystemError),
}

/// The three computed objects and their measured Lipschitz certificates.
#[derive(Debug, Clone)]
pub struct ManifoldTriple {
    pub h_cs: GraphSection,
    pub h_cu: GraphSection,
    /// per base sample: the (x^s, x^u) intersection point
    pub h_c: Vec<(DVector<f64>, DVector<f64>)>,
    pub mu_cs: f64,
    pub mu_cu: f64,
    pub mu_c: f64,
}

/// Compute the center-stable section; the report carries the contraction
/// ratios and the Lipschitz certificate μ_cs.
pub fn compute_cs(
    system: &SystemSpec,
    cfg: &TransformConfig,
) -> Result<(GraphSection, TransformReport), TrichotomyError> {
    Ok(iterate(None, system, cfg)?)
}

/// Compute the center-unstable section by running the center-stable
/// machinery on the dual correspondence over the inverted base map.
pub fn compute_cu_via_dual(
    system: &SystemSpec,
    cfg: &TransformConfig,
) -> Result<(GraphSection, TransformReport, SystemSpec), TrichotomyError> {
    let dual = system.dual_scu()?;
    let (h, report) = iterate(None, &dual, cfg)?;
    Ok((h, report, dual))
}

/// Per-sample Picard solve of x^u = h_cs(m̂, x^s), x^s = h_cu(m̂, x^u); in
/// the invariant case (η = 0) the solution is the origin at every sample.
pub fn intersect_center(
    system: &SystemSpec,
    h_cs: &GraphSection,
    h_cu: &GraphSection,
    tol: f64,
) -> Result<ManifoldTriple, TrichotomyError> {
    let mu_cs = h_cs
        .grids
        .iter()
        .map(|g| g.lip_max_sampled(64, 3))
        .fold(0.0f64, f64::max);
    let mu_cu = h_cu
        .grids
        .iter()
        .map(|g| g.lip_max_sampled(64, 4))
        .fold(0.0f64, f64::max);
    if mu_cs * mu_cu >= 1.0 {
        return Err(TrichotomyError::IntersectionIllPosed(mu_cs * mu_cu));
    }
    let atlas = &system.atlas;
    let split = &atlas.samples[0].split;
    let (d_s, d_u) = (split.d_s, split.d_u);
    let mut h_c = Vec::with_capacity(atlas.len());
    for i in 0..atlas.len() {
        let mut x_u = DVector::zeros(d_u);
        let mut x_s = DVector::zeros(d_s);
        for _ in 0..400 {
            // h_cu is a section over the dual layout: grid axes (c1, u)
            let xs_next = h_cu.grids[i].eval(&embed(h_cu, &x_u));
            let xu_next = h_cs.grids[i].eval(&embed(h_cs, &xs_next));
            let change = (&xu_next - &x_u).norm().max((&xs_next - &x_s).norm());
            x_u = xu_next;
            x_s = xs_next;
            if change <= tol {
                break;
            }
        }
        h_c.push((x_s, x_u));
    }
    Ok(ManifoldTriple { h_cs: h_cs.clone(), h_cu: h_cu.clone(), h_c, mu_cs, mu_cu, mu_c: mu_cs.max(mu_cu) })
}

/// Embed fiber coordinates into a section's grid axes (zero c₁-offset).
fn embed(section: &GraphSection, fiber: &DVector<f64>) -> DVector<f64> {
    let mut g = DVector::zeros(section.d_c1 + section.d_s);
    for k in 0..section.d_s.min(fiber.len()) {
        g[section.d_c1 + k] = fiber[k];
    }
    g
}

/// Orbit type parameters (ε₀, ε₁, σ, ϱ).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OrbitType {
    pub eps0: f64,
    pub eps1: f64,
    pub sigma: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitDirection {
    Forward,
    Backward,
}

/// A generated or ingested orbit: points, per-step membership residuals,
/// certification of the type bounds, truncation reason if the orbit left
/// the tube.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitSegment {
    pub points: Vec<GraphPoint>,
    pub residuals: Vec<f64>,
    pub orbit_type: OrbitType,
    pub direction: OrbitDirection,
    pub truncated: Option<String>,
}

impl OrbitSegment {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), crate::section::SectionError> {
        let mut w = csv::Writer::from_writer(out);
        let p0 = &self.points[0];
        let mut header = vec!["k".to_string()];
        header.extend((0..p0.base_param.len()).map(|i| format!("base_param_{i}")));
        header.extend((0..p0.x_cs.len()).map(|i| format!("x_cs{i}")));
        header.extend((0..p0.x_u.len()).map(|i| format!("x_u{i}")));
        header.push("residual".into());
        w.write_record(&header)
            .map_err(|e| crate::section::SectionError::Csv(e.to_string()))?;
        for (k, p) in self.points.iter().enumerate() {
            let mut rec = vec![format!("{k}")];
            rec.extend(p.base_param.iter().map(|v| format!("{v:.17e}")));
            rec.extend(p.x_cs.iter().map(|v| format!("{v:.17e}")));
            rec.extend(p.x_u.iter().map(|v| format!("{v:.17e}")));
            rec.push(format!("{:.17e}", self.residuals.get(k).copied().unwrap_or(0.0)));
            w.write_record(&rec)
                .map_err(|e| crate::section::SectionError::Csv(e.to_string()))?;
        }
        w.flush().map_err(|e| crate::section::SectionError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Membership residual of one claimed step z_k → z_{k+1} through the local
/// generating pair at the chart covering z_k.
pub fn step_residual(system: &SystemSpec, from: &GraphPoint, to: &GraphPoint) -> f64 {
    let atlas = &system.atlas;
    let i = atlas.nearest_sample(&from.base());
    let lp = system.dynamics.pair_cs(&atlas.samples[i].param);
    let split = &atlas.samples[i].split;
    // source coordinates relative to the chart sample
    let mut x1 = from.cs();
    let shift = atlas.param_diff(&from.base(), &atlas.samples[i].param);
    for k in 0..split.d_t {
        x1[split.d_c1 + k] += shift[k];
    }
    // target coordinates relative to the pair's target base
    let mut x2 = to.cs();
    let tshift = atlas.param_diff(&to.base(), &lp.target_param);
    for k in 0..split.d_t {
        x2[split.d_c1 + k] += tshift[k];
    }
    let y1 = from.u();
    let y2 = to.u();
    let ry = (&y1 - lp.pair.g(&x1, &y2)).norm();
    let rx = (&x2 - lp.pair.f(&x1, &y2)).norm();
    ry.max(rx)
}

/// Generate a forward orbit on the computed section via the induced map,
/// certifying the (ε₀, ε₁, σ, ϱ)-type bounds at every step. The orbit is
/// truncated (with the reason recorded) when it exits the tube.
pub fn generate_orbit(
    system: &SystemSpec,
    h0: &GraphSection,
    cfg: &TransformConfig,
    z0: GraphPoint,
    steps: usize,
    orbit_type: OrbitType,
) -> Result<OrbitSegment, TrichotomyError> {
    let atlas = &system.atlas;
    let (grid0, _) = h0.grid_and_tangent(&z0.cs());
    if crate::linalg::max_norm(&grid0) > orbit_type.eps0 * (1.0 + 1e-9) {
        return Err(TrichotomyError::OutsideTube(0));
    }
    let mut points = vec![z0];
    let mut residuals = vec![0.0];
    let mut truncated = None;
    for k in 0..steps {
        let current = points.last().unwrap().clone();
        match induced_forward_map(h0, system, cfg, &current) {
            Ok((next, _uniq)) => {
                // type certification: every base parameter lies on K̂, so the
                // anchor m̂⁰_k is the point itself and the drift bound is
                // |m̂_{k+1} − û(m̂⁰_k)| ≤ ε₁
                let image_param = atlas.map_param(&current.base());
                let drift1 = atlas.param_diff(&next.base(), &image_param).norm();
                let (gnext, _) = h0.grid_and_tangent(&next.cs());
                let s_norm = crate::linalg::max_norm(&gnext);
                let u_norm = crate::linalg::max_norm(&next.u());
                if drift1 > orbit_type.eps1 {
                    truncated = Some(format!(
                        "base drift exceeded at step {}: {:.3e}",
                        k + 1,
                        drift1
                    ));
                    break;
                }
                if s_norm > orbit_type.sigma || u_norm > orbit_type.rho {
                    truncated = Some(format!(
                        "fiber bound exceeded at step {}: |s| = {s_norm:.3e}, |u| = {u_norm:.3e}",
                        k + 1
                    ));
                    break;
                }
                residuals.push(step_residual(system, &current, &next));
                points.push(next);
            }
            Err(crate::graph_transform::TransformError::OutsideCoreTube) => {
                truncated = Some(format!("left the core tube at step {}", k + 1));
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(OrbitSegment {
        points,
        residuals,
        orbit_type,
        direction: OrbitDirection::Forward,
        truncated,
    })
}

/// Forward-type classification: the graph defect |h(m̂_k,x^s_k) − x^u_k| must
/// decay like λ̂_u^{K−k}·2ϱ* + tol for the available tail length K; failures
/// are reported with the violating index.
pub fn classify_orbit(
    orbit: &OrbitSegment,
    h0: &GraphSection,
    system: &SystemSpec,
    lambda_hat: f64,
    tol: f64,
) -> ConditionReport {
    let atlas = &system.atlas;
    let k_last = orbit.points.len() - 1;
    let mut violations = Vec::new();
    let mut preds = Vec::new();
    for (k, p) in orbit.points.iter().enumerate() {
        let value = h0.eval_at(atlas, &p.base(), &p.cs());
        let defect = (value - p.u()).norm();
        let bound = lambda_hat.powi((k_last - k) as i32) * 2.0 * h0.rho + tol;
        if defect > bound {
            violations.push(ViolationWitness {
                which: format!("orbit defect at index {k}"),
                source: (p.base_param.clone(), p.x_cs.clone()),
                other: (p.x_u.clone(), vec![]),
                lhs: defect,
                rhs: bound,
            });
        }
    }
    // membership residual sanity of the claimed steps; the interpolation
    // error of the discretized section is folded in (never tighter than
    // 5·(grid spacing)²)
    let spacing = h0.grids[0].spacing();
    let step_tol = (5.0 * spacing * spacing).max(1e-8);
    let max_step_residual = orbit
        .residuals
        .iter()
        .copied()
        .fold(0.0f64, f64::max);
    preds.push(PredicateValue {
        name: format!("max step membership residual ≤ {step_tol:.3e}"),
        lhs: max_step_residual,
        rhs: step_tol,
        passed: max_step_residual <= step_tol,
    });
    let mut report = ConditionReport::from_predicates(preds);
    report.passed = report.passed && violations.is_empty();
    report.violated_pairs = violations;
    report
}

/// Invariant-case growth characterization: either the ratio condition
/// |x^u_k| ≤ β̃₀|x^s_k| holds for all k, or the ε_s-weighted sums stay
/// bounded; when one of them holds the orbit must lie on h₀ within `tol`
/// and contract like |x^s_{k+1}| ≤ (λ_cs + χ̂)|x^s_k| with χ̂ = 0.05.
pub fn growth_characterization(
    orbit: &OrbitSegment,
    h0: &GraphSection,
    system: &SystemSpec,
    beta0: f64,
    eps_s: f64,
    tol: f64,
) -> ConditionReport {
    let atlas = &system.atlas;
    let eta = crate::graph_transform::measure_eta(system);
    let mut preds = vec![PredicateValue {
        name: "invariant mode (η = 0)".into(),
        lhs: eta,
        rhs: 1e-9,
        passed: eta <= 1e-9,
    }];
    let split = &atlas.samples[0].split;
    let s_of = |p: &GraphPoint| {
        let cs = p.cs();
        split.s_part_of_cs(&cs).norm()
    };
    let ratio_ok = orbit
        .points
        .iter()
        .all(|p| p.u().norm() <= beta0 * s_of(p) + 1e-12);
    let mut weight = 1.0;
    let weighted_sup = orbit
        .points
        .iter()
        .map(|p| {
            let v = (s_of(p) + p.u().norm()) / weight;
            weight *= eps_s;
            v
        })
        .fold(0.0f64, f64::max);
    let weighted_ok = weighted_sup.is_finite() && weighted_sup <= 1e3;
    preds.push(PredicateValue {
        name: format!("ratio condition |x^u| ≤ β̃₀|x^s| (β̃₀ = {beta0})"),
        lhs: if ratio_ok { 0.0 } else { 1.0 },
        rhs: 0.5,
        passed: ratio_ok,
    });
    preds.push(PredicateValue {
        name: format!("weighted boundedness with ε_s = {eps_s}"),
        lhs: weighted_sup,
        rhs: 1e3,
        passed: weighted_ok,
    });
    if !(ratio_ok || weighted_ok) {
        // neither hypothesis holds: the characterization is not claimed
        let mut report = ConditionReport::from_predicates(preds);
        report.passed = false;
        report.predicate_values.push(PredicateValue {
            name: "characterization inconclusive (no hypothesis holds)".into(),
            lhs: 1.0,
            rhs: 0.0,
            passed: false,
        });
        return report;
    }
    // conclusion: membership on h₀ and the contraction of |x^s|
    let lam_cs = system.constants.sup_lambda_cs();
    let chi_hat = 0.05;
    let mut worst_defect: f64 = 0.0;
    for p in &orbit.points {
        let value = h0.eval_at(atlas, &p.base(), &p.cs());
        worst_defect = worst_defect.max((value - p.u()).norm());
    }
    preds.push(PredicateValue {
        name: "orbit on h₀".into(),
        lhs: worst_defect,
        rhs: tol,
        passed: worst_defect <= tol,
    });
    let mut worst_growth: f64 = 0.0;
    for w in orbit.points.windows(2) {
        let s0 = s_of(&w[0]);
        let s1 = s_of(&w[1]);
        if s0 > 1e-12 {
            worst_growth = worst_growth.max(s1 / s0);
        }
    }
    preds.push(PredicateValue {
        name: format!("|x^s_{{k+1}}| ≤ (λ_cs + χ̂)|x^s_k| with χ̂ = {chi_hat}"),
        lhs: worst_growth,
        rhs: lam_cs + chi_hat,
        passed: worst_growth <= lam_cs + chi_hat,
    });
    ConditionReport::from_predicates(preds)
}
