//! The (A)(B)-condition calculus: deriving the hyperbolicity constants from
//! Lipschitz data, verifying the conditions empirically on sampled graph
//! points, and evaluating the angle/spectral/gap predicates.
//!
//! The (A)(B) condition on a correspondence H ~ (F,G) quantifies over pairs
//! of graph points (x₁,y₁)×(x₂,y₂), (x₁′,y₁′)×(x₂′,y₂′):
//!
//! (A) if |x₁−x₁′| ≤ α|y₁−y₁′| then |x₂−x₂′| ≤ α′|y₂−y₂′|
//!     and |y₁−y₁′| ≤ λ_u|y₂−y₂′|;
//! (B) if |y₂−y₂′| ≤ β|x₂−x₂′| then |y₁−y₁′| ≤ β′|x₁−x₁′|
//!     and |x₂−x₂′| ≤ λ_s|x₁−x₁′|.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correspondence::CorrespondenceHandle;
use crate::linalg::op_norm;

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("generating maps expose no derivatives")]
    MissingDerivatives,
}

/// Per-base-sample values of the condition functions α(m), β(m), ….
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbAtSample {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub lambda_cs: f64,
    pub lambda_u: f64,
}

/// The constants of an (A)(α;α′,λ_u)(B)(β;β′,λ_cs) condition, with the
/// auxiliary ς₀, γ₀ and the approximation defect η.
///
/// Interpolation between base samples is piecewise constant (nearest
/// sample); predicates take sup/inf over the stored values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AbConstants {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta: f64,
    pub beta_prime: f64,
    pub lambda_cs: f64,
    pub lambda_u: f64,
    pub varsigma0: f64,
    pub gamma0: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_sample: Vec<AbAtSample>,
}

impl AbConstants {
    pub fn uniform(alpha: f64, beta: f64, lambda_cs: f64, lambda_u: f64) -> Self {
        Self {
            alpha,
            alpha_prime: alpha,
            beta,
            beta_prime: beta,
            lambda_cs,
            lambda_u,
            varsigma0: 2.0,
            gamma0: 0.0,
            eta: 0.0,
            per_sample: Vec::new(),
        }
    }

    pub fn sup_alpha(&self) -> f64 {
        self.per_sample.iter().map(|s| s.alpha).fold(self.alpha, f64::max)
    }

    pub fn sup_beta_prime(&self) -> f64 {
        self.per_sample.iter().map(|s| s.beta_prime).fold(self.beta_prime, f64::max)
    }

    pub fn inf_beta(&self) -> f64 {
        self.per_sample.iter().map(|s| s.beta).fold(self.beta, f64::min)
    }

    pub fn sup_lambda_cs(&self) -> f64 {
        self.per_sample.iter().map(|s| s.lambda_cs).fold(self.lambda_cs, f64::max)
    }

    pub fn sup_lambda_u(&self) -> f64 {
        self.per_sample.iter().map(|s| s.lambda_u).fold(self.lambda_u, f64::max)
    }

    /// ϑ = (1 − ς₀·sup α·sup β′)⁻¹ in the (A′)-case; callers pass ϑ = 1 when
    /// the full (A)-condition (not just (A′)) is certified.
    pub fn vartheta(&self) -> f64 {
        1.0 / (1.0 - self.varsigma0 * self.sup_alpha() * self.sup_beta_prime())
    }

    /// Constants of the dual correspondence: the (A) and (B) data swap.
    pub fn dual_swap(&self) -> Self {
        Self {
            alpha: self.beta,
            alpha_prime: self.beta_prime,
            beta: self.alpha,
            beta_prime: self.alpha_prime,
            lambda_cs: self.lambda_u,
            lambda_u: self.lambda_cs,
            varsigma0: self.varsigma0,
            gamma0: self.gamma0,
            eta: self.eta,
            per_sample: self
                .per_sample
                .iter()
                .map(|s| AbAtSample {
                    alpha: s.beta,
                    alpha_prime: s.beta_prime,
                    beta: s.alpha,
                    beta_prime: s.alpha_prime,
                    lambda_cs: s.lambda_u,
                    lambda_u: s.lambda_cs,
                })
                .collect(),
        }
    }
}

/// One evaluated predicate: name, the two sides, and the verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredicateValue {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub passed: bool,
}

/// A witness pair violating a condition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViolationWitness {
    pub which: String,
    pub source: (Vec<f64>, Vec<f64>),
    pub other: (Vec<f64>, Vec<f64>),
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a condition check. `passed` ⟺ `violated_pairs` is empty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub passed: bool,
    pub violated_pairs: Vec<ViolationWitness>,
    pub measured_constants: Option<AbConstants>,
    pub predicate_values: Vec<PredicateValue>,
}

impl ConditionReport {
    pub fn from_predicates(predicates: Vec<PredicateValue>) -> Self {
        let passed = predicates.iter().all(|p| p.passed);
        Self { passed, violated_pairs: Vec::new(), measured_constants: None, predicate_values: predicates }
    }
}

/// Lemma "Lipschitz ⇒ (A)(B)", max-norm form: blockwise bounds
/// |ΔF| ≤ max{λ_s|Δx|, α|Δz|}, |ΔG| ≤ max{β|Δx|, λ_u|Δz|} with αβ < 1 and
/// λ_sλ_u < 1 give (A)(α,λ_u)(B)(β,λ_s); when αβ < λ_sλ_u the constants
/// sharpen to (A)(c⁻¹α; α, λ_u)(B)(c⁻¹β; β, λ_s) with c = λ_sλ_u.
pub fn ab_from_max_lipschitz(
    lam_s: f64,
    alpha: f64,
    beta: f64,
    lam_u: f64,
) -> Result<AbConstants, ConditionError> {
    if alpha * beta >= 1.0 {
        return Err(ConditionError::Precondition(format!(
            "αβ = {:.6} ≥ 1",
            alpha * beta
        )));
    }
    if lam_s * lam_u >= 1.0 {
        return Err(ConditionError::Precondition(format!(
            "λ_sλ_u = {:.6} ≥ 1",
            lam_s * lam_u
        )));
    }
    let mut out = AbConstants::uniform(alpha, beta, lam_s, lam_u);
    let c = lam_s * lam_u;
    if alpha * beta < c {
        out.alpha = alpha / c;
        out.alpha_prime = alpha;
        out.beta = beta / c;
        out.beta_prime = beta;
    }
    Ok(out)
}

/// Lemma "Lipschitz ⇒ (A)(B)", additive form: from an (A′)(α̃,λ̃_u)(B′)(β̃,λ̃_s)
/// condition with λ̃_sλ̃_u < c² and α̃β̃ < (c−√(λ̃_sλ̃_u))², 0 < c ≤ 1, the
/// correspondence satisfies (A)(α; cα, λ_u)(B)(β; cβ, λ_s) with
///   α = (b−√(b²−4cα̃β̃))/(2β̃), β = (b−√(b²−4cα̃β̃))/(2α̃),
///   λ_s = λ̃_s/(1−αβ̃), λ_u = λ̃_u/(1−βα̃), b = c−λ̃_sλ̃_u+α̃β̃.
///
/// The roots are evaluated as 2cα̃/(b+√disc) and 2cβ̃/(b+√disc), which is the
/// same number without cancellation and extends continuously through
/// α̃ = 0 or β̃ = 0.
pub fn ab_from_additive_lipschitz(
    alpha_t: f64,
    beta_t: f64,
    lam_s_t: f64,
    lam_u_t: f64,
    c: f64,
) -> Result<AbConstants, ConditionError> {
    if !(0.0 < c && c <= 1.0) {
        return Err(ConditionError::Precondition(format!("c = {c} not in (0,1]")));
    }
    if lam_s_t * lam_u_t >= c * c {
        return Err(ConditionError::Precondition(format!(
            "λ̃_sλ̃_u = {:.6} ≥ c² = {:.6}",
            lam_s_t * lam_u_t,
            c * c
        )));
    }
    let margin = c - (lam_s_t * lam_u_t).sqrt();
    if alpha_t * beta_t >= margin * margin {
        return Err(ConditionError::Precondition(format!(
            "α̃β̃ = {:.6} ≥ (c−√(λ̃_sλ̃_u))² = {:.6}",
            alpha_t * beta_t,
            margin * margin
        )));
    }
    let b = c - lam_s_t * lam_u_t + alpha_t * beta_t;
    let disc = b * b - 4.0 * c * alpha_t * beta_t;
    if disc < 0.0 {
        return Err(ConditionError::Precondition(
            "internal: negative discriminant under valid preconditions".into(),
        ));
    }
    let denom = b + disc.sqrt();
    let alpha = 2.0 * c * alpha_t / denom;
    let beta = 2.0 * c * beta_t / denom;
    let lam_s = lam_s_t / (1.0 - alpha * beta_t);
    let lam_u = lam_u_t / (1.0 - beta * alpha_t);
    debug_assert!(alpha * beta < 1.0 && lam_s * lam_u < 1.0);
    let mut out = AbConstants::uniform(alpha, beta, lam_s, lam_u);
    out.alpha_prime = c * alpha;
    out.beta_prime = c * beta;
    Ok(out)
}

/// (A′)(B) constants from blockwise Lipschitz data with a chosen cone
/// opening β — the route for systems with a neutral center block whose
/// λ_cs·λ_u is too large for the half-gap choice (the ς₀ ≥ 1 case with a
/// measured γ₀). Direct consequence of the Lipschitz bounds:
/// under |Δy₂| ≤ β|Δx₂| one gets |Δx₂| ≤ λ_cs|Δx₁| with
/// λ_cs = lf_x/(1−lf_z·β) and |Δy₁| ≤ β′|Δx₁| with
/// β′ = lg_x + lg_z·β·λ_cs; the (A′) data α = lf_z, λ_u = lg_z is read off.
pub fn ab_case2_from_lipschitz(
    lf_x: f64,
    lf_z: f64,
    lg_x: f64,
    lg_z: f64,
    beta: f64,
    gamma0: f64,
) -> Result<AbConstants, ConditionError> {
    if lf_z * beta >= 1.0 {
        return Err(ConditionError::Precondition(format!(
            "lip F(x,·)·β = {:.4} ≥ 1",
            lf_z * beta
        )));
    }
    let lambda_cs = lf_x / (1.0 - lf_z * beta);
    let beta_prime = lg_x + lg_z * beta * lambda_cs;
    Ok(AbConstants {
        alpha: lf_z,
        alpha_prime: lf_z,
        beta,
        beta_prime,
        lambda_cs,
        lambda_u: lg_z,
        varsigma0: 1.0,
        gamma0,
        eta: 0.0,
        per_sample: Vec::new(),
    })
}

/// Sampling plan for the empirical checks.
#[derive(Debug, Clone, Copy)]
pub struct SamplePlan {
    pub pairs: usize,
    pub x_radius: f64,
    pub z_radius: f64,
    pub seed: u64,
}

impl SamplePlan {
    pub fn new(pairs: usize, x_radius: f64, z_radius: f64, seed: u64) -> Self {
        Self { pairs, x_radius, z_radius, seed }
    }
}

const CHECK_SLACK: f64 = 1e-9;

/// Empirical (A)(B) check on sampled pairs of graph points. Failure is data,
/// not an error: the report lists witnesses, and `measured_constants` holds
/// the tightest constants consistent with the sample.
pub fn check_ab_empirical(
    h: &CorrespondenceHandle,
    c: &AbConstants,
    plan: &SamplePlan,
) -> ConditionReport {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(plan.seed);
    let pair = &h.pair;
    let mut violated = Vec::new();
    let mut measured = AbConstants::uniform(0.0, 0.0, 0.0, 0.0);
    measured.alpha = c.alpha;
    measured.beta = c.beta;
    let graph_point = |x1: DVector<f64>, y2: DVector<f64>| {
        let y1 = pair.g(&x1, &y2);
        let x2 = pair.f(&x1, &y2);
        (x1, y1, x2, y2)
    };
    let draw_x = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_fn(pair.dim_x, |_, _| rng.gen_range(-1.0..1.0) * plan.x_radius)
    };
    let draw_z = |rng: &mut rand_chacha::ChaCha8Rng| {
        DVector::from_fn(pair.dim_z, |_, _| rng.gen_range(-1.0..1.0) * plan.z_radius)
    };
    for trial in 0..plan.pairs {
        // alternate fully random pairs with pairs sharing x₁ or y₂ so the
        // degenerate cones (α = 0 or β = 0) are exercised too
        let (xa, za) = (draw_x(&mut rng), draw_z(&mut rng));
        let (xb, zb) = match trial % 3 {
            0 => (draw_x(&mut rng), draw_z(&mut rng)),
            1 => (xa.clone(), draw_z(&mut rng)),
            _ => (draw_x(&mut rng), za.clone()),
        };
        let (x1, y1, x2, y2) = graph_point(xa, za);
        let (x1p, y1p, x2p, y2p) = graph_point(xb, zb);
        let dx1 = (&x1 - &x1p).norm();
        let dy1 = (&y1 - &y1p).norm();
        let dx2 = (&x2 - &x2p).norm();
        let dy2 = (&y2 - &y2p).norm();
        // (A): hypothesis |Δx₁| ≤ α|Δy₁|
        if dx1 <= c.alpha * dy1 + CHECK_SLACK {
            if dy2 > 0.0 {
                measured.alpha_prime = measured.alpha_prime.max(dx2 / dy2);
                measured.lambda_u = measured.lambda_u.max(dy1 / dy2);
            }
            if dx2 > c.alpha_prime * dy2 + CHECK_SLACK {
                violated.push(witness("A: |Δx₂| ≤ α′|Δy₂|", &x1, &y1, &x1p, &y1p, dx2, c.alpha_prime * dy2));
            }
            if dy1 > c.lambda_u * dy2 + CHECK_SLACK {
                violated.push(witness("A: |Δy₁| ≤ λ_u|Δy₂|", &x1, &y1, &x1p, &y1p, dy1, c.lambda_u * dy2));
            }
        }
        // (B): hypothesis |Δy₂| ≤ β|Δx₂|
        if dy2 <= c.beta * dx2 + CHECK_SLACK {
            if dx1 > 0.0 {
                measured.beta_prime = measured.beta_prime.max(dy1 / dx1);
                measured.lambda_cs = measured.lambda_cs.max(dx2 / dx1);
            }
            if dy1 > c.beta_prime * dx1 + CHECK_SLACK {
                violated.push(witness("B: |Δy₁| ≤ β′|Δx₁|", &x1, &y1, &x1p, &y1p, dy1, c.beta_prime * dx1));
            }
            if dx2 > c.lambda_cs * dx1 + CHECK_SLACK {
                violated.push(witness("B: |Δx₂| ≤ λ_cs|Δx₁|", &x1, &y1, &x1p, &y1p, dx2, c.lambda_cs * dx1));
            }
        }
    }
    ConditionReport {
        passed: violated.is_empty(),
        violated_pairs: violated,
        measured_constants: Some(measured),
        predicate_values: Vec::new(),
    }
}

fn witness(
    which: &str,
    x1: &DVector<f64>,
    y1: &DVector<f64>,
    x1p: &DVector<f64>,
    y1p: &DVector<f64>,
    lhs: f64,
    rhs: f64,
) -> ViolationWitness {
    ViolationWitness {
        which: which.to_string(),
        source: (x1.iter().copied().collect(), y1.iter().copied().collect()),
        other: (x1p.iter().copied().collect(), y1p.iter().copied().collect()),
        lhs,
        rhs,
    }
}

/// Linearized (invariant-cone) check: at every sampled point the pair
/// (DF, DG) must satisfy the (A)(α;α′,λ_u) condition and ‖D₁G‖ ≤ β.
/// Directions are sampled deterministically from the seed.
pub fn check_cone_linearized(
    h: &CorrespondenceHandle,
    c: &AbConstants,
    points: &[(DVector<f64>, DVector<f64>)],
    seed: u64,
) -> Result<ConditionReport, ConditionError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pair = &h.pair;
    let mut violated = Vec::new();
    for (x, z) in points {
        let (d1f, d2f) = pair.df(x, z);
        let (d1g, d2g) = pair.dg(x, z);
        if op_norm(&d1g) > c.beta + CHECK_SLACK {
            violated.push(witness("cone: ‖D₁G‖ ≤ β", x, z, x, z, op_norm(&d1g), c.beta));
        }
        // (A) for the linear pair over sampled directions
        for _ in 0..200 {
            let dx = DVector::from_fn(pair.dim_x, |_, _| rng.gen_range(-1.0..1.0));
            let dz = DVector::from_fn(pair.dim_z, |_, _| rng.gen_range(-1.0..1.0));
            let dy1 = &d1g * &dx + &d2g * &dz;
            let dx2 = &d1f * &dx + &d2f * &dz;
            let (ndx, ndy1, ndx2, ndz) = (dx.norm(), dy1.norm(), dx2.norm(), dz.norm());
            if ndx <= c.alpha * ndy1 + CHECK_SLACK {
                if ndx2 > c.alpha_prime * ndz + CHECK_SLACK {
                    violated.push(witness("cone A: |Δx₂| ≤ α′|Δy₂|", x, z, x, z, ndx2, c.alpha_prime * ndz));
                }
                if ndy1 > c.lambda_u * ndz + CHECK_SLACK {
                    violated.push(witness("cone A: |Δy₁| ≤ λ_u|Δy₂|", x, z, x, z, ndy1, c.lambda_u * ndz));
                }
            }
        }
    }
    Ok(ConditionReport {
        passed: violated.is_empty(),
        violated_pairs: violated,
        measured_constants: None,
        predicate_values: Vec::new(),
    })
}

/// Which predicate family to evaluate.
#[derive(Debug, Clone)]
pub enum PredicateMode {
    /// angle + spectral conditions of the dichotomy setup
    Dichotomy,
    /// dichotomy + the spectral gap sup λ_cs λ_u ϑ < 1
    Smooth,
    /// the trichotomy set; the second constants are the cu-block data
    Trichotomy { cu: AbConstants },
}

/// Evaluate the angle/spectral(/gap) predicates, returning every inequality
/// with both sides so reports are auditable without re-running.
pub fn check_hyperbolicity_predicates(c: &AbConstants, mode: &PredicateMode) -> ConditionReport {
    let mut preds = Vec::new();
    let vtheta = c.vartheta();
    let angle1 = c.sup_alpha() * c.sup_beta_prime();
    preds.push(PredicateValue {
        name: "angle: sup αβ′ < 1/(2ς₀)".into(),
        lhs: angle1,
        rhs: 1.0 / (2.0 * c.varsigma0),
        passed: angle1 < 1.0 / (2.0 * c.varsigma0),
    });
    let angle2 = c.inf_beta() - c.varsigma0 * c.sup_beta_prime();
    // β′ = 0 is the uncoupled degenerate case: the cone gap is vacuous
    preds.push(PredicateValue {
        name: "angle: inf{β − ς₀β′} > 0".into(),
        lhs: angle2,
        rhs: 0.0,
        passed: angle2 > 0.0 || c.sup_beta_prime() == 0.0,
    });
    let spectral = c.sup_lambda_u() * vtheta;
    preds.push(PredicateValue {
        name: "spectral: sup λ_u·ϑ < 1".into(),
        lhs: spectral,
        rhs: 1.0,
        passed: spectral < 1.0,
    });
    match mode {
        PredicateMode::Dichotomy => {}
        PredicateMode::Smooth => {
            let gap = c.sup_lambda_cs() * c.sup_lambda_u() * vtheta;
            preds.push(PredicateValue {
                name: "gap: sup λ_cs λ_u·ϑ < 1".into(),
                lhs: gap,
                rhs: 1.0,
                passed: gap < 1.0,
            });
        }
        PredicateMode::Trichotomy { cu } => {
            // (B3)(a): both blocks contract after a trajectory swap; the
            // cu-constants play the (A)-role through duality.
            let cross = cu.sup_alpha() * c.inf_beta();
            preds.push(PredicateValue {
                name: "trichotomy: sup α_cu β_cs < 1".into(),
                lhs: cross,
                rhs: 1.0,
                passed: cross < 1.0,
            });
            let su = c.sup_lambda_u();
            preds.push(PredicateValue {
                name: "trichotomy: sup λ_u < 1".into(),
                lhs: su,
                rhs: 1.0,
                passed: su < 1.0,
            });
            let ss = cu.sup_lambda_u();
            preds.push(PredicateValue {
                name: "trichotomy: sup λ_s < 1".into(),
                lhs: ss,
                rhs: 1.0,
                passed: ss < 1.0,
            });
            let angle_cu = cu.sup_alpha() * cu.sup_beta_prime();
            preds.push(PredicateValue {
                name: "trichotomy angle (cu): sup α β′ < 1/(2ς₀)".into(),
                lhs: angle_cu,
                rhs: 1.0 / (2.0 * cu.varsigma0),
                passed: angle_cu < 1.0 / (2.0 * cu.varsigma0),
            });
        }
    }
    ConditionReport::from_predicates(preds)
}

/// Sampled Lipschitz constant of `f` over the max-norm ball of the given
/// radius: the supremum of difference quotients together with the
/// maximizing pair. Monotone in the sample count.
pub fn estimate_lipschitz_constant<F>(
    f: F,
    dim: usize,
    radius: f64,
    samples: usize,
    seed: u64,
) -> (f64, (DVector<f64>, DVector<f64>))
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut sup = 0.0;
    let mut best = (DVector::zeros(dim), DVector::zeros(dim));
    for _ in 0..samples {
        let a = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0) * radius);
        let b = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0) * radius);
        let d = (&a - &b).norm();
        if d < 1e-12 {
            continue;
        }
        let q = (f(&a) - f(&b)).norm() / d;
        if q > sup {
            sup = q;
            best = (a, b);
        }
    }
    (sup, best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correspondence::linear_block_map;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn max_lipschitz_decoupled() {
        let c = ab_from_max_lipschitz(0.5, 0.0, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(c.alpha, 0.0);
        assert_abs_diff_eq!(c.lambda_u, 0.5);
        assert_abs_diff_eq!(c.beta, 0.0);
        assert_abs_diff_eq!(c.lambda_cs, 0.5);
    }

    #[test]
    fn max_lipschitz_sharpened() {
        // αβ = 0.01 < 0.25 = λ_sλ_u: sharpened cone openings α/c, β/c
        let c = ab_from_max_lipschitz(0.5, 0.1, 0.1, 0.5).unwrap();
        assert_abs_diff_eq!(c.alpha, 0.1 / 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(c.alpha_prime, 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(c.beta, 0.1 / 0.25, epsilon = 1e-14);
    }

    #[test]
    fn max_lipschitz_rejects_bad_angle() {
        assert!(matches!(
            ab_from_max_lipschitz(0.5, 2.0, 1.0, 0.5),
            Err(ConditionError::Precondition(_))
        ));
    }

    #[test]
    fn additive_zero_coupling_limit() {
        // α̃ = β̃ → 0: α → cα̃/b analytically; the stable form hits it exactly
        let c = ab_from_additive_lipschitz(0.0, 0.0, 0.5, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(c.alpha, 0.0);
        assert_abs_diff_eq!(c.beta, 0.0);
        assert_abs_diff_eq!(c.lambda_cs, 0.5);
        assert_abs_diff_eq!(c.lambda_u, 0.5);
        let eps = 1e-9;
        let c2 = ab_from_additive_lipschitz(eps, 0.0, 0.5, 0.5, 1.0).unwrap();
        let b = 1.0 - 0.25;
        assert_abs_diff_eq!(c2.alpha, eps / b, epsilon = 1e-18);
    }

    #[test]
    fn additive_matches_exhaustive_linear_check() {
        // evaluate the formulas; verify by exhaustive implication checking on
        // a scalar linear model with exactly these Lipschitz blocks
        let (at, bt, ls, lu) = (0.1, 0.1, 0.5, 0.5);
        let c = ab_from_additive_lipschitz(at, bt, ls, lu, 1.0).unwrap();
        // F(x,z) = λ̃_s x + α̃ z, G(x,z) = β̃ x + λ̃_u z has exactly these blocks
        let h = CorrespondenceHandle::from_generating_maps(
            Arc::new(move |x: &DVector<f64>, z: &DVector<f64>| ls * x + at * z),
            Arc::new(move |x: &DVector<f64>, z: &DVector<f64>| bt * x + lu * z),
            (1.0, 1.0),
            (1, 1),
        );
        let mut cc = c.clone();
        cc.alpha_prime = 1.0 * cc.alpha; // (A)(α; cα, λ_u) with c = 1
        cc.beta_prime = 1.0 * cc.beta;
        let report = check_ab_empirical(&h, &cc, &SamplePlan::new(10_000, 1.0, 1.0, 42));
        assert!(report.passed, "violations: {:?}", report.violated_pairs.first());
    }

    #[test]
    fn additive_rejects_bad_margin() {
        assert!(matches!(
            ab_from_additive_lipschitz(0.6, 0.6, 0.5, 0.5, 1.0),
            Err(ConditionError::Precondition(_))
        ));
    }

    #[test]
    fn empirical_diagonal_passes() {
        let h = CorrespondenceHandle::from_generating_maps(
            Arc::new(|x: &DVector<f64>, _: &DVector<f64>| 0.5 * x),
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| z / 2.0),
            (1.0, 1.0),
            (1, 1),
        );
        let c = AbConstants::uniform(0.0, 0.0, 0.5, 0.5);
        let report = check_ab_empirical(&h, &c, &SamplePlan::new(10_000, 1.0, 1.0, 1));
        assert!(report.passed);
    }

    #[test]
    fn empirical_shear_needs_nonzero_cone() {
        // F(x,z) = 0.5x + 0.3z: fails (A) with α = α′ = 0, passes with the
        // additive-lemma constants
        let h = CorrespondenceHandle::from_generating_maps(
            Arc::new(|x: &DVector<f64>, z: &DVector<f64>| 0.5 * x + 0.3 * z),
            Arc::new(|_: &DVector<f64>, z: &DVector<f64>| 0.5 * z),
            (1.0, 1.0),
            (1, 1),
        );
        let naive = AbConstants::uniform(0.0, 0.0, 0.5, 0.5);
        let r1 = check_ab_empirical(&h, &naive, &SamplePlan::new(5_000, 1.0, 1.0, 2));
        assert!(!r1.passed);
        let c = ab_from_additive_lipschitz(0.3, 0.0, 0.5, 0.5, 1.0).unwrap();
        let r2 = check_ab_empirical(&h, &c, &SamplePlan::new(5_000, 1.0, 1.0, 2));
        assert!(r2.passed, "violation: {:?}", r2.violated_pairs.first());
    }

    #[test]
    fn dual_swap_preserves_empirical_pass() {
        let h = CorrespondenceHandle::from_generating_maps(
            Arc::new(|x: &DVector<f64>, z: &DVector<f64>| 0.5 * x + 0.05 * z),
            Arc::new(|x: &DVector<f64>, z: &DVector<f64>| 0.05 * x + 0.5 * z),
            (1.0, 1.0),
            (1, 1),
        );
        let c = ab_from_additive_lipschitz(0.05, 0.05, 0.5, 0.5, 1.0).unwrap();
        let mut cc = c.clone();
        cc.alpha_prime = cc.alpha;
        cc.beta_prime = cc.beta;
        let r = check_ab_empirical(&h, &cc, &SamplePlan::new(4_000, 1.0, 1.0, 3));
        assert!(r.passed);
        let rd = check_ab_empirical(&h.dual(), &cc.dual_swap(), &SamplePlan::new(4_000, 1.0, 1.0, 3));
        assert!(rd.passed);
    }

    #[test]
    fn cone_check_linear_and_inflated() {
        let map = linear_block_map(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 0.05),
            DMatrix::from_element(1, 1, 0.05),
            DMatrix::from_element(1, 1, 2.0),
        );
        let (h, _) = CorrespondenceHandle::from_block_map(map, (0.5, 0.5), (1, 1)).unwrap();
        let pts = vec![(DVector::zeros(1), DVector::zeros(1))];
        let c = ab_from_additive_lipschitz(0.05, 0.05, 0.55, 0.55, 1.0).unwrap();
        let report = check_cone_linearized(&h, &c, &pts, 5).unwrap();
        assert!(report.passed, "violation: {:?}", report.violated_pairs.first());
        // shrink β below the actual ‖D₁G‖ — a violation must be witnessed
        let mut bad = c.clone();
        bad.beta = 1e-6;
        let report2 = check_cone_linearized(&h, &bad, &pts, 5).unwrap();
        assert!(!report2.passed);
    }

    #[test]
    fn predicates_arithmetic() {
        let mut c = AbConstants::uniform(0.0, 1.0, 1.0, 0.5);
        c.beta_prime = 0.0;
        let r = check_hyperbolicity_predicates(&c, &PredicateMode::Dichotomy);
        assert!(r.passed);
        assert_abs_diff_eq!(c.vartheta(), 1.0);

        let mut c2 = AbConstants::uniform(0.2, 1.0, 1.0, 0.9);
        c2.beta_prime = 0.2;
        c2.varsigma0 = 2.0;
        let r2 = check_hyperbolicity_predicates(&c2, &PredicateMode::Dichotomy);
        assert_abs_diff_eq!(c2.vartheta(), 1.0 / (1.0 - 0.08), epsilon = 1e-12);
        assert!(r2.predicate_values[2].lhs < 1.0);
        assert!(r2.passed);
    }

    #[test]
    fn smooth_gap_failure_is_named() {
        let mut c = AbConstants::uniform(0.0, 1.0, 1.3, 0.8);
        c.beta_prime = 0.0;
        let r = check_hyperbolicity_predicates(&c, &PredicateMode::Smooth);
        assert!(!r.passed);
        let gap = r.predicate_values.iter().find(|p| p.name.starts_with("gap")).unwrap();
        assert!(!gap.passed);
        assert_abs_diff_eq!(gap.lhs, 1.04, epsilon = 1e-12);
    }

    #[test]
    fn lipschitz_estimates() {
        let (l, _) = estimate_lipschitz_constant(|x: &DVector<f64>| 0.5 * x, 1, 1.0, 2000, 0);
        assert_abs_diff_eq!(l, 0.5, epsilon = 1e-12);
        let (l2, _) = estimate_lipschitz_constant(
            |x: &DVector<f64>| DVector::from_vec(vec![x[0].sin()]),
            1,
            1.0,
            2000,
            0,
        );
        assert!(l2 >= 1.0f64.cos() && l2 <= 1.0 + 1e-12);
        let (l3, _) =
            estimate_lipschitz_constant(|_: &DVector<f64>| DVector::zeros(1), 1, 1.0, 1000, 0);
        assert_abs_diff_eq!(l3, 0.0);
    }

    #[test]
    fn report_serializes_to_json() {
        let c = AbConstants::uniform(0.1, 0.5, 0.9, 0.5);
        let r = check_hyperbolicity_predicates(&c, &PredicateMode::Smooth);
        let js = serde_json::to_string(&r).unwrap();
        assert!(js.contains("predicate_values"));
        let back: ConditionReport = serde_json::from_str(&js).unwrap();
        assert_eq!(back.passed, r.passed);
    }
}
