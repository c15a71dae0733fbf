//! The vector-bundle graph transform for the derivative field K⁰ of the
//! computed section: per node one linear fixed point for R⁰, the pull-back
//! through the truncation derivatives, tangency at the base, and
//! finite-difference consistency checks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph_transform::{solve_cs_fixed_point, TransformConfig};
use crate::section::GraphSection;
use crate::systems::SystemSpec;

#[derive(Debug, Error)]
pub enum TangentError {
    #[error("linear fixed point singular at sample {0}, node {1} (certified cone condition violated)")]
    SingularSolve(usize, usize),
    #[error("tangent transform requires η = 0, measured η = {0:.3e}")]
    NeedsInvariantSet(f64),
    #[error("tangent transform did not converge (last change {0:.3e})")]
    NotConverging(f64),
    #[error(transparent)]
    Transform(#[from] crate::graph_transform::TransformError),
}

/// A field of d_u × d_cs linear maps over the section grid nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangentSection {
    /// per sample, node-major row-major matrix entries
    pub values: Vec<Vec<f64>>,
    pub d_cs: usize,
    pub d_u: usize,
    pub d_c1: usize,
    pub d_t: usize,
    pub d_s: usize,
    pub nodes_per_axis: usize,
    pub radius: f64,
}

impl TangentSection {
    pub fn zero(section: &GraphSection, d_u: usize) -> Self {
        let g0 = &section.grids[0];
        let d_cs = section.d_cs();
        let per = g0.node_count() * d_u * d_cs;
        Self {
            values: vec![vec![0.0; per]; section.grids.len()],
            d_cs,
            d_u,
            d_c1: section.d_c1,
            d_t: section.d_t,
            d_s: section.d_s,
            nodes_per_axis: g0.nodes_per_axis,
            radius: g0.radius,
        }
    }

    fn grid_template(&self) -> crate::section::LocalGrid {
        crate::section::LocalGrid::zero(
            self.d_c1 + self.d_s,
            1,
            self.nodes_per_axis,
            self.radius,
        )
    }

    pub fn node_count(&self) -> usize {
        self.grid_template().node_count()
    }

    pub fn get(&self, sample: usize, node: usize) -> DMatrix<f64> {
        let per = self.d_u * self.d_cs;
        DMatrix::from_row_slice(
            self.d_u,
            self.d_cs,
            &self.values[sample][node * per..(node + 1) * per],
        )
    }

    pub fn set(&mut self, sample: usize, node: usize, m: &DMatrix<f64>) {
        let per = self.d_u * self.d_cs;
        let dst = &mut self.values[sample][node * per..(node + 1) * per];
        let mut k = 0;
        for i in 0..self.d_u {
            for j in 0..self.d_cs {
                dst[k] = m[(i, j)];
                k += 1;
            }
        }
    }

    /// Entrywise multilinear interpolation over (chart blend × grid), like
    /// the section evaluation.
    pub fn eval_at(
        &self,
        atlas: &crate::atlas::BaseAtlas,
        section: &GraphSection,
        base_param: &DVector<f64>,
        cs: &DVector<f64>,
    ) -> DMatrix<f64> {
        let (g, t) = section.grid_and_tangent(cs);
        let mut p = base_param.clone();
        for k in 0..self.d_t.min(p.len()) {
            p[k] += t[k];
        }
        let blend = atlas.chart_blend(&p);
        let template = self.grid_template();
        let gq = crate::linalg::retract_max(&g, self.radius);
        // locate the cell once; accumulate matrices over corners and charts
        let mut out = DMatrix::zeros(self.d_u, self.d_cs);
        for (ci, w) in blend {
            out += w * self.interp_one(ci, &gq, &template);
        }
        out
    }

    fn interp_one(
        &self,
        sample: usize,
        q: &DVector<f64>,
        template: &crate::section::LocalGrid,
    ) -> DMatrix<f64> {
        let d_axes = template.d_axes;
        let n = template.nodes_per_axis;
        if d_axes == 0 || n == 1 {
            return self.get(sample, 0);
        }
        let h = template.spacing();
        let mut cell = vec![0usize; d_axes];
        let mut frac = vec![0.0f64; d_axes];
        for k in 0..d_axes {
            let t = ((q[k] + template.radius) / h).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            cell[k] = i;
            frac[k] = t - i as f64;
        }
        let mut out = DMatrix::zeros(self.d_u, self.d_cs);
        for c in 0..(1usize << d_axes) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..d_axes {
                let hi = (c >> k) & 1 == 1;
                w *= if hi { frac[k] } else { 1.0 - frac[k] };
                idx = idx * n + cell[k] + if hi { 1 } else { 0 };
            }
            if w == 0.0 {
                continue;
            }
            out += w * self.get(sample, idx);
        }
        out
    }

    pub fn sup_distance(&self, other: &TangentSection) -> f64 {
        let mut sup: f64 = 0.0;
        for (a, b) in self.values.iter().zip(other.values.iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                sup = sup.max((x - y).abs());
            }
        }
        sup
    }

    pub fn sup_norm(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for s in 0..self.values.len() {
            for node in 0..self.node_count() {
                sup = sup.max(crate::linalg::op_norm(&self.get(s, node)));
            }
        }
        sup
    }
}

/// Report of the tangent iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TangentReport {
    pub sweeps: usize,
    pub final_change: f64,
    pub ratios: Vec<f64>,
    pub fd_consistency: f64,
    pub sup_norm: f64,
}

/// Derivatives (DF¹, DG¹) of the truncation pair at a node, for atlases with
/// flat frames: F¹ = id, G¹(x^{cs}, x^u) = Ψ(x^{cs})·x^u, so
/// D_{cs}G¹ = x^u ⊗ ∇Ψ and D_u G¹ = Ψ·id.
pub fn truncation_derivative(
    cfg: &TransformConfig,
    section: &GraphSection,
    x_cs: &DVector<f64>,
    untruncated_value: &DVector<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let (d_c1, d_t, d_s) = (section.d_c1, section.d_t, section.d_s);
    let d_cs = d_c1 + d_t + d_s;
    let d_u = untruncated_value.len();
    let c1n = x_cs.rows(0, d_c1).norm();
    let sn = x_cs.rows(d_c1 + d_t, d_s).norm();
    let psi = cfg.bump(c1n, sn);
    let grad = cfg.bump_gradient(x_cs, d_c1, d_t, d_s);
    let mut dg_cs = DMatrix::zeros(d_u, d_cs);
    for i in 0..d_u {
        for j in 0..d_cs {
            dg_cs[(i, j)] = untruncated_value[i] * grad[j];
        }
    }
    let dg_u = DMatrix::identity(d_u, d_u) * psi;
    (dg_cs, dg_u, psi)
}

/// One sweep of the tangent transform Γ₀: per node solve the linear fixed
/// point R⁰ = (I − D₂F̂·K_next)⁻¹D₁F̂, form K̃⁰ = D₁Ĝ + D₂Ĝ·K_next·R⁰, and
/// pull back through the truncation derivatives.
pub fn transform_tangent_once(
    k: &TangentSection,
    h0: &GraphSection,
    system: &SystemSpec,
    cfg: &TransformConfig,
) -> Result<TangentSection, TangentError> {
    let atlas = &system.atlas;
    let results: Result<Vec<Vec<f64>>, TangentError> = (0..atlas.len())
        .into_par_iter()
        .map(|i| {
            let lp = system.dynamics.pair_cs(&atlas.samples[i].param);
            let mut out = vec![0.0; k.values[i].len()];
            let template = k.grid_template();
            let f1 = |z: &DVector<f64>| h0.eval_at(atlas, &lp.target_param, z);
            for node in 0..template.node_count() {
                let x_grid = template.node_coords(node);
                let x_cs = h0.cs_from_grid(&x_grid);
                let (x_next, _) =
                    solve_cs_fixed_point(&lp.pair, &f1, &x_cs, cfg.tol_fixed_point, 400)
                        .map_err(|_| TangentError::SingularSolve(i, node))?;
                let u_next = f1(&x_next);
                let (d1f, d2f) = lp.pair.df(&x_cs, &u_next);
                let (d1g, d2g) = lp.pair.dg(&x_cs, &u_next);
                let k_next = k.eval_at(atlas, h0, &lp.target_param, &x_next);
                let lhs = DMatrix::identity(k.d_cs, k.d_cs) - &d2f * &k_next;
                let r0 = lhs
                    .lu()
                    .solve(&d1f)
                    .ok_or(TangentError::SingularSolve(i, node))?;
                let k_tilde = &d1g + &d2g * &k_next * &r0;
                // untruncated value at this node, for the bump gradient term
                let v_tilde = lp.pair.g(&x_cs, &u_next);
                let (dg_cs, dg_u, _) = truncation_derivative(cfg, h0, &x_cs, &v_tilde);
                let k_hat = &dg_cs + &dg_u * &k_tilde;
                let per = k.d_u * k.d_cs;
                let dst = &mut out[node * per..(node + 1) * per];
                let mut idx = 0;
                for r in 0..k.d_u {
                    for c in 0..k.d_cs {
                        dst[idx] = k_hat[(r, c)];
                        idx += 1;
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut next = k.clone();
    next.values = results?;
    Ok(next)
}

/// Iterate Γ₀ to its fixed point K⁰ and report the finite-difference
/// consistency against the section grids.
pub fn iterate_tangent(
    system: &SystemSpec,
    h0: &GraphSection,
    cfg: &TransformConfig,
) -> Result<(TangentSection, TangentReport), TangentError> {
    let mut k = TangentSection::zero(h0, system.d_u());
    let mut changes = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    for _ in 0..cfg.max_sweeps {
        let next = transform_tangent_once(&k, h0, system, cfg)?;
        let change = next.sup_distance(&k);
        k = next;
        sweeps += 1;
        changes.push(change);
        if change <= cfg.tol_section {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(TangentError::NotConverging(changes.last().copied().unwrap_or(f64::NAN)));
    }
    let noise = cfg.tol_section * 10.0;
    let mut ratios = Vec::new();
    for j in 1..changes.len() {
        if changes[j - 1] > noise && changes[j] > noise {
            ratios.push(changes[j] / changes[j - 1]);
        }
    }
    let fd = fd_consistency(&k, h0, system);
    let report = TangentReport {
        sweeps,
        final_change: changes.last().copied().unwrap_or(0.0),
        ratios,
        fd_consistency: fd,
        sup_norm: k.sup_norm(),
    };
    Ok((k, report))
}

/// ‖K⁰ − FD(h₀)‖_∞ over interior grid nodes: central differences along the
/// grid axes, cross-chart differences along the tangent directions.
pub fn fd_consistency(k: &TangentSection, h0: &GraphSection, system: &SystemSpec) -> f64 {
    let atlas = &system.atlas;
    let mut sup: f64 = 0.0;
    let template = k.grid_template();
    let n = template.nodes_per_axis;
    let h = template.spacing();
    for s in 0..h0.grids.len() {
        let g = &h0.grids[s];
        for node in 0..g.node_count() {
            let x = g.node_coords(node);
            let kmat = k.get(s, node);
            // grid axes: map axis index → cs column
            for axis in 0..template.d_axes {
                let pos = ((x[axis] + template.radius) / h).round() as usize;
                if pos == 0 || pos + 1 >= n {
                    continue;
                }
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[axis] += h;
                xm[axis] -= h;
                let fd = (g.eval(&xp) - g.eval(&xm)) / (2.0 * h);
                let col = if axis < h0.d_c1 { axis } else { axis - h0.d_c1 + h0.d_c1 + h0.d_t };
                for r in 0..k.d_u {
                    sup = sup.max((kmat[(r, col)] - fd[r]).abs());
                }
            }
            // tangent directions: difference across neighbor charts
            if h0.d_t == 1 && atlas.len() >= 3 {
                let prev = (s + atlas.len() - 1) % atlas.len();
                let next = (s + 1) % atlas.len();
                let dtheta = atlas
                    .param_diff(&atlas.samples[next].param, &atlas.samples[prev].param)
                    .norm();
                if dtheta > 1e-12 {
                    let fd = (h0.grids[next].eval(&x) - h0.grids[prev].eval(&x)) / dtheta;
                    let col = h0.d_c1;
                    for r in 0..k.d_u {
                        sup = sup.max((kmat[(r, col)] - fd[r]).abs());
                    }
                }
            }
        }
    }
    sup
}

/// Base-derivative equation at η = 0: the per-sample field K⁰(m̂, 0) solving
///   R = (I − D₂F̂(0,0)·K_{û})⁻¹ D₁F̂(0,0),  K = D₁Ĝ(0,0) + D₂Ĝ(0,0)·K_{û}·R,
/// iterated over the whole sample family to the sup fixed point.
pub fn tangent_at_base(
    system: &SystemSpec,
    cfg: &TransformConfig,
) -> Result<Vec<DMatrix<f64>>, TangentError> {
    let tol = cfg.tol_section.min(1e-12);
    let eta = crate::graph_transform::measure_eta(system);
    if eta > 1e-9 {
        return Err(TangentError::NeedsInvariantSet(eta));
    }
    let atlas = &system.atlas;
    let split = &atlas.samples[0].split;
    let (d_cs, d_u) = (split.d_cs(), split.d_u);
    let mut field: Vec<DMatrix<f64>> = vec![DMatrix::zeros(d_u, d_cs); atlas.len()];
    // precompute local derivatives at the origin
    struct At {
        d1f: DMatrix<f64>,
        d2f: DMatrix<f64>,
        d1g: DMatrix<f64>,
        d2g: DMatrix<f64>,
        target_blend: Vec<(usize, f64)>,
    }
    let ats: Vec<At> = atlas
        .samples
        .iter()
        .map(|s| {
            let lp = system.dynamics.pair_cs(&s.param);
            let zx = DVector::zeros(d_cs);
            let zz = DVector::zeros(d_u);
            let (d1f, d2f) = lp.pair.df(&zx, &zz);
            let (d1g, d2g) = lp.pair.dg(&zx, &zz);
            At { d1f, d2f, d1g, d2g, target_blend: atlas.chart_blend(&lp.target_param) }
        })
        .collect();
    let mut last_change = f64::INFINITY;
    for _ in 0..2000 {
        let next: Vec<DMatrix<f64>> = (0..atlas.len())
            .map(|i| {
                let at = &ats[i];
                let mut k_next = DMatrix::zeros(d_u, d_cs);
                for (j, w) in &at.target_blend {
                    k_next += *w * &field[*j];
                }
                let lhs = DMatrix::identity(d_cs, d_cs) - &at.d2f * &k_next;
                let r0 = lhs.lu().solve(&at.d1f).expect("cone condition certified");
                &at.d1g + &at.d2g * k_next * r0
            })
            .collect();
        last_change = next
            .iter()
            .zip(field.iter())
            .map(|(a, b)| crate::linalg::op_norm(&(a - b)))
            .fold(0.0f64, f64::max);
        field = next;
        if last_change <= tol {
            return Ok(field);
        }
    }
    Err(TangentError::NotConverging(last_change))
}

/// Sampled Hölder-θ constant of the node ↦ K⁰ field (reported, never
/// asserted against an analytic value).
pub fn hoelder_estimate(k: &TangentSection, theta: f64, pairs: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let template = k.grid_template();
    let n = template.node_count();
    let mut sup: f64 = 0.0;
    for _ in 0..pairs {
        let s = rng.gen_range(0..k.values.len());
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let d = crate::linalg::max_norm(&(template.node_coords(i) - template.node_coords(j)));
        if d < 1e-14 {
            continue;
        }
        let diff = crate::linalg::op_norm(&(k.get(s, i) - k.get(s, j)));
        sup = sup.max(diff / d.powf(theta));
    }
    sup
}

/// Γ₀ contraction ratio measured on random tangent-section pairs.
pub fn estimate_tangent_contraction(
    system: &SystemSpec,
    h0: &GraphSection,
    cfg: &TransformConfig,
    trials: usize,
    seed: u64,
) -> Result<f64, TangentError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d_u = system.d_u();
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let make = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut t = TangentSection::zero(h0, d_u);
            let scale = cfg.mu * 0.5;
            let m = DMatrix::from_fn(d_u, t.d_cs, |_, _| rng.gen_range(-1.0..1.0) * scale);
            for s in 0..t.values.len() {
                for node in 0..t.node_count() {
                    t.set(s, node, &m);
                }
            }
            t
        };
        let k1 = make(&mut rng);
        let k2 = make(&mut rng);
        let d0 = k1.sup_distance(&k2);
        if d0 < 1e-12 {
            continue;
        }
        let g1 = transform_tangent_once(&k1, h0, system, cfg)?;
        let g2 = transform_tangent_once(&k2, h0, system, cfg)?;
        worst = worst.max(g1.sup_distance(&g2) / d0);
    }
    Ok(worst)
}
