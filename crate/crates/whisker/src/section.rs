//! Discretized Lipschitz sections: per-base-sample grids of u-values over
//! the transversal center-stable cube, with multilinear interpolation and
//! max-norm radial retraction outside the cube.
//!
//! The Σ-tangent directions of the center block are discretized by the base
//! samples themselves; grid axes cover the transversal block X^{c₁} ⊕ X^s.
//! Queries carry full cs-vectors (c₁, tangent, s); the tangent part moves
//! the query to the right charts, which are blended in base parameters.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::BaseAtlas;
use crate::linalg::retract_max;

#[derive(Debug, Error)]
pub enum SectionError {
    #[error("grid shape mismatch: {0}")]
    Shape(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Values of one local graph on a uniform grid over the cube [−r, r]^{d_axes}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalGrid {
    pub d_axes: usize,
    pub d_u: usize,
    pub nodes_per_axis: usize,
    pub radius: f64,
    /// node-major values, d_u entries per node
    pub values: Vec<f64>,
}

impl LocalGrid {
    pub fn zero(d_axes: usize, d_u: usize, nodes_per_axis: usize, radius: f64) -> Self {
        let count = nodes_per_axis.pow(d_axes as u32).max(1);
        Self { d_axes, d_u, nodes_per_axis, radius, values: vec![0.0; count * d_u] }
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.d_axes as u32).max(1)
    }

    /// spacing between nodes (0 for degenerate axes)
    pub fn spacing(&self) -> f64 {
        if self.nodes_per_axis > 1 {
            2.0 * self.radius / (self.nodes_per_axis - 1) as f64
        } else {
            0.0
        }
    }

    /// grid coordinates of a flat node index
    pub fn node_coords(&self, mut idx: usize) -> DVector<f64> {
        let mut x = DVector::zeros(self.d_axes);
        for k in (0..self.d_axes).rev() {
            let i = idx % self.nodes_per_axis;
            idx /= self.nodes_per_axis;
            x[k] = if self.nodes_per_axis > 1 {
                -self.radius + self.spacing() * i as f64
            } else {
                0.0
            };
        }
        x
    }

    pub fn get(&self, idx: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.values[idx * self.d_u..(idx + 1) * self.d_u])
    }

    pub fn set(&mut self, idx: usize, v: &DVector<f64>) {
        self.values[idx * self.d_u..(idx + 1) * self.d_u].copy_from_slice(v.as_slice());
    }

    /// Multilinear interpolation at a point of the cube; the query is first
    /// radially retracted (max norm) onto the cube.
    pub fn eval(&self, q: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(q.len(), self.d_axes);
        if self.d_axes == 0 || self.nodes_per_axis == 1 {
            return self.get(0);
        }
        let q = retract_max(q, self.radius);
        let h = self.spacing();
        let n = self.nodes_per_axis;
        // per-axis cell index and fraction
        let mut cell = vec![0usize; self.d_axes];
        let mut frac = vec![0.0f64; self.d_axes];
        for k in 0..self.d_axes {
            let t = ((q[k] + self.radius) / h).clamp(0.0, (n - 1) as f64);
            let i = (t.floor() as usize).min(n - 2);
            cell[k] = i;
            frac[k] = t - i as f64;
        }
        let mut out = DVector::zeros(self.d_u);
        let corners = 1usize << self.d_axes;
        for c in 0..corners {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..self.d_axes {
                let hi = (c >> k) & 1 == 1;
                w *= if hi { frac[k] } else { 1.0 - frac[k] };
                idx = idx * n + cell[k] + if hi { 1 } else { 0 };
            }
            if w == 0.0 {
                continue;
            }
            let base = idx * self.d_u;
            for j in 0..self.d_u {
                out[j] += w * self.values[base + j];
            }
        }
        out
    }

    /// Supremum of node-value Euclidean norms.
    pub fn sup_norm(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for i in 0..self.node_count() {
            let mut s = 0.0;
            for j in 0..self.d_u {
                s += self.values[i * self.d_u + j].powi(2);
            }
            sup = sup.max(s.sqrt());
        }
        sup
    }

    /// Sampled Lipschitz constant in the max norm over node pairs
    /// (all axis-neighbors plus seeded random pairs).
    pub fn lip_max_sampled(&self, extra_pairs: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        if self.nodes_per_axis < 2 {
            return 0.0;
        }
        let mut sup: f64 = 0.0;
        let n = self.node_count();
        let h = self.spacing();
        // axis neighbors
        for i in 0..n {
            let xi = self.node_coords(i);
            let vi = self.get(i);
            let mut stride = 1usize;
            for k in (0..self.d_axes).rev() {
                let pos = (xi[k] + self.radius) / h;
                if (pos.round() as usize) < self.nodes_per_axis - 1 {
                    let j = i + stride;
                    let vj = self.get(j);
                    sup = sup.max((&vj - &vi).norm() / h);
                }
                stride *= self.nodes_per_axis;
            }
        }
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..extra_pairs {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j {
                continue;
            }
            let d = crate::linalg::max_norm(&(self.node_coords(i) - self.node_coords(j)));
            if d < 1e-14 {
                continue;
            }
            sup = sup.max((self.get(i) - self.get(j)).norm() / d);
        }
        sup
    }
}

/// A discretized section: one local grid per base sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSection {
    pub grids: Vec<LocalGrid>,
    /// cube radius σ₀ of the grids
    pub sigma0: f64,
    /// declared u-range ϱ
    pub rho: f64,
    pub d_c1: usize,
    pub d_t: usize,
    pub d_s: usize,
}

impl GraphSection {
    pub fn zero(
        samples: usize,
        d_c1: usize,
        d_t: usize,
        d_s: usize,
        d_u: usize,
        nodes_per_axis: usize,
        sigma0: f64,
        rho: f64,
    ) -> Self {
        let grids = (0..samples)
            .map(|_| LocalGrid::zero(d_c1 + d_s, d_u, nodes_per_axis, sigma0))
            .collect();
        Self { grids, sigma0, rho, d_c1, d_t, d_s }
    }

    pub fn d_u(&self) -> usize {
        self.grids[0].d_u
    }

    pub fn d_cs(&self) -> usize {
        self.d_c1 + self.d_t + self.d_s
    }

    /// Split a full cs-vector into (grid coordinates (c₁,s), tangent part).
    pub fn grid_and_tangent(&self, cs: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let mut g = DVector::zeros(self.d_c1 + self.d_s);
        for k in 0..self.d_c1 {
            g[k] = cs[k];
        }
        for k in 0..self.d_s {
            g[self.d_c1 + k] = cs[self.d_c1 + self.d_t + k];
        }
        let t = cs.rows(self.d_c1, self.d_t).into_owned();
        (g, t)
    }

    /// Full cs-vector from grid coordinates (zero tangent part).
    pub fn cs_from_grid(&self, g: &DVector<f64>) -> DVector<f64> {
        let mut cs = DVector::zeros(self.d_cs());
        for k in 0..self.d_c1 {
            cs[k] = g[k];
        }
        for k in 0..self.d_s {
            cs[self.d_c1 + self.d_t + k] = g[self.d_c1 + k];
        }
        cs
    }

    /// Evaluate the section at a base parameter and a full cs-vector: the
    /// tangent part shifts the base parameter, charts are blended in base
    /// parameters, and the grid query is retracted onto the cube.
    pub fn eval_at(&self, atlas: &BaseAtlas, base_param: &DVector<f64>, cs: &DVector<f64>) -> DVector<f64> {
        let (g, t) = self.grid_and_tangent(cs);
        let mut p = base_param.clone();
        for k in 0..self.d_t.min(p.len()) {
            p[k] += t[k];
        }
        let blend = atlas.chart_blend(&p);
        let mut out = DVector::zeros(self.d_u());
        for (idx, w) in blend {
            out += w * self.grids[idx].eval(&g);
        }
        out
    }

    /// Sup distance to another section over all grid nodes.
    pub fn sup_distance(&self, other: &GraphSection) -> f64 {
        let mut sup: f64 = 0.0;
        for (a, b) in self.grids.iter().zip(other.grids.iter()) {
            for i in 0..a.node_count() {
                sup = sup.max((a.get(i) - b.get(i)).norm());
            }
        }
        sup
    }

    /// Weighted sup distance d₂ = sup |Δh|/|x^s| over nodes with x^s ≠ 0
    /// (the invariant-case metric).
    pub fn d2_distance(&self, other: &GraphSection) -> f64 {
        let mut sup: f64 = 0.0;
        for (a, b) in self.grids.iter().zip(other.grids.iter()) {
            for i in 0..a.node_count() {
                let x = a.node_coords(i);
                let s_norm = (0..self.d_s)
                    .map(|k| x[self.d_c1 + k].abs())
                    .fold(0.0f64, f64::max);
                if s_norm < 1e-14 {
                    continue;
                }
                sup = sup.max((a.get(i) - b.get(i)).norm() / s_norm);
            }
        }
        sup
    }

    pub fn sup_norm(&self) -> f64 {
        self.grids.iter().map(|g| g.sup_norm()).fold(0.0, f64::max)
    }

    /// Largest anchor norm sup_m |h(m̂, 0)|.
    pub fn anchor_norm(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for g in &self.grids {
            // the center node of the grid is the origin when nodes are odd
            let mid = g.node_count() / 2;
            if g.nodes_per_axis % 2 == 1 {
                sup = sup.max(g.get(mid).norm());
            } else {
                sup = sup.max(g.eval(&DVector::zeros(g.d_axes)).norm());
            }
        }
        sup
    }

    /// Force h(m̂, ·) to vanish on the x^s = 0 slice (invariant mode).
    pub fn enforce_zero_on_base(&mut self) {
        let d_c1 = self.d_c1;
        let d_s = self.d_s;
        for g in self.grids.iter_mut() {
            for i in 0..g.node_count() {
                let x = g.node_coords(i);
                let s_norm = (0..d_s).map(|k| x[d_c1 + k].abs()).fold(0.0f64, f64::max);
                if s_norm < 1e-14 {
                    g.set(i, &DVector::zeros(g.d_u));
                }
            }
        }
    }

    /// Write as CSV: base parameters, grid coordinates, u-values.
    pub fn write_csv<W: std::io::Write>(
        &self,
        atlas: &BaseAtlas,
        out: W,
    ) -> Result<(), SectionError> {
        let mut w = csv::Writer::from_writer(out);
        let d_par = atlas.samples[0].param.len();
        let d_axes = self.grids[0].d_axes;
        let mut header: Vec<String> = (0..d_par).map(|i| format!("base_param_{i}")).collect();
        header.extend((0..self.d_c1).map(|i| format!("x_c{i}")));
        header.extend((0..self.d_s).map(|i| format!("x_s{i}")));
        header.extend((0..self.d_u()).map(|i| format!("u{i}")));
        w.write_record(&header).map_err(|e| SectionError::Csv(e.to_string()))?;
        for (si, g) in self.grids.iter().enumerate() {
            for i in 0..g.node_count() {
                let x = g.node_coords(i);
                let v = g.get(i);
                let mut rec: Vec<String> = atlas.samples[si]
                    .param
                    .iter()
                    .map(|p| format!("{p:.17e}"))
                    .collect();
                rec.extend((0..d_axes).map(|k| format!("{:.17e}", x[k])));
                rec.extend((0..self.d_u()).map(|k| format!("{:.17e}", v[k])));
                w.write_record(&rec).map_err(|e| SectionError::Csv(e.to_string()))?;
            }
        }
        w.flush().map_err(|e| SectionError::Csv(e.to_string()))?;
        Ok(())
    }

    /// JSON metadata (radii and shape), written next to the CSV.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma0": self.sigma0,
            "rho": self.rho,
            "d_c1": self.d_c1,
            "d_t": self.d_t,
            "d_s": self.d_s,
            "d_u": self.d_u(),
            "nodes_per_axis": self.grids[0].nodes_per_axis,
            "samples": self.grids.len(),
        })
    }
}

/// Local representation f_{m̂₀} of a section over the chart at sample m₀:
/// for each (x^c, x^s) grid node, the unique x^u with
/// m₀ + x^c + x^s + x^u on the graph of the section. The section is given as
/// a closure (base parameter, ȳ^s at the foot point) ↦ ȳ^u in the foot-point
/// frame, so curved atlases are supported through the tubular solve.
pub fn local_representation<H>(
    atlas: &BaseAtlas,
    h: H,
    m0: usize,
    nodes_per_axis: usize,
    radius: f64,
) -> Result<LocalGrid, crate::atlas::AtlasError>
where
    H: Fn(&nalgebra::DVector<f64>, &DVector<f64>) -> DVector<f64>,
{
    let s0 = &atlas.samples[m0];
    let split = &s0.split;
    let (d_c, d_s, d_u) = (split.d_c(), split.d_s, split.d_u);
    let mut grid = LocalGrid::zero(d_c + d_s, d_u, nodes_per_axis, radius);
    let basis_c = split.basis.columns(0, d_c).into_owned();
    let basis_s = split.basis.columns(d_c, d_s).into_owned();
    let basis_u = split.basis.columns(d_c + d_s, d_u).into_owned();
    for node in 0..grid.node_count() {
        let x = grid.node_coords(node);
        let xc = x.rows(0, d_c).into_owned();
        let xs = x.rows(d_c, d_s).into_owned();
        let base_point = &s0.point + &basis_c * &xc + &basis_s * &xs;
        // Picard on the u-coordinate: decompose, compare with the section
        // value at the foot point, absorb the defect
        let mut xu = DVector::zeros(d_u);
        let mut converged = false;
        for _ in 0..100 {
            let p = &base_point + &basis_u * &xu;
            let tc = atlas.tubular_coords(m0, &p)?;
            let want = h(&tc.base_param, &tc.y_s);
            let defect = &want - &tc.y_u;
            if defect.norm() <= 1e-12 {
                converged = true;
                break;
            }
            // express the foot-point u-defect in the m₀ u-coordinates
            let (_, foot_split) = atlas.eval_base(&tc.base_param);
            let amb = foot_split.basis.columns(foot_split.d_c() + foot_split.d_s, foot_split.d_u)
                * &defect;
            let coeff = crate::linalg::solve_lstsq(&basis_u, &(split.proj_u() * amb));
            xu += coeff;
        }
        if !converged {
            return Err(crate::atlas::AtlasError::OutsideChart(f64::NAN));
        }
        grid.set(node, &xu);
    }
    Ok(grid)
}

/// Cross-chart consistency of overlapping local graphs: for neighbor charts,
/// re-evaluate each grid node through the other chart and take the largest
/// discrepancy (flat frames).
pub fn assemble_consistency(section: &GraphSection, atlas: &BaseAtlas) -> f64 {
    if atlas.len() < 2 || section.d_t == 0 {
        return 0.0;
    }
    let mut sup: f64 = 0.0;
    for i in 0..atlas.len() {
        let pi = &atlas.samples[i].param;
        let g = &section.grids[i];
        for node in 0..g.node_count() {
            let x = g.node_coords(node);
            let v = g.get(node);
            // query the same geometric point through the blended charts,
            // excluding the trivial self-blend
            let cs = section.cs_from_grid(&x);
            let mut p = pi.clone();
            // shift half a sample spacing along the first tangent direction
            if let Some(period) = atlas.param_periods.first().copied().flatten() {
                let h = period / atlas.len() as f64;
                p[0] += h / 2.0;
                let mut cs_shift = cs.clone();
                cs_shift[section.d_c1] -= h / 2.0;
                let w = section.eval_at(atlas, &p, &cs_shift);
                sup = sup.max((w - &v).norm());
            }
        }
    }
    sup
}
