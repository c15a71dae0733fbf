//! Discretized base manifolds with stable/center/unstable splittings:
//! tubular-neighborhood coordinates, μ-Lip verification, pre-tangent defect
//! measurement and the (H1)–(H4)-style surrogate checks.
//!
//! Base sets are parametrized samples (a point, a circle, a torus, or an
//! explicit list). Periodic directions can live in two places: the parameter
//! domain (e.g. an embedded circle parametrized by arclength) or flat ambient
//! coordinates (skew products over T^d, where some ambient coordinates are
//! angles and the frames are constant).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conditions::{ConditionReport, PredicateValue, ViolationWitness};
use crate::grassmann::Subspace;
use crate::linalg::{op_norm, solve_lstsq};

#[derive(Debug, Error)]
pub enum AtlasError {
    #[error("invalid atlas parameters: {0}")]
    InvalidParams(String),
    #[error("point outside chart reach (implicit base solve failed to contract, residual {0:.3e})")]
    OutsideChart(f64),
    #[error("need at least {0} samples within the requested radius")]
    NotEnoughSamples(usize),
    #[error("operation requires an analytic atlas geometry")]
    NeedsAnalyticGeometry,
}

/// Frame layout at a base point. Columns of `basis` are ordered
/// [c-transversal | K-tangent | stable | unstable]; the center block is the
/// first d_c1 + d_t columns.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub basis: DMatrix<f64>,
    pub basis_inv: DMatrix<f64>,
    pub d_c1: usize,
    pub d_t: usize,
    pub d_s: usize,
    pub d_u: usize,
}

impl Splitting {
    pub fn new(
        c_transversal: DMatrix<f64>,
        tangent: DMatrix<f64>,
        stable: DMatrix<f64>,
        unstable: DMatrix<f64>,
    ) -> Result<Self, AtlasError> {
        let n = stable.nrows();
        let (d_c1, d_t, d_s, d_u) =
            (c_transversal.ncols(), tangent.ncols(), stable.ncols(), unstable.ncols());
        if d_c1 + d_t + d_s + d_u != n {
            return Err(AtlasError::InvalidParams(format!(
                "splitting blocks {}+{}+{}+{} do not fill R^{}",
                d_c1, d_t, d_s, d_u, n
            )));
        }
        let mut basis = DMatrix::zeros(n, n);
        basis.columns_mut(0, d_c1).copy_from(&c_transversal);
        basis.columns_mut(d_c1, d_t).copy_from(&tangent);
        basis.columns_mut(d_c1 + d_t, d_s).copy_from(&stable);
        basis.columns_mut(d_c1 + d_t + d_s, d_u).copy_from(&unstable);
        let basis_inv = basis
            .clone()
            .try_inverse()
            .ok_or_else(|| AtlasError::InvalidParams("splitting blocks are not complementary".into()))?;
        Ok(Self { basis, basis_inv, d_c1, d_t, d_s, d_u })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn d_c(&self) -> usize {
        self.d_c1 + self.d_t
    }

    pub fn d_cs(&self) -> usize {
        self.d_c() + self.d_s
    }

    /// Frame coordinates of an ambient vector.
    pub fn coords(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.basis_inv * w
    }

    /// Ambient vector from frame coordinates.
    pub fn from_coords(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.basis * xi
    }

    pub fn cs_part(&self, xi: &DVector<f64>) -> DVector<f64> {
        xi.rows(0, self.d_cs()).into_owned()
    }

    pub fn u_part(&self, xi: &DVector<f64>) -> DVector<f64> {
        xi.rows(self.d_cs(), self.d_u).into_owned()
    }

    pub fn c1_part_of_cs(&self, cs: &DVector<f64>) -> DVector<f64> {
        cs.rows(0, self.d_c1).into_owned()
    }

    pub fn tangent_part_of_cs(&self, cs: &DVector<f64>) -> DVector<f64> {
        cs.rows(self.d_c1, self.d_t).into_owned()
    }

    pub fn s_part_of_cs(&self, cs: &DVector<f64>) -> DVector<f64> {
        cs.rows(self.d_c1 + self.d_t, self.d_s).into_owned()
    }

    fn block_projector(&self, start: usize, len: usize) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let mut sel = DMatrix::zeros(n, n);
        for i in start..start + len {
            sel[(i, i)] = 1.0;
        }
        &self.basis * sel * &self.basis_inv
    }

    /// Ambient projection onto the center block (c-transversal ⊕ tangent).
    pub fn proj_c(&self) -> DMatrix<f64> {
        self.block_projector(0, self.d_c())
    }

    pub fn proj_s(&self) -> DMatrix<f64> {
        self.block_projector(self.d_c(), self.d_s)
    }

    pub fn proj_u(&self) -> DMatrix<f64> {
        self.block_projector(self.d_cs(), self.d_u)
    }

    pub fn stable_subspace(&self) -> Subspace {
        Subspace::new(self.basis.columns(self.d_c(), self.d_s).into_owned()).expect("frame block")
    }

    pub fn unstable_subspace(&self) -> Subspace {
        Subspace::new(self.basis.columns(self.d_cs(), self.d_u).into_owned()).expect("frame block")
    }

    pub fn center_subspace(&self) -> Subspace {
        if self.d_c() == 0 {
            return Subspace::zero(self.ambient_dim());
        }
        Subspace::new(self.basis.columns(0, self.d_c()).into_owned()).expect("frame block")
    }

    /// Idempotence, mutual annihilation and sum-to-identity of the three
    /// projections (all automatic from the frame construction, verified to
    /// the stated tolerance).
    pub fn validate(&self) -> ConditionReport {
        let (pc, ps, pu) = (self.proj_c(), self.proj_s(), self.proj_u());
        let n = self.ambient_dim();
        let mut preds = Vec::new();
        let mut push = |name: &str, lhs: f64, rhs: f64| {
            preds.push(PredicateValue { name: name.into(), lhs, rhs, passed: lhs <= rhs });
        };
        push("idempotence ‖Π²−Π‖", op_norm(&(&pc * &pc - &pc)).max(op_norm(&(&ps * &ps - &ps))).max(op_norm(&(&pu * &pu - &pu))), 1e-10 * (1.0 + op_norm(&pc)));
        push("annihilation ‖Π_aΠ_b‖", op_norm(&(&pc * &ps)).max(op_norm(&(&ps * &pu))).max(op_norm(&(&pu * &pc))), 1e-10 * (1.0 + op_norm(&pc)));
        push("sum ‖Π_s+Π_c+Π_u−I‖", op_norm(&(&pc + &ps + &pu - DMatrix::identity(n, n))), 1e-10);
        ConditionReport::from_predicates(preds)
    }
}

/// One atlas sample: parameter, embedded point, frame.
#[derive(Debug, Clone)]
pub struct BaseSample {
    pub param: DVector<f64>,
    pub point: DVector<f64>,
    pub split: Splitting,
}

/// Base-point dynamics on the parameter domain.
#[derive(Debug, Clone)]
pub enum BaseMap {
    Identity,
    /// parameter translation (rotation when the parameters are periodic)
    Rotation(DVector<f64>),
    /// sample i maps to sample perm[i]
    Permutation(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AtlasKind {
    Point,
    Circle,
    Torus,
    SampledSet,
}

type GeometryFn = Arc<dyn Fn(&DVector<f64>) -> (DVector<f64>, Splitting) + Send + Sync>;

/// Sampled base manifold with splitting field and base map.
#[derive(Clone)]
pub struct BaseAtlas {
    pub kind: AtlasKind,
    pub samples: Vec<BaseSample>,
    pub base_map: BaseMap,
    /// period of each parameter coordinate (None = line)
    pub param_periods: Vec<Option<f64>>,
    /// period of each ambient coordinate (flat angle factors)
    pub ambient_periods: Vec<Option<f64>>,
    /// closed-form embedding, when available
    pub geometry: Option<GeometryFn>,
    /// frames identical at every sample (flat periodic ambient or point)
    pub flat_frames: bool,
    pub eps1: f64,
    pub delta0: f64,
}

impl std::fmt::Debug for BaseAtlas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BaseAtlas")
            .field("kind", &self.kind)
            .field("samples", &self.samples.len())
            .field("flat_frames", &self.flat_frames)
            .finish()
    }
}

/// Surrogate measurements for the (H1)–(H4) hypotheses at sample resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AtlasReport {
    /// measured χ(ε) at the checked radius
    pub chi: f64,
    pub chi_radius: f64,
    /// measured Lipschitz constant of the projection field between neighbors
    pub projection_lipschitz: f64,
    pub delta0: f64,
    pub samples: usize,
}

impl BaseAtlas {
    pub fn ambient_dim(&self) -> usize {
        self.samples[0].point.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Difference z₁ − z₂ with periodic ambient coordinates wrapped to the
    /// shortest representative.
    pub fn ambient_diff(&self, z1: &DVector<f64>, z2: &DVector<f64>) -> DVector<f64> {
        let mut d = z1 - z2;
        for (i, p) in self.ambient_periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] = wrap_to(d[i], *p);
            }
        }
        d
    }

    /// Parameter difference with wrapping.
    pub fn param_diff(&self, p1: &DVector<f64>, p2: &DVector<f64>) -> DVector<f64> {
        let mut d = p1 - p2;
        for (i, p) in self.param_periods.iter().enumerate() {
            if let Some(p) = p {
                d[i] = wrap_to(d[i], *p);
            }
        }
        d
    }

    /// Image of a parameter under the base map.
    pub fn map_param(&self, p: &DVector<f64>) -> DVector<f64> {
        match &self.base_map {
            BaseMap::Identity => p.clone(),
            BaseMap::Rotation(omega) => {
                let mut q = p + omega;
                for (i, per) in self.param_periods.iter().enumerate() {
                    if let Some(per) = per {
                        q[i] = q[i].rem_euclid(*per);
                    }
                }
                q
            }
            BaseMap::Permutation(perm) => {
                let i = self.nearest_sample(p);
                self.samples[perm[i]].param.clone()
            }
        }
    }

    /// Atlas with the inverted base map (requires invertibility).
    pub fn inverted_base(&self) -> BaseAtlas {
        let mut out = self.clone();
        out.base_map = match &self.base_map {
            BaseMap::Identity => BaseMap::Identity,
            BaseMap::Rotation(w) => BaseMap::Rotation(-w),
            BaseMap::Permutation(p) => {
                let mut inv = vec![0; p.len()];
                for (i, &j) in p.iter().enumerate() {
                    inv[j] = i;
                }
                BaseMap::Permutation(inv)
            }
        };
        out
    }

    pub fn nearest_sample(&self, p: &DVector<f64>) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, s) in self.samples.iter().enumerate() {
            let d = self.param_diff(p, &s.param).norm();
            if d < dist {
                dist = d;
                best = i;
            }
        }
        best
    }

    /// Charts covering a base parameter, with blend weights summing to 1.
    /// Circle: the two neighbors, linear weight; torus (d=2): four corners,
    /// bilinear; otherwise nearest sample.
    pub fn chart_blend(&self, p: &DVector<f64>) -> Vec<(usize, f64)> {
        match self.kind {
            AtlasKind::Point => vec![(0, 1.0)],
            AtlasKind::Circle => {
                let n = self.len();
                let period = self.param_periods[0].expect("circle parameter is periodic");
                let h = period / n as f64;
                let t = p[0].rem_euclid(period) / h;
                let i0 = t.floor() as usize % n;
                let w = t - t.floor();
                if w < 1e-14 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - w), ((i0 + 1) % n, w)]
                }
            }
            AtlasKind::Torus => {
                // uniform grid per angle, row-major over the angles
                let d = self.samples[0].param.len();
                let per_axis = (self.len() as f64).powf(1.0 / d as f64).round() as usize;
                let mut out = vec![(0usize, 1.0f64)];
                let mut strides = vec![1usize; d];
                for k in (0..d.saturating_sub(1)).rev() {
                    strides[k] = strides[k + 1] * per_axis;
                }
                for axis in 0..d {
                    let period = self.param_periods[axis].expect("torus parameters are periodic");
                    let h = period / per_axis as f64;
                    let t = p[axis].rem_euclid(period) / h;
                    let i0 = t.floor() as usize % per_axis;
                    let w = t - t.floor();
                    let mut next = Vec::with_capacity(out.len() * 2);
                    for (idx, wt) in out {
                        next.push((idx + strides[axis] * i0, wt * (1.0 - w)));
                        if w > 1e-14 {
                            next.push((idx + strides[axis] * ((i0 + 1) % per_axis), wt * w));
                        }
                    }
                    out = next;
                }
                out
            }
            AtlasKind::SampledSet => vec![(self.nearest_sample(p), 1.0)],
        }
    }

    /// Embedded point and frame at an arbitrary parameter (analytic geometry
    /// when present, otherwise the nearest sample).
    pub fn eval_base(&self, p: &DVector<f64>) -> (DVector<f64>, Splitting) {
        if let Some(g) = &self.geometry {
            g(p)
        } else {
            let s = &self.samples[self.nearest_sample(p)];
            (s.point.clone(), s.split.clone())
        }
    }

    /// Surrogate (H1)–(H4) checks at sample resolution.
    pub fn report(&self, chi_radius: f64) -> AtlasReport {
        let mut chi: f64 = 0.0;
        for i in 0..self.len() {
            chi = chi.max(self.pretangent_defect(i, chi_radius).unwrap_or(0.0));
        }
        // projection-field Lipschitz constant over neighboring samples
        let mut lip: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                let dm = self
                    .ambient_diff(&self.samples[i].point, &self.samples[j].point)
                    .norm();
                if dm > chi_radius || dm < 1e-14 {
                    continue;
                }
                let dpc = op_norm(&(self.samples[i].split.proj_c() - self.samples[j].split.proj_c()));
                let dps = op_norm(&(self.samples[i].split.proj_s() - self.samples[j].split.proj_s()));
                let dpu = op_norm(&(self.samples[i].split.proj_u() - self.samples[j].split.proj_u()));
                lip = lip.max(dpc.max(dps).max(dpu) / dm);
            }
        }
        AtlasReport {
            chi,
            chi_radius,
            projection_lipschitz: lip,
            delta0: self.delta0,
            samples: self.len(),
        }
    }

    /// χ_m(ε) surrogate at sample `m0`: the supremum over pairs of samples
    /// within ambient distance ε of m₀ of |Δ − Π^c_{m₀}Δ|/|Δ|.
    pub fn pretangent_defect(&self, m0: usize, eps: f64) -> Result<f64, AtlasError> {
        let near: Vec<usize> = (0..self.len())
            .filter(|&i| {
                self.ambient_diff(&self.samples[i].point, &self.samples[m0].point).norm() <= eps
            })
            .collect();
        if near.len() < 2 {
            return Err(AtlasError::NotEnoughSamples(2));
        }
        let pc = self.samples[m0].split.proj_c();
        let mut sup: f64 = 0.0;
        for (a, &i) in near.iter().enumerate() {
            for &j in near.iter().skip(a + 1) {
                let d = self.ambient_diff(&self.samples[i].point, &self.samples[j].point);
                let n = d.norm();
                if n < 1e-14 {
                    continue;
                }
                sup = sup.max((&d - &pc * &d).norm() / n);
            }
        }
        Ok(sup)
    }

    /// Variant of the defect restricted to secants through m₀ itself.
    pub fn pretangent_defect_through_center(&self, m0: usize, eps: f64) -> Result<f64, AtlasError> {
        let pc = self.samples[m0].split.proj_c();
        let mut sup: f64 = 0.0;
        let mut count = 0;
        for i in 0..self.len() {
            if i == m0 {
                continue;
            }
            let d = self.ambient_diff(&self.samples[i].point, &self.samples[m0].point);
            let n = d.norm();
            if n > eps || n < 1e-14 {
                continue;
            }
            count += 1;
            sup = sup.max((&d - &pc * &d).norm() / n);
        }
        if count == 0 {
            return Err(AtlasError::NotEnoughSamples(2));
        }
        Ok(sup)
    }

    /// Tubular coordinates Φ⁻¹ at the chart of sample `m0`: decompose an
    /// ambient point z as m̄ + x̄^s + x̄^u with m̄ on Σ; returns the base-chart
    /// coordinate (c-coords of m̄ − m₀ at m₀), the fiber coordinates at m̄,
    /// and the base parameter of m̄.
    pub fn tubular_coords(
        &self,
        m0: usize,
        z: &DVector<f64>,
    ) -> Result<TubularCoords, AtlasError> {
        let s0 = &self.samples[m0];
        if self.flat_frames {
            let xi = s0.split.coords(&self.ambient_diff(z, &s0.point));
            let d_c = s0.split.d_c();
            return Ok(TubularCoords {
                x_c: xi.rows(0, d_c).into_owned(),
                y_s: xi.rows(d_c, s0.split.d_s).into_owned(),
                y_u: xi.rows(d_c + s0.split.d_s, s0.split.d_u).into_owned(),
                base_param: {
                    // tangent offsets are parameter offsets in the flat case
                    let mut p = s0.param.clone();
                    for k in 0..s0.split.d_t {
                        p[k] += xi[s0.split.d_c1 + k];
                    }
                    p
                },
            });
        }
        let geometry = self.geometry.as_ref().ok_or(AtlasError::NeedsAnalyticGeometry)?;
        // implicit solve for the base point: Π^c_{m̄}(z − m̄) = 0
        let mut p = s0.param.clone();
        let mut residual = f64::INFINITY;
        for _ in 0..80 {
            let (m_bar, split) = geometry(&p);
            let w = self.ambient_diff(z, &m_bar);
            let xi = split.coords(&w);
            let rc = xi.rows(0, split.d_c()).into_owned();
            residual = rc.norm();
            if residual <= 1e-13 * (1.0 + z.norm()) {
                break;
            }
            // move the base parameter by the tangent component of the defect
            let dphi = param_jacobian(geometry, &p);
            let pc = split.proj_c();
            let step = solve_lstsq(&(&pc * &dphi), &(&pc * &w));
            if step.norm() > self.eps1 * 4.0 {
                return Err(AtlasError::OutsideChart(residual));
            }
            p += step;
        }
        if residual > 1e-9 * (1.0 + z.norm()) {
            return Err(AtlasError::OutsideChart(residual));
        }
        let (m_bar, split) = geometry(&p);
        let w = self.ambient_diff(z, &m_bar);
        let xi = split.coords(&w);
        let pc0 = s0.split.proj_c();
        let xc_amb = &pc0 * self.ambient_diff(&m_bar, &s0.point);
        let xc = s0
            .split
            .coords(&xc_amb)
            .rows(0, s0.split.d_c())
            .into_owned();
        Ok(TubularCoords {
            x_c: xc,
            y_s: xi.rows(split.d_c(), split.d_s).into_owned(),
            y_u: xi.rows(split.d_c() + split.d_s, split.d_u).into_owned(),
            base_param: p,
        })
    }

    /// Recompose a point from tubular coordinates (inverse of
    /// `tubular_coords`); the round trip is accurate to 1e-9.
    pub fn tubular_inverse(&self, m0: usize, tc: &TubularCoords) -> Result<DVector<f64>, AtlasError> {
        let s0 = &self.samples[m0];
        if self.flat_frames {
            let mut xi = DVector::zeros(s0.split.ambient_dim());
            let d_c = s0.split.d_c();
            xi.rows_mut(0, d_c).copy_from(&tc.x_c);
            xi.rows_mut(d_c, s0.split.d_s).copy_from(&tc.y_s);
            xi.rows_mut(d_c + s0.split.d_s, s0.split.d_u).copy_from(&tc.y_u);
            return Ok(&s0.point + s0.split.from_coords(&xi));
        }
        let geometry = self.geometry.as_ref().ok_or(AtlasError::NeedsAnalyticGeometry)?;
        // find the base point with the prescribed chart coordinate at m0
        let target = s0.split.basis.columns(0, s0.split.d_c()) * &tc.x_c;
        let pc0 = s0.split.proj_c();
        let mut p = s0.param.clone();
        for _ in 0..80 {
            let (m_bar, _) = geometry(&p);
            let r = &pc0 * self.ambient_diff(&m_bar, &s0.point) - &target;
            if r.norm() <= 1e-13 {
                break;
            }
            let dphi = param_jacobian(geometry, &p);
            let step = solve_lstsq(&(&pc0 * &dphi), &r);
            p -= step;
        }
        let (m_bar, split) = geometry(&p);
        let fiber = split.basis.columns(split.d_c(), split.d_s) * &tc.y_s
            + split.basis.columns(split.d_c() + split.d_s, split.d_u) * &tc.y_u;
        Ok(m_bar + fiber)
    }

    /// Sampled Lipschitz constant of Φ − I on a tube of the given radii
    /// around sample m₀ (Φ maps tubular coordinates to frame coordinates at
    /// m₀ of the recomposed point).
    pub fn tubular_lip_defect(
        &self,
        m0: usize,
        eps: f64,
        fiber_radius: f64,
        trials: usize,
        seed: u64,
    ) -> Result<f64, AtlasError> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let s0 = &self.samples[m0];
        let (d_c, d_s, d_u) = (s0.split.d_c(), s0.split.d_s, s0.split.d_u);
        let dim = d_c + d_s + d_u;
        let phi = |tc: &TubularCoords| -> Result<DVector<f64>, AtlasError> {
            let z = self.tubular_inverse(m0, tc)?;
            Ok(s0.split.coords(&self.ambient_diff(&z, &s0.point)))
        };
        let mut sup: f64 = 0.0;
        for _ in 0..trials {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, k: usize, r: f64| {
                DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0) * r)
            };
            let tc1 = TubularCoords {
                x_c: draw(&mut rng, d_c, eps),
                y_s: draw(&mut rng, d_s, fiber_radius),
                y_u: draw(&mut rng, d_u, fiber_radius),
                base_param: s0.param.clone(),
            };
            let tc2 = TubularCoords {
                x_c: draw(&mut rng, d_c, eps),
                y_s: draw(&mut rng, d_s, fiber_radius),
                y_u: draw(&mut rng, d_u, fiber_radius),
                base_param: s0.param.clone(),
            };
            let in1 = stack(&tc1, dim);
            let in2 = stack(&tc2, dim);
            let denom = (&in1 - &in2).norm();
            if denom < 1e-10 {
                continue;
            }
            let out1 = phi(&tc1)?;
            let out2 = phi(&tc2)?;
            let dev = ((&out1 - &out2) - (&in1 - &in2)).norm();
            sup = sup.max(dev / denom);
        }
        Ok(sup)
    }
}

/// Tubular coordinates of a point: base-chart coordinate x_c at m₀, fiber
/// coordinates (y_s, y_u) at the foot point m̄, and the parameter of m̄.
#[derive(Debug, Clone)]
pub struct TubularCoords {
    pub x_c: DVector<f64>,
    pub y_s: DVector<f64>,
    pub y_u: DVector<f64>,
    pub base_param: DVector<f64>,
}

fn stack(tc: &TubularCoords, dim: usize) -> DVector<f64> {
    let mut v = DVector::zeros(dim);
    let mut k = 0;
    for part in [&tc.x_c, &tc.y_s, &tc.y_u] {
        v.rows_mut(k, part.len()).copy_from(part);
        k += part.len();
    }
    v
}

fn param_jacobian(geometry: &GeometryFn, p: &DVector<f64>) -> DMatrix<f64> {
    let h = 1e-7 * (1.0 + p.norm());
    let (base, _) = geometry(p);
    let mut jac = DMatrix::zeros(base.len(), p.len());
    for j in 0..p.len() {
        let mut pp = p.clone();
        let mut pm = p.clone();
        pp[j] += h;
        pm[j] -= h;
        let (fp, _) = geometry(&pp);
        let (fm, _) = geometry(&pm);
        for i in 0..base.len() {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

fn wrap_to(x: f64, period: f64) -> f64 {
    let mut y = x.rem_euclid(period);
    if y > period / 2.0 {
        y -= period;
    }
    y
}

/// μ-Lip-in-u check over a point set: |Π^u Δ| ≤ μ·max{|Π^c Δ|, |Π^s Δ|} for
/// every pair, with witnesses on failure.
pub fn mu_lip_check(points: &[DVector<f64>], split: &Splitting, mu: f64) -> ConditionReport {
    let (pc, ps, pu) = (split.proj_c(), split.proj_s(), split.proj_u());
    let mut violated = Vec::new();
    let mut worst: f64 = 0.0;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = &points[i] - &points[j];
            let lhs = (&pu * &d).norm();
            let rhs = mu * (&pc * &d).norm().max((&ps * &d).norm());
            if lhs > rhs + 1e-12 {
                violated.push(ViolationWitness {
                    which: "μ-Lip in u-direction".into(),
                    source: (points[i].iter().copied().collect(), vec![]),
                    other: (points[j].iter().copied().collect(), vec![]),
                    lhs,
                    rhs,
                });
            }
            let denom = (&pc * &d).norm().max((&ps * &d).norm());
            if denom > 1e-14 {
                worst = worst.max(lhs / denom);
            }
        }
    }
    let mut report = ConditionReport {
        passed: violated.is_empty(),
        violated_pairs: violated,
        measured_constants: None,
        predicate_values: vec![PredicateValue {
            name: "measured μ".into(),
            lhs: worst,
            rhs: mu,
            passed: worst <= mu + 1e-12,
        }],
    };
    report.passed = report.predicate_values[0].passed && report.violated_pairs.is_empty();
    report
}

// ---------------------------------------------------------------------------
// constructors

/// Parameters for `build_base_sample`.
#[derive(Debug, Clone)]
pub enum AtlasSpec {
    /// single point with a given frame
    Point { point: DVector<f64>, split: Splitting },
    /// unit circle embedded in R³ (tangent = center, radial = stable,
    /// binormal = unstable), rotation by omega
    EmbeddedCircle { samples: usize, omega: f64 },
    /// flat torus factor: ambient R^n with the listed coordinates periodic;
    /// constant frame; samples on the uniform angle grid; rotation by omega
    FlatTorus {
        split: Splitting,
        angle_coords: Vec<usize>,
        periods: Vec<f64>,
        samples_per_angle: usize,
        omega: DVector<f64>,
    },
    /// explicit list with a permutation base map
    SampledSet { samples: Vec<BaseSample>, perm: Vec<usize> },
}

/// Build an atlas and run the (H1)–(H4) surrogate checks.
pub fn build_base_sample(spec: AtlasSpec) -> Result<(BaseAtlas, AtlasReport), AtlasError> {
    let atlas = match spec {
        AtlasSpec::Point { point, split } => BaseAtlas {
            kind: AtlasKind::Point,
            samples: vec![BaseSample { param: DVector::zeros(0), point, split }],
            base_map: BaseMap::Identity,
            param_periods: vec![],
            ambient_periods: vec![],
            geometry: None,
            flat_frames: true,
            eps1: 1.0,
            delta0: 1.0,
        },
        AtlasSpec::EmbeddedCircle { samples, omega } => {
            if samples < 8 {
                return Err(AtlasError::InvalidParams("need ≥ 8 circle samples".into()));
            }
            embedded_circle(samples, omega)
        }
        AtlasSpec::FlatTorus { split, angle_coords, periods, samples_per_angle, omega } => {
            if samples_per_angle < 8 {
                return Err(AtlasError::InvalidParams("need ≥ 8 samples per angle".into()));
            }
            flat_torus(split, &angle_coords, &periods, samples_per_angle, omega)?
        }
        AtlasSpec::SampledSet { samples, perm } => {
            if samples.is_empty() || perm.len() != samples.len() {
                return Err(AtlasError::InvalidParams("sample/permutation length mismatch".into()));
            }
            BaseAtlas {
                kind: AtlasKind::SampledSet,
                samples,
                base_map: BaseMap::Permutation(perm),
                param_periods: vec![],
                ambient_periods: vec![],
                geometry: None,
                flat_frames: false,
                eps1: 1.0,
                delta0: 1.0,
            }
        }
    };
    let radius = default_chi_radius(&atlas);
    let report = atlas.report(radius);
    Ok((atlas, report))
}

fn default_chi_radius(atlas: &BaseAtlas) -> f64 {
    if atlas.len() < 2 {
        return atlas.eps1;
    }
    // a few sample spacings
    let mut min_gap = f64::INFINITY;
    let p0 = &atlas.samples[0].point;
    for s in atlas.samples.iter().skip(1) {
        min_gap = min_gap.min(atlas.ambient_diff(&s.point, p0).norm());
    }
    (4.0 * min_gap).min(atlas.eps1)
}

/// Unit circle in R³: φ(t) = (cos t, sin t, 0); center = tangent, stable =
/// radial, unstable = binormal.
pub fn embedded_circle(n: usize, omega: f64) -> BaseAtlas {
    embedded_circle_with(n, omega, false)
}

/// Circle variant with the stable/unstable fiber assignment swapped
/// (stable = binormal, unstable = radial): the circle's curvature then shows
/// up in the u-component of local graph representations.
pub fn embedded_circle_with(n: usize, omega: f64, radial_unstable: bool) -> BaseAtlas {
    let geometry: GeometryFn = Arc::new(move |p: &DVector<f64>| {
        let t = p[0];
        let point = DVector::from_vec(vec![t.cos(), t.sin(), 0.0]);
        let tangent = DMatrix::from_column_slice(3, 1, &[-t.sin(), t.cos(), 0.0]);
        let radial = DMatrix::from_column_slice(3, 1, &[t.cos(), t.sin(), 0.0]);
        let binormal = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let (stable, unstable) = if radial_unstable {
            (binormal, radial)
        } else {
            (radial, binormal)
        };
        let split = Splitting::new(DMatrix::zeros(3, 0), tangent, stable, unstable)
            .expect("orthonormal circle frame");
        (point, split)
    });
    let samples = (0..n)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            let p = DVector::from_vec(vec![t]);
            let (point, split) = geometry(&p);
            BaseSample { param: p, point, split }
        })
        .collect();
    BaseAtlas {
        kind: AtlasKind::Circle,
        samples,
        base_map: BaseMap::Rotation(DVector::from_vec(vec![omega])),
        param_periods: vec![Some(2.0 * std::f64::consts::PI)],
        ambient_periods: vec![None, None, None],
        geometry: Some(geometry),
        flat_frames: false,
        eps1: 0.5,
        delta0: 0.25,
    }
}

/// Flat torus atlas: ambient R^n with the listed angle coordinates periodic,
/// one constant frame, uniform angle grid, base rotation by omega. Sample
/// parameters are the angle coordinates themselves.
pub fn flat_torus(
    split: Splitting,
    angle_coords: &[usize],
    periods: &[f64],
    per_angle: usize,
    omega: DVector<f64>,
) -> Result<BaseAtlas, AtlasError> {
    let n = split.ambient_dim();
    let d = angle_coords.len();
    if periods.len() != d || omega.len() != d {
        return Err(AtlasError::InvalidParams("angle/period/omega lengths differ".into()));
    }
    if split.d_t != d {
        return Err(AtlasError::InvalidParams(format!(
            "tangent block dimension {} must match the number of angles {}",
            split.d_t, d
        )));
    }
    let mut ambient_periods = vec![None; n];
    for (k, &i) in angle_coords.iter().enumerate() {
        ambient_periods[i] = Some(periods[k]);
    }
    let total = per_angle.pow(d as u32);
    let mut samples = Vec::with_capacity(total);
    for flat in 0..total {
        // row-major over the angles, matching chart_blend
        let mut idx = flat;
        let mut param = DVector::zeros(d);
        for k in (0..d).rev() {
            param[k] = (idx % per_angle) as f64 * periods[k] / per_angle as f64;
            idx /= per_angle;
        }
        let mut point = DVector::zeros(n);
        for (k, &i) in angle_coords.iter().enumerate() {
            point[i] = param[k];
        }
        samples.push(BaseSample { param, point, split: split.clone() });
    }
    Ok(BaseAtlas {
        kind: if d == 0 { AtlasKind::Point } else { AtlasKind::Circle },
        samples,
        base_map: BaseMap::Rotation(omega),
        param_periods: periods.iter().map(|&p| Some(p)).collect(),
        ambient_periods,
        geometry: None,
        flat_frames: true,
        eps1: 0.5,
        delta0: 0.25,
    })
    .map(|mut a| {
        if d >= 2 {
            a.kind = AtlasKind::Torus;
        }
        a
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat_plane_atlas() -> BaseAtlas {
        // Σ = the x-axis in R³ treated as a flat "torus" with one huge period
        let split = Splitting::new(
            DMatrix::zeros(3, 0),
            DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
            DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
        )
        .unwrap();
        flat_torus(split, &[0], &[1000.0], 16, dvector![0.0]).unwrap()
    }

    #[test]
    fn splitting_validates() {
        let split = Splitting::new(
            DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(4, 1, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0, 0.5]),
            DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert!(split.validate().passed);
        let w = dvector![1.0, 2.0, 3.0, 4.0];
        let xi = split.coords(&w);
        assert_abs_diff_eq!((split.from_coords(&xi) - &w).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_tubular_round_trip_is_exact() {
        let atlas = flat_plane_atlas();
        let z = dvector![3.2, 0.4, -0.2];
        let tc = atlas.tubular_coords(2, &z).unwrap();
        let back = atlas.tubular_inverse(2, &tc).unwrap();
        assert_abs_diff_eq!((back - z).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn circle_tubular_round_trip() {
        let atlas = embedded_circle(128, 0.17);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let i = rng.gen_range(0..atlas.len());
            let t = atlas.samples[i].param[0] + rng.gen_range(-0.02..0.02);
            let radial = rng.gen_range(-0.05..0.05);
            let vert = rng.gen_range(-0.05..0.05);
            let z = dvector![
                (1.0 + radial) * t.cos(),
                (1.0 + radial) * t.sin(),
                vert
            ];
            let tc = atlas.tubular_coords(i, &z).unwrap();
            let back = atlas.tubular_inverse(i, &tc).unwrap();
            assert!((back - &z).norm() <= 1e-9, "round trip off");
        }
    }

    #[test]
    fn circle_on_manifold_points_have_zero_fibers() {
        let atlas = embedded_circle(64, 0.0);
        let t = atlas.samples[5].param[0] + 0.02;
        let z = dvector![t.cos(), t.sin(), 0.0];
        let tc = atlas.tubular_coords(5, &z).unwrap();
        assert!(tc.y_s.norm() <= 1e-10 && tc.y_u.norm() <= 1e-10);
        assert!(tc.x_c.norm() > 0.01);
    }

    #[test]
    fn flat_chart_is_identity() {
        // Σ a linear subspace with orthogonal splitting: Φ = identity
        let atlas = flat_plane_atlas();
        let defect = atlas.tubular_lip_defect(3, 0.3, 0.3, 200, 1).unwrap();
        assert_abs_diff_eq!(defect, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn circle_tube_lip_defect_small() {
        let atlas = embedded_circle(256, 0.0);
        let defect = atlas.tubular_lip_defect(0, 0.05, 0.05, 300, 2).unwrap();
        assert!(defect <= 0.1, "Lip(Φ−I) = {defect}");
    }

    #[test]
    fn pretangent_defect_line_is_zero() {
        let atlas = flat_plane_atlas();
        let d = atlas.pretangent_defect(8, 500.0).unwrap();
        assert_abs_diff_eq!(d, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn pretangent_defect_circle_matches_curvature_bound() {
        let atlas = embedded_circle(256, 0.0);
        let eps = 0.1;
        // secants through the base sample: defect ≈ curvature·ε/2
        let through = atlas.pretangent_defect_through_center(0, eps).unwrap();
        assert!(through <= 0.06, "secant defect {through}");
        // arbitrary pairs in the ε-ball: the analytic bound is sin(ε)
        let full = atlas.pretangent_defect(0, eps).unwrap();
        assert!(full <= 1.05 * eps.sin(), "pair defect {full}");
        assert!(full >= through - 1e-12);
        // monotone under ε ↓
        let smaller = atlas.pretangent_defect(0, eps / 2.0).unwrap();
        assert!(smaller <= full + 1e-12);
    }

    #[test]
    fn pretangent_defect_detects_u_component() {
        // K drifting along the u-axis: defect bounded away from 0
        let split = Splitting::new(
            DMatrix::zeros(2, 0),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::zeros(2, 0),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let samples: Vec<BaseSample> = (0..16)
            .map(|i| {
                let x = i as f64 * 0.01;
                BaseSample {
                    param: dvector![x],
                    point: dvector![x, 0.5 * x],
                    split: split.clone(),
                }
            })
            .collect();
        let n = samples.len();
        let (atlas, _) = build_base_sample(AtlasSpec::SampledSet {
            samples,
            perm: (0..n).collect(),
        })
        .unwrap();
        let d1 = atlas.pretangent_defect(0, 0.1).unwrap();
        let d2 = atlas.pretangent_defect(0, 0.02).unwrap();
        assert!(d1 > 0.4 && d2 > 0.4, "defects {d1}, {d2}");
    }

    #[test]
    fn mu_lip_check_examples() {
        let split = Splitting::new(
            DMatrix::zeros(3, 0),
            DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]),
            DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]),
        )
        .unwrap();
        // points in the s-plane: pass for any μ ≥ 0
        let pts: Vec<DVector<f64>> = (0..6).map(|i| dvector![0.1 * i as f64, 0.3 * i as f64, 0.0]).collect();
        assert!(mu_lip_check(&pts, &split, 0.0).passed);
        // points on a graph of slope 0.3 over s
        let graph: Vec<DVector<f64>> =
            (0..6).map(|i| dvector![0.0, 0.1 * i as f64, 0.03 * i as f64]).collect();
        assert!(mu_lip_check(&graph, &split, 0.3 + 1e-9).passed);
        assert!(!mu_lip_check(&graph, &split, 0.29).passed);
        // tilted plane with u-slope: a violating pair is reported
        let tilted: Vec<DVector<f64>> = (0..4).map(|i| dvector![0.0, 0.05 * i as f64, 0.2 * i as f64]).collect();
        let r = mu_lip_check(&tilted, &split, 0.5);
        assert!(!r.passed && !r.violated_pairs.is_empty());
    }

    #[test]
    fn build_point_atlas() {
        let split = Splitting::new(
            DMatrix::zeros(2, 0),
            DMatrix::zeros(2, 0),
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let (atlas, _) = build_base_sample(AtlasSpec::Point { point: DVector::zeros(2), split }).unwrap();
        assert_eq!(atlas.len(), 1);
        assert!(matches!(atlas.base_map, BaseMap::Identity));
    }

    #[test]
    fn circle_base_map_wraps() {
        let (atlas, report) =
            build_base_sample(AtlasSpec::EmbeddedCircle { samples: 256, omega: 0.37 }).unwrap();
        let p = dvector![2.0 * std::f64::consts::PI - 0.1];
        let q = atlas.map_param(&p);
        assert!(q[0] >= 0.0 && q[0] < 2.0 * std::f64::consts::PI);
        assert_abs_diff_eq!(q[0], 0.27, epsilon = 1e-12);
        assert!(report.chi < 0.2);
        assert!(report.projection_lipschitz.is_finite());
    }

    #[test]
    fn torus_report_finite_projection_lipschitz() {
        // 2-torus sampled 16×16 inside R^4 (two flat angle coordinates)
        let split = Splitting::new(
            DMatrix::zeros(4, 0),
            DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0, 0.0]),
            DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]),
        )
        .unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let (atlas, report) = build_base_sample(AtlasSpec::FlatTorus {
            split,
            angle_coords: vec![0, 1],
            periods: vec![tau, tau],
            samples_per_angle: 16,
            omega: dvector![0.3, 0.7],
        })
        .unwrap();
        assert_eq!(atlas.len(), 256);
        assert_eq!(atlas.kind, AtlasKind::Torus);
        assert!(report.projection_lipschitz.is_finite());
        assert_abs_diff_eq!(report.chi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chart_blend_weights_sum_to_one() {
        let atlas = embedded_circle(64, 0.0);
        let blend = atlas.chart_blend(&dvector![0.05]);
        let total: f64 = blend.iter().map(|(_, w)| w).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(blend.len(), 2);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(build_base_sample(AtlasSpec::EmbeddedCircle { samples: 4, omega: 0.0 }).is_err());
    }
}
