//! Galerkin truncation of the ill-posed Boussinesq-type equation
//! ∂²_t u = ∂²_x u + μ∂⁴_x u + ∂²_x(u²) on symmetric zero-mean cosine modes.
//!
//! With u = Σ a_k √2 cos(2πkx), v = u̇, the linear part acts per mode as
//! d/dt (a_k, b_k) = (b_k, c_k a_k) with c_k = (2πk)²(μ(2πk)² − 1), so the
//! spectrum is ±2πk√(μ4π²k² − 1): imaginary (center) for μ4π²k² < 1, a real
//! hyperbolic pair otherwise. The time-t₀ relation is realized as a
//! correspondence through two-point boundary-value shooting on the mild
//! (variation-of-constants) form: center/stable data at t = 0, unstable data
//! at t = t₀.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::atlas::{build_base_sample, AtlasSpec, Splitting};
use crate::conditions::ab_case2_from_lipschitz;
use crate::correspondence::{GeneratingPair, VecFn2};
use crate::graph_transform::TransformMode;

use super::{GroundTruth, LocalDynamics, LocalPair, SystemError, SystemSpec};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct BoussinesqParams {
    pub n_modes: usize,
    pub mu: f64,
    pub t0: f64,
    /// boundary-data radius of the correspondence
    pub radius: f64,
    pub nonlinearity_on: bool,
    /// time-grid intervals of the Picard integrator
    pub time_steps: usize,
}

impl Default for BoussinesqParams {
    fn default() -> Self {
        Self {
            n_modes: 8,
            mu: 0.015,
            t0: 0.1,
            radius: 1e-4,
            nonlinearity_on: true,
            time_steps: 32,
        }
    }
}

/// Per-mode classification and rates.
#[derive(Debug, Clone)]
pub struct ModeData {
    pub k: usize,
    /// c_k = (2πk)²(μ(2πk)²−1)
    pub c: f64,
    /// true: hyperbolic pair ±√c; false: center pair ±i√(−c)
    pub hyperbolic: bool,
}

/// Eigenvalues ±2πk√(μ4π²k²−1) per mode: (k, real part, imaginary part) of
/// the + branch.
pub fn spectrum(mu: f64, n_modes: usize) -> Vec<(usize, f64, f64)> {
    (1..=n_modes)
        .map(|k| {
            let w = TWO_PI * k as f64;
            let inner = mu * w * w - 1.0;
            if inner >= 0.0 {
                (k, w * inner.sqrt(), 0.0)
            } else {
                (k, 0.0, w * (-inner).sqrt())
            }
        })
        .collect()
}

fn modes(mu: f64, n: usize) -> Vec<ModeData> {
    (1..=n)
        .map(|k| {
            let w = TWO_PI * k as f64;
            let c = w * w * (mu * w * w - 1.0);
            ModeData { k, c, hyperbolic: c > 0.0 }
        })
        .collect()
}

impl StructureHandle {
    /// mode numbers of the center block
    pub fn center_modes(&self) -> Vec<usize> {
        self.0.center.iter().map(|&i| self.0.modes[i].k).collect()
    }
}

/// State in structured coordinates: [center pairs (p_k, q_k) | stable s_k |
/// unstable u_k], with
///   hyperbolic k: a = s + u, b = √c·(u − s);
///   center k:     p = a, q = b/ω, ω = √(−c).
#[derive(Debug, Clone)]
struct Structure {
    modes: Vec<ModeData>,
    center: Vec<usize>,   // indices into modes
    hyper: Vec<usize>,
    d_c: usize,
    d_s: usize,
}

impl Structure {
    fn new(mu: f64, n: usize) -> Self {
        let modes = modes(mu, n);
        let center: Vec<usize> = modes.iter().enumerate().filter(|(_, m)| !m.hyperbolic).map(|(i, _)| i).collect();
        let hyper: Vec<usize> = modes.iter().enumerate().filter(|(_, m)| m.hyperbolic).map(|(i, _)| i).collect();
        let d_c = 2 * center.len();
        let d_s = hyper.len();
        Self { modes, center, hyper, d_c, d_s }
    }

    fn dim(&self) -> usize {
        self.d_c + 2 * self.d_s
    }

    /// structured → (a, b) Fourier coordinates
    fn to_fourier(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.modes.len();
        let mut a = DVector::zeros(n);
        let mut b = DVector::zeros(n);
        for (ci, &mi) in self.center.iter().enumerate() {
            let omega = (-self.modes[mi].c).sqrt();
            a[mi] = z[2 * ci];
            b[mi] = z[2 * ci + 1] * omega;
        }
        for (hi, &mi) in self.hyper.iter().enumerate() {
            let sq = self.modes[mi].c.sqrt();
            let s = z[self.d_c + hi];
            let u = z[self.d_c + self.d_s + hi];
            a[mi] = s + u;
            b[mi] = sq * (u - s);
        }
        (a, b)
    }

    /// forcing of the structured coordinates from the b-equation forcing w
    /// (ȧ gets nothing, ḃ_k gets w_k)
    fn forcing(&self, w: &DVector<f64>) -> DVector<f64> {
        let mut f = DVector::zeros(self.dim());
        for (ci, &mi) in self.center.iter().enumerate() {
            let omega = (-self.modes[mi].c).sqrt();
            f[2 * ci + 1] = w[mi] / omega;
        }
        for (hi, &mi) in self.hyper.iter().enumerate() {
            let sq = self.modes[mi].c.sqrt();
            f[self.d_c + hi] = -w[mi] / (2.0 * sq);
            f[self.d_c + self.d_s + hi] = w[mi] / (2.0 * sq);
        }
        f
    }

    /// b-equation forcing of the nonlinearity: w_k = −(2πk)²(u²)_k with
    /// (u²)_k = (1/√2)(Σ_{i+j=k} a_i a_j + 2Σ_{j−i=k} a_i a_j), modes
    /// beyond the truncation dropped.
    fn nonlinear_forcing(&self, a: &DVector<f64>) -> DVector<f64> {
        let n = self.modes.len();
        let mut w = DVector::zeros(n);
        for k in 1..=n {
            let mut conv = 0.0;
            for i in 1..k {
                conv += a[i - 1] * a[k - i - 1];
            }
            let mut cross = 0.0;
            for i in 1..=(n - k) {
                cross += a[i - 1] * a[k + i - 1];
            }
            let u2k = (conv + 2.0 * cross) / 2.0f64.sqrt();
            let wk = TWO_PI * k as f64;
            w[k - 1] = -wk * wk * u2k;
        }
        w
    }

    /// linear propagators of each structured coordinate over time t
    /// (diagonal for hyperbolic, 2×2 rotation for center pairs)
    fn propagate(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (ci, &mi) in self.center.iter().enumerate() {
            let omega = (-self.modes[mi].c).sqrt();
            let (cth, sth) = ((omega * t).cos(), (omega * t).sin());
            let (p, q) = (z[2 * ci], z[2 * ci + 1]);
            out[2 * ci] = cth * p + sth * q;
            out[2 * ci + 1] = -sth * p + cth * q;
        }
        for (hi, &mi) in self.hyper.iter().enumerate() {
            let sq = self.modes[mi].c.sqrt();
            out[self.d_c + hi] = (-sq * t).exp() * z[self.d_c + hi];
            out[self.d_c + self.d_s + hi] = (sq * t).exp() * z[self.d_c + self.d_s + hi];
        }
        out
    }
}

/// A mild-solution trajectory of the two-point boundary problem.
#[derive(Debug, Clone)]
pub struct BvpSolution {
    /// states on the uniform time grid 0..t₀
    pub trajectory: Vec<DVector<f64>>,
    /// final Picard sup-change
    pub residual: f64,
    pub iterations: usize,
    /// measured per-sweep contraction factor
    pub contraction: f64,
}

impl BvpSolution {
    pub fn endpoint_cs(&self, st: &StructureHandle) -> DVector<f64> {
        let z = self.trajectory.last().unwrap();
        z.rows(0, st.0.d_c + st.0.d_s).into_owned()
    }

    pub fn start_u(&self, st: &StructureHandle) -> DVector<f64> {
        let z = &self.trajectory[0];
        z.rows(st.0.d_c + st.0.d_s, st.0.d_s).into_owned()
    }
}

/// Opaque handle to the mode structure (exposed for endpoint extraction).
#[derive(Clone)]
pub struct StructureHandle(Arc<Structure>);

impl StructureHandle {
    pub fn d_cs(&self) -> usize {
        self.0.d_c + self.0.d_s
    }

    pub fn d_u(&self) -> usize {
        self.0.d_s
    }
}

/// Picard iteration on the mild form: center/stable blocks integrate forward
/// from x_cs(0), the unstable block backward from x_u(t₀); trapezoid
/// quadrature on a uniform grid. Errors when the sampled contraction factor
/// reaches 0.9.
pub fn solve_boundary_value(
    params: &BoussinesqParams,
    st: &StructureHandle,
    x_cs_at_0: &DVector<f64>,
    x_u_at_t0: &DVector<f64>,
) -> Result<BvpSolution, SystemError> {
    let s = &st.0;
    let m = params.time_steps;
    let dt = params.t0 / m as f64;
    let dim = s.dim();
    let d_cs = s.d_c + s.d_s;
    // seed: pure linear propagation of the boundary data
    let mut traj: Vec<DVector<f64>> = (0..=m)
        .map(|j| {
            let t = j as f64 * dt;
            let mut z = DVector::zeros(dim);
            z.rows_mut(0, d_cs).copy_from(x_cs_at_0);
            let mut fwd = s.propagate(&z, t);
            let mut zu = DVector::zeros(dim);
            zu.rows_mut(d_cs, s.d_s).copy_from(x_u_at_t0);
            let back = s.propagate(&zu, t - params.t0);
            fwd.rows_mut(d_cs, s.d_s).copy_from(&back.rows(d_cs, s.d_s));
            fwd
        })
        .collect();
    if !params.nonlinearity_on {
        return Ok(BvpSolution { trajectory: traj, residual: 0.0, iterations: 1, contraction: 0.0 });
    }
    let mut prev_change = f64::INFINITY;
    let mut contraction: f64 = 0.0;
    for it in 0..80 {
        // forcing at each grid point
        let forcing: Vec<DVector<f64>> = traj
            .iter()
            .map(|z| {
                let (a, _) = s.to_fourier(z);
                s.forcing(&s.nonlinear_forcing(&a))
            })
            .collect();
        let mut next = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let t = j as f64 * dt;
            let mut z = DVector::zeros(dim);
            // cs forward: e^{tA}x(0) + ∫₀ᵗ e^{(t−r)A} f(r) dr
            let mut zcs0 = DVector::zeros(dim);
            zcs0.rows_mut(0, d_cs).copy_from(x_cs_at_0);
            let base = s.propagate(&zcs0, t);
            z.rows_mut(0, d_cs).copy_from(&base.rows(0, d_cs));
            let mut acc = DVector::zeros(dim);
            if j > 0 {
                for r in 0..=j {
                    let weight = if r == 0 || r == j { 0.5 } else { 1.0 };
                    let kernel = s.propagate(&forcing[r], t - r as f64 * dt);
                    acc += weight * dt * kernel;
                }
            }
            for i in 0..d_cs {
                z[i] += acc[i];
            }
            // u backward: e^{(t−t₀)A}u(t₀) − ∫ₜ^{t₀} e^{(t−r)A} f(r) dr
            let mut zu = DVector::zeros(dim);
            zu.rows_mut(d_cs, s.d_s).copy_from(x_u_at_t0);
            let ubase = s.propagate(&zu, t - params.t0);
            let mut uacc = DVector::zeros(dim);
            if j < m {
                for r in j..=m {
                    let weight = if r == j || r == m { 0.5 } else { 1.0 };
                    let kernel = s.propagate(&forcing[r], t - r as f64 * dt);
                    uacc += weight * dt * kernel;
                }
            }
            for i in d_cs..dim {
                z[i] = ubase[i] - uacc[i];
            }
            next.push(z);
        }
        let change = traj
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        traj = next;
        if prev_change.is_finite() && prev_change > 1e-15 {
            contraction = contraction.max(change / prev_change);
            if change / prev_change >= 0.9 {
                return Err(SystemError::ShootingNotContractive(change / prev_change));
            }
        }
        prev_change = change;
        if change <= 1e-13 {
            return Ok(BvpSolution { trajectory: traj, residual: change, iterations: it + 1, contraction });
        }
    }
    Ok(BvpSolution { trajectory: traj, residual: prev_change, iterations: 80, contraction })
}

struct BoussinesqDynamics {
    params: BoussinesqParams,
    st: StructureHandle,
}

impl LocalDynamics for BoussinesqDynamics {
    fn pair_cs(&self, param: &DVector<f64>) -> LocalPair {
        let st = self.st.clone();
        let p = self.params.clone();
        let d_cs = st.d_cs();
        let d_u = st.d_u();
        let st_f = st.clone();
        let p_f = p.clone();
        let f: VecFn2 = Arc::new(move |x, z| {
            let sol = solve_boundary_value(&p_f, &st_f, x, z).expect("contractive on the declared radius");
            sol.endpoint_cs(&st_f)
        });
        let st_g = st.clone();
        let g: VecFn2 = Arc::new(move |x, z| {
            let sol = solve_boundary_value(&p, &st_g, x, z).expect("contractive on the declared radius");
            sol.start_u(&st_g)
        });
        LocalPair {
            pair: GeneratingPair::new(f, g, (self.params.radius, self.params.radius), (d_cs, d_u)),
            source_param: param.clone(),
            target_param: param.clone(),
        }
    }
}

/// Build the Galerkin system; errors when the center block is empty (μ too
/// large) or N > 32.
pub fn boussinesq_galerkin_system(params: BoussinesqParams) -> Result<SystemSpec, SystemError> {
    if params.n_modes == 0 || params.n_modes > 32 {
        return Err(SystemError::InvalidParams("need 1 ≤ N ≤ 32 modes".into()));
    }
    if params.t0 <= 0.0 || params.radius <= 0.0 {
        return Err(SystemError::InvalidParams("need t₀ > 0 and radius > 0".into()));
    }
    let st = StructureHandle(Arc::new(Structure::new(params.mu, params.n_modes)));
    if st.0.center.is_empty() {
        return Err(SystemError::InvalidParams(format!(
            "center block empty for μ = {}: need μ4π²k² < 1 for some mode",
            params.mu
        )));
    }
    let dim = st.0.dim();
    let (d_c, d_s) = (st.0.d_c, st.0.d_s);
    let split = Splitting::new(
        coord_block(dim, 0, d_c),
        DMatrix::zeros(dim, 0),
        coord_block(dim, d_c, d_s),
        coord_block(dim, d_c + d_s, d_s),
    )?;
    let (atlas, _) = build_base_sample(AtlasSpec::Point { point: DVector::zeros(dim), split })?;
    let dynamics = BoussinesqDynamics { params: params.clone(), st: st.clone() };

    // verify contraction once on the declared radius
    let probe = DVector::from_element(d_c + d_s, params.radius / 2.0);
    let probe_u = DVector::from_element(d_s, params.radius / 2.0);
    solve_boundary_value(&params, &st, &probe, &probe_u)?;

    // measured (A′)(B) constants on the ball
    let lp = dynamics.pair_cs(&DVector::zeros(0));
    let (lf_x, lf_z, lg_x, lg_z) = crate::correspondence::pair_lipschitz(&lp.pair);
    let constants = ab_case2_from_lipschitz(lf_x, lf_z, lg_x, lg_z, 0.3, lg_x)
        .map_err(|e| SystemError::InvalidParams(e.to_string()))?;

    let ground_truth = if params.nonlinearity_on {
        None
    } else {
        let d_u = d_s;
        Some(GroundTruth {
            section: Arc::new(move |_p: &DVector<f64>, _cs: &DVector<f64>| DVector::zeros(d_u)),
            label: "decoupled exponentials (nonlinearity off)".into(),
        })
    };

    Ok(SystemSpec {
        label: "boussinesq_galerkin".into(),
        atlas,
        dynamics: Arc::new(dynamics),
        constants,
        constants_scu: None,
        ground_truth,
        preferred_mode: TransformMode::Invariant,
    })
}

/// The structure handle of a built system (for boundary-value calls).
pub fn boussinesq_structure(params: &BoussinesqParams) -> StructureHandle {
    StructureHandle(Arc::new(Structure::new(params.mu, params.n_modes)))
}

fn coord_block(n: usize, start: usize, len: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, len);
    for j in 0..len {
        m[(start + j, j)] = 1.0;
    }
    m
}
