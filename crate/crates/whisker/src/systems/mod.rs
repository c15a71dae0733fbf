//! Built-in example systems: linear block maps, polynomial perturbations with
//! a power-series oracle, whiskered-torus skew products, and the Galerkin
//! truncation of an ill-posed Boussinesq-type equation realized through
//! two-point boundary-value shooting.
//!
//! A system exposes, for every base parameter m, the generating pair of the
//! local correspondence Ĥ_m = H(m+·) − u(m) in frame coordinates, blocked
//! either cs ⊕ u (for center-stable computations) or s ⊕ cu (for duals and
//! strong-stable fibers). The cs-coordinate layout is
//! [c-transversal | K-tangent | stable]; in the s ⊕ cu blocking the z-slot
//! is ordered [c-transversal | K-tangent | unstable].

mod boussinesq;
mod linear;
mod poly;
mod torus;

pub use boussinesq::{
    boussinesq_galerkin_system, boussinesq_structure, solve_boundary_value, spectrum,
    BoussinesqParams, BvpSolution, StructureHandle,
};
pub use linear::{invariant_graph_chart, linear_block_system, linear_generating_pair};
pub use poly::{eval_series, poly_perturbed_system, taylor_oracle, GraphSide, Monomial, PolyMap, SeriesOracle};
pub use torus::{strong_stable_fiber, whiskered_torus_system, FiberFamily, TorusParams};

use std::sync::Arc;

use nalgebra::DVector;
use thiserror::Error;

use crate::atlas::BaseAtlas;
use crate::conditions::AbConstants;
use crate::correspondence::GeneratingPair;
use crate::graph_transform::TransformMode;

#[derive(Debug, Error)]
pub enum SystemError {
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    #[error("resonance at multi-index {0:?}: the coefficient solve is singular")]
    Resonance(Vec<u32>),
    #[error("boundary-value shooting did not contract (factor {0:.3})")]
    ShootingNotContractive(f64),
    #[error("system does not expose the s ⊕ cu block form")]
    NoScuBlocking,
    #[error(transparent)]
    Correspondence(#[from] crate::correspondence::CorrespondenceError),
    #[error(transparent)]
    Atlas(#[from] crate::atlas::AtlasError),
}

/// Generating pair of the local correspondence at a base point, in frame
/// coordinates; the x-slot lives at `source_param`, the z-slot at
/// `target_param` (the base image under u).
#[derive(Clone)]
pub struct LocalPair {
    pub pair: GeneratingPair,
    pub source_param: DVector<f64>,
    pub target_param: DVector<f64>,
}

/// Per-base-point factory for the local correspondences of a system.
pub trait LocalDynamics: Send + Sync {
    /// cs ⊕ u blocked pair at a base parameter.
    fn pair_cs(&self, param: &DVector<f64>) -> LocalPair;

    /// s ⊕ cu blocked pair, when the system exposes it.
    fn pair_scu(&self, _param: &DVector<f64>) -> Option<LocalPair> {
        None
    }

    /// Ambient image under the underlying map, when the system is a map
    /// (used for orbit membership residuals).
    fn ambient_map(&self, _z: &DVector<f64>) -> Option<DVector<f64>> {
        None
    }
}

/// Analytic ground truth attached to a system: the section over cs-coords at
/// a base parameter.
#[derive(Clone)]
pub struct GroundTruth {
    pub section: Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub label: String,
}

/// A complete example system: atlas, local correspondence factory, certified
/// constants, optional analytic ground truth.
#[derive(Clone)]
pub struct SystemSpec {
    pub label: String,
    pub atlas: BaseAtlas,
    pub dynamics: Arc<dyn LocalDynamics>,
    /// constants of the cs ⊕ u blocking
    pub constants: AbConstants,
    /// constants of the s ⊕ cu blocking, when exposed
    pub constants_scu: Option<AbConstants>,
    pub ground_truth: Option<GroundTruth>,
    pub preferred_mode: TransformMode,
}

impl std::fmt::Debug for SystemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemSpec")
            .field("label", &self.label)
            .field("samples", &self.atlas.len())
            .finish()
    }
}

impl SystemSpec {
    pub fn d_u(&self) -> usize {
        self.atlas.samples[0].split.d_u
    }

    pub fn d_s(&self) -> usize {
        self.atlas.samples[0].split.d_s
    }

    pub fn d_c1(&self) -> usize {
        self.atlas.samples[0].split.d_c1
    }

    pub fn d_t(&self) -> usize {
        self.atlas.samples[0].split.d_t
    }

    /// Membership residual of a local step: both points in frame coordinates
    /// (cs, u) at their base parameters.
    pub fn local_membership_residual(
        &self,
        source_param: &DVector<f64>,
        source: (&DVector<f64>, &DVector<f64>),
        target: (&DVector<f64>, &DVector<f64>),
    ) -> f64 {
        let lp = self.dynamics.pair_cs(source_param);
        let (x1, y1) = source;
        let (x2, y2) = target;
        let ry = (y1 - lp.pair.g(x1, y2)).norm();
        let rx = (x2 - lp.pair.f(x1, y2)).norm();
        ry.max(rx)
    }

    /// The dual system computing the center-unstable side: the s ⊕ cu pair is
    /// dualized, the base map inverted, and the stable/unstable frame blocks
    /// swap roles. The "cs"-role of the dual is [c | u-original].
    pub fn dual_scu(&self) -> Result<SystemSpec, SystemError> {
        // probe the blocking
        let probe = self.atlas.samples[0].param.clone();
        if self.dynamics.pair_scu(&probe).is_none() {
            return Err(SystemError::NoScuBlocking);
        }
        let mut atlas = self.atlas.inverted_base();
        for s in atlas.samples.iter_mut() {
            let sp = &s.split;
            let n = sp.ambient_dim();
            let c1 = sp.basis.columns(0, sp.d_c1).into_owned();
            let t = sp.basis.columns(sp.d_c1, sp.d_t).into_owned();
            let stab = sp.basis.columns(sp.d_c(), sp.d_s).into_owned();
            let unst = sp.basis.columns(sp.d_cs(), sp.d_u).into_owned();
            let _ = n;
            s.split = crate::atlas::Splitting::new(c1, t, unst, stab)
                .expect("swapped splitting stays complementary");
        }
        let inner = self.dynamics.clone();
        let fwd_atlas = self.atlas.clone();
        let dual_dyn = DualDynamics { inner, fwd_atlas };
        Ok(SystemSpec {
            label: format!("dual({})", self.label),
            atlas,
            dynamics: Arc::new(dual_dyn),
            constants: self
                .constants_scu
                .as_ref()
                .ok_or(SystemError::NoScuBlocking)?
                .dual_swap(),
            constants_scu: None,
            ground_truth: None,
            preferred_mode: self.preferred_mode,
        })
    }
}

struct DualDynamics {
    inner: Arc<dyn LocalDynamics>,
    fwd_atlas: BaseAtlas,
}

impl LocalDynamics for DualDynamics {
    fn pair_cs(&self, param: &DVector<f64>) -> LocalPair {
        // the dual correspondence at p is the dual of the forward s⊕cu pair
        // at the preimage q = u⁻¹(p)
        let q = self.fwd_atlas.inverted_base().map_param(param);
        let lp = self
            .inner
            .pair_scu(&q)
            .expect("dual system built over a system exposing the s⊕cu form");
        let h = crate::correspondence::CorrespondenceHandle::from_pair(lp.pair, "scu").dual();
        LocalPair {
            pair: h.pair,
            source_param: param.clone(),
            target_param: q,
        }
    }
}
