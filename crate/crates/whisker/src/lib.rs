//! Locally invariant center-stable, center-unstable and center manifolds of
//! discrete dynamical systems — maps, and correspondences given by generating
//! maps — near partially normally hyperbolic invariant sets in R^n.
//!
//! The construction is the graph transform: a candidate Lipschitz section
//! (graph over the center-stable tube of a sampled base manifold) is mapped to
//! the section whose graph is consistent with the dynamics, and the invariant
//! manifold is the fixed point of that contraction. The library covers
//!
//! * complemented-subspace calculus (gap metrics, projections, graph charts),
//! * the algebra of correspondences with generating pairs, including duals,
//! * the (A)(B) hyperbolicity-condition calculus and its predicates,
//! * discretized base atlases with s/c/u splittings and tubular coordinates,
//! * the section graph transform and its derivative (tangent) transform,
//! * the trichotomy driver: cs, cu (via duality), center by intersection,
//!   orbit generation and classification,
//! * built-in example systems: linear blocks, polynomial maps with a
//!   power-series oracle, whiskered-torus skew products, and a Galerkin
//!   truncation of an ill-posed Boussinesq-type equation realized through
//!   two-point boundary-value shooting.

pub mod atlas;
pub mod conditions;
pub mod correspondence;
pub mod graph_transform;
pub mod grassmann;
pub mod linalg;
pub mod section;
pub mod systems;
pub mod tangent;
pub mod trichotomy;

pub use atlas::{AtlasKind, BaseAtlas, BaseMap, BaseSample, Splitting};
pub use conditions::{AbConstants, ConditionReport, PredicateMode};
pub use correspondence::{CorrespondenceHandle, GeneratingPair};
pub use graph_transform::{TransformConfig, TransformMode, TransformReport};
pub use grassmann::{GapMetrics, ProjectionPair, Subspace};
pub use section::{GraphSection, LocalGrid};
pub use systems::SystemSpec;
pub use tangent::TangentSection;
pub use trichotomy::{ManifoldTriple, OrbitSegment};
