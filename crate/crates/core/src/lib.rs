//! Numerical differential geometry on orthonormal frame bundles of model
//! Riemannian manifolds, with verification of the frame-bundle structure
//! equations and Pestov energy identities.

pub mod error;
pub mod frame_bundle;
pub mod jets;
pub mod linalg;
pub mod manifold;
pub mod measure;
pub mod operators;
pub mod pestov;

pub use error::{GeometryError, Result};
pub use frame_bundle::{Direction, FramePoint, FrameTangent, SkewForm};
pub use jets::{DeriveMethod, FieldSpec, ScalarField};
pub use manifold::{ChartPoint, MetricModel, ModelKind, ModelParams};
