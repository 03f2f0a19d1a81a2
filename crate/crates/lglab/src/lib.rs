//! Numerical laboratory for symplectic Landau-Ginzburg models.
//!
//! A Landau-Ginzburg model here is an explicit Kähler chart `Y ⊂ ℂ^{n+1}`
//! together with a holomorphic superpotential `v: Y → ℂ` with finitely many
//! critical values. Away from those values `v` is a symplectic fibration, and
//! this crate implements the machinery that lives on such fibrations:
//!
//! * vertical/horizontal tangent splitting, horizontal lifts, and symplectic
//!   parallel transport along base paths ([`fibration`]),
//! * Lagrangians fibered over base curves, isotopies covering base homotopies,
//!   and their flux/potential bookkeeping ([`lagrangians`]),
//! * squared-phase maps, grading lifts, canonical short paths, Floer degrees,
//!   and the base/fiber splitting and bigon identities ([`grading`]),
//! * symplectic areas of sampled disc patches and the area identities that
//!   govern them under Lagrangian isotopies ([`disc_area`]),
//! * a scenario-driven front end producing JSON/CSV reports and SVG sketches
//!   of the base picture ([`scenario`]).
//!
//! Everything operates on the small catalogue of models in [`models`]; all
//! evaluators are closed-form and pure, so results are reproducible to
//! floating-point accuracy.

pub mod disc_area;
pub mod error;
pub mod fibration;
pub mod grading;
pub mod lagrangians;
pub mod models;
pub mod numerics;
pub mod scenario;
pub mod sketch;

pub use error::{Error, Result};
pub use fibration::{monodromy, parallel_transport, BasePath, TransportOpts};
pub use models::{Model, ModelId, PointY, TangentVec};
