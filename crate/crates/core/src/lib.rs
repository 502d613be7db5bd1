//! Geodesic flows of left-invariant metrics on the Heisenberg group.
//!
//! The crate builds the Hamiltonian systems of the left-invariant (LL) and
//! right-invariant (LR) horizontal distributions on H_{2n+1}, integrates
//! them, and checks their first-integral structure numerically: bracket
//! involutivity, functional independence, completeness counts, and the
//! closed-form helix geodesics of the LL flow.
//!
//! Layout:
//! - [`autodiff`], [`field`]: nested dual numbers and the exact-derivative
//!   field machinery everything else is written in.
//! - [`heisenberg`]: group arithmetic, invariant frames, metric normal forms.
//! - [`sr`]: generic sub-Riemannian builder (momenta, cometric, Hamiltonian).
//! - [`systems`]: the concrete flows, their charts, and reductions.
//! - [`hyperspherical`]: the radial/angular chart of the reduced LR system.
//! - [`poisson`]: Poisson tensors, brackets, derived integrals, audits.
//! - [`families`]: the first-integral families of each flow.
//! - [`dynamics`]: integrators, conservation reports, orbit classification.

pub mod autodiff;
pub mod dynamics;
pub mod families;
pub mod field;
pub mod heisenberg;
pub mod hyperspherical;
pub mod poisson;
pub mod sr;
pub mod systems;

pub use field::{ScalarField, VectorField};
pub use heisenberg::{
    lie_bracket, riemannian_metric_matrix, symplectic_to_matrix_chart, AlgebraVector, FrameField,
    GroupElement, MetricSpec, Side, SymplecticForm,
};
pub use poisson::{audit, derived_integral, AuditReport, IntegralFamily, PoissonTensor};
pub use sr::{build_sr_hamiltonian, cometric_matrix, momentum_function, SubRiemannianStructure};
pub use systems::{SystemId, SystemKind};
