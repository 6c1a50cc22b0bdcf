//! Exact-arithmetic laboratory for lattice points on spheres.
//!
//! The crate enumerates shells F_{n,λ} = {ξ ∈ Zⁿ : |ξ|² = λ}, computes
//! additive energies and point–hyperplane incidence statistics on them,
//! counts integer and modular solutions of Gram systems LᵀL = Λ, and runs
//! the scaling experiments that compare all of these against their
//! conjectured growth rates.

pub mod arith;
pub mod budget;
pub mod density;
pub mod energy;
pub mod error;
pub mod gram;
pub mod incidence;
pub mod lattice;
pub mod oracle;
pub mod par;
pub mod report;
pub mod scaling;
pub mod suites;
mod sums;

pub use budget::Budget;
pub use error::{LabError, Result};
pub use lattice::{LatticePoint, Origin, PointSet, Shell};
