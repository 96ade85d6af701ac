//! Numerical laboratory for gradient flows in metric spaces.
//!
//! The central object is the relaxed minimizing-movement scheme: starting from
//! u⁰, each step picks uⁿ with
//!
//! ```text
//! f(uⁿ) + d²(uⁿ, uⁿ⁻¹)/(2τ)  ≤  inf_v { f(v) + d²(v, uⁿ⁻¹)/(2τ) } + budget
//! ```
//!
//! where f = φ_{ε(τ)} is a member of a parameterized family of functionals and
//! the approximation parameter ε is coupled to the time step τ. The crates's
//! modules follow the pipeline: [`types`] (points, functionals, schedules),
//! [`prox`] (certified approximate Moreau–Yosida evaluation), [`scheme`] (the
//! step loop and refinement runs), [`diagnostics`] (slopes, De Giorgi ratios,
//! dissipation residuals, the Γ-convergence metric) and [`zoo`] (concrete
//! families with analytic metadata).

pub mod diagnostics;
pub mod prox;
pub mod scheme;
pub mod types;
pub mod zoo;

pub use types::*;
