//! Static analyzer core: quadratic template invariants for small imperative
//! numerical programs.
//!
//! Abstract values bound a finite basis of linear and quadratic template
//! functions at every control point. Transfer functions are evaluated
//! through Shor's semidefinite relaxation, and the fixpoint equation is
//! solved either by Kleene iteration with outward-rounding acceleration or
//! by policy iteration over Lagrange-multiplier choices, each inner step a
//! single linear program.

pub mod domain;
pub mod engine;
pub mod frontend;
pub mod ir;
pub mod linalg;
pub mod oracle;
pub mod par;
pub mod quadforms;
pub mod relax;
pub mod report;
pub mod shor;
pub mod solvers;
