//! Shape optimization of an interface in a nonlocal interface problem.
//!
//! The domain Ω = Ω₁ ∪ Ω₂ is surrounded by an interaction collar; the state
//! solves a nonlocal diffusion problem with an interface-dependent kernel and
//! the interface Γ = ∂Ω₁ is moved by Newton-like steps built from discrete
//! first and second shape derivatives of a tracking-type objective.

pub mod assembly;
pub mod config;
pub mod error;
pub mod fe;
pub mod kernel;
pub mod linsolve;
pub mod mesh;
pub mod optimizer;
pub mod oracle;
pub mod output;
pub mod quadrature;
pub mod shapecalc;

pub use error::{Error, Result};
