//! Semigeostrophic flow on the 2-torus in dual variables.
//!
//! The state is a discrete measure ρ = Σ mᵢ δ_{yᵢ} pushed around by
//! U(y) = J(y − ∇P*(y)), where P* is the Kantorovich potential coupling ρ
//! to Lebesgue measure and J is the quarter turn. The crates' layers:
//! exact torus/vector primitives, convex cell geometry, periodic Laguerre
//! diagrams, the damped-Newton optimal transport solver, the dual-space
//! time steppers, Eulerian reconstruction along the flow, and the analytic
//! verification harness behind the command line driver.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod eulerian;
pub mod io;
pub mod laguerre;
pub mod measures;
pub mod ot;
pub mod polygon;
pub mod rearrange1d;
pub mod torus;
pub mod verification;
pub mod weak;
pub mod vec2;
