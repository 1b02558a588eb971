//! Control landscapes of the Landau-Zener two-level system.
//!
//! The system evolves as `dU/dt = −i(Δσx + ε(t)σz)U` under a piecewise-constant
//! control `ε(t)`. This crate propagates it exactly, evaluates transition,
//! observable and gate objectives with analytic gradients, runs BFGS ascent
//! and trap statistics over random starts, and estimates how weak white noise
//! on the control degrades an optimized pulse.

pub mod dynamics;
pub mod error;
pub mod linalg2;
pub mod noise;
pub mod objectives;
pub mod optimizer;
pub mod quadrature;
pub mod seeding;

pub use dynamics::{propagate, ControlPulse, PropagationTrace, DEFAULT_NODES_PER_SEGMENT};
pub use error::{LzError, Result};
pub use linalg2::{pauli, Axis, Complex2x2, State2, Unitary2};
pub use objectives::{evaluate, gradient, ObjectiveSpec};
