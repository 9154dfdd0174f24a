//! Value functions of the second-moment control problem.
//!
//! The continuous-time value function solves, per lattice state,
//!
//! ```text
//! du/dt = -2 sum_j a_j(t, s) (sqrt(u(t, s) u(t, s + nu_j)) - u(t, s)),   u(T) = g~^2
//! ```
//!
//! which is integrated backward on a truncated box. The discrete-time
//! recursion in [`dp`] serves as an independent check.

mod controls;
pub mod dp;
mod grid;
pub mod ode;
mod sigmoid;
mod solver;

pub use controls::{FullHjbPolicy, MpAlternativePolicy, MpMappedPolicy};
pub use dp::{dp_value_oracle, DpTable};
pub(crate) use grid::{parse_all, parse_one};
pub use grid::{Lattice, ValueFunctionGrid};
pub use sigmoid::{sigmoid_final, SigmoidFinal, DEFAULT_SLOPE};
pub use solver::{
    hjb_rhs, solve_hjb_backward, solve_hjb_backward_with_stats, FullDynamics, HjbConfig, HjbSystem,
    LatticeDynamics, DEFAULT_U_FLOOR,
};
