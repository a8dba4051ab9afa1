//! Numerical toolkit for coupled vector Liénard systems
//!
//! ```text
//! x_i'' + f_i(x_1, ..., x_n) x_i' + g_i(x_i) = h_i(t, X, X', eps),   i = 1..n
//! ```
//!
//! The crate checks the sufficient conditions for asymptotic stability of the
//! origin that come with the energy function `V = sum G_i(x_i) + y_i^2 / 2`,
//! exercises the invariance argument numerically, and computes periodic
//! responses to small periodic forcing by shooting on the period map.

pub mod analysis;
pub mod expr;
pub mod hypotheses;
pub mod integrate;
pub mod lyapunov;
pub mod model;
pub mod periodic;

mod linalg;

pub use expr::{Expr, ExprError, Var};
pub use model::{Interval, LienardSystem, Perturbation, State};
